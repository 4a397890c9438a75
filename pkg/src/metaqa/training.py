"""Training: AdamW with linear warmup/decay on the joint selection loss."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np

from . import rng as R
from .assembly import collate
from .checkpoint import Checkpoint
from .data import Dataset, build_vocab
from .encoder import EncoderConfig
from .errors import ConfigError, NumericError
from .heads import AGSEN_PARAMS, LabelConfig, LossConfig, make_labels, total_loss
from .model import MetaQAModel
from .tensor import Tensor, backward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    batch_size: int = 6
    weight_decay: float = 0.01
    warmup_steps: int = 500
    epochs: int = 1
    seed: int = 0
    alpha1: float = 0.5
    alpha2: float = 1.0
    theta: float = 0.7
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    disable_conf_emb: bool = False
    disable_agsen_loss: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_every: int = 0  # steps between dev evaluations; 0 = only at the end
    curve_every: int = 50  # steps averaged into one loss-curve point

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1 or self.warmup_steps < 0:
            raise ConfigError("epochs must be >= 1 and warmup_steps >= 0")
        LossConfig(self.alpha1, self.alpha2)
        LabelConfig(self.theta)

    @property
    def loss(self) -> LossConfig:
        return LossConfig(0.0 if self.disable_agsen_loss else self.alpha1, self.alpha2)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        d = dict(d)
        enc = d.pop("encoder", {})
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config field(s): {sorted(unknown)}")
        try:
            return cls(encoder=EncoderConfig(**enc), **d)
        except TypeError as exc:
            raise ConfigError(f"bad train config: {exc}") from None


def lr_at(step: int, total: int, cfg: TrainConfig) -> float:
    """Linear warmup from 0 over ``warmup_steps``, then linear decay to 0 at ``total``."""
    if step < cfg.warmup_steps:
        return cfg.lr * step / max(1, cfg.warmup_steps)
    return cfg.lr * max(0.0, (total - step) / max(1, total - cfg.warmup_steps))


class AdamW:
    """Adam with decoupled weight decay; 1-D parameters are not decayed."""

    def __init__(self, params: Mapping[str, Tensor], cfg: TrainConfig):
        self.params = dict(params)
        self.cfg = cfg
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def step(self, lr: float) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for n, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if p.data.ndim >= 2 and c.weight_decay:
                p.data *= 1.0 - lr * c.weight_decay
            m, v = self.m[n], self.v[n]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + c.adam_eps)


def build_model(train: Dataset, cfg: TrainConfig) -> MetaQAModel:
    corpus = (
        text
        for ex in train
        for text in (ex.question, *(c.answer for c in ex.candidates if c.present))
    )
    vocab = build_vocab(corpus, cfg.encoder.vocab_size)
    enc = replace(cfg.encoder, vocab_size=len(vocab), seed=cfg.seed)
    return MetaQAModel.create(
        enc, train.agents, dict(train.agent_domains), vocab,
        R.stream(cfg.seed, "init"), disable_conf_emb=cfg.disable_conf_emb,
    )


def selection_accuracy(model: MetaQAModel, ds: Dataset, theta: float, batch_size: int = 64) -> float:
    from .evaluation import predict_selections

    sel = predict_selections(model, ds, batch_size=batch_size)
    cfg = LabelConfig(theta)
    hits = [make_labels(ex, ds.agent_domains, cfg).anssel[j] for ex, j in zip(ds, sel)]
    return float(np.mean(hits)) if hits else 0.0


def train(train_set: Dataset, dev_set: Dataset | None, cfg: TrainConfig) -> Checkpoint:
    if len(train_set) == 0:
        raise ConfigError("empty training set")
    if dev_set is not None and dev_set.agents != train_set.agents:
        raise ConfigError(f"dev agents {dev_set.agents} differ from train agents {train_set.agents}")

    model = build_model(train_set, cfg)
    inputs = [model.assemble(ex) for ex in train_set]
    label_cfg = LabelConfig(cfg.theta)
    labels = [make_labels(ex, model.agent_domains, label_cfg) for ex in train_set]
    trainable = {
        n: p for n, p in model.params.items()
        if not (cfg.disable_agsen_loss and n in AGSEN_PARAMS)
    }
    opt = AdamW(trainable, cfg)
    loss_cfg = cfg.loss
    shuffle_rng = R.stream(cfg.seed, "shuffle")
    dropout_rng = R.stream(cfg.seed, "dropout")

    n = len(inputs)
    per_epoch = math.ceil(n / cfg.batch_size)
    total = per_epoch * cfg.epochs
    curve: list[float] = []
    window: list[float] = []
    dev_history: list[list[float]] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = collate([inputs[i] for i in idx])
            lr = lr_at(step, total, cfg)
            out = model.forward(batch, dropout_rng=dropout_rng)
            loss = total_loss(out.agsen_probs, out.logits, [labels[i] for i in idx], loss_cfg)
            value = loss.total.item()
            if not math.isfinite(value):
                qids = [train_set[int(i)].qid for i in idx]
                raise NumericError(f"non-finite loss {value} at step {step} (lr={lr:.3g}), batch {qids}")
            for p in model.params.values():
                p.grad = None
            backward(loss.total, model.params.values())
            opt.step(lr)
            step += 1
            window.append(value)
            if len(window) == cfg.curve_every:
                curve.append(float(np.mean(window)))
                window = []
            if dev_set is not None and cfg.eval_every and step % cfg.eval_every == 0:
                acc = selection_accuracy(model, dev_set, cfg.theta)
                dev_history.append([step, acc])
                log.info("step %d/%d loss %.4f dev selection accuracy %.4f", step, total, value, acc)
    if window:
        curve.append(float(np.mean(window)))
    for p in model.params.values():
        p.grad = None
    if dev_set is not None:
        acc = selection_accuracy(model, dev_set, cfg.theta)
        dev_history.append([step, acc])
        log.info("finished %d steps; dev selection accuracy %.4f", step, acc)

    meta = {
        "seed": cfg.seed,
        "steps": step,
        "train_size": n,
        "config_hash": cfg.digest(),
        "train_config": cfg.to_dict(),
        "substreams": R.substream_seeds(cfg.seed),
        "loss_curve": curve,
        "dev_history": dev_history,
        "theta": cfg.theta,
    }
    return Checkpoint.from_model(model, meta)
