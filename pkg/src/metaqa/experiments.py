"""Experiment procedures built on train/evaluate: data-efficiency sweeps and t-tests."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import betainc

from . import rng as R
from .data import Dataset
from .errors import ConfigError
from .evaluation import evaluate
from .training import TrainConfig, train

log = logging.getLogger(__name__)


def prefix_sample(dataset: Dataset, size: int, seed: int) -> Dataset:
    """Seeded sample of ``size`` examples, kept in original order.

    Sizes at or above the dataset length return the whole dataset unchanged,
    so the full-size row of a sweep is exactly a plain training run.
    """
    n = len(dataset)
    if size >= n:
        return dataset
    perm = R.stream(seed, "sweep").permutation(n)
    return dataset.subset(sorted(int(i) for i in perm[:size]))


@dataclass
class SweepRow:
    size: int
    selection_accuracy: float
    score: float
    steps: int

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "selection_accuracy": self.selection_accuracy,
            "score": self.score,
            "steps": self.steps,
        }


def efficiency_sweep(
    train_set: Dataset,
    test_set: Dataset,
    sizes: Sequence[int],
    cfg: TrainConfig,
    dev_set: Dataset | None = None,
) -> list[SweepRow]:
    """Train one model per training-set size and evaluate each on ``test_set``."""
    rows = []
    for size in sizes:
        if size < 1 or size > len(train_set):
            raise ConfigError(f"sweep size {size} outside [1, {len(train_set)}]")
        subset = prefix_sample(train_set, size, cfg.seed)
        ckpt = train(subset, dev_set, cfg)
        rep = evaluate(ckpt, test_set)
        rows.append(SweepRow(size, rep.selection_accuracy, rep.metrics.overall.score,
                             ckpt.metadata["steps"]))
        log.info("sweep size %d: selection accuracy %.4f", size, rep.selection_accuracy)
    return rows


@dataclass
class Comparison:
    t: float
    p: float
    df: float
    significant: bool
    mean_a: float
    mean_b: float

    def to_dict(self) -> dict:
        return {
            "t": self.t, "p": self.p, "df": self.df, "significant": self.significant,
            "mean_a": self.mean_a, "mean_b": self.mean_b,
        }


def compare_runs(scores_a: Sequence[float], scores_b: Sequence[float], alpha: float = 0.05) -> Comparison:
    """Welch's two-tailed t-test; significant iff p < alpha."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ConfigError("compare_runs needs at least 2 scores per side")
    ma, mb = float(a.mean()), float(b.mean())
    sa = a.var(ddof=1) / a.size
    sb = b.var(ddof=1) / b.size
    se2 = sa + sb
    if se2 == 0.0:
        if ma == mb:
            return Comparison(0.0, 1.0, float(a.size + b.size - 2), False, ma, mb)
        t = math.copysign(math.inf, ma - mb)
        return Comparison(t, 0.0, float(a.size + b.size - 2), True, ma, mb)
    t = (ma - mb) / math.sqrt(se2)
    df = se2**2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    # two-sided tail of Student's t via the regularized incomplete beta function
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return Comparison(float(t), p, float(df), p < alpha, ma, mb)


def seeds_config(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)


@dataclass(frozen=True)
class ToyCheckConfig:
    """Settings for a gradient check of the full joint loss on a small model."""

    encoder: dict
    k: int = 3
    examples: int = 4
    seed: int = 0
    sample: int = 200
    h: float = 1e-5
    tol: float = 1e-4
    alpha1: float = 0.5
    alpha2: float = 1.0
    corrupt_gradient: float = 0.0  # test hook: scale analytic gradients by (1 + this)

    @classmethod
    def from_dict(cls, d: dict) -> "ToyCheckConfig":
        d = dict(d)
        # init_std 0.2 keeps attention gradients well above finite-difference roundoff
        enc = {"hidden": 32, "layers": 2, "heads": 2, "ffn": 64, "vocab_size": 200,
               "max_len": 64, "dropout": 0.0, "init_std": 0.2, **d.pop("encoder", {})}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown gradcheck field(s): {sorted(unknown)}")
        return cls(encoder=enc, **d)


def toy_problem(cfg: ToyCheckConfig):
    """Random model plus a fixed batch; returns ``(model, loss_fn)``.

    ``loss_fn()`` recomputes the joint loss from the model's current parameters.
    """
    from .assembly import collate
    from .data import build_vocab
    from .encoder import EncoderConfig
    from .heads import LabelConfig, LossConfig, make_labels, total_loss
    from .model import MetaQAModel
    from .simulator import AgentProfile, BenchmarkSpec, Calibration, DomainSpec, generate_split

    doms = tuple(
        DomainSpec(f"d{i}", ("what", "who"), vocab_seed=i, sizes={"train": cfg.examples},
                   answer_len=(0.4, 0.3, 0.3, 0.0, 0.0, 0.0), filler_len=(2, 4))
        for i in range(cfg.k)
    )
    agents = tuple(
        AgentProfile(f"a{i}", f"d{i}", {f"d{j}": 0.9 if i == j else 0.4 for j in range(cfg.k)},
                     0.2, Calibration(2.0, 0.0, 0.1))
        for i in range(cfg.k)
    )
    ds = generate_split(BenchmarkSpec(doms, agents), "train", cfg.seed).subset(range(cfg.examples))
    enc = EncoderConfig(**cfg.encoder)
    vocab = build_vocab(
        (t for ex in ds for t in (ex.question, *(c.answer for c in ex.candidates))), enc.vocab_size
    )
    model = MetaQAModel.create(enc, ds.agents, dict(ds.agent_domains), vocab,
                               R.stream(cfg.seed, "init"))
    batch = collate([model.assemble(ex) for ex in ds])
    labels = [make_labels(ex, ds.agent_domains, LabelConfig()) for ex in ds]
    loss_cfg = LossConfig(cfg.alpha1, cfg.alpha2)

    # detached scores are pinned at the initial parameters; see MetaQAModel.forward
    pinned = model.forward(batch).agsen_probs.data.copy()

    def loss_fn():
        out = model.forward(batch, agsen_feature=pinned)
        return total_loss(out.agsen_probs, out.logits, labels, loss_cfg).total

    return model, loss_fn


def toy_gradcheck(cfg: ToyCheckConfig):
    from .gradcheck import grad_check

    model, loss_fn = toy_problem(cfg)
    hook = None
    if cfg.corrupt_gradient:
        def hook(name, g):
            return g * (1.0 + cfg.corrupt_gradient)
    return grad_check(loss_fn, model.params, h=cfg.h, tol=cfg.tol, sample=cfg.sample,
                      seed=cfg.seed, grad_hook=hook)
