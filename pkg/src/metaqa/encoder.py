"""Post-LN transformer encoder with a confidence channel in the input embedding.

Input embedding per position ``i``::

    x_i = token[t_i] + position[i] + segment[s_i] + f(conf_i),   f(c) = c * w + b

so positions outside every answer span get ``f(0) = b``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .assembly import Batch, EncoderInput
from .errors import ConfigError
from .tensor import Tensor

NEG_INF = -np.inf


@dataclass(frozen=True)
class EncoderConfig:
    hidden: int = 64
    layers: int = 2
    heads: int = 4
    ffn: int = 256
    vocab_size: int = 4096
    max_len: int = 128
    dropout: float = 0.1
    seed: int = 0
    init_std: float = 0.02
    ln_eps: float = 1e-12

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ConfigError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if min(self.hidden, self.heads, self.ffn, self.vocab_size, self.max_len) < 1:
            raise ConfigError("encoder sizes must be positive")
        if self.layers < 0:
            raise ConfigError("layers must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


LAYER_PARAMS = (
    "wq", "bq", "wk", "wv", "bv", "wo", "bo",
    "ln1_g", "ln1_b", "w1", "b1", "w2", "b2", "ln2_g", "ln2_b",
)


def layer_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d, f = cfg.hidden, cfg.ffn
    return {
        "wq": (d, d), "bq": (d,), "wk": (d, d),
        "wv": (d, d), "bv": (d,), "wo": (d, d), "bo": (d,),
        "ln1_g": (d,), "ln1_b": (d,),
        "w1": (d, f), "b1": (f,), "w2": (f, d), "b2": (d,),
        "ln2_g": (d,), "ln2_b": (d,),
    }


def init_encoder(cfg: EncoderConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Normal(0, init_std) matrices and tables, zero biases, unit LN gains."""
    d = cfg.hidden

    def normal(*shape):
        return Tensor(rng.normal(0.0, cfg.init_std, size=shape), requires_grad=True)

    w: dict[str, Tensor] = {
        "emb.token": normal(cfg.vocab_size, d),
        "emb.position": normal(cfg.max_len, d),
        "emb.segment": normal(2, d),
        "emb.conf_w": normal(1, d),
        "emb.conf_b": Tensor(np.zeros(d), requires_grad=True),
    }
    for layer in range(cfg.layers):
        for name, shape in layer_shapes(cfg).items():
            key = f"layer{layer}.{name}"
            if name.startswith("ln") and name.endswith("_g"):
                w[key] = Tensor(np.ones(shape), requires_grad=True)
            elif len(shape) == 1:
                w[key] = Tensor(np.zeros(shape), requires_grad=True)
            else:
                w[key] = normal(*shape)
    return w


def _channels(inp: EncoderInput | Batch):
    return inp.token_ids, inp.position_ids, inp.segment_ids, inp.confidence_values


def embed(inp: EncoderInput | Batch, weights: dict[str, Tensor], disable_conf: bool = False) -> Tensor:
    """Sum of token, position, segment and confidence embeddings.

    Returns ``[max_len, d]`` for a single :class:`EncoderInput` and
    ``[B, T, d]`` for a :class:`Batch`. With ``disable_conf`` every position
    embeds ``f(0)``.
    """
    tok, pos, seg, conf = _channels(inp)
    if disable_conf:
        conf = np.zeros_like(conf)
    c = T.add(T.matmul(Tensor(conf[..., None]), weights["emb.conf_w"]), weights["emb.conf_b"])
    t = T.embedding(weights["emb.token"], tok)
    p = T.embedding(weights["emb.position"], pos)
    s = T.embedding(weights["emb.segment"], seg)
    return T.add(T.add(T.add(t, p), s), c)


def _dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rng is None or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return T.mul(x, Tensor(keep))


def _affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return T.add(T.matmul(x, w), b)


def key_mask(attention_mask: np.ndarray) -> np.ndarray:
    """Additive mask ``[B, 1, 1, T]``: 0 for real keys, -inf for padding."""
    am = np.asarray(attention_mask)
    if am.ndim == 1:
        am = am[None]
    return np.where(am[:, None, None, :] > 0, 0.0, NEG_INF)


def self_attention(
    x: Tensor,
    mask_add: np.ndarray,
    w: dict[str, Tensor],
    prefix: str,
    heads: int,
    return_weights: bool = False,
):
    B, L, d = x.shape
    dh = d // heads

    def split(t: Tensor) -> Tensor:
        return T.transpose(T.reshape(t, (B, L, heads, dh)), (0, 2, 1, 3))

    q = split(_affine(x, w[prefix + "wq"], w[prefix + "bq"]))
    # no key bias: it shifts every score in a row equally, so softmax ignores it
    k = split(T.matmul(x, w[prefix + "wk"]))
    v = split(_affine(x, w[prefix + "wv"], w[prefix + "bv"]))
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    att = T.softmax_rows(T.add(scores, Tensor(mask_add)))
    ctx = T.reshape(T.transpose(T.matmul(att, v), (0, 2, 1, 3)), (B, L, d))
    out = _affine(ctx, w[prefix + "wo"], w[prefix + "bo"])
    return (out, att) if return_weights else out


def encode(
    h0: Tensor,
    inp: EncoderInput | Batch,
    weights: dict[str, Tensor],
    cfg: EncoderConfig,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Run ``cfg.layers`` post-LN blocks. Dropout only when ``rng`` is given."""
    single = h0.ndim == 2
    x = T.reshape(h0, (1,) + h0.shape) if single else h0
    mask_add = key_mask(inp.attention_mask)
    for layer in range(cfg.layers):
        pre = f"layer{layer}."
        a = self_attention(x, mask_add, weights, pre, cfg.heads)
        x = T.layer_norm(
            T.add(x, _dropout(a, cfg.dropout, rng)),
            weights[pre + "ln1_g"], weights[pre + "ln1_b"], cfg.ln_eps,
        )
        ff = _affine(T.gelu(_affine(x, weights[pre + "w1"], weights[pre + "b1"])),
                     weights[pre + "w2"], weights[pre + "b2"])
        x = T.layer_norm(
            T.add(x, _dropout(ff, cfg.dropout, rng)),
            weights[pre + "ln2_g"], weights[pre + "ln2_b"], cfg.ln_eps,
        )
    return T.reshape(x, h0.shape) if single else x


def extract(hl: Tensor, inp: EncoderInput | Batch) -> tuple[Tensor, Tensor]:
    """[CLS] states and [ANS] states.

    For a single input returns ``(cls [d], ans [n_present, d])`` in slot order.
    For a batch returns ``(cls [B, d], ans [B, k, d])``; rows of absent slots
    hold position 0 and must be masked by the caller.
    """
    if isinstance(inp, EncoderInput):
        starts = [s[0] for s in inp.ans_spans if s is not None]
        return hl[inp.cls_index], hl[np.array(starts, dtype=np.int64)]
    B = hl.shape[0]
    rows = np.arange(B)
    cls = hl[(rows, inp.cls_index)]
    ans = hl[(rows[:, None], inp.ans_pos)]
    return cls, ans
