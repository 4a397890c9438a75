"""Agent-selection heads, the answer-selection head, labels and the joint loss.

The k agent-selection heads are independent ``d -> 1`` affine maps; they are
stored stacked as one ``[d, k]`` matrix whose column ``j`` is head ``j``.
The answer-selection head is one affine map ``k * (d + 1) -> k`` over the
slot-major concatenation ``[ans_1; p_1; ans_2; p_2; ...]`` where ``p_j`` is
agent ``j``'s selection probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import Example
from .errors import ConfigError, ContractError
from .metrics import max_over_golds, token_f1
from .tensor import Tensor


@dataclass(frozen=True)
class LossConfig:
    alpha1: float = 0.5
    alpha2: float = 1.0

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ConfigError("loss weights must be nonnegative")


@dataclass(frozen=True)
class LabelConfig:
    theta: float = 0.7

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ConfigError(f"theta must be in (0, 1], got {self.theta}")


@dataclass(frozen=True, eq=False)
class Labels:
    anssel: np.ndarray  # [k] 0/1 correctness
    agsen: np.ndarray  # [k] 0/1 in-domain flags
    anssel_target: np.ndarray | None  # uniform over positives, None if no positive


@dataclass
class LossBreakdown:
    agsen: np.ndarray  # per-head BCE, averaged over the batch
    anssel: float
    total: Tensor


def init_heads(d: int, k: int, rng: np.random.Generator, std: float = 0.02) -> dict[str, Tensor]:
    return {
        "agsen.weight": Tensor(rng.normal(0.0, std, size=(d, k)), requires_grad=True),
        "agsen.bias": Tensor(np.zeros(k), requires_grad=True),
        "anssel.weight": Tensor(rng.normal(0.0, std, size=(k * (d + 1), k)), requires_grad=True),
        "anssel.bias": Tensor(np.zeros(k), requires_grad=True),
    }


AGSEN_PARAMS = ("agsen.weight", "agsen.bias")


def _as_rows(x: Tensor) -> Tensor:
    return T.reshape(x, (1,) + x.shape) if x.ndim == 1 else x


def agsen_scores(cls_vec: Tensor, weights: dict[str, Tensor]) -> Tensor:
    """Independent sigmoid scores, one per agent. ``[d] -> [k]`` or ``[B, d] -> [B, k]``."""
    z = T.add(T.matmul(_as_rows(cls_vec), weights["agsen.weight"]), weights["agsen.bias"])
    p = T.sigmoid(z)
    return T.reshape(p, p.shape[-1:]) if cls_vec.ndim == 1 else p


def anssel_logits(
    ans_vecs: Tensor,
    agsen_probs: Tensor,
    present,
    weights: dict[str, Tensor],
) -> Tensor:
    """Slot logits with absent slots at -inf.

    ``ans_vecs`` is ``[B, k, d]`` (rows of absent slots are ignored),
    ``agsen_probs`` ``[B, k]`` and ``present`` a ``[B, k]`` boolean mask.
    The agent-selection scores enter as features only: no gradient flows
    back into the agent-selection heads through this path.
    """
    present = np.asarray(present, dtype=bool)
    if present.ndim == 1:
        present = present[None]
    if not present.any(axis=-1).all():
        raise ContractError("anssel_logits: every slot is absent for some example")
    B, k, d = ans_vecs.shape
    probs = agsen_probs.detach()
    feats = T.concat([ans_vecs, T.reshape(probs, (B, k, 1))], axis=-1)
    feats = T.mul(feats, Tensor(present[..., None].astype(np.float64)))
    flat = T.reshape(feats, (B, k * (d + 1)))
    logits = T.add(T.matmul(flat, weights["anssel.weight"]), weights["anssel.bias"])
    return T.add(logits, Tensor(np.where(present, 0.0, -np.inf)))


def make_labels(
    example: Example,
    agent_domains: dict[str, str],
    cfg: LabelConfig = LabelConfig(),
) -> Labels:
    anssel = np.array(
        [
            float(c.present and max_over_golds(token_f1, c.answer, example.gold_answers) > cfg.theta)
            for c in example.candidates
        ]
    )
    agsen = np.array(
        [float(agent_domains.get(c.agent_id, c.agent_id) == example.dataset_id)
         for c in example.candidates]
    )
    n = anssel.sum()
    target = anssel / n if n > 0 else None
    return Labels(anssel, agsen, target)


def total_loss(
    agsen_probs: Tensor,
    logits: Tensor,
    labels: list[Labels],
    cfg: LossConfig = LossConfig(),
) -> LossBreakdown:
    """Batch mean of ``alpha1/k * sum_j BCE_j + alpha2 * CE``.

    The CE term of an example without any correct candidate is 0.
    """
    probs = _as_rows(agsen_probs)
    logits = _as_rows(logits)
    B, k = probs.shape
    y_agsen = np.stack([lab.agsen for lab in labels])
    target = np.stack(
        [lab.anssel_target if lab.anssel_target is not None else np.zeros(k) for lab in labels]
    )
    bce = T.bce(probs, y_agsen)  # [B, k]
    ce = T.cross_entropy(logits, target)  # [B]
    per_example = T.add(
        T.scale(T.sum_(bce, axis=1), cfg.alpha1 / k),
        T.scale(ce, cfg.alpha2),
    )
    total = T.scale(T.sum_(per_example), 1.0 / B)
    return LossBreakdown(
        agsen=bce.data.mean(axis=0),
        anssel=float(ce.data.mean()),
        total=total,
    )


def select_answer(logits) -> int | np.ndarray:
    """Argmax over slots, ties to the lowest index. Works per row for 2-D input."""
    z = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64)
    if np.any(np.all(np.isneginf(z), axis=-1)):
        raise ContractError("select_answer: every slot is masked")
    out = np.argmax(z, axis=-1)
    return int(out) if z.ndim == 1 else out
