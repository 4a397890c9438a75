"""Answer comparison metrics: SQuAD-style normalization, token F1, EM, ROUGE-L."""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .errors import ConfigError, ContractError

_PUNCT = set(string.punctuation)
_ARTICLES = re.compile(r"\b(a|an|the)\b")


def normalize(text: str) -> str:
    """Lower text and remove punctuation, articles and extra whitespace."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def token_f1(pred: str, gold: str) -> float:
    p = normalize(pred).split()
    g = normalize(gold).split()
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    same = sum((Counter(p) & Counter(g)).values())
    if same == 0:
        return 0.0
    precision = same / len(p)
    recall = same / len(g)
    return 2 * precision * recall / (precision + recall)


def exact_match(pred: str, gold: str) -> float:
    return float(normalize(pred) == normalize(gold))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(pred: str, gold: str) -> float:
    """LCS F-measure (beta = 1) over normalized tokens."""
    p = normalize(pred).split()
    g = normalize(gold).split()
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    lcs = lcs_length(p, g)
    if lcs == 0:
        return 0.0
    precision = lcs / len(p)
    recall = lcs / len(g)
    return 2 * precision * recall / (precision + recall)


def max_over_golds(fn: Callable[[str, str], float], pred: str, golds: Sequence[str]) -> float:
    return max(fn(pred, g) for g in golds)


# "accuracy" domains are simulated multiple choice: exact match on option text
METRICS: dict[str, Callable[[str, str], float]] = {
    "f1": token_f1,
    "em": exact_match,
    "accuracy": exact_match,
    "rouge_l": rouge_l,
}


def metric_fn(name: str) -> Callable[[str, str], float]:
    try:
        return METRICS[name]
    except KeyError:
        raise ConfigError(f"unknown metric {name!r}; choose from {sorted(METRICS)}") from None


@dataclass
class MetricRow:
    f1: float = 0.0
    em: float = 0.0
    rouge_l: float = 0.0
    accuracy: float = 0.0
    score: float = 0.0
    metric: str = "f1"
    count: int = 0

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "score": self.score,
            "f1": self.f1,
            "em": self.em,
            "rouge_l": self.rouge_l,
            "accuracy": self.accuracy,
            "count": self.count,
        }


@dataclass
class MetricsReport:
    overall: MetricRow
    per_dataset: dict[str, MetricRow] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall.to_dict(),
            "per_dataset": {k: v.to_dict() for k, v in sorted(self.per_dataset.items())},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsReport":
        return cls(
            MetricRow(**d["overall"]),
            {k: MetricRow(**v) for k, v in d["per_dataset"].items()},
        )


def _aggregate(rows: list[dict], metric: str) -> MetricRow:
    n = len(rows)
    if n == 0:
        return MetricRow(metric=metric)
    return MetricRow(
        f1=sum(r["f1"] for r in rows) / n,
        em=sum(r["em"] for r in rows) / n,
        rouge_l=sum(r["rouge_l"] for r in rows) / n,
        accuracy=sum(r["accuracy"] for r in rows) / n,
        score=sum(r["score"] for r in rows) / n,
        metric=metric,
        count=n,
    )


def evaluate(
    dataset,
    selections: Sequence[int],
    metrics: Mapping[str, str] | None = None,
    theta: float = 0.7,
) -> MetricsReport:
    """Macro-average the selected answers' scores per dataset id and overall.

    ``accuracy`` counts selections whose best token F1 against the golds is
    strictly above ``theta`` (the label rule). ``score`` is each dataset's
    configured metric; the overall score averages per-example scores.
    """
    metrics = dict(metrics or {})
    examples = list(dataset)
    if len(selections) != len(examples):
        raise ContractError(f"{len(selections)} selections for {len(examples)} examples")
    by_ds: dict[str, list[dict]] = {}
    for ex, sel in zip(examples, selections):
        if not 0 <= sel < len(ex.candidates) or not ex.candidates[sel].present:
            raise ContractError(f"{ex.qid}: selected slot {sel} is absent or out of range")
        ans = ex.candidates[sel].answer
        name = metrics.get(ex.dataset_id, "f1")
        f1 = max_over_golds(token_f1, ans, ex.gold_answers)
        by_ds.setdefault(ex.dataset_id, []).append(
            {
                "f1": f1,
                "em": max_over_golds(exact_match, ans, ex.gold_answers),
                "rouge_l": max_over_golds(rouge_l, ans, ex.gold_answers),
                "accuracy": float(f1 > theta),
                "score": max_over_golds(metric_fn(name), ans, ex.gold_answers),
            }
        )
    per = {ds: _aggregate(rows, metrics.get(ds, "f1")) for ds, rows in by_ds.items()}
    all_rows = [r for rows in by_ds.values() for r in rows]
    names = {metrics.get(ds, "f1") for ds in by_ds}
    overall_metric = names.pop() if len(names) == 1 else "mixed"
    return MetricsReport(_aggregate(all_rows, overall_metric), per)
