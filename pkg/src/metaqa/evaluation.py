"""Evaluation with optional agent nulling, run reports and baseline selectors."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .checkpoint import Checkpoint
from .data import Dataset, Example
from .errors import ConfigError, ContractError, DataError
from .heads import LabelConfig, make_labels, select_answer
from .metrics import MetricsReport, evaluate as evaluate_metrics
from .model import MetaQAModel

STRATEGIES = ("oracle", "conf_argmax", "router_only", "fixed_agent")


@dataclass
class RunReport:
    metrics: MetricsReport
    selection_accuracy: float
    in_domain_rate: float
    chosen_rates: dict[str, float]
    chosen_rates_per_dataset: dict[str, dict[str, float]]
    selections: list[int]
    ablated: list[str] = field(default_factory=list)
    loss_curve: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    label: str = "metaqa"

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "label": self.label,
            "ablated": list(self.ablated),
            "selection_accuracy": self.selection_accuracy,
            "in_domain_rate": self.in_domain_rate,
            "chosen_rates": self.chosen_rates,
            "chosen_rates_per_dataset": self.chosen_rates_per_dataset,
            "metrics": self.metrics.to_dict(),
            "loss_curve": self.loss_curve,
            "selections": self.selections,
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            metrics=MetricsReport.from_dict(d["metrics"]),
            selection_accuracy=d["selection_accuracy"],
            in_domain_rate=d["in_domain_rate"],
            chosen_rates=d["chosen_rates"],
            chosen_rates_per_dataset=d["chosen_rates_per_dataset"],
            selections=list(d.get("selections", [])),
            ablated=list(d.get("ablated", [])),
            loss_curve=list(d.get("loss_curve", [])),
            wall_time=float(d.get("wall_time", 0.0)),
            label=d.get("label", "metaqa"),
        )


def check_ablation(agents: Sequence[str], ablated: Iterable[str]) -> list[str]:
    ablated = list(dict.fromkeys(ablated))
    unknown = [a for a in ablated if a not in agents]
    if unknown:
        raise ConfigError(f"cannot ablate unregistered agent(s): {', '.join(unknown)}")
    if len(ablated) >= len(agents):
        raise ConfigError("cannot ablate every agent")
    return ablated


def _chunks(n: int, size: int) -> list[range]:
    return [range(s, min(n, s + size)) for s in range(0, n, size)]


def predict_selections(
    model: MetaQAModel,
    dataset: Dataset,
    batch_size: int = 64,
    workers: int = 1,
) -> list[int]:
    """Dropout-free selections in example order; chunks may run on worker threads."""
    inputs = [model.assemble(ex) for ex in dataset]

    def run(r: range) -> np.ndarray:
        return np.atleast_1d(select_answer(model.predict([inputs[i] for i in r]).logits))

    chunks = _chunks(len(inputs), batch_size)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(r) for r in chunks]
    return [int(j) for part in parts for j in part]


def agsen_probabilities(model: MetaQAModel, dataset: Dataset, batch_size: int = 64) -> np.ndarray:
    inputs = [model.assemble(ex) for ex in dataset]
    rows = [model.predict([inputs[i] for i in r]).agsen_probs.data
            for r in _chunks(len(inputs), batch_size)]
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, model.k))


def build_report(
    dataset: Dataset,
    selections: Sequence[int],
    theta: float = 0.7,
    ablated: Sequence[str] = (),
    label: str = "metaqa",
) -> RunReport:
    metrics = evaluate_metrics(dataset, selections, dataset.metrics, theta)
    agents = dataset.agents
    n = len(dataset)
    counts = {a: 0 for a in agents}
    per_ds: dict[str, dict[str, int]] = {}
    totals: dict[str, int] = {}
    in_domain = 0
    for ex, j in zip(dataset, selections):
        a = agents[j]
        counts[a] += 1
        per_ds.setdefault(ex.dataset_id, {b: 0 for b in agents})[a] += 1
        totals[ex.dataset_id] = totals.get(ex.dataset_id, 0) + 1
        in_domain += dataset.agent_domains[a] == ex.dataset_id
    return RunReport(
        metrics=metrics,
        selection_accuracy=metrics.overall.accuracy,
        in_domain_rate=in_domain / n if n else 0.0,
        chosen_rates={a: c / n if n else 0.0 for a, c in counts.items()},
        chosen_rates_per_dataset={
            ds: {a: c / totals[ds] for a, c in row.items()} for ds, row in sorted(per_ds.items())
        },
        selections=[int(j) for j in selections],
        ablated=list(ablated),
        label=label,
    )


def _model_of(ckpt: Checkpoint | MetaQAModel) -> MetaQAModel:
    return ckpt if isinstance(ckpt, MetaQAModel) else ckpt.to_model()


def evaluate(
    ckpt: Checkpoint | MetaQAModel,
    test: Dataset,
    ablated: Iterable[str] = (),
    theta: float | None = None,
    workers: int = 1,
    batch_size: int = 64,
) -> RunReport:
    """Evaluate with every ablated agent's predictions nulled; no retraining."""
    t0 = time.perf_counter()
    model = _model_of(ckpt)
    if tuple(test.agents) != tuple(model.agents):
        raise DataError(f"data agents {test.agents} differ from checkpoint agents {model.agents}")
    ablated = check_ablation(model.agents, ablated)
    if theta is None:
        meta = ckpt.metadata if isinstance(ckpt, Checkpoint) else {}
        theta = float(meta.get("theta", 0.7))
    ds = test.ablate(ablated)
    selections = predict_selections(model, ds, batch_size=batch_size, workers=workers)
    report = build_report(ds, selections, theta, ablated)
    if isinstance(ckpt, Checkpoint):
        report.loss_curve = list(ckpt.metadata.get("loss_curve", []))
    report.wall_time = time.perf_counter() - t0
    return report


# -- baselines ----------------------------------------------------------------


def _present_argmax(scores: Sequence[float], present: Sequence[bool]) -> int:
    z = np.where(np.asarray(present, dtype=bool), np.asarray(scores, dtype=np.float64), -np.inf)
    return select_answer(z)


def baseline_select(
    strategy: str,
    example: Example,
    agent_domains: dict[str, str] | None = None,
    theta: float = 0.7,
    router_probs: Sequence[float] | None = None,
    slot: int = 0,
) -> int:
    """Slot chosen by a baseline strategy; ties go to the lowest slot.

    ``oracle`` picks the first labeled-correct candidate (first present slot if
    none is correct), ``conf_argmax`` the most confident candidate,
    ``router_only`` the argmax of the agent-selection scores in
    ``router_probs`` regardless of answers, ``fixed_agent`` always ``slot``.
    """
    present = example.present
    if not any(present):
        raise ContractError(f"{example.qid}: every candidate is absent")
    if strategy == "oracle":
        lab = make_labels(example, agent_domains or {}, LabelConfig(theta))
        hits = np.flatnonzero(lab.anssel)
        return int(hits[0]) if hits.size else present.index(True)
    if strategy == "conf_argmax":
        return _present_argmax([c.confidence for c in example.candidates], present)
    if strategy == "router_only":
        if router_probs is None:
            raise ConfigError("router_only needs agent-selection scores from a router checkpoint")
        return _present_argmax(router_probs, present)
    if strategy == "fixed_agent":
        if not 0 <= slot < len(present) or not present[slot]:
            raise ContractError(f"{example.qid}: fixed slot {slot} is absent")
        return slot
    raise ConfigError(f"unknown baseline strategy {strategy!r}; choose from {STRATEGIES}")


def run_baseline(
    strategy: str,
    dataset: Dataset,
    router: Checkpoint | MetaQAModel | None = None,
    slot: int = 0,
    theta: float = 0.7,
    ablated: Iterable[str] = (),
) -> RunReport:
    ablated = check_ablation(dataset.agents, ablated)
    ds = dataset.ablate(ablated)
    probs = None
    if strategy == "router_only":
        if router is None:
            raise ConfigError("router_only needs a router checkpoint")
        probs = agsen_probabilities(_model_of(router), ds)
    selections = [
        baseline_select(
            strategy, ex, ds.agent_domains, theta,
            router_probs=None if probs is None else probs[i], slot=slot,
        )
        for i, ex in enumerate(ds)
    ]
    label = strategy if strategy != "fixed_agent" else f"fixed_agent:{ds.agents[slot]}"
    return build_report(ds, selections, theta, ablated, label=label)
