"""Central finite-difference gradient checking against :func:`tensor.backward`."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DeterminismError
from .tensor import Tensor, backward


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


@dataclass
class GradEntry:
    param: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradReport:
    entries: list[GradEntry] = field(default_factory=list)
    tol: float = 1e-4

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries), default=0.0)

    @property
    def count(self) -> int:
        return len(self.entries)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def worst(self, n: int = 5) -> list[GradEntry]:
        return sorted(self.entries, key=lambda e: -e.rel_error)[:n]

    def summary(self) -> dict:
        return {
            "checked": self.count,
            "max_rel_error": self.max_rel_error,
            "tol": self.tol,
            "passed": self.passed,
        }


def grad_check(
    forward: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    sample: int = 200,
    seed: int = 0,
    grad_hook: Callable[[str, np.ndarray], np.ndarray] | None = None,
) -> GradReport:
    """Compare backprop gradients with ``(f(p+h) - f(p-h)) / 2h``.

    ``forward`` must rebuild the scalar loss from the current parameter values
    on every call. Parameters are perturbed in place and restored afterwards.
    ``sample`` scalar coordinates are drawn without replacement across all
    parameters (all of them if there are fewer). ``grad_hook`` may rewrite the
    analytic gradients before comparison; it exists so callers can verify that
    a broken backward pass is caught.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if not isinstance(params, Mapping):
        params = {f"p{i}": p for i, p in enumerate(params)}

    first = forward().item()
    second = forward().item()
    if first != second:
        raise DeterminismError(f"forward is not deterministic: {first!r} != {second!r}")

    for p in params.values():
        p.grad = None
    loss = forward()
    backward(loss, params.values())
    analytic = {name: p.grad.copy() for name, p in params.items()}
    if grad_hook is not None:
        analytic = {name: grad_hook(name, g) for name, g in analytic.items()}

    names = list(params)
    sizes = np.array([params[n].data.size for n in names])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    flat_idx = np.sort(rng.choice(total, size=min(sample, total), replace=False))
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    report = GradReport(tol=tol)
    for fi in flat_idx:
        k = int(np.searchsorted(offsets, fi, side="right") - 1)
        name = names[k]
        p = params[name]
        idx = np.unravel_index(int(fi - offsets[k]), p.shape)
        old = p.data[idx]
        p.data[idx] = old + h
        up = forward().item()
        p.data[idx] = old - h
        down = forward().item()
        p.data[idx] = old
        numeric = (up - down) / (2.0 * h)
        a = float(analytic[name][idx])
        report.entries.append(
            GradEntry(name, tuple(int(i) for i in idx), a, numeric, relative_error(a, numeric))
        )
    return report
