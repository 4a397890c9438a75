"""Dense float64 tensors with reverse-mode differentiation.

Every differentiable operation is a :class:`Primitive` with a forward rule that
returns ``(output, saved)`` and a backward rule that maps the output gradient
to input gradients. Applying a primitive to inputs of which at least one
requires grad attaches a :class:`Node` to the output; the nodes reachable from
a scalar loss form the computation record that :func:`backward` walks and that
:func:`trace` / :func:`replay` expose for inspection.

There is no global tape and no grad mode switch: graphs exist only as
references between tensors, so tensors that never touch a parameter carry no
bookkeeping at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

GELU_COEF = 0.044715
_SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))
_BCE_CLIP = 1e-15


def _as_data(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_data(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self, params: Iterable["Tensor"] | None = None) -> None:
        backward(self, params)

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_lift(other), -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass(eq=False)
class Node:
    op: "Primitive"
    inputs: tuple[Tensor, ...]
    attrs: dict[str, Any]
    saved: Any


class Primitive:
    """One differentiable operation.

    ``forward(*arrays, **attrs)`` returns ``(out, saved)``.
    ``backward(g, node, needs)`` returns one gradient (or ``None``) per input.
    """

    name: str = ""

    def forward(self, *xs: np.ndarray, **attrs):
        raise NotImplementedError

    def backward(self, g: np.ndarray, node: Node, needs: Sequence[bool]):
        raise NotImplementedError

    def __call__(self, *inputs: Tensor, **attrs) -> Tensor:
        arrays = [t.data for t in inputs]
        out, saved = self.forward(*arrays, **attrs)
        result = Tensor(out)
        if any(t.requires_grad for t in inputs):
            result.requires_grad = True
            result._node = Node(self, tuple(inputs), attrs, saved)
        return result


PRIMITIVES: dict[str, Primitive] = {}


def _register(cls):
    inst = cls()
    PRIMITIVES[inst.name] = inst
    return inst


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


@_register
class _Add(Primitive):
    name = "add"

    def forward(self, a, b):
        return a + b, None

    def backward(self, g, node, needs):
        a, b = node.inputs
        return (
            unbroadcast(g, a.shape) if needs[0] else None,
            unbroadcast(g, b.shape) if needs[1] else None,
        )


@_register
class _Mul(Primitive):
    name = "mul"

    def forward(self, a, b):
        return a * b, None

    def backward(self, g, node, needs):
        a, b = node.inputs
        return (
            unbroadcast(g * b.data, a.shape) if needs[0] else None,
            unbroadcast(g * a.data, b.shape) if needs[1] else None,
        )


@_register
class _Scale(Primitive):
    name = "scale"

    def forward(self, a, c):
        return a * c, None

    def backward(self, g, node, needs):
        return (g * node.attrs["c"],)


@_register
class _MatMul(Primitive):
    name = "matmul"

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        try:
            return a @ b, None
        except ValueError as exc:
            raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}") from exc

    def backward(self, g, node, needs):
        a, b = node.inputs
        ga = gb = None
        if needs[0]:
            ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if needs[1]:
            if b.ndim == 2:
                k = a.shape[-1]
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb


@_register
class _Reshape(Primitive):
    name = "reshape"

    def forward(self, a, shape):
        return a.reshape(shape), None

    def backward(self, g, node, needs):
        return (g.reshape(node.inputs[0].shape),)


@_register
class _Transpose(Primitive):
    name = "transpose"

    def forward(self, a, axes):
        return np.transpose(a, axes), None

    def backward(self, g, node, needs):
        return (np.transpose(g, np.argsort(node.attrs["axes"])),)


@_register
class _Sum(Primitive):
    name = "sum"

    def forward(self, a, axis=None):
        return np.sum(a, axis=axis), None

    def backward(self, g, node, needs):
        x = node.inputs[0]
        axis = node.attrs.get("axis")
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)


@_register
class _SoftmaxRows(Primitive):
    name = "softmax_rows"

    def forward(self, a):
        m = a.max(axis=-1, keepdims=True)
        if np.any(np.isneginf(m)):
            raise ContractError("softmax_rows: a row is fully masked (no valid entry)")
        e = np.exp(a - m)
        s = e / e.sum(axis=-1, keepdims=True)
        return s, s

    def backward(self, g, node, needs):
        s = node.saved
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)


@_register
class _LayerNorm(Primitive):
    name = "layer_norm"

    def forward(self, x, gamma, beta, eps):
        if gamma.shape != x.shape[-1:] or beta.shape != x.shape[-1:]:
            raise DimensionError(
                f"layer_norm: gamma {gamma.shape} / beta {beta.shape} vs input {x.shape}"
            )
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        return xhat * gamma + beta, (xhat, inv)

    def backward(self, g, node, needs):
        x, gamma, _ = node.inputs
        xhat, inv = node.saved
        lead = tuple(range(g.ndim - 1))
        gx = None
        if needs[0]:
            d = x.shape[-1]
            gh = g * gamma.data
            gx = (inv / d) * (
                d * gh
                - gh.sum(axis=-1, keepdims=True)
                - xhat * (gh * xhat).sum(axis=-1, keepdims=True)
            )
        ggamma = (g * xhat).sum(axis=lead) if needs[1] else None
        gbeta = g.sum(axis=lead) if needs[2] else None
        return gx, ggamma, gbeta


@_register
class _Gelu(Primitive):
    name = "gelu"

    def forward(self, x):
        u = _SQRT_2_OVER_PI * (x + GELU_COEF * (x * x * x))
        t = np.tanh(u)
        return 0.5 * x * (1.0 + t), t

    def backward(self, g, node, needs):
        x = node.inputs[0].data
        t = node.saved
        du = _SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du),)


@_register
class _Embedding(Primitive):
    name = "embedding"

    def forward(self, table, ids):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise ContractError(
                f"embedding id out of range [0, {table.shape[0]}): "
                f"min {ids.min()}, max {ids.max()}"
            )
        return table[ids], None

    def backward(self, g, node, needs):
        table = node.inputs[0]
        gt = np.zeros_like(table.data)
        d = table.shape[-1]
        np.add.at(gt, np.asarray(node.attrs["ids"]).reshape(-1), g.reshape(-1, d))
        return (gt,)


@_register
class _Concat(Primitive):
    name = "concat"

    def forward(self, *xs, axis=-1):
        return np.concatenate(xs, axis=axis), [x.shape[axis] for x in xs]

    def backward(self, g, node, needs):
        cuts = np.cumsum(node.saved)[:-1]
        parts = np.split(g, cuts, axis=node.attrs.get("axis", -1))
        return tuple(p if n else None for p, n in zip(parts, needs))


@_register
class _Slice(Primitive):
    name = "slice"

    def forward(self, x, key):
        return x[key], None

    def backward(self, g, node, needs):
        gx = np.zeros_like(node.inputs[0].data)
        np.add.at(gx, node.attrs["key"], g)
        return (gx,)


@_register
class _Sigmoid(Primitive):
    name = "sigmoid"

    def forward(self, x):
        # split by sign to avoid overflow in exp
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out, out

    def backward(self, g, node, needs):
        s = node.saved
        return (g * s * (1.0 - s),)


@_register
class _Log(Primitive):
    name = "log"

    def forward(self, x):
        return np.log(x), None

    def backward(self, g, node, needs):
        return (g / node.inputs[0].data,)


@_register
class _BCE(Primitive):
    """Elementwise binary cross-entropy on probabilities; targets are constants."""

    name = "bce"

    def forward(self, p, target):
        y = np.asarray(target, dtype=np.float64)
        pc = np.clip(p, _BCE_CLIP, 1.0 - _BCE_CLIP)
        return -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)), pc

    def backward(self, g, node, needs):
        pc = node.saved
        y = np.asarray(node.attrs["target"], dtype=np.float64)
        return (g * (pc - y) / (pc * (1.0 - pc)),)


@_register
class _CrossEntropy(Primitive):
    """Per-row soft-target cross-entropy on logits (last axis).

    Masked logits may be -inf as long as their target mass is zero. Rows whose
    target sums to zero produce loss 0 and zero gradient.
    """

    name = "cross_entropy"

    def forward(self, logits, target):
        t = np.asarray(target, dtype=np.float64)
        m = logits.max(axis=-1, keepdims=True)
        if np.any(np.isneginf(m)):
            raise ContractError("cross_entropy: a row is fully masked (no valid entry)")
        z = logits - m
        lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
        logp = z - lse
        pos = t > 0
        if np.any(np.isneginf(logp) & pos):
            raise ContractError("cross_entropy: target mass on a masked entry")
        loss = -np.where(pos, t * np.where(pos, logp, 0.0), 0.0).sum(axis=-1)
        return loss, np.exp(logp)

    def backward(self, g, node, needs):
        p = node.saved
        t = np.asarray(node.attrs["target"], dtype=np.float64)
        mass = t.sum(axis=-1, keepdims=True)
        return (g[..., None] * (p * mass - t),)


add = PRIMITIVES["add"]
mul = PRIMITIVES["mul"]
sigmoid = PRIMITIVES["sigmoid"]
log = PRIMITIVES["log"]
gelu = PRIMITIVES["gelu"]
softmax_rows = PRIMITIVES["softmax_rows"]


def scale(a: Tensor, c: float) -> Tensor:
    return PRIMITIVES["scale"](a, c=float(c))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return PRIMITIVES["matmul"](a, b)


def reshape(a: Tensor, shape) -> Tensor:
    return PRIMITIVES["reshape"](a, shape=tuple(shape))


def transpose(a: Tensor, axes) -> Tensor:
    return PRIMITIVES["transpose"](a, axes=tuple(axes))


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    return PRIMITIVES["sum"](a, axis=axis)


def mean(a: Tensor) -> Tensor:
    return scale(sum_(a), 1.0 / a.data.size)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    if eps <= 0:
        raise ContractError("layer_norm eps must be positive")
    return PRIMITIVES["layer_norm"](x, gamma, beta, eps=float(eps))


def embedding(table: Tensor, ids) -> Tensor:
    return PRIMITIVES["embedding"](table, ids=np.asarray(ids, dtype=np.int64))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    return PRIMITIVES["concat"](*tensors, axis=axis)


def slice_(x: Tensor, key) -> Tensor:
    return PRIMITIVES["slice"](x, key=key)


def bce(p: Tensor, target) -> Tensor:
    return PRIMITIVES["bce"](p, target=np.asarray(target, dtype=np.float64))


def cross_entropy(logits: Tensor, target) -> Tensor:
    return PRIMITIVES["cross_entropy"](logits, target=np.asarray(target, dtype=np.float64))


# -- graph walking -----------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t._node is not None:
            for x in reversed(t._node.inputs):
                if id(x) not in seen:
                    stack.append((x, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Gradients add onto whatever ``.grad`` already holds; callers zero them
    between steps. Any tensor in ``params`` that the loss does not reach gets
    a zero gradient if it has none yet.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(_topo_order(loss)):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        node = t._node
        if node is None:
            if t.requires_grad:
                t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        needs = [x.requires_grad for x in node.inputs]
        for x, gx in zip(node.inputs, node.op.backward(g, node, needs)):
            if gx is None or not x.requires_grad:
                continue
            prev = grads.get(id(x))
            grads[id(x)] = gx if prev is None else prev + gx
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


@dataclass(frozen=True)
class Step:
    op: str
    inputs: tuple[int, ...]
    output: int
    attrs: dict[str, Any]
    saved: Any


@dataclass
class ComputationRecord:
    """Topologically ordered primitive applications leading to one output.

    Node ids index ``values``: leaves first appear as inputs, every step
    writes exactly one new id.
    """

    steps: list[Step]
    leaves: dict[int, np.ndarray]
    output: int
    values: dict[int, np.ndarray] = field(repr=False)

    def __len__(self) -> int:
        return len(self.steps)


def trace(root: Tensor) -> ComputationRecord:
    ids: dict[int, int] = {}
    leaves: dict[int, np.ndarray] = {}
    values: dict[int, np.ndarray] = {}
    steps: list[Step] = []
    for t in _topo_order(root):
        nid = ids.setdefault(id(t), len(ids))
        values[nid] = t.data
        if t._node is None:
            leaves[nid] = t.data.copy()
            continue
        node = t._node
        steps.append(
            Step(node.op.name, tuple(ids[id(x)] for x in node.inputs), nid, node.attrs, node.saved)
        )
    return ComputationRecord(steps, leaves, ids[id(root)], values)


def replay(record: ComputationRecord) -> dict[int, np.ndarray]:
    """Re-run every step from the recorded leaf values; returns all node values."""
    env = dict(record.leaves)
    for step in record.steps:
        out, _ = PRIMITIVES[step.op].forward(*(env[i] for i in step.inputs), **step.attrs)
        env[step.output] = _as_data(out)
    return env
