"""Dense float64 matrices with tape-based reverse-mode differentiation.

Every differentiable operation appends a :class:`TapeNode` to the active
:class:`Tape` (entered with ``with Tape() as tape:``) when at least one operand
requires a gradient. :func:`backward` walks the tape in reverse and returns the
gradient of a scalar loss for each leaf parameter.

All randomness comes from an explicitly passed ``numpy.random.Generator``
(PCG64, built by :func:`make_rng`); nothing here touches global RNG state.
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("active_tape", default=None)


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """Input lies outside an operation's mathematical domain."""


def make_rng(seed: int) -> np.random.Generator:
    """The single generator algorithm used by the whole package (PCG64)."""
    return np.random.Generator(np.random.PCG64(seed))


class DenseTensor:
    """A rows x cols float64 matrix, optionally tracked for differentiation."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"DenseTensor must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("DenseTensor entries must be finite")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "DenseTensor":
        # Internal constructor for op results: skips the copy and re-validation.
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.name = None
        return t

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "DenseTensor":
        return DenseTensor._wrap(self.data, False)

    def __repr__(self) -> str:
        return f"DenseTensor({self.rows}x{self.cols}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(other))

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)


def as_tensor(x) -> DenseTensor:
    return x if isinstance(x, DenseTensor) else DenseTensor(x)


@dataclass
class TapeNode:
    op: str
    parents: tuple[DenseTensor, ...]
    output: DenseTensor
    # Maps the output gradient to one gradient (or None) per parent.
    backward_fn: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


@dataclass
class Tape:
    """Append-only record of the operations of one forward pass."""

    nodes: list[TapeNode] = field(default_factory=list)
    _token: contextvars.Token | None = field(default=None, repr=False)

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)


def _record(op: str, parents: Sequence[DenseTensor], out: np.ndarray, backward_fn) -> DenseTensor:
    tracked = any(p.requires_grad for p in parents)
    tape = _ACTIVE_TAPE.get()
    result = DenseTensor._wrap(out, tracked and tape is not None)
    if result.requires_grad:
        tape.nodes.append(TapeNode(op, tuple(parents), result, backward_fn))
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    # Sum over axes along which a 1-row or 1-col operand was broadcast.
    if grad.shape == shape:
        return grad
    if shape[0] == 1 and grad.shape[0] != 1:
        grad = grad.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        grad = grad.sum(axis=1, keepdims=True)
    return grad


def _broadcast_shape(a: DenseTensor, b: DenseTensor, op: str) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}")


# --------------------------------------------------------------------------- ops


def matmul(a, b) -> DenseTensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    out = a.data @ b.data

    def back(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _record("matmul", (a, b), out, back)


def add(a, b) -> DenseTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    out = a.data + b.data
    return _record("add", (a, b), out, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b) -> DenseTensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    out = a.data * b.data
    return _record(
        "mul",
        (a, b),
        out,
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a) -> DenseTensor:
    a = as_tensor(a)
    return _record("neg", (a,), -a.data, lambda g: (-g,))


def scale(a, c: float) -> DenseTensor:
    a = as_tensor(a)
    return _record("scale", (a,), a.data * c, lambda g: (g * c,))


def relu(a) -> DenseTensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _record("relu", (a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def log(a) -> DenseTensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive value")
    return _record("log", (a,), np.log(a.data), lambda g: (g / a.data,))


def exp(a) -> DenseTensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record("exp", (a,), out, lambda g: (g * out,))


def sigmoid(a) -> DenseTensor:
    a = as_tensor(a)
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _record("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def power(a, p: float) -> DenseTensor:
    a = as_tensor(a)
    if p < 0 and np.any(a.data <= 0):
        raise DomainError("negative power of non-positive value")
    out = a.data**p
    return _record("power", (a,), out, lambda g: (g * p * a.data ** (p - 1),))


def softmax(v, axis: int = 1):
    """Max-shifted softmax along ``axis`` (rows by default).

    Plain sequences and 1-D arrays are treated as a single vector and a 1-D
    numpy array is returned; DenseTensor inputs give a tape-recorded tensor.
    """
    if not isinstance(v, DenseTensor):
        arr = np.asarray(v, dtype=np.float64)
        if arr.size == 0:
            raise ValueError("softmax of an empty vector")
        if arr.ndim == 1:
            return softmax(DenseTensor(arr.reshape(1, -1))).data.ravel()
        v = DenseTensor(arr)
    if v.data.size == 0:
        raise ValueError("softmax of an empty tensor")
    z = v.data - v.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _record("softmax", (v,), out, back)


def sum_all(a) -> DenseTensor:
    a = as_tensor(a)
    return _record("sum", (a,), np.array([[a.data.sum()]]), lambda g: (np.full(a.shape, g[0, 0]),))


def row_sum(a) -> DenseTensor:
    """Sum across columns, giving a rows x 1 tensor."""
    a = as_tensor(a)
    return _record("row_sum", (a,), a.data.sum(axis=1, keepdims=True), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def col_sum(a) -> DenseTensor:
    a = as_tensor(a)
    return _record("col_sum", (a,), a.data.sum(axis=0, keepdims=True), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def transpose(a) -> DenseTensor:
    a = as_tensor(a)
    return _record("transpose", (a,), a.data.T.copy(), lambda g: (g.T,))


def select_rows(a, index) -> DenseTensor:
    """Gather rows ``index`` (masked-select on the node axis)."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)

    def back(g):
        full = np.zeros(a.shape)
        np.add.at(full, index, g)
        return (full,)

    return _record("select_rows", (a,), a.data[index], back)


def concat(tensors: Sequence[DenseTensor], axis: int = 0) -> DenseTensor:
    tensors = [as_tensor(t) for t in tensors]
    other = 1 - axis
    if len({t.shape[other] for t in tensors}) != 1:
        raise DimensionError(f"concat: shapes {[t.shape for t in tensors]} disagree off axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def back(g):
        if axis == 0:
            return tuple(g[s:e] for s, e in zip(bounds[:-1], bounds[1:]))
        return tuple(g[:, s:e] for s, e in zip(bounds[:-1], bounds[1:]))

    return _record("concat", tuple(tensors), out, back)


def pick(a, rows, cols) -> DenseTensor:
    """Gather single entries ``a[rows[k], cols[k]]`` into a column vector."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)

    def back(g):
        full = np.zeros(a.shape)
        np.add.at(full, (rows, cols), g[:, 0])
        return (full,)

    return _record("pick", (a,), a.data[rows, cols].reshape(-1, 1), back)


def pairwise_distance(a) -> DenseTensor:
    """Euclidean distances between all row pairs, n x n.

    The derivative of ``sqrt`` is unbounded at zero; pairs at distance zero
    (including the diagonal) get a zero subgradient.
    """
    a = as_tensor(a)
    diff = a.data[:, None, :] - a.data[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))

    def back(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(dist > 0, g / dist, 0.0)
        coef = coef + coef.T
        return ((coef[:, :, None] * diff).sum(axis=1),)

    return _record("pairwise_distance", (a,), dist, back)


_ELEMENTWISE = {"relu": relu, "log": log, "neg": neg, "mul": mul, "add": add}


def elementwise(kind: str, *operands) -> DenseTensor:
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {kind!r}") from None
    if kind in ("mul", "add"):
        a, b = (as_tensor(o) for o in operands)
        if a.shape != b.shape:
            raise DimensionError(f"{kind}: operand shapes {a.shape} and {b.shape} differ")
    return fn(*operands)


def dropout(x, rate: float, rng: np.random.Generator | None, training: bool) -> DenseTensor:
    """Inverted dropout; the exact identity when not training or rate == 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _record("dropout", (x,), x.data * keep, lambda g: (g * keep,))


# ---------------------------------------------------------------------- backward


def backward(tape: Tape, loss: DenseTensor, params: Sequence[DenseTensor] | None = None) -> dict[int, np.ndarray]:
    """Reverse accumulation over ``tape``.

    Returns gradients keyed by ``id(param)`` for every leaf that requires a
    gradient (or only for ``params`` when given; untouched ones get zeros).
    """
    if loss.shape != (1, 1):
        raise ValueError(f"backward needs a scalar (1x1) loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    leaves: dict[int, DenseTensor] = {}
    produced = {id(node.output) for node in tape.nodes}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key not in produced:
                leaves[key] = parent
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    if id(loss) not in produced:
        # The loss itself is a leaf.
        leaves[id(loss)] = loss
    out = {k: grads[k] for k in leaves if k in grads}
    if params is not None:
        out = {id(p): out.get(id(p), np.zeros(p.shape)) for p in params}
    return out


def gradients(loss_fn: Callable[[], DenseTensor], params: Sequence[DenseTensor]) -> list[np.ndarray]:
    """Evaluate ``loss_fn`` on a fresh tape and return d loss / d param, in order."""
    with Tape() as tape:
        loss = loss_fn()
    g = backward(tape, loss, params)
    return [g[id(p)] for p in params]


def finite_difference(loss_fn: Callable[[], DenseTensor], params: Sequence[DenseTensor], h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of ``loss_fn`` w.r.t. every entry of ``params``."""
    out = []
    for p in params:
        g = np.zeros(p.shape)
        flat = p.data.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = loss_fn().item()
            flat[k] = orig - h
            down = loss_fn().item()
            flat[k] = orig
            g.reshape(-1)[k] = (up - down) / (2 * h)
        out.append(g)
    return out


def gradcheck(loss_fn: Callable[[], DenseTensor], params: Sequence[DenseTensor], h: float = 1e-5, floor: float = 1e-3) -> float:
    """Largest entrywise relative error between tape and finite-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    near-zero entries from dividing finite-difference noise by ~0.
    ``loss_fn`` must be deterministic (reseed any dropout inside it).
    """
    analytic = gradients(loss_fn, params)
    numeric = finite_difference(loss_fn, params, h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


# -------------------------------------------------------------------------- adam


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[DenseTensor], **kw) -> "AdamState":
        return cls([np.zeros(p.shape) for p in params], [np.zeros(p.shape) for p in params], **kw)


def adam_step(
    params: Sequence[DenseTensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    direction: str = "descend",
) -> tuple[Sequence[DenseTensor], AdamState]:
    """One bias-corrected Adam update, in place. ``ascend`` flips the gradient sign."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if direction not in ("descend", "ascend"):
        raise ValueError(f"direction must be 'descend' or 'ascend', got {direction!r}")
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise DimensionError("params, grads and Adam moments differ in length")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"Adam: parameter {p.shape} vs gradient {g.shape} vs moment {m.shape}")
        if direction == "ascend":
            g = -g
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
