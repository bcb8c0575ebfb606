"""A small reverse-mode autodiff engine over float64 numpy arrays.

Every op returns a new ``Tensor`` that remembers its parents and a closure
mapping the output gradient to parent gradients. ``backward`` walks the
graph in reverse topological order and accumulates into leaf tensors only.
"""

from __future__ import annotations

import contextlib
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

NEG_INF = np.finfo(np.float64).min

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (used for baseline rollouts and evaluation)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = _parents
        self._backward: Optional[Callable] = _backward

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    __add__ = lambda a, b: add(a, b)
    __radd__ = lambda a, b: add(b, a)
    __sub__ = lambda a, b: sub(a, b)
    __rsub__ = lambda a, b: sub(b, a)
    __mul__ = lambda a, b: mul(a, b)
    __rmul__ = lambda a, b: mul(b, a)
    __neg__ = lambda a: scale(a, -1.0)
    __matmul__ = lambda a, b: matmul(a, b)
    __getitem__ = lambda a, idx: getitem(a, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward_fn) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward_fn)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def masked_fill(a, mask, value: float) -> Tensor:
    """Write ``value`` where ``mask`` is true; -inf is stored as the most negative finite float."""
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    if value == -np.inf:
        value = NEG_INF
    keep = ~mask
    return _make(np.where(mask, value, a.data), (a,), lambda g: (g * keep,))


# ---------------------------------------------------------------- linear algebra / shape

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} to {tuple(shape)}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    def back(g):
        z = np.zeros(a.shape)
        np.add.at(z, idx, g)
        return (z,)

    return _make(a.data[idx], (a,), back)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ts[0].shape)) if i != ax
        ):
            raise ShapeError(f"concat: incompatible shapes {ts[0].shape} and {t.shape}")
    sizes = np.cumsum([t.shape[ax] for t in ts])[:-1]
    return _make(np.concatenate([t.data for t in ts], axis=ax), ts,
                 lambda g: tuple(np.split(g, sizes, axis=ax)))


# ---------------------------------------------------------------- reductions

def sum_(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), back)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[x] for x in np.atleast_1d(axis)])
    return scale(sum_(a, axis), 1.0 / count)


def softmax(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    return _make(y, (a,), lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse
    p = np.exp(y)
    return _make(y, (a,), lambda g: (g - p * g.sum(axis=-1, keepdims=True),))


# ---------------------------------------------------------------- backward pass

def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf that requires grad."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    # iterative post-order DFS; inputs land before every consumer
    order, visited = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    grads = {id(loss): np.ones(loss.shape)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if not p.requires_grad or pg is None:
                continue
            k = id(p)
            grads[k] = pg if k not in grads else grads[k] + pg


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------- Adam

@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **kw) -> "AdamState":
        st = cls(**kw)
        st.first_moment = [np.zeros(p.shape) for p in params]
        st.second_moment = [np.zeros(p.shape) for p in params]
        return st


class OptimizerStateError(RuntimeError):
    pass


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update, in place on ``params``."""
    if len(state.first_moment) != len(params):
        raise OptimizerStateError("optimizer state does not match the parameter list")
    missing = [i for i, p in enumerate(params) if p.grad is None]
    if missing:
        raise OptimizerStateError(f"parameters {missing} have no gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, m, v in zip(params, state.first_moment, state.second_moment):
        if m.shape != p.shape:
            raise OptimizerStateError(f"moment shape {m.shape} != parameter shape {p.shape}")
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


# ---------------------------------------------------------------- checkpoints

CKPT_MAGIC = b"MVRPCKPT"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors: dict, meta: Optional[dict] = None) -> None:
    """Write named float64 arrays: magic, version, JSON header, then (name, shape, data) entries."""
    header = json.dumps(meta or {}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr.data if isinstance(arr, Tensor) else arr, dtype="<f8")
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_tensors(path, expected: Optional[dict] = None) -> tuple[dict, dict]:
    """Read a checkpoint; ``expected`` maps names to shapes that must all be present."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    version, hlen = take("<II")
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(blob[pos:pos + hlen].decode())
    pos += hlen
    (count,) = take("<I")
    out = {}
    for _ in range(count):
        (nlen,) = take("<I")
        name = blob[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = take("<I")
        shape = take(f"<{ndim}Q") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        if pos + 8 * n > len(blob):
            raise CheckpointError(f"{path}: truncated tensor {name!r}")
        out[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if expected is not None:
        for name, shape in expected.items():
            if name not in out:
                raise CheckpointError(f"{path}: missing tensor {name!r}")
            if tuple(out[name].shape) != tuple(shape):
                raise CheckpointError(f"{path}: tensor {name!r} has shape {out[name].shape}, expected {tuple(shape)}")
        extra = set(out) - set(expected)
        if extra:
            raise CheckpointError(f"{path}: unexpected tensors {sorted(extra)}")
    return meta, out
