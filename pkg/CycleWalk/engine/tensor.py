# This file is a part of CycleWalk

from __future__ import annotations
import inspect
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np

from CycleWalk.exceptions import NumericOverflow, ShapeMismatch, UsageError

DTYPES = {"float32": np.float32, "float64": np.float64}
DROPPED = -1e10


@dataclass(eq=False)
class ComputeNode:
    """One recorded operation: its kind, the tensors it read and how to
    push an output gradient back onto them."""
    op: str
    inputs: tuple
    backward: Optional[Callable[[np.ndarray], tuple]] = None
    saved: dict = field(default_factory=dict)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data, dtype=None, requires_grad: bool = False,
                 name: str = None, node: ComputeNode = None):
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64) else np.float64
        arr = np.array(data, dtype=DTYPES.get(dtype, dtype))
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.node = node
        self.name = name

    def __repr__(self) -> str:
        op = self.node.op if self.node else "leaf"
        return f"<Tensor {self.name or op} shape={self.shape} dtype={self.dtype.name} requires_grad={self.requires_grad}>"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def op(self) -> str:
        return self.node.op if self.node else "leaf"

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __mul__(self, other: Union[Tensor, float]) -> Tensor:
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__


def _check_finite(op: str, data: np.ndarray) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericOverflow(node=op, shape=data.shape)


def _check_dtypes(op: str, *tensors: Tensor) -> None:
    kinds = {t.dtype for t in tensors}
    if len(kinds) > 1:
        raise ShapeMismatch("Mixed precision operands", node=op,
                            expected=tensors[0].dtype.name,
                            actual=[t.dtype.name for t in tensors])


def _require_rank(op: str, t: Tensor, rank: int) -> None:
    if t.ndim != rank:
        raise ShapeMismatch(node=op, expected=f"rank {rank}", actual=t.shape)


def _emit(op: str, data: np.ndarray, inputs: Sequence[Tensor],
          backward: Callable[[np.ndarray], tuple], **saved) -> Tensor:
    _check_finite(op, data)
    requires = any(t.requires_grad for t in inputs)
    node = ComputeNode(op, tuple(inputs), backward if requires else None, saved)
    return Tensor(data, dtype=data.dtype, requires_grad=requires, node=node)


# ----------[Linear algebra]----------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_rank("matmul", a, 2)
    _require_rank("matmul", b, 2)
    _check_dtypes("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(node="matmul", expected=f"({a.shape[1]}, *)", actual=b.shape)
    a_data, b_data = a.data, b.data

    def grad_fn(g):
        return g @ b_data.T, a_data.T @ g
    return _emit("matmul", a_data @ b_data, (a, b), grad_fn)


def transpose(x: Tensor) -> Tensor:
    _require_rank("transpose", x, 2)
    return _emit("transpose", x.data.T.copy(), (x,), lambda g: (g.T,))


# ----------[Elementwise]----------
def add(a: Tensor, b: Tensor) -> Tensor:
    """Same-shape sum, or a bias row vector added to every row of a matrix."""
    _check_dtypes("add", a, b)
    if a.shape == b.shape:
        return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))
    if a.ndim == 2 and b.ndim == 1 and b.shape[0] == a.shape[1]:
        return _emit("add", a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0)))
    raise ShapeMismatch(node="add", expected=a.shape, actual=b.shape)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes("mul", a, b)
    if a.shape != b.shape:
        raise ShapeMismatch(node="mul", expected=a.shape, actual=b.shape)
    a_data, b_data = a.data, b.data
    return _emit("mul", a_data * b_data, (a, b), lambda g: (g * b_data, g * a_data))


def scale(x: Tensor, c: float) -> Tensor:
    c = x.dtype.type(c)
    return _emit("scale", x.data * c, (x,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    active = x.data > 0
    return _emit("relu", np.where(active, x.data, 0).astype(x.dtype), (x,), lambda g: (g * active,))


def log(x: Tensor, floor: float = 0.0) -> Tensor:
    shifted = x.data + x.dtype.type(floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(shifted)
    return _emit("log", out, (x,), lambda g: (g / shifted,))


def mask_fill(x: Tensor, mask: np.ndarray, value: float = DROPPED) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ShapeMismatch(node="mask_fill", expected=x.shape, actual=mask.shape)
    out = np.where(mask, x.dtype.type(value), x.data)
    return _emit("mask_fill", out, (x,), lambda g: (np.where(mask, 0, g).astype(g.dtype),))


# ----------[Row-wise]----------
def l2_normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    _require_rank("l2_normalize_rows", x, 2)
    norm = np.sqrt(np.sum(x.data * x.data, axis=1, keepdims=True))
    denom = norm + x.dtype.type(eps)
    y = x.data / denom
    x_data = x.data
    safe_norm = np.where(norm > 0, norm, 1)

    def grad_fn(g):
        # d(x/(|x|+eps)) = g/(|x|+eps) - x <x,g> / (|x| (|x|+eps)^2)
        proj = np.sum(x_data * g, axis=1, keepdims=True)
        return (g / denom - x_data * proj / (safe_norm * denom * denom),)
    return _emit("l2_normalize_rows", y, (x,), grad_fn)


def row_softmax(z: Tensor) -> Tensor:
    _require_rank("row_softmax", z, 2)
    shifted = z.data - z.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        return (p * (g - np.sum(g * p, axis=1, keepdims=True)),)
    return _emit("row_softmax", p, (z,), grad_fn)


def row_renormalize(x: Tensor, keep: np.ndarray) -> Tensor:
    """Zero the dropped entries of a row-stochastic matrix and renormalize
    each row. Rows with no surviving mass are left as they were."""
    _require_rank("row_renormalize", x, 2)
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != x.shape:
        raise ShapeMismatch(node="row_renormalize", expected=x.shape, actual=keep.shape)
    kept = np.where(keep, x.data, 0)
    total = kept.sum(axis=1, keepdims=True)
    dead = (total <= 0).ravel()
    if dead.any():
        keep = keep.copy()
        keep[dead] = True
        kept = np.where(keep, x.data, 0)
        total = kept.sum(axis=1, keepdims=True)
    out = kept / total

    def grad_fn(g):
        g_kept = (g - np.sum(g * out, axis=1, keepdims=True)) / total
        return (np.where(keep, g_kept, 0).astype(g.dtype),)
    return _emit("row_renormalize", out.astype(x.dtype), (x,), grad_fn, keep=keep)


# ----------[Indexing and reductions]----------
def gather(x: Tensor, rows, cols) -> Tensor:
    _require_rank("gather", x, 2)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.shape != cols.shape or rows.ndim != 1:
        raise ShapeMismatch(node="gather", expected=rows.shape, actual=cols.shape)
    shape = x.shape

    def grad_fn(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, (rows, cols), g)
        return (out,)
    return _emit("gather", x.data[rows, cols], (x,), grad_fn)


def sum(x: Tensor) -> Tensor:  # noqa: A001
    shape = x.shape
    return _emit("sum", np.sum(x.data), (x,), lambda g: (np.full(shape, g, dtype=x.dtype),))


def softmax_xent(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy of row_softmax(logits) against integer targets.
    The backward pass uses the fused form (p - onehot) / n."""
    _require_rank("softmax_xent", logits, 2)
    targets = np.asarray(targets, dtype=np.int64)
    n, c = logits.shape
    if targets.shape != (n,) or np.any((targets < 0) | (targets >= c)):
        raise ShapeMismatch(node="softmax_xent", expected=(n,), actual=targets.shape)
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    p = np.exp(log_p)
    loss = -np.mean(log_p[np.arange(n), targets])

    def grad_fn(g):
        delta = p.copy()
        delta[np.arange(n), targets] -= 1
        return (delta * (g / n),)
    return _emit("softmax_xent", np.asarray(loss, dtype=logits.dtype), (logits,), grad_fn, probs=p)


# ----------[Backward]----------
def topological_order(root: Tensor) -> list:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        t, done = stack.pop()
        if done:
            order.append(t)
            continue
        if id(t) in visited:
            continue
        visited.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for parent in t.node.inputs:
                if id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor, params=None) -> Dict[str, np.ndarray]:
    """Accumulate d(loss)/d(tensor) into `.grad` of every tensor on a path
    to `loss`; return the gradients of `params` by name. Parameters that
    do not reach the loss get exact zeros."""
    if loss.data.size != 1:
        raise ShapeMismatch("Backward needs a scalar loss", node=loss.op, expected="scalar", actual=loss.shape)
    order = topological_order(loss)
    for t in order:
        t.grad = None
    loss.grad = np.ones_like(loss.data)
    for t in reversed(order):
        if t.grad is None or t.node is None or t.node.backward is None:
            continue
        for parent, g in zip(t.node.inputs, t.node.backward(t.grad)):
            if g is None or not parent.requires_grad:
                continue
            if g.shape != parent.shape:
                raise ShapeMismatch("Gradient shape differs from forward output",
                                    node=parent.op, expected=parent.shape, actual=g.shape)
            parent.grad = g if parent.grad is None else parent.grad + g
    if params is None:
        return {}
    on_path = {id(t) for t in order}
    grads = {}
    for name, p in params.items():
        if id(p) in on_path and p.grad is not None:
            grads[name] = np.array(p.grad, dtype=p.dtype)
        else:
            grads[name] = np.zeros_like(p.data)
    return grads


class Graph:
    """A build function over named input tensors, evaluated on demand.

    `forward` binds the inputs and caches the named outputs; `backward`
    differentiates one cached scalar output.
    """

    def __init__(self, build: Callable[..., Union[Tensor, Dict[str, Tensor]]], name: str = None):
        self.build = build
        self.name = name or getattr(build, "__name__", "graph")
        self.outputs: Optional[Dict[str, Tensor]] = None
        self._required = [
            p.name for p in inspect.signature(build).parameters.values()
            if p.default is inspect.Parameter.empty
            and p.kind in (p.POSITIONAL_OR_KEYWORD, p.KEYWORD_ONLY)
        ]

    def forward(self, **inputs) -> Dict[str, Tensor]:
        missing = [n for n in self._required if n not in inputs]
        if missing:
            raise UsageError("Unbound graph inputs", graph=self.name, missing=missing)
        out = self.build(**inputs)
        self.outputs = {"out": out} if isinstance(out, Tensor) else dict(out)
        logging.debug(f"Evaluated graph {self.name} with outputs {list(self.outputs)}")
        return self.outputs

    def backward(self, output: str = "loss", params=None) -> Dict[str, np.ndarray]:
        if self.outputs is None:
            raise UsageError("backward called before forward", graph=self.name)
        if output not in self.outputs:
            raise UsageError("Unknown graph output", graph=self.name, output=output)
        return backward(self.outputs[output], params)


def forward_eval(graph: Graph, inputs: Dict[str, Tensor]) -> Dict[str, Tensor]:
    return graph.forward(**inputs)
