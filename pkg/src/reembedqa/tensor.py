"""Dense tensors with reverse-mode automatic differentiation.

Every differentiable computation in the package runs on :class:`Tensor`.
Storage is a flat row-major numpy array; there is no broadcasting except
the explicit bias-over-rows in :func:`bias_add`. Training code uses
float32, gradient-check oracles build their graphs in float64.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype)
    if arr.dtype == np.float64 or arr.dtype == np.float32:
        return arr
    return arr.astype(np.float32)


class Tensor:
    """A node in the computation graph.

    Leaf tensors created with ``requires_grad=True`` are parameters;
    operation results carry a closure that pushes gradients to their
    parents. ``backward()`` may only be called on scalar outputs.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        self.data = _as_float_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar output, got shape {self.shape}")
        order = toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # Convenience operators; the named functions carry the real contracts.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)


def toposort(root: Tensor) -> list[Tensor]:
    """Return graph nodes with every parent before its children.

    Iterative, so arbitrarily deep graphs (long recurrences) do not hit
    the interpreter recursion limit. Each node appears exactly once.
    """
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def _make(data: np.ndarray, parents: Sequence[Tensor],
          backward: Callable[[], None] | None) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    out_data = a.data + b.data

    def backward():
        _accumulate(a, out.grad)
        _accumulate(b, out.grad)

    out = _make(out_data, (a, b), backward)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    out_data = a.data - b.data

    def backward():
        _accumulate(a, out.grad)
        _accumulate(b, -out.grad)

    out = _make(out_data, (a, b), backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")
    out_data = a.data * b.data

    def backward():
        _accumulate(a, out.grad * b.data)
        _accumulate(b, out.grad * a.data)

    out = _make(out_data, (a, b), backward)
    return out


def neg(a: Tensor) -> Tensor:
    def backward():
        _accumulate(a, -out.grad)

    out = _make(-a.data, (a,), backward)
    return out


def scale(a: Tensor, s: float) -> Tensor:
    """Multiply by a python scalar (no gradient w.r.t. the scalar)."""

    def backward():
        _accumulate(a, out.grad * s)

    out = _make(a.data * s, (a,), backward)
    return out


def one_minus(a: Tensor) -> Tensor:
    """Elementwise 1 - a; the carry arm of highway/coupled gates."""

    def backward():
        _accumulate(a, -out.grad)

    out = _make(1.0 - a.data, (a,), backward)
    return out


def bias_add(a: Tensor, b: Tensor) -> Tensor:
    """Add a bias vector to every row of a matrix.

    The single sanctioned broadcast: a is (n, d), b is (d,).
    """
    if a.data.ndim != 2 or b.data.ndim != 1 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"bias_add: expected (n, d) and (d,), got {a.shape} and {b.shape}")
    out_data = a.data + b.data

    def backward():
        _accumulate(a, out.grad)
        _accumulate(b, out.grad.sum(axis=0))

    out = _make(out_data, (a, b), backward)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ: {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def backward():
        _accumulate(a, out.grad @ b.data.T)
        _accumulate(b, a.data.T @ out.grad)

    out = _make(out_data, (a, b), backward)
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D, got {a.shape}")

    def backward():
        _accumulate(a, out.grad.T)

    out = _make(a.data.T.copy(), (a,), backward)
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward():
        _accumulate(a, out.grad.reshape(a.shape))

    out = _make(a.data.reshape(shape), (a,), backward)
    return out


def sum_all(a: Tensor) -> Tensor:
    def backward():
        _accumulate(a, np.full_like(a.data, out.grad))

    out = _make(np.asarray(a.data.sum(), dtype=a.data.dtype), (a,), backward)
    return out


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    with np.errstate(over="ignore"):
        out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                            np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward():
        _accumulate(a, out.grad * out.data * (1.0 - out.data))

    out = _make(out_data.astype(x.dtype), (a,), backward)
    return out


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward():
        _accumulate(a, out.grad * (1.0 - out.data * out.data))

    out = _make(out_data, (a,), backward)
    return out


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def backward():
        _accumulate(a, out.grad * (a.data > 0))

    out = _make(out_data, (a,), backward)
    return out


def elementwise(op: str, *inputs: Tensor) -> Tensor:
    """Dispatch an elementwise operation by name."""
    table = {"add": add, "mul": mul, "sigmoid": sigmoid, "tanh": tanh, "relu": relu}
    if op not in table:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(table)}")
    return table[op](*inputs)


# ---------------------------------------------------------------------------
# softmax family


def _softmax_data(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along one axis (max-subtraction)."""
    if a.data.size == 0:
        raise ValueError("softmax: empty input")
    if not np.all(np.isfinite(a.data)):
        raise ValueError("softmax: logits must be finite")
    out_data = _softmax_data(a.data, axis)

    def backward():
        y = out.data
        g = out.grad
        _accumulate(a, (g - (g * y).sum(axis=axis, keepdims=True)) * y)

    out = _make(out_data, (a,), backward)
    return out


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    if a.data.size == 0:
        raise ValueError("log_softmax: empty input")
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    out_data = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward():
        g = out.grad
        _accumulate(a, g - np.exp(out.data) * g.sum(axis=axis, keepdims=True))

    out = _make(out_data, (a,), backward)
    return out


def pick(a: Tensor, index: int) -> Tensor:
    """Select one element of a 1-D tensor as a scalar."""
    if a.data.ndim != 1:
        raise ShapeError(f"pick: expected 1-D tensor, got {a.shape}")
    if not 0 <= index < a.shape[0]:
        raise IndexError(f"pick: index {index} out of range for length {a.shape[0]}")

    def backward():
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[index] += out.grad

    out = _make(np.asarray(a.data[index]), (a,), backward)
    return out


# ---------------------------------------------------------------------------
# structural ops


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    ndim = tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != ndim:
            raise ShapeError(f"concat: rank mismatch {tensors[0].shape} vs {t.shape}")
        for ax in range(ndim):
            if ax != axis % ndim and t.shape[ax] != tensors[0].shape[ax]:
                raise ShapeError(
                    f"concat: non-concat dimension {ax} differs: "
                    f"{tensors[0].shape} vs {t.shape}")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    extents = [t.shape[axis % ndim] for t in tensors]

    def backward():
        offset = 0
        for t, n in zip(tensors, extents):
            sl = [slice(None)] * ndim
            sl[axis % ndim] = slice(offset, offset + n)
            _accumulate(t, out.grad[tuple(sl)])
            offset += n

    out = _make(out_data, tensors, backward)
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"slice_rows: expected 2-D, got {a.shape}")

    def backward():
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[start:stop] += out.grad

    out = _make(a.data[start:stop].copy(), (a,), backward)
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"slice_cols: expected 2-D, got {a.shape}")

    def backward():
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[:, start:stop] += out.grad

    out = _make(a.data[:, start:stop].copy(), (a,), backward)
    return out


def flip_rows(a: Tensor) -> Tensor:
    """Reverse row order; used to run an LSTM in the backward direction."""

    def backward():
        _accumulate(a, out.grad[::-1])

    out = _make(a.data[::-1].copy(), (a,), backward)
    return out


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows by index, with repetition allowed."""
    idx = np.asarray(indices, dtype=np.intp)
    if a.data.ndim != 2:
        raise ShapeError(f"gather_rows: expected 2-D, got {a.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError(f"gather_rows: index out of range for {a.shape[0]} rows")

    def backward():
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, idx, out.grad)

    out = _make(a.data[idx], (a,), backward)
    return out


def tile_rows(a: Tensor, n: int) -> Tensor:
    """Repeat a single-row matrix n times (broadcast concatenation)."""
    if a.data.ndim != 2 or a.shape[0] != 1:
        raise ShapeError(f"tile_rows: expected shape (1, d), got {a.shape}")

    def backward():
        _accumulate(a, out.grad.sum(axis=0, keepdims=True))

    out = _make(np.repeat(a.data, n, axis=0), (a,), backward)
    return out


def segment_max(a: Tensor, starts, ends) -> Tensor:
    """Columnwise max over row segments [starts[i], ends[i]).

    Gradient is routed to the argmax row of each (segment, column) pair,
    matching subgradient semantics of max pooling.
    """
    starts = np.asarray(starts, dtype=np.intp)
    ends = np.asarray(ends, dtype=np.intp)
    if a.data.ndim != 2:
        raise ShapeError(f"segment_max: expected 2-D, got {a.shape}")
    if np.any(ends <= starts):
        raise ValueError("segment_max: every segment must be nonempty")
    n_seg = len(starts)
    d = a.shape[1]
    out_data = np.empty((n_seg, d), dtype=a.data.dtype)
    argmax = np.empty((n_seg, d), dtype=np.intp)
    for i, (s, e) in enumerate(zip(starts, ends)):
        block = a.data[s:e]
        am = block.argmax(axis=0)
        argmax[i] = am + s
        out_data[i] = block[am, np.arange(d)]

    def backward():
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            cols = np.broadcast_to(np.arange(d), (n_seg, d))
            np.add.at(a.grad, (argmax, cols), out.grad)

    out = _make(out_data, (a,), backward)
    return out


def dropout(a: Tensor, rate: float, mode: str, rng: np.random.Generator | None = None,
            variational: bool = False) -> Tensor:
    """Inverted dropout: train-time scaling by 1 / (1 - rate), identity at eval.

    ``variational=True`` draws one mask per feature column and reuses it
    across rows (per-sequence masks for recurrent inputs).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    _check_mode(mode)
    if mode == "eval" or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout: train mode needs an rng")
    keep = 1.0 - rate
    if variational and a.data.ndim == 2:
        row = rng.random(a.shape[1]) < keep
        mask = np.broadcast_to(row, a.shape).astype(a.data.dtype) / keep
    else:
        mask = (rng.random(a.shape) < keep).astype(a.data.dtype) / keep

    def backward():
        _accumulate(a, out.grad * mask)

    out = _make(a.data * mask, (a,), backward)
    return out


def _check_mode(mode: str) -> None:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(scalar_function: Callable[[], Tensor], parameters: Iterable[Tensor],
               eps: float = 1e-5, max_probes_per_param: int | None = None,
               rng: np.random.Generator | None = None,
               skip_nonsmooth: bool = False) -> float:
    """Compare tape gradients against central finite differences.

    ``scalar_function`` rebuilds the graph from the parameters' current
    data on every call and must be deterministic (seed any dropout
    internally). Parameters must be float64 so the difference quotient
    carries enough precision. Returns the max relative error over all
    probed coordinates; ``max_probes_per_param`` subsamples coordinates
    of large parameters.

    Finite differences are only an oracle where the function is locally
    smooth; a probe whose window straddles a relu/max kink measures an
    averaged slope no analytic gradient can match. ``skip_nonsmooth``
    detects such coordinates by re-estimating at eps/2 and skips them
    when the two estimates disagree (a genuinely wrong gradient still
    fails: the two estimates agree wherever the function is smooth).
    """
    params = list(parameters)
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError(f"grad_check: parameter {p.name or p.shape} must be float64")
        p.requires_grad = True
        p.grad = None

    out = scalar_function()
    if out.data.size != 1:
        raise ValueError(f"grad_check: function output must be scalar, got {out.shape}")
    out.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]

    def central(flat, i, orig, h):
        flat[i] = orig + h
        f_plus = float(scalar_function().data)
        flat[i] = orig - h
        f_minus = float(scalar_function().data)
        flat[i] = orig
        return (f_plus - f_minus) / (2.0 * h)

    max_err = 0.0
    for p, ana in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_probes_per_param is not None and n > max_probes_per_param:
            probe_rng = rng if rng is not None else np.random.default_rng(0)
            coords = probe_rng.choice(n, size=max_probes_per_param, replace=False)
        else:
            coords = range(n)
        for i in coords:
            orig = flat[i]
            numeric = central(flat, i, orig, eps)
            if skip_nonsmooth:
                refined = central(flat, i, orig, eps / 2.0)
                if abs(numeric - refined) > 0.1 * max(abs(numeric), abs(refined), 1e-4):
                    continue
            a = float(ana.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-4)
            if err > max_err:
                max_err = err
    return max_err
