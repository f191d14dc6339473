"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Tensors are float64 numpy arrays (row-major, shapes explicit). Differentiable
operations executed while a Tape is active are recorded in execution order;
``Tape.backward`` replays the record in reverse, accumulating gradients into
each tensor's ``grad`` slot. There is no broadcasting beyond what individual
fused kernels document: binary elementwise ops require identical shapes.

The op set is intentionally small. Composite layers (GRU cells, affine maps)
register their own fused kernels through :func:`record`.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class UsageError(ValueError):
    """An operation was invoked outside its preconditions."""


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf, which the engine treats as an error state."""


class Tensor:
    """A dense float64 array plus an optional gradient accumulator.

    Vectors are row vectors: 1-D input data is promoted to shape (1, n).
    ``grad``, when filled by backpropagation, has the same shape as ``data``.
    """

    __slots__ = ("data", "grad")

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.size == 0:
            raise DimensionError("tensors must have positive extents")
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor initialized with non-finite values")
        self.data = arr
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def copy(self) -> "Tensor":
        return _wrap(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


def _wrap(arr: np.ndarray) -> Tensor:
    """Wrap a freshly computed float64 array without copying."""
    t = Tensor.__new__(Tensor)
    t.data = arr
    t.grad = None
    return t


def zeros(rows: int, cols: int) -> Tensor:
    return _wrap(np.zeros((rows, cols)))


# ---------------------------------------------------------------------------
# Tape


_TAPE_STACK: list["Tape"] = []

# Name of an op whose backward rule is deliberately corrupted, or None.
# Used by the gradient-check negative-control tests and nothing else.
_FAULTY_OP: Optional[str] = None


class Tape:
    """Ordered record of executed differentiable operations.

    Execution order is a topological order by construction (an op's inputs
    exist before it runs), so replaying the record backward visits each
    operation exactly once with its output gradient fully accumulated.
    """

    def __init__(self):
        self._entries: list[tuple[str, Tensor, tuple[Tensor, ...], Callable]] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self, "tapes must be exited in LIFO order"

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, name: str, output: Tensor, inputs: tuple[Tensor, ...],
               backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> None:
        self._entries.append((name, output, inputs, backward))
        self._produced.add(id(output))

    def backward(self, loss: Tensor) -> None:
        """Fill ``grad`` for every tensor reachable from ``loss``.

        Gradients accumulate additively, both across multiple uses of a
        tensor within this tape and across repeated backward calls (callers
        reset ``grad`` to None between optimization steps).
        """
        if loss.data.size != 1:
            raise UsageError("backward requires a scalar loss tensor")
        if id(loss) not in self._produced:
            raise UsageError("loss was not produced on this tape")
        loss.grad = np.ones_like(loss.data)
        for name, output, inputs, backward in reversed(self._entries):
            out_grad = output.grad
            if out_grad is None:
                continue
            grads = backward(out_grad)
            if name == _FAULTY_OP:
                grads = [None if g is None else 1.5 * g for g in grads]
            for tensor, g in zip(inputs, grads):
                if g is None:
                    continue
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)
                tensor.grad += g


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class inject_backward_fault:
    """Scale the named op's backward outputs by 1.5 while the context is active.

    Negative-control hook: a gradient checker that still passes under an
    injected fault is not checking anything.
    """

    def __init__(self, op_name: str):
        self.op_name = op_name

    def __enter__(self):
        global _FAULTY_OP
        self._previous = _FAULTY_OP
        _FAULTY_OP = self.op_name
        return self

    def __exit__(self, *exc):
        global _FAULTY_OP
        _FAULTY_OP = self._previous


def record(name: str, output: Tensor, inputs: tuple[Tensor, ...],
           backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> None:
    """Record an executed op on the active tape, if any.

    Extension point for fused kernels defined outside this module. ``backward``
    receives the output gradient and returns one gradient (or None) per input.
    """
    tape = active_tape()
    if tape is not None:
        tape.record(name, output, inputs, backward)


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation on the active tape from ``loss``."""
    tape = active_tape()
    if tape is None:
        raise UsageError("backward requires an active tape")
    tape.backward(loss)


def _checked(name: str, arr: np.ndarray) -> np.ndarray:
    # NaN/Inf propagate through the sum, making the common case one reduction.
    if not math.isfinite(float(arr.sum())):
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"{name} produced non-finite values")
    return arr


# ---------------------------------------------------------------------------
# Operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product [m,k]x[k,n]. Backward: dA = dC.B^T, dB = A^T.dC."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul shapes {a.data.shape} x {b.data.shape}")
    out = _wrap(_checked("matmul", a.data @ b.data))
    ad, bd = a.data, b.data
    record("matmul", out, (a, b), lambda g: (g @ bd.T, ad.T @ g))
    return out


def transpose(a: Tensor) -> Tensor:
    out = _wrap(np.ascontiguousarray(a.data.T))
    record("transpose", out, (a,), lambda g: (np.ascontiguousarray(g.T),))
    return out


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate row vectors [1,d_i] horizontally, in argument order."""
    if len(parts) == 0:
        raise UsageError("concat of an empty part list")
    for p in parts:
        if p.data.shape[0] != 1:
            raise DimensionError(f"concat expects row vectors, got {p.data.shape}")
    if len(parts) == 1:
        src = parts[0]
        out = _wrap(src.data.copy())
        record("concat", out, (src,), lambda g: (g,))
        return out
    out = _wrap(np.concatenate([p.data for p in parts], axis=1))
    offsets = np.cumsum([0] + [p.data.shape[1] for p in parts])

    def bwd(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(offsets) - 1))

    record("concat", out, tuple(parts), bwd)
    return out


def vstack(parts: Sequence[Tensor]) -> Tensor:
    """Stack row vectors [1,d] into a [k,d] matrix. Backward splits by row."""
    if len(parts) == 0:
        raise UsageError("vstack of an empty part list")
    width = parts[0].data.shape[1]
    for p in parts:
        if p.data.shape != (1, width):
            raise DimensionError(f"vstack expects rows of width {width}, got {p.data.shape}")
    out = _wrap(np.concatenate([p.data for p in parts], axis=0))
    record("vstack", out, tuple(parts), lambda g: tuple(g[i:i + 1, :] for i in range(len(parts))))
    return out


def tanh(a: Tensor) -> Tensor:
    out = _wrap(np.tanh(a.data))
    od = out.data
    record("tanh", out, (a,), lambda g: (g * (1.0 - od * od),))
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _wrap(_stable_sigmoid(a.data))
    od = out.data
    record("sigmoid", out, (a,), lambda g: (g * od * (1.0 - od),))
    return out


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add shapes {a.data.shape} vs {b.data.shape}")
    out = _wrap(_checked("add", a.data + b.data))
    record("add", out, (a, b), lambda g: (g, g))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"mul shapes {a.data.shape} vs {b.data.shape}")
    out = _wrap(_checked("mul", a.data * b.data))
    ad, bd = a.data, b.data
    record("mul", out, (a, b), lambda g: (g * bd, g * ad))
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    out = _wrap(_checked("scale", a.data * factor))
    record("scale", out, (a,), lambda g: (g * factor,))
    return out


def sum_all(a: Tensor) -> Tensor:
    """Sum of all elements, as a [1,1] scalar tensor."""
    out = _wrap(_checked("sum_all", a.data.sum().reshape(1, 1)))
    shape = a.data.shape
    record("sum_all", out, (a,), lambda g: (np.full(shape, float(g[0, 0])),))
    return out


def softmax(a: Tensor) -> Tensor:
    """Row softmax of a [1,n] tensor, stabilized by max subtraction."""
    if a.data.shape[0] != 1:
        raise DimensionError(f"softmax expects a [1,n] tensor, got {a.data.shape}")
    shifted = a.data - a.data.max()
    ex = np.exp(shifted)
    out = _wrap(ex / ex.sum())
    od = out.data

    def bwd(g):
        return (od * (g - float((g * od).sum())),)

    record("softmax", out, (a,), bwd)
    return out


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Negative log softmax probability of ``label``; backward is p - onehot."""
    if logits.data.shape[0] != 1:
        raise DimensionError(f"cross_entropy expects [1,C] logits, got {logits.data.shape}")
    n = logits.data.shape[1]
    if not 0 <= label < n:
        raise UsageError(f"label {label} out of range for {n} classes")
    x = logits.data
    m = x.max()
    lse = m + math.log(np.exp(x - m).sum())
    out = _wrap(_checked("cross_entropy", np.array([[lse - x[0, label]]])))
    probs = np.exp(x - lse)

    def bwd(g):
        d = probs.copy()
        d[0, label] -= 1.0
        return (d * float(g[0, 0]),)

    record("cross_entropy", out, (logits,), bwd)
    return out


# ---------------------------------------------------------------------------
# Finite-difference verification


class GradientCheckResult:
    """Per-tensor worst relative errors from a central-difference comparison."""

    def __init__(self, rel_tol: float):
        self.rel_tol = rel_tol
        self.worst: dict[str, float] = {}

    @property
    def max_error(self) -> float:
        return max(self.worst.values()) if self.worst else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error <= self.rel_tol

    def lines(self) -> list[str]:
        return [f"{'ok ' if err <= self.rel_tol else 'BAD'} {name}: max rel err {err:.3e}"
                for name, err in self.worst.items()]


def check_gradients(loss_fn: Callable[[], Tensor],
                    named_tensors: Sequence[tuple[str, Tensor]],
                    h: float = 1e-5,
                    rel_tol: float = 1e-4) -> GradientCheckResult:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn`` must be a deterministic function of the current values of
    ``named_tensors`` (evaluated twice per element with in-place +/-h nudges).
    Relative error uses max(|analytic|, |numeric|, 1e-3) as the denominator so
    near-zero gradients are held to an absolute 1e-3 * rel_tol instead.
    """
    for _, t in named_tensors:
        t.grad = None
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
    analytic = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for name, t in named_tensors}

    result = GradientCheckResult(rel_tol)
    for name, t in named_tensors:
        worst = 0.0
        flat = t.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = float(loss_fn().data[0, 0])
            flat[idx] = orig - h
            down = float(loss_fn().data[0, 0])
            flat[idx] = orig
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(a_flat[idx]), abs(numeric), 1e-3)
            worst = max(worst, abs(a_flat[idx] - numeric) / denom)
        result.worst[name] = worst
    return result
