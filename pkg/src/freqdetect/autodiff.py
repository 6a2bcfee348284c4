"""Dense float64 tensors with taped reverse-mode differentiation.

Every array that participates in the detector is a :class:`Tensor`. Operations
executed while a :class:`GradientTape` is active are appended to the tape in
execution order; :meth:`GradientTape.backward` replays the recorded operations
in exact reverse order and accumulates adjoints additively over fan-out.

All computation is 64-bit. Forward results are deterministic for identical
inputs in a single-threaded run, which is what makes the bit-exactness
contracts elsewhere in the package testable.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GradientTape",
    "ShapeError",
    "NonDeterministicFunctionError",
    "FiniteDiffReport",
    "add",
    "sub",
    "mul",
    "matmul",
    "bilinear_transform",
    "conv2d",
    "relu",
    "sigmoid",
    "softplus",
    "log",
    "exp",
    "softmax",
    "tensor_sum",
    "tensor_mean",
    "global_avg_pool",
    "reshape",
    "take_slice",
    "take_element",
    "finite_diff_check",
]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an operation."""


class NonDeterministicFunctionError(ValueError):
    """Raised when a function handed to the gradient checker is not pure."""


class Tensor:
    """A dense float64 array, optionally marked as a trainable parameter."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a scalar, got shape {self.shape}")
        return float(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad, name=self.name)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        grad = " grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad}{tag})"

    # Arithmetic sugar; scalars are promoted to constant tensors.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# A record is (output, inputs, backward_fn). backward_fn maps the adjoint of
# the output to a tuple of adjoints aligned with `inputs` (None entries for
# inputs that do not need gradients).
_Record = tuple[Tensor, tuple[Tensor, ...], Callable]

_TAPE_STACK: list["GradientTape"] = []

# Kink bookkeeping for the finite-difference checker: while tracking is on,
# any ReLU evaluated at an exact zero raises the hit flag.
_KINK_TRACKING = False
_KINK_TRACE: list[bytes] = []


class GradientTape:
    """Ordered record of executed operations, replayable for adjoints."""

    def __init__(self):
        self._records: list[_Record] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "GradientTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self, "gradient tapes must be exited in LIFO order"

    def watches(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._produced

    def _append(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> None:
        self._records.append((out, inputs, backward_fn))
        self._produced.add(id(out))

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> dict[Tensor, Tensor]:
        """Gradient of a scalar loss w.r.t. every recorded requires_grad tensor.

        Adjoints are accumulated by summation over fan-out and the records are
        visited in exact reverse execution order.
        """
        if loss.data.shape != ():
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        if not np.isfinite(loss.data):
            raise ValueError("backward requires a finite loss")

        adjoint: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
        grads: dict[Tensor, Tensor] = {}
        for out, inputs, backward_fn in reversed(self._records):
            g = adjoint.pop(id(out), None)
            if g is None:
                continue
            input_grads = backward_fn(g)
            for t, ig in zip(inputs, input_grads):
                if ig is None or not self.watches(t):
                    continue
                prev = adjoint.get(id(t))
                adjoint[id(t)] = ig if prev is None else prev + ig
                if t.requires_grad:
                    grads[t] = Tensor(adjoint[id(t)])
        return grads


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    if _TAPE_STACK:
        tape = _TAPE_STACK[-1]
        if any(tape.watches(t) for t in inputs):
            tape._append(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum an adjoint back down to the shape it was broadcast from."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_result(op: str, a: Tensor, b: Tensor, fn) -> np.ndarray:
    try:
        return fn(a.data, b.data)
    except ValueError as err:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from err


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(_broadcast_result("add", a, b, np.add))

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(_broadcast_result("sub", a, b, np.subtract))

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(_broadcast_result("mul", a, b, np.multiply))

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(out, (a, b), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward_fn(g):
        return g @ b.data.T, a.data.T @ g

    return _record(out, (a, b), backward_fn)


def bilinear_transform(x: Tensor, row: Tensor, col: Tensor) -> Tensor:
    """Apply ``row @ x @ col.T`` over the last two axes of ``x``.

    ``x`` has shape (..., H, W), ``row`` is HxH and ``col`` is WxW. This is the
    primitive behind the separable 2-D transforms: both the fixed cosine pair
    and the learnable transform layers route through it, which is what makes
    them bit-identical at initialization.
    """
    x, row, col = _as_tensor(x), _as_tensor(row), _as_tensor(col)
    if x.ndim < 2:
        raise ShapeError(f"bilinear_transform: input must have 2+ dims, got {x.shape}")
    h, w = x.shape[-2], x.shape[-1]
    if row.shape != (h, h):
        raise ShapeError(f"bilinear_transform: row matrix {row.shape} does not match height {h}")
    if col.shape != (w, w):
        raise ShapeError(f"bilinear_transform: col matrix {col.shape} does not match width {w}")
    mid = np.matmul(row.data, x.data)
    out = Tensor(np.matmul(mid, col.data.T))

    def backward_fn(g):
        # y = R x C^T per slice; adjoints follow the matrix chain rule with
        # the batch axes summed out for the two small matrices.
        gx = np.matmul(row.data.T, np.matmul(g, col.data))
        batch = x.data.reshape(-1, h, w)
        gb = g.reshape(-1, h, w)
        grow = np.einsum("bhw,bkw->hk", gb, np.matmul(batch, col.data.T))
        gcol = np.einsum("bhw,bhk->wk", gb, np.matmul(row.data, batch))
        return gx, grow, gcol

    return _record(out, (x, row, col), backward_fn)


def _conv_spatial(n: int, k: int, stride: int, pad: int) -> int:
    out = (n + 2 * pad - k) // stride + 1
    if out < 1:
        raise ShapeError(f"conv2d: spatial size {n} too small for kernel {k} at stride {stride}, pad {pad}")
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution (cross-correlation) on NCHW input with OIHW weights."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected NCHW input and OIHW weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if ci != c:
        raise ShapeError(f"conv2d: input has {c} channels but weight expects {ci}")
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {o} output channels")
    oh = _conv_spatial(h, kh, stride, padding)
    ow = _conv_spatial(w, kw, stride, padding)

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data

    cols = np.empty((n, c, kh, kw, oh, ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    cols2 = cols.reshape(n, c * kh * kw, oh * ow)
    w2 = weight.data.reshape(o, c * kh * kw)
    out_data = np.matmul(w2, cols2).reshape(n, o, oh, ow)
    if bias is not None:
        out_data = out_data + bias.data[None, :, None, None]
    out = Tensor(out_data)

    def backward_fn(g):
        g2 = g.reshape(n, o, oh * ow)
        gw = np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0).reshape(o, c, kh, kw)
        gcols = np.matmul(w2.T, g2).reshape(n, c, kh, kw, oh, ow)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += gcols[:, :, i, j]
        gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        if bias is not None:
            return gx, gw, gb
        return gx, gw

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, inputs, backward_fn)


def relu(x: Tensor) -> Tensor:
    """max(x, 0); the subgradient at exactly 0 is taken as 0."""
    x = _as_tensor(x)
    if _KINK_TRACKING:
        # sign pattern of this call, for detecting active-set flips under
        # finite-difference perturbation
        _KINK_TRACE.append((x.data > 0.0).tobytes())
    out = Tensor(np.maximum(x.data, 0.0))
    mask = x.data > 0.0

    def backward_fn(g):
        return (g * mask,)

    return _record(out, (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    d = x.data
    out_data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = Tensor(out_data)

    def backward_fn(g):
        return (g * out_data * (1.0 - out_data),)

    return _record(out, (x,), backward_fn)


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)) in an overflow-safe form; derivative is sigmoid(x)."""
    x = _as_tensor(x)
    d = x.data
    out = Tensor(np.maximum(d, 0.0) + np.log1p(np.exp(-np.abs(d))))
    sig = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def backward_fn(g):
        return (g * sig,)

    return _record(out, (x,), backward_fn)


def log(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data <= 0.0):
        raise ValueError("log: input must be strictly positive")
    out = Tensor(np.log(x.data))

    def backward_fn(g):
        return (g / x.data,)

    return _record(out, (x,), backward_fn)


def exp(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out_data = np.exp(x.data)
    out = Tensor(out_data)

    def backward_fn(g):
        return (g * out_data,)

    return _record(out, (x,), backward_fn)


def softmax(x: Tensor, axis: int) -> Tensor:
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s)

    def backward_fn(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return _record(out, (x,), backward_fn)


def _reduce(x: Tensor, axis, keepdims: bool, mean: bool) -> Tensor:
    x = _as_tensor(x)
    if mean:
        out_data = x.data.mean(axis=axis, keepdims=keepdims)
    else:
        out_data = x.data.sum(axis=axis, keepdims=keepdims)
    out = Tensor(out_data)
    count = x.data.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))

    def backward_fn(g):
        g = np.asarray(g, dtype=np.float64)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        gx = np.broadcast_to(g, x.shape).astype(np.float64, copy=True)
        if mean:
            gx /= count
        return (gx,)

    return _record(out, (x,), backward_fn)


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return _reduce(x, axis, keepdims, mean=False)


def tensor_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return _reduce(x, axis, keepdims, mean=True)


def global_avg_pool(x: Tensor) -> Tensor:
    """NCHW feature map to (N, C) by averaging each channel plane."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected NCHW input, got {x.shape}")
    return tensor_mean(x, axis=(2, 3))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    try:
        out = Tensor(x.data.reshape(shape))
    except ValueError as err:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from err

    def backward_fn(g):
        return (g.reshape(x.shape),)

    return _record(out, (x,), backward_fn)


def take_slice(x: Tensor, index: int, axis: int = 0) -> Tensor:
    """Select one slab along an axis, e.g. a single mask from a mask stack."""
    x = _as_tensor(x)
    if not 0 <= index < x.shape[axis]:
        raise ShapeError(f"take_slice: index {index} out of range for axis {axis} of {x.shape}")
    out = Tensor(np.take(x.data, index, axis=axis))

    def backward_fn(g):
        gx = np.zeros(x.shape, dtype=np.float64)
        sl = [slice(None)] * x.ndim
        sl[axis] = index
        gx[tuple(sl)] = g
        return (gx,)

    return _record(out, (x,), backward_fn)


def take_element(x: Tensor, index: tuple[int, ...]) -> Tensor:
    """Extract one entry as a differentiable scalar tensor."""
    x = _as_tensor(x)
    if len(index) != x.ndim:
        raise ShapeError(f"take_element: index {index} does not address {x.shape}")
    out = Tensor(x.data[index])

    def backward_fn(g):
        gx = np.zeros(x.shape, dtype=np.float64)
        gx[index] = g
        return (gx,)

    return _record(out, (x,), backward_fn)


class FiniteDiffReport:
    """Outcome of a central-difference gradient audit."""

    __slots__ = ("max_rel_error", "checked", "excluded", "worst")

    def __init__(self, max_rel_error: float, checked: int, excluded: int, worst: tuple[str, tuple] | None):
        self.max_rel_error = max_rel_error
        self.checked = checked
        self.excluded = excluded
        self.worst = worst

    def __repr__(self) -> str:
        return (
            f"FiniteDiffReport(max_rel_error={self.max_rel_error:.3e}, "
            f"checked={self.checked}, excluded={self.excluded}, worst={self.worst})"
        )


def _eval_tracking_kinks(f) -> tuple[float, tuple[bytes, ...]]:
    """Evaluate f once, recording every ReLU call's activation sign pattern."""
    global _KINK_TRACKING
    _KINK_TRACKING = True
    _KINK_TRACE.clear()
    try:
        value = f()
    finally:
        signature = tuple(_KINK_TRACE)
        _KINK_TRACE.clear()
        _KINK_TRACKING = False
    out = value.item() if isinstance(value, Tensor) else float(value)
    return out, signature


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Iterable[tuple[str, Tensor]],
    eps: float = 1e-5,
) -> FiniteDiffReport:
    """Compare taped gradients of ``f`` against central differences.

    ``f`` must be a deterministic scalar function of the given parameters,
    reading them by reference. For every parameter entry the relative error is
    |analytic - central| / max(1, |analytic|, |central|). An entry whose
    +/-eps perturbations change any ReLU's active set sits across a kink,
    where one-sided slopes disagree by construction; such entries are
    excluded from the reported maximum and counted in ``excluded``.
    """
    if eps <= 0:
        raise ValueError("finite_diff_check: eps must be positive")
    params = list(params)

    with GradientTape() as tape:
        loss = f()
    base, base_sig = _eval_tracking_kinks(f)
    repeat, repeat_sig = _eval_tracking_kinks(f)
    if base != repeat or loss.item() != base or base_sig != repeat_sig:
        raise NonDeterministicFunctionError("finite_diff_check: repeated evaluations differ; f is not deterministic")
    grads = tape.backward(loss)

    max_err = 0.0
    worst: tuple[str, tuple] | None = None
    checked = 0
    excluded = 0
    for name, p in params:
        analytic = grads[p].data if p in grads else np.zeros(p.shape)
        if not p.data.flags["C_CONTIGUOUS"]:
            p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        aflat = np.asarray(analytic, dtype=np.float64).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            fp, sig_p = _eval_tracking_kinks(f)
            flat[k] = orig - eps
            fm, sig_m = _eval_tracking_kinks(f)
            flat[k] = orig
            if sig_p != base_sig or sig_m != base_sig:
                excluded += 1
                continue
            central = (fp - fm) / (2.0 * eps)
            a = aflat[k]
            err = abs(a - central) / max(1.0, abs(a), abs(central))
            checked += 1
            if err > max_err:
                max_err = err
                idx = np.unravel_index(k, p.shape) if p.ndim else ()
                worst = (name, idx)
    return FiniteDiffReport(max_err, checked, excluded, worst)
