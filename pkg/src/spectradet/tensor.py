"""Dense double-precision tensors with tape-based reverse-mode differentiation.

A :class:`Tape` is opened as a context manager around one forward pass.  Every
differentiable operation executed while it is active and touching a tensor
that requires gradients appends a node (output, operands, vector-Jacobian
rule) to the tape.  :func:`backward` replays the nodes in reverse.

Gradients accumulate additively into ``Tensor.grad``; call :func:`zero_grad`
between optimisation steps.  Tensors hold at most four axes.
"""
import contextvars
import math
from dataclasses import dataclass, field

import numpy as np

from spectradet import kernels

MAX_RANK = 4

_active_tape = contextvars.ContextVar("spectradet_active_tape", default=None)


class ShapeError(ValueError):
    """Operand shapes are incompatible with the operation."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of the operation."""


class TapeError(RuntimeError):
    """Misuse of the tape (nested tapes, loss not recorded, ...)."""


class EvaluationError(ArithmeticError):
    """A function evaluated during gradient checking was non-finite or non-deterministic."""


def _as_array(data):
    arr = np.array(data, dtype=np.float64)
    if arr.ndim > MAX_RANK:
        raise ShapeError(f"tensors have at most {MAX_RANK} axes, got shape {arr.shape}")
    if any(n < 1 for n in arr.shape):
        raise ShapeError(f"all extents must be >= 1, got shape {arr.shape}")
    return arr


class Tensor:
    """Immutable n-d array of doubles that can take part in differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        arr = _as_array(data)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @classmethod
    def _wrap(cls, arr):
        # trusted internal constructor: no copy
        t = cls.__new__(cls)
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        if arr.ndim > MAX_RANK:
            raise ShapeError(f"result would have {arr.ndim} axes (max {MAX_RANK})")
        arr.setflags(write=False)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.name = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self):
        return self.data.copy()

    def assign(self, values):
        """Replace the values held by a parameter (used by optimisers)."""
        arr = np.array(values, dtype=np.float64)
        if arr.shape != self.data.shape:
            raise ShapeError(f"cannot assign shape {arr.shape} to tensor of shape {self.data.shape}")
        arr.setflags(write=False)
        self.data = arr

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return scale(self, 1.0 / other)

    def __neg__(self):
        return scale(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------


class _Node:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out, inputs, vjp):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of differentiable operations for one forward pass.

    Nested tapes are not supported.  ``branches`` collects the branch pattern
    of every non-smooth operation (relu masks, hard switch decisions, ...)
    so gradient checks can detect finite-difference steps across a kink.
    """

    def __init__(self):
        self.nodes = []
        self.branches = []
        self._outputs = set()
        self._token = None

    def __enter__(self):
        if _active_tape.get() is not None:
            raise TapeError("nested tapes are not supported")
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out, inputs, vjp):
        self.nodes.append(_Node(out, inputs, vjp))
        self._outputs.add(id(out))

    def note_branch(self, pattern):
        self.branches.append(np.asarray(pattern).tobytes())

    def owns(self, t):
        return id(t) in self._outputs


def current_tape():
    return _active_tape.get()


def _note_branch(pattern):
    tape = _active_tape.get()
    if tape is not None:
        tape.note_branch(pattern)


def _result(data, inputs, vjp):
    out = Tensor._wrap(np.asarray(data, dtype=np.float64))
    tape = _active_tape.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, vjp)
    return out


def gradients(tape, loss, params=None):
    """Vector-Jacobian accumulation from a scalar ``loss`` back to the leaves.

    Returns a dict mapping each leaf tensor (or each of ``params`` when given)
    to its gradient array.  Does not touch ``Tensor.grad``.
    """
    if loss.size != 1:
        raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
    if not tape.owns(loss):
        raise TapeError("loss was not produced under this tape")
    cot = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for node in reversed(tape.nodes):
        g = cot.pop(id(node.out), None)
        if g is None:
            continue
        in_grads = node.vjp(g)
        for inp, gi in zip(node.inputs, in_grads):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in cot:
                cot[key] = cot[key] + gi
            else:
                cot[key] = gi
            if not tape.owns(inp):
                leaves[key] = inp
    result = {t: cot[k] for k, t in leaves.items()}
    if params is not None:
        result = {p: result.get(p, np.zeros_like(p.data)) for p in params}
    return result


def backward(tape, loss, params=None):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Parameters listed in ``params`` but unreachable from ``loss`` receive a
    zero gradient.  Calling this twice without :func:`zero_grad` adds twice.
    """
    grads = gradients(tape, loss, params)
    for t, g in grads.items():
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad = t.grad + g
    return grads


def zero_grad(params):
    for p in params:
        p.grad = np.zeros_like(p.data)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def _check_binary(a, b, op):
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "add")
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "mul")
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scale(a, s):
    """Multiply by a plain (non-differentiable) scalar."""
    s = float(s)
    return _result(a.data * s, (a,), lambda g: (g * s,))


def add_scalar(a, s):
    s = float(s)
    return _result(a.data + s, (a,), lambda g: (g,))


def sigmoid(a):
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    mask = a.data > 0
    _note_branch(mask)
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def absolute(a):
    sign = np.sign(a.data)
    _note_branch(sign)
    return _result(np.abs(a.data), (a,), lambda g: (g * sign,))


def power(a, p):
    p = float(p)
    if not math.isfinite(p):
        raise DomainError(f"power exponent must be finite, got {p}")
    x = a.data
    if not float(p).is_integer() and np.any(x < 0):
        raise DomainError("non-integer power of a negative value")
    if p < 0 and np.any(x == 0):
        raise DomainError("negative power of zero")
    out = x ** p
    return _result(out, (a,), lambda g: (g * p * x ** (p - 1.0),))


def log(a):
    x = a.data
    if np.any(x <= 0):
        raise DomainError("log of a non-positive value (clamp first)")
    return _result(np.log(x), (a,), lambda g: (g / x,))


def exp(a):
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def softplus(a):
    x = a.data
    out = np.logaddexp(0.0, x)
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return _result(out, (a,), lambda g: (g * sig,))


def maximum_scalar(a, c):
    """``max(a, c)`` for a plain scalar ``c``; subgradient 0 on ties."""
    mask = a.data > c
    _note_branch(mask)
    return _result(np.where(mask, a.data, c), (a,), lambda g: (g * mask,))


_ELEMENTWISE = {
    "add": add,
    "mul": mul,
    "sigmoid": sigmoid,
    "relu": relu,
    "power": power,
    "log": log,
}


def elementwise(kind, *operands):
    """Dispatch ``kind`` in {add, mul, sigmoid, relu, power, log}."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    if kind in ("sigmoid", "relu", "log"):
        return fn(as_tensor(operands[0]))
    if kind == "power":
        return fn(as_tensor(operands[0]), operands[1])
    return fn(as_tensor(operands[0]), as_tensor(operands[1]))


# ---------------------------------------------------------------------------
# reductions and structure
# ---------------------------------------------------------------------------


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None):  # noqa: A001 - mirrors numpy
    axes = _norm_axes(axis, a.ndim)
    shape = a.shape
    out = a.data.sum(axis=axes)

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axes), shape).copy(),)

    return _result(out, (a,), vjp)


def mean(a, axis=None):
    axes = _norm_axes(axis, a.ndim)
    n = 1
    for ax in axes:
        n *= a.shape[ax]
    return scale(sum(a, axes), 1.0 / n)


def reshape(a, shape):
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def index(a, key):
    """Basic (slice/int) indexing."""
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        full[key] = g
        return (full,)

    return _result(a.data[key].copy(), (a,), vjp)


def concat(parts, axis=0):
    parts = [as_tensor(p) for p in parts]
    ndims = {p.ndim for p in parts}
    if len(ndims) != 1:
        raise ShapeError("concat: operands differ in rank")
    axis = axis % parts[0].ndim
    for p in parts[1:]:
        if p.shape[:axis] + p.shape[axis + 1:] != parts[0].shape[:axis] + parts[0].shape[axis + 1:]:
            raise ShapeError(f"concat: incompatible shapes {[q.shape for q in parts]}")
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def vjp(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(parts)))

    return _result(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), vjp)


def stack(parts, axis=0):
    parts = [as_tensor(p) for p in parts]
    if len({p.shape for p in parts}) != 1:
        raise ShapeError(f"stack: shapes differ {[p.shape for p in parts]}")
    out = np.stack([p.data for p in parts], axis=axis)
    axis = axis % out.ndim

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return _result(out, tuple(parts), vjp)


def transpose(a):
    """Swap the two axes of a matrix."""
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,))


def matmul(a, b):
    """Matrix product for 2-D @ 2-D or 2-D @ 1-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        if bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g @ bd.T, ad.T @ g

    return _result(ad @ bd, (a, b), vjp)


def linear(x, weight, bias=None):
    """``weight @ x + bias`` for a vector ``x``."""
    y = matmul(weight, x)
    return y if bias is None else add(y, bias)


def softmax(a, axis=-1):
    x = a.data
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), vjp)


def log_softmax(a, axis=-1):
    x = a.data
    z = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)

    def vjp(g):
        return (g - sm * g.sum(axis=axis, keepdims=True),)

    return _result(out, (a,), vjp)


def straight_through(hard, relaxed):
    """Forward value ``hard``; gradient passes unchanged to ``relaxed``."""
    hard = np.asarray(hard, dtype=np.float64)
    if hard.shape != relaxed.shape:
        raise ShapeError(f"straight_through: {hard.shape} vs {relaxed.shape}")
    _note_branch(hard)
    return _result(hard.copy(), (relaxed,), lambda g: (g,))


# ---------------------------------------------------------------------------
# feature-map operations
# ---------------------------------------------------------------------------


def conv2d(x, kernels_, bias=None, stride=1, padding=0):
    """Cross-correlation of a (C, H, W) map with (O, C, kh, kw) kernels."""
    x, kernels_ = as_tensor(x), as_tensor(kernels_)
    if x.ndim != 3 or kernels_.ndim != 4:
        raise ShapeError(f"conv2d expects (C,H,W) input and (O,C,kh,kw) kernels, got {x.shape} and {kernels_.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: invalid stride={stride} padding={padding}")
    C, H, W = x.shape
    O, Ck, kh, kw = kernels_.shape
    if Ck != C:
        raise ShapeError(f"conv2d: kernel expects {Ck} input channels, input has {C}")
    OH = (H + 2 * padding - kh) // stride + 1
    OW = (W + 2 * padding - kw) // stride + 1
    if OH < 1 or OW < 1:
        raise ShapeError(f"conv2d: output extent {OH}x{OW} for input {H}x{W}, kernel {kh}x{kw}")
    cols = kernels.im2col(np.ascontiguousarray(x.data), kh, kw, stride, padding)
    wmat = kernels_.data.reshape(O, -1)
    out = (wmat @ cols).reshape(O, OH, OW)
    inputs = (x, kernels_)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (O,):
            raise ShapeError(f"conv2d: bias shape {bias.shape}, expected ({O},)")
        out = out + bias.data[:, None, None]
        inputs = inputs + (bias,)
    kshape = kernels_.shape

    def vjp(g):
        gm = g.reshape(O, -1)
        gx = gw = None
        if x.requires_grad:
            gx = kernels.col2im(np.ascontiguousarray(wmat.T @ gm), C, H, W, kh, kw, stride, padding)
        if kernels_.requires_grad:
            gw = (gm @ cols.T).reshape(kshape)
        grads = (gx, gw)
        if bias is not None:
            grads = grads + (gm.sum(axis=1),)
        return grads

    return _result(out, inputs, vjp)


def gap(x):
    """Global average pooling: per-channel spatial mean of a (C, H, W) map."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"gap expects a (C,H,W) map, got {x.shape}")
    return mean(x, axis=(1, 2))


def channel_scale(x, s):
    """``out[c] = s[c] * x[c]`` for a (C, ...) tensor and a (C,) vector."""
    x, s = as_tensor(x), as_tensor(s)
    if s.shape != (x.shape[0],):
        raise ShapeError(f"channel_scale: scale shape {s.shape} for tensor {x.shape}")
    expand = (slice(None),) + (None,) * (x.ndim - 1)
    xd, sd = x.data, s.data
    red = tuple(range(1, x.ndim))
    return _result(xd * sd[expand], (x, s),
                   lambda g: (g * sd[expand], (g * xd).sum(axis=red)))


def channel_shift(x, b):
    """``out[c] = x[c] + b[c]``."""
    x, b = as_tensor(x), as_tensor(b)
    if b.shape != (x.shape[0],):
        raise ShapeError(f"channel_shift: shift shape {b.shape} for tensor {x.shape}")
    expand = (slice(None),) + (None,) * (x.ndim - 1)
    red = tuple(range(1, x.ndim))
    return _result(x.data + b.data[expand], (x, b), lambda g: (g, g.sum(axis=red)))


def expand_channels(x, C):
    """Repeat a (H, W) map into (C, H, W)."""
    if x.ndim != 2:
        raise ShapeError(f"expand_channels expects (H,W), got {x.shape}")
    return _result(np.broadcast_to(x.data, (C,) + x.shape).copy(), (x,),
                   lambda g: (g.sum(axis=0),))


def separable_transform(x, rows, cols):
    """Apply ``rows @ x[c] @ cols.T`` to each channel (constant matrices)."""
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    if x.ndim not in (2, 3) or x.shape[-2] != rows.shape[1] or x.shape[-1] != cols.shape[1]:
        raise ShapeError(f"separable_transform: {x.shape} with {rows.shape}, {cols.shape}")
    out = rows @ x.data @ cols.T
    return _result(out, (x,), lambda g: (rows.T @ g @ cols,))


def spatial_dot(x, weights):
    """``out[c] = sum_hw x[c,h,w] * weights[h,w]`` with constant weights."""
    weights = np.asarray(weights, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != weights.shape:
        raise ShapeError(f"spatial_dot: map {x.shape} with weights {weights.shape}")
    out = np.einsum("chw,hw->c", x.data, weights)
    return _result(out, (x,), lambda g: (g[:, None, None] * weights,))


def upsample_nearest(x, factor=2):
    if x.ndim != 3:
        raise ShapeError(f"upsample_nearest expects (C,H,W), got {x.shape}")
    C, H, W = x.shape
    out = x.data.repeat(factor, axis=1).repeat(factor, axis=2)
    return _result(out, (x,),
                   lambda g: (g.reshape(C, H, factor, W, factor).sum(axis=(2, 4)),))


def avg_pool(x, k):
    """Non-overlapping k x k average pooling; extents must be divisible by k."""
    if x.ndim != 3 or x.shape[1] % k or x.shape[2] % k:
        raise ShapeError(f"avg_pool: {x.shape} not divisible by {k}")
    C, H, W = x.shape
    out = x.data.reshape(C, H // k, k, W // k, k).mean(axis=(2, 4))
    inv = 1.0 / (k * k)
    return _result(out, (x,),
                   lambda g: (np.repeat(np.repeat(g, k, axis=1), k, axis=2) * inv,))


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def relative_error(a, n):
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-12)


@dataclass
class GradReport:
    """Outcome of comparing analytic and central-difference gradients."""

    errors: dict
    step: float
    tol: float
    skipped: dict = field(default_factory=dict)
    checked: dict = field(default_factory=dict)

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self):
        return all(e < self.tol for e in self.errors.values())

    def __str__(self):
        lines = [f"gradcheck step={self.step:g} tol={self.tol:g} -> {'PASS' if self.passed else 'FAIL'}"]
        for name, err in self.errors.items():
            lines.append(f"  {name:<32s} max_rel_err={err:.3e} checked={self.checked.get(name, 0)}"
                         f" skipped={self.skipped.get(name, 0)}")
        return "\n".join(lines)


def _evaluate(fn, params):
    with Tape() as tape:
        out = fn(*params)
    value = out.item()
    if not math.isfinite(value):
        raise EvaluationError(f"function value is not finite ({value})")
    return value, tape.branches


def gradcheck(fn, params, step=1e-5, tol=1e-4, max_coords=None, seed=0):
    """Compare ``backward`` against central differences ``(f(x+h)-f(x-h))/2h``.

    ``fn`` takes the tensors in ``params`` positionally and returns a scalar.
    It must be deterministic (freeze any RNG inside it).  Coordinates whose
    two probes land on different sides of a kink (relu, abs, hard switch, ...)
    are skipped.  ``max_coords`` limits the number of randomly chosen
    coordinates checked per parameter.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if isinstance(params, Tensor):
        params = [params]
    params = list(params)
    for p in params:
        p.requires_grad = True
    with Tape() as tape:
        loss = fn(*params)
    base = loss.item()
    if not math.isfinite(base):
        raise EvaluationError(f"function value is not finite ({base})")
    analytic = gradients(tape, loss, params)
    if _evaluate(fn, params)[0] != base:
        raise EvaluationError("function is not deterministic; freeze its random state")

    rng = np.random.default_rng(seed)
    errors, skipped, checked = {}, {}, {}
    for k, p in enumerate(params):
        name = p.name or f"param{k}"
        if name in errors:
            name = f"{name}#{k}"
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        worst, n_skip = 0.0, 0
        original = p.data
        try:
            for i in coords:
                probe = flat.copy()
                probe[i] += step
                p.data = probe.reshape(original.shape)
                fp, bp = _evaluate(fn, params)
                probe[i] -= 2 * step
                p.data = probe.reshape(original.shape)
                fm, bm = _evaluate(fn, params)
                p.data = original
                if bp != bm:
                    n_skip += 1
                    continue
                numeric = (fp - fm) / (2 * step)
                a = analytic[p].reshape(-1)[i]
                worst = max(worst, float(relative_error(a, numeric)))
        finally:
            p.data = original
        errors[name] = worst
        skipped[name] = n_skip
        checked[name] = len(coords) - n_skip
    return GradReport(errors=errors, step=step, tol=tol, skipped=skipped, checked=checked)
