"""Minimal dense reverse-mode autodiff over numpy arrays.

Only the pieces the autoencoder needs: batched matmul, broadcasting add,
ReLU, sigmoid, (Gumbel-)softmax, reshapes and a mean squared error loss,
plus an Adam optimizer and a finite-difference gradient checker.

Random numbers come from ``numpy.random.Generator`` with the PCG64 bit
generator (``numpy.random.default_rng``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

# Uniform samples are clamped into this interval before -log(-log(u)).
UNIFORM_LOW = 1e-20
UNIFORM_HIGH = 1.0 - 1e-7


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class NumericError(ArithmeticError):
    """Raised on NaN inputs or gradients."""


class DomainError(ValueError):
    """Raised when a scalar argument is outside its valid range."""


class Tensor:
    """An ndarray node in a computation graph.

    Leaves created with ``requires_grad=True`` accumulate ``grad`` when
    :meth:`backward` is called on a downstream scalar.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other, self.dtype), -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def _as_tensor(x, dtype=np.float64):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    try:
        out = a.data + b.data
    except ValueError:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}") from None

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return Tensor(out, _parents=(a, b), _backward=backward)


def mul(a, b):
    """Elementwise product; ``b`` may be a python scalar."""
    a = _as_tensor(a)
    if not isinstance(b, Tensor):
        c = b

        def backward_const(g):
            return (g * c,)

        return Tensor(a.data * c, _parents=(a,), _backward=backward_const)
    try:
        out = a.data * b.data
    except ValueError:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}") from None

    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return Tensor(out, _parents=(a, b), _backward=backward)


def matmul(a, b, rowwise=False):
    """Batched matrix product with numpy broadcasting over leading axes.

    With ``rowwise`` every row of ``a`` is multiplied as its own 1 x K
    product.  BLAS kernels may round a row differently depending on where
    it sits in the block; per-row products make equal rows give equal bits.
    """
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        if rowwise:
            out = np.matmul(a.data[..., :, None, :], b.data[..., None, :, :])[..., 0, :]
        else:
            out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"cannot broadcast {a.shape} @ {b.shape}") from None

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return Tensor(out, _parents=(a, b), _backward=backward)


def linear(x, weights, bias, rowwise=False):
    """``x @ weights + bias``.

    ``weights`` may carry leading batch axes (a stack of independent
    layers), in which case ``bias`` should broadcast against the output.
    """
    x = _as_tensor(x)
    weights = _as_tensor(weights, x.dtype)
    bias = _as_tensor(bias, x.dtype)
    if x.shape[-1] != weights.shape[-2]:
        raise DimensionError(
            f"linear: input shape {x.shape} does not match weights shape {weights.shape}"
        )
    if bias.shape[-1] != weights.shape[-1]:
        raise DimensionError(
            f"linear: bias shape {bias.shape} does not match weights shape {weights.shape}"
        )
    return add(matmul(x, weights, rowwise), bias)


def relu(x):
    x = _as_tensor(x)
    out = np.maximum(x.data, 0)

    def backward(g):
        return (g * (out > 0),)

    return Tensor(out, _parents=(x,), _backward=backward)


def sigmoid(x):
    x = _as_tensor(x)
    out = 0.5 * (np.tanh(0.5 * x.data) + 1.0)

    def backward(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, _parents=(x,), _backward=backward)


def _softmax_np(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(logits, axis=-1):
    logits = _as_tensor(logits)
    if np.isnan(logits.data).any():
        raise NumericError("softmax received NaN input")
    out = _softmax_np(logits.data, axis)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor(out, _parents=(logits,), _backward=backward)


def gumbel_softmax(log_probs, noise, tau, axis=-1):
    """``softmax((noise + log_probs) / tau)`` along ``axis``.

    ``log_probs`` need not be normalized; unnormalized logits give the same
    distribution.  ``noise`` is a fixed array (see :func:`sample_gumbel`),
    so the result is differentiable in ``log_probs`` only.
    """
    if not tau > 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    log_probs = _as_tensor(log_probs)
    noise = np.asarray(noise, dtype=log_probs.dtype)
    if noise.shape != log_probs.shape:
        raise DimensionError(f"noise shape {noise.shape} != log_probs shape {log_probs.shape}")
    if np.isnan(log_probs.data).any():
        raise NumericError("gumbel_softmax received NaN input")
    out = _softmax_np((log_probs.data + noise) / tau, axis)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)) / tau,)

    return Tensor(out, _parents=(log_probs,), _backward=backward)


def reshape(x, shape):
    x = _as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} into {shape}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return Tensor(out, _parents=(x,), _backward=backward)


def transpose(x, axes=None):
    x = _as_tensor(x)
    out = np.transpose(x.data, axes)
    inverse = None if axes is None else np.argsort(axes)

    def backward(g):
        return (np.transpose(g, inverse),)

    return Tensor(out, _parents=(x,), _backward=backward)


def getitem(x, index):
    """Basic (slice/integer) indexing."""
    x = _as_tensor(x)
    out = x.data[index]

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return Tensor(out, _parents=(x,), _backward=backward)


def mse_loss(prediction, target):
    """Mean over all elements of the squared difference."""
    prediction = _as_tensor(prediction)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=prediction.dtype)
    if prediction.shape != target.shape:
        raise DimensionError(f"mse_loss: prediction {prediction.shape} vs target {target.shape}")
    diff = prediction.data - target
    out = np.asarray(np.mean(diff * diff), dtype=prediction.dtype)
    scale = 2.0 / diff.size

    def backward(g):
        return (g * scale * diff,)

    return Tensor(out, _parents=(prediction,), _backward=backward)


def argmax(values, axis=-1):
    """Argmax with the lowest index winning ties (numpy's behaviour)."""
    return np.argmax(values, axis=axis)


# ---------------------------------------------------------------------------
# Gumbel noise


@dataclass
class GumbelNoise:
    """A frozen block of Gumbel(0, 1) samples and the seed that made it."""

    values: np.ndarray
    rng_seed: int | None = None

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def sample(cls, shape, seed, dtype=np.float64):
        return cls(sample_gumbel(shape, np.random.default_rng(seed), dtype), seed)

    @classmethod
    def zeros(cls, shape, dtype=np.float64):
        return cls(np.zeros(shape, dtype=dtype), None)


def sample_gumbel(shape, rng, dtype=np.float64):
    u = rng.random(shape)
    np.clip(u, UNIFORM_LOW, UNIFORM_HIGH, out=u)
    return (-np.log(-np.log(u))).astype(dtype, copy=False)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: AdamState, grads=None):
    """Apply one bias-corrected Adam update in place.

    ``grads`` defaults to each parameter's ``.grad`` (missing grads count
    as zero).  Nothing is modified if any gradient contains NaN.
    """
    if grads is None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    grads = list(grads)
    if len(grads) != len(params):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if np.isnan(g).any():
            raise NumericError(f"NaN gradient for parameter {p.name or p.shape}; update aborted")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        denom = np.sqrt(v / c2)
        denom += state.epsilon
        update = m / c1
        update /= denom
        update *= state.learning_rate
        p.data -= update.astype(p.dtype, copy=False)
    return params, state


# ---------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict  # block name -> max relative error

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    @property
    def ok(self):
        return self.max_error < self.tolerance

    def failures(self):
        return {k: e for k, e in self.errors.items() if not e < self.tolerance}


def relative_error(analytic, numeric):
    """``||a - n|| / max(||a||, ||n||)``; zero when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def grad_check(fn: Callable[[], Tensor], params, tolerance=1e-6, step=1e-6):
    """Compare autodiff gradients of the scalar ``fn()`` against central differences.

    ``params`` is a mapping name -> Tensor (or an iterable of tensors).  Each
    parameter is perturbed in place and restored.  Work in float64.
    """
    if not isinstance(params, dict):
        params = {p.name or f"param{i}": p for i, p in enumerate(params)}
    for p in params.values():
        p.zero_grad()
    fn().backward()
    errors = {}
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn().item()
            flat[i] = orig - step
            down = fn().item()
            flat[i] = orig
            nflat[i] = (up - down) / (2 * step)
        errors[name] = relative_error(analytic, numeric)
    return GradCheckReport(tolerance, errors)


def parameters_of(tensors: Iterable[Tensor]):
    return [t for t in tensors if t.requires_grad]
