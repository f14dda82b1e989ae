"""Dense f64 tensors with reverse-mode differentiation and an Adam optimizer.

Deliberately small: just the primitives the sequence model needs, each with a
hand-derived backward rule. Everything is float64 so finite-difference checks
stay sharp. The autodiff graph is a DAG of parent links; ``Tensor.backward``
linearizes it once (the tape) and runs the recorded backward closures in
reverse, accumulating gradients additively.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, OptimizerError, ValidationError

LAYER_NORM_EPS = 1e-5


class Tensor:
    """A node in the autodiff graph wrapping a float64 ndarray (up to 3 axes)."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 3:
            raise ValidationError(f"tensors support at most 3 axes, got shape {self.data.shape}")
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Backpropagate from a scalar root through the recorded tape."""
        if self.data.size != 1:
            raise ValidationError(f"backward requires a scalar root, got shape {self.shape}")
        tape = _linearize(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(tape):
            if node._backward is not None:
                node._backward()
                # Interior gradients are fully consumed by the parents; freeing
                # them keeps peak memory proportional to the live frontier.
                node.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the named functions below carry the semantics.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), scale(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _linearize(root: Tensor) -> list[Tensor]:
    """Iterative post-order DFS; each node appears exactly once."""
    tape: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            tape.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return tape


def _accum(t: Tensor, delta: np.ndarray):
    if t.grad is None:
        # Copy: delta may alias another node's gradient buffer.
        t.grad = np.array(delta, dtype=np.float64)
    else:
        t.grad += delta


def _accum_fresh(t: Tensor, delta: np.ndarray):
    """Accumulate a delta the caller just allocated; ownership transfers."""
    if t.grad is None:
        t.grad = delta
    else:
        t.grad += delta


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise DimensionError("add", a.shape, b.shape) from None

    def backward():
        g = out.grad
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.shape))

    out = _node(data, (a, b), backward)
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise DimensionError("mul", a.shape, b.shape) from None

    def backward():
        g = out.grad
        if a.requires_grad:
            _accum_fresh(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum_fresh(b, _unbroadcast(g * a.data, b.shape))

    out = _node(data, (a, b), backward)
    return out


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)

    def backward():
        if a.requires_grad:
            _accum_fresh(a, out.grad * c)

    out = _node(a.data * c, (a,), backward)
    return out


def matmul(a, b) -> Tensor:
    """Matrix product; either side may carry a leading batch axis."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul", a.shape, b.shape)
    if a.data.ndim == 2 and b.data.ndim == 3:
        raise DimensionError("matmul", a.shape, b.shape)
    if a.data.ndim == 3 and b.data.ndim == 3 and a.shape[0] != b.shape[0]:
        raise DimensionError("matmul", a.shape, b.shape)
    data = a.data @ b.data

    def backward():
        g = out.grad
        if a.requires_grad:
            _accum_fresh(a, g @ _swap_last(b.data))
        if b.requires_grad:
            if a.data.ndim == 3 and b.data.ndim == 2:
                # batched left operand against a shared matrix: sum over batch
                _accum_fresh(b, np.tensordot(a.data, g, axes=([0, 1], [0, 1])))
            else:
                _accum_fresh(b, _swap_last(a.data) @ g)

    out = _node(data, (a, b), backward)
    return out


def _swap_last(arr: np.ndarray) -> np.ndarray:
    return np.swapaxes(arr, -1, -2)


def transpose(a) -> Tensor:
    """Swap the last two axes (plain transpose for 2-D tensors)."""
    a = _as_tensor(a)
    if a.data.ndim < 2:
        raise ValidationError(f"transpose expects >= 2 axes, got shape {a.shape}")

    def backward():
        if a.requires_grad:
            _accum(a, _swap_last(out.grad))

    out = _node(_swap_last(a.data), (a,), backward)
    return out


def relu(a) -> Tensor:
    a = _as_tensor(a)
    keep = a.data > 0.0

    def backward():
        if a.requires_grad:
            _accum_fresh(a, out.grad * keep)

    out = _node(a.data * keep, (a,), backward)
    return out


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)

    def backward():
        if a.requires_grad:
            _accum_fresh(a, out.grad * sign)

    out = _node(np.abs(a.data), (a,), backward)
    return out


def softmax_rows(a) -> Tensor:
    """Softmax along the last axis (the rows, for a 2-D tensor), max-stabilized."""
    a = _as_tensor(a)
    if a.data.ndim < 2:
        raise ValidationError(f"softmax_rows expects >= 2 axes, got shape {a.shape}")
    s = a.data - a.data.max(axis=-1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=-1, keepdims=True)

    def backward():
        if a.requires_grad:
            g = out.grad
            _accum_fresh(a, s * (g - (g * s).sum(axis=-1, keepdims=True)))

    out = _node(s, (a,), backward)
    return out


def layer_norm(x, gain, bias, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each last-axis slice to zero mean / unit variance, then gain and bias."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    if x.data.ndim < 2:
        raise ValidationError(f"layer_norm expects >= 2 axes, got shape {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std

    def backward():
        g = out.grad
        if gain.requires_grad:
            _accum(gain, _unbroadcast(g * xhat, gain.shape))
        if bias.requires_grad:
            _accum(bias, _unbroadcast(g, bias.shape))
        if x.requires_grad:
            gx = g * gain.data
            term = gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            term *= inv_std
            _accum_fresh(x, term)

    out = _node(xhat * gain.data + bias.data, (x, gain, bias), backward)
    return out


def dropout(x, p: float, seed=None, training: bool = False) -> Tensor:
    """Inverted dropout: zero with prob p and rescale survivors; identity in eval mode."""
    x = _as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise ValidationError(f"dropout rate must be in [0,1), got {p}")
    if not training or p == 0.0:
        return x
    rng = np.random.default_rng(seed)
    keep = (rng.random(x.shape) >= p) / (1.0 - p)

    def backward():
        if x.requires_grad:
            _accum_fresh(x, out.grad * keep)

    out = _node(x.data * keep, (x,), backward)
    return out


def concat_cols(tensors) -> Tensor:
    """Concatenate along the last axis (column-wise for 2-D tensors)."""
    tensors = [_as_tensor(t) for t in tensors]
    widths = [t.shape[-1] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=-1)

    def backward():
        g = out.grad
        offset = 0
        for t, w in zip(tensors, widths):
            if t.requires_grad:
                _accum(t, g[..., offset : offset + w])
            offset += w

    out = _node(data, tuple(tensors), backward)
    return out


def slice_rows(a, start: int, stop: int) -> Tensor:
    """Slice along the row axis (second-to-last), preserving any batch axis."""
    a = _as_tensor(a)

    def backward():
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[..., start:stop, :] += out.grad

    out = _node(a.data[..., start:stop, :].copy(), (a,), backward)
    return out


def sum_all(a) -> Tensor:
    a = _as_tensor(a)

    def backward():
        if a.requires_grad:
            _accum_fresh(a, np.full_like(a.data, float(out.grad)))

    out = _node(np.asarray(a.data.sum()), (a,), backward)
    return out


def mean_all(a) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size

    def backward():
        if a.requires_grad:
            _accum_fresh(a, np.full_like(a.data, float(out.grad) / n))

    out = _node(np.asarray(a.data.mean()), (a,), backward)
    return out


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place; parameter order is fixed by name."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name in sorted(params):
        p = params[name]
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise OptimizerError(name)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    """Linear-layer init: uniform in +-sqrt(1/fan_in)."""
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)
