"""Dense float64 tensors with a reverse-mode tape and Adam.

Design notes:

* A `Tape` is a flat list of (output, inputs, vjp) records in execution
  order; `backward` walks it in reverse, accumulating adjoints additively
  at fan-out. Ops record themselves only while a tape is active and at
  least one input requires grad, so inference pays no tape cost.
* Reductions along a padded/masked axis (softmax denominators, masked
  mean pools, attention-weighted sums) accumulate sequentially via
  cumsum. BLAS and np.sum reassociate across the reduced axis, which
  makes results depend on how much zero padding follows the real
  entries; sequential accumulation keeps padded and unpadded inputs
  bit-identical.
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor", "Tape", "Param", "AdamConfig", "ShapeError",
    "constant", "matmul", "add", "sub", "mul", "scale", "cmul",
    "concat_cols", "concat_rows", "softmax_rows", "mean_rows_masked",
    "relu", "dropout", "l2_normalize_rows", "cosine_rows", "tsum",
    "square", "cos", "softplus", "cross_entropy_rows", "transpose_last2",
    "seq_weighted_sum", "adam_step", "finite_diff_check",
]


class ShapeError(ValueError):
    pass


class Tensor:
    """Dense float64 array plus a requires-grad flag."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return self.data.item()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


_tls = threading.local()


def _active_tape():
    return getattr(_tls, "tape", None)


class Tape:
    """Ordered record of differentiable ops; confined to one thread."""

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._prev = None

    def __enter__(self) -> "Tape":
        self._prev = _active_tape()
        _tls.tape = self
        return self

    def __exit__(self, *exc):
        _tls.tape = self._prev
        return False

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> None:
        self._records.append((out, inputs, vjp))

    def backward(self, loss: Tensor, params: Sequence["Param"]) -> None:
        """Populate grad on every param; unreachable params get zeros."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, vjp in reversed(self._records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                acc = grads.get(id(inp))
                if acc is None:
                    # adopt only fresh, writable ndarrays: aliases of g and
                    # views must be copied before in-place accumulation, and
                    # numpy scalars (immutable, returned by full reductions)
                    # must become 0-d arrays or += would silently rebind
                    if (not isinstance(gi, np.ndarray) or gi is g
                            or gi.base is not None or gi.dtype != np.float64):
                        gi = np.array(gi, dtype=np.float64)
                    grads[id(inp)] = gi
                else:
                    acc += gi
        for p in params:
            g = grads.get(id(p.value))
            if g is None:
                p.grad.fill(0.0)
            else:
                p.grad[...] = g


def _make(out_data, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    req = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=req)
    tape = _active_tape()
    if req and tape is not None:
        tape.record(out, inputs, vjp)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over axes that numpy broadcasting expanded."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _seqsum(x: np.ndarray, axis: int) -> np.ndarray:
    # Sequential (left-to-right) reduction: trailing zeros cannot perturb it.
    return np.take(np.cumsum(x, axis=axis), -1, axis=axis)


# ---------------------------------------------------------------------------
# op set


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    if b.ndim == 2:
        def vjp(g, a=a, b=b):
            k, n = b.shape
            da = g @ b.data.T
            db = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            return da, db
        return _make(a.data @ b.data, (a, b), vjp)
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch dims differ: {a.shape} @ {b.shape}")

    def vjp(g, a=a, b=b):
        da = g @ np.swapaxes(b.data, -1, -2)
        db = np.swapaxes(a.data, -1, -2) @ g
        return da, db
    return _make(a.data @ b.data, (a, b), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g, a=a, b=b):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(a.data + b.data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g, a=a, b=b):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)
    return _make(a.data - b.data, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g, a=a, b=b):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _make(a.data * b.data, (a, b), vjp)


def scale(a: Tensor, s: Tensor) -> Tensor:
    """Multiply by a learnable scalar (shape () or (1,))."""
    if s.data.size != 1:
        raise ShapeError(f"scale factor must be scalar, got shape {s.shape}")
    return mul(a, s)


def cmul(a: Tensor, c: float) -> Tensor:
    """Multiply by a non-learnable constant."""
    c = float(c)

    def vjp(g, c=c):
        return (g * c,)
    return _make(a.data * c, (a,), vjp)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"concat_cols leading dims differ: {a.shape} vs {b.shape}")
    na = a.shape[-1]

    def vjp(g, na=na):
        return g[..., :na], g[..., na:]
    return _make(np.concatenate([a.data, b.data], axis=-1), (a, b), vjp)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or a.shape[-1] != b.shape[-1] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"concat_rows shapes incompatible: {a.shape} vs {b.shape}")
    na = a.shape[-2]

    def vjp(g, na=na):
        return g[..., :na, :], g[..., na:, :]
    return _make(np.concatenate([a.data, b.data], axis=-2), (a, b), vjp)


def softmax_rows(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; mask marks valid positions (True=keep).

    Masked positions get exactly zero weight; the max-shift and the
    denominator see only valid entries, so appending masked padding
    leaves valid outputs bit-identical.
    """
    x = a.data
    if mask is None:
        m = x.max(axis=-1, keepdims=True)
        e = np.exp(x - m)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=-1).all():
            raise ValueError("softmax_rows: row with no unmasked positions")
        neg = np.where(mask, x, -np.inf)
        m = neg.max(axis=-1, keepdims=True)
        e = np.where(mask, np.exp(x - m), 0.0)
    out = e / _seqsum(e, axis=-1)[..., None]

    def vjp(g, out_data=out):
        dot = np.sum(g * out_data, axis=-1, keepdims=True)
        return (out_data * (g - dot),)
    return _make(out, (a,), vjp)


def mean_rows_masked(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Mean over axis -2, restricted to rows whose mask entry is True."""
    x = a.data
    if x.ndim < 2:
        raise ShapeError(f"mean_rows_masked needs >=2-d input, got {x.shape}")
    if mask is None:
        counts = np.full(x.shape[:-2] + (1,), x.shape[-2], dtype=np.float64)
        total = _seqsum(x, axis=-2)
        keep = None
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape[:-1]:
            raise ShapeError(f"mask shape {mask.shape} does not match rows of {x.shape}")
        counts = np.count_nonzero(mask, axis=-1).astype(np.float64)[..., None]
        if (counts == 0).any():
            raise ValueError("mean_rows_masked: row group with no unmasked rows")
        keep = mask[..., None]
        total = _seqsum(np.where(keep, x, 0.0), axis=-2)
    out = total / counts

    def vjp(g, counts=counts, keep=keep, shape=x.shape):
        expanded = np.broadcast_to((g / counts)[..., None, :], shape)
        if keep is None:
            return (expanded,)
        return (np.where(keep, expanded, 0.0),)
    return _make(out, (a,), vjp)


def seq_weighted_sum(attn: Tensor, values: Tensor) -> Tensor:
    """attn @ values with sequential accumulation over the shared axis.

    Used where that axis carries zero-weight padding; plain matmul may
    reassociate the reduction and break padded-vs-unpadded bit equality.
    The explicit left-to-right loop keeps trailing zero-weight entries
    exact no-ops.
    """
    if attn.shape[-1] != values.shape[-2] or attn.shape[:-2] != values.shape[:-2]:
        raise ShapeError(f"seq_weighted_sum shapes: {attn.shape} vs {values.shape}")
    a, v = attn.data, values.data
    out = np.zeros(a.shape[:-1] + (v.shape[-1],))
    for k in range(a.shape[-1]):
        out += a[..., k:k + 1] * v[..., k, :][..., None, :]

    def vjp(g, attn=attn, values=values):
        da = g @ np.swapaxes(values.data, -1, -2)
        db = np.swapaxes(attn.data, -1, -2) @ g
        return da, db
    return _make(out, (attn, values), vjp)


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0

    def vjp(g, keep=keep):
        return (g * keep,)
    return _make(np.where(keep, a.data, 0.0), (a,), vjp)


def dropout(a: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: scales by 1/(1-p) at train time, identity at eval."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    keep = (rng.random(a.shape) >= p) / (1.0 - p)

    def vjp(g, keep=keep):
        return (g * keep,)
    return _make(a.data * keep, (a,), vjp)


def l2_normalize_rows(a: Tensor) -> Tensor:
    """Divide each last-axis row by its L2 norm; zero rows stay zero."""
    norms = np.sqrt(np.sum(a.data ** 2, axis=-1, keepdims=True))
    safe = np.where(norms > 0.0, norms, 1.0)
    out = a.data / safe

    def vjp(g, out_data=out, safe=safe, norms=norms):
        dot = np.sum(g * out_data, axis=-1, keepdims=True)
        da = (g - out_data * dot) / safe
        return (np.where(norms > 0.0, da, 0.0),)
    return _make(np.where(norms > 0.0, out, 0.0), (a,), vjp)


def cosine_rows(a: Tensor, b: Tensor) -> Tensor:
    """Rowwise cosine similarity along the last axis.

    A zero-norm row on either side yields cosine 0 with zero gradient.
    """
    if a.shape != b.shape:
        raise ShapeError(f"cosine_rows shapes differ: {a.shape} vs {b.shape}")
    na = np.sqrt(np.sum(a.data ** 2, axis=-1))
    nb = np.sqrt(np.sum(b.data ** 2, axis=-1))
    ok = (na > 0.0) & (nb > 0.0)
    denom = np.where(ok, na * nb, 1.0)
    dots = np.sum(a.data * b.data, axis=-1)
    out = np.where(ok, dots / denom, 0.0)

    def vjp(g, a=a, b=b, na=na, nb=nb, ok=ok, denom=denom, out_data=out):
        gm = np.where(ok, g, 0.0)[..., None]
        na_ = np.where(ok, na, 1.0)[..., None]
        nb_ = np.where(ok, nb, 1.0)[..., None]
        c = out_data[..., None]
        da = gm * (b.data / denom[..., None] - c * a.data / (na_ * na_))
        db = gm * (a.data / denom[..., None] - c * b.data / (nb_ * nb_))
        return da, db
    return _make(out, (a, b), vjp)


def tsum(a: Tensor) -> Tensor:
    """Sum of all entries (scalar)."""
    def vjp(g, shape=a.shape):
        return (np.broadcast_to(g, shape),)
    return _make(a.data.sum(), (a,), vjp)


sum = tsum  # canonical op name; shadows the builtin only inside this module


def square(a: Tensor) -> Tensor:
    def vjp(g, a=a):
        return (2.0 * a.data * g,)
    return _make(a.data ** 2, (a,), vjp)


def cos(a: Tensor) -> Tensor:
    def vjp(g, a=a):
        return (-np.sin(a.data) * g,)
    return _make(np.cos(a.data), (a,), vjp)


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)) in overflow-safe form."""
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def vjp(g, x=x):
        sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)),
                       np.exp(np.minimum(x, 0.0)) / (1.0 + np.exp(np.minimum(x, 0.0))))
        return (g * sig,)
    return _make(out, (a,), vjp)


def cross_entropy_rows(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer labels against logit rows (stable)."""
    labels = np.asarray(labels, dtype=np.int64)
    x = logits.data
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise ShapeError(f"cross_entropy_rows: logits {x.shape} vs labels {labels.shape}")
    if labels.size == 0:
        raise ValueError("cross_entropy_rows: empty input")
    m = x.max(axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=1)) + m[:, 0]
    ce = lse - x[np.arange(x.shape[0]), labels]
    n = x.shape[0]

    def vjp(g, z=z, labels=labels, n=n):
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), labels] -= 1.0
        return (p * (float(g) / n),)
    return _make(ce.mean(), (logits,), vjp)


def transpose_last2(a: Tensor) -> Tensor:
    def vjp(g):
        return (np.swapaxes(g, -1, -2),)
    return _make(np.swapaxes(a.data, -1, -2), (a,), vjp)


# ---------------------------------------------------------------------------
# trainable parameters, Adam, gradient checking


class Param:
    """Trainable tensor with gradient and Adam moment buffers."""

    def __init__(self, name: str, data, trainable: bool = True):
        arr = np.array(data, dtype=np.float64)
        self.name = name
        self.value = Tensor(arr, requires_grad=True)
        self.grad = np.zeros_like(arr)
        self.adam_m = np.zeros_like(arr)
        self.adam_v = np.zeros_like(arr)
        self.step_count = 0
        self.trainable = trainable

    @property
    def data(self) -> np.ndarray:
        return self.value.data

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape}, trainable={self.trainable})"


class AdamConfig:
    def __init__(self, lr: float = 1e-5, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        # lr = 0 is allowed: it makes the step a no-op, which tests rely on
        if not (lr >= 0 and 0 <= beta1 < 1 and 0 <= beta2 < 1 and eps > 0):
            raise ValueError("invalid Adam hyperparameters")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(params: Sequence[Param], config: AdamConfig) -> None:
    """Bias-corrected Adam update; grads are zeroed afterwards."""
    for p in params:
        p.step_count += 1
        if p.trainable:
            g = p.grad
            p.adam_m *= config.beta1
            p.adam_m += (1.0 - config.beta1) * g
            p.adam_v *= config.beta2
            p.adam_v += (1.0 - config.beta2) * g * g
            m_hat = p.adam_m / (1.0 - config.beta1 ** p.step_count)
            v_hat = p.adam_v / (1.0 - config.beta2 ** p.step_count)
            p.value.data -= config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
        p.grad.fill(0.0)


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Param],
                      epsilon: float = 1e-6) -> float:
    """Max relative error between tape gradients and central differences.

    Relative error per entry is |g_ad - g_fd| / max(1, |g_fd|). `f` must
    be deterministic (dropout off) and must rebuild its graph per call.
    """
    with Tape() as tape:
        loss = f()
    tape.backward(loss, params)
    ad_grads = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ad in zip(params, ad_grads):
        flat = p.value.data.reshape(-1)
        gflat = ad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = f().item()
            flat[i] = orig - epsilon
            down = f().item()
            flat[i] = orig
            fd = (up - down) / (2.0 * epsilon)
            err = abs(gflat[i] - fd) / max(1.0, abs(fd))
            if err > worst:
                worst = err
    for p in params:
        p.grad.fill(0.0)
    return worst
