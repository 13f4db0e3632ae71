"""Dense float tensors with reverse-mode differentiation on a recording tape.

The model code in this package works on small dense vectors and matrices, so
the whole differentiation story fits in one file: a :class:`Tensor` wraps a
numpy array (float32 by default, float64 supported for high-precision
checks), a :class:`Tape` records every primitive applied while it is active,
and ``backward`` replays the record in reverse, accumulating gradients into
``Tensor.grad``.

Conventions
-----------
* Ops are module-level functions.  When no tape is active they just compute
  values (inference mode, no recording overhead).
* Gradients are only propagated to inputs that need them: a tensor created
  with ``trainable=True`` needs gradients, and need-ness propagates through
  ops.  Constant inputs (e.g. frozen embedding vectors) cost nothing extra.
* Backward rules never mutate arrays in place; accumulation always allocates
  (``t.grad = t.grad + g``), so shared gradient buffers are safe.
* Reductions may accumulate in 64-bit internally; outputs keep the input
  dtype.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "add",
    "sub",
    "neg",
    "mul",
    "elementwise_mul",
    "scale",
    "matvec",
    "matmul",
    "linear",
    "linear_rows",
    "take_row",
    "concat",
    "dot",
    "cosine",
    "reduce_sum",
    "sqsum",
    "weighted_sum",
    "sigmoid",
    "tanh",
    "elu",
    "softmax",
    "logsigmoid",
    "gru_step",
    "backward",
    "grad_check",
]

_ACCEPTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """A dense float array plus an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "trainable", "needs_grad", "name", "_tape")

    def __init__(self, data, trainable: bool = False, name: str | None = None, dtype=None):
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, (np.ndarray, np.floating)) and data.dtype in _ACCEPTED_DTYPES:
            # keep float32/float64 as given; numpy scalars (what 0-d array
            # arithmetic returns) count, or a float64 chain would silently
            # drop to float32 at every scalar-valued op
            arr = np.asarray(data)
        else:
            # python lists/scalars and non-float arrays default to float32
            arr = np.asarray(data, dtype=np.float32)
        if arr.dtype not in _ACCEPTED_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.trainable = trainable
        self.needs_grad = trainable
        self.name = name
        self._tape: "Tape | None" = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.shape}, dtype={self.data.dtype}, trainable={self.trainable})"


class _OpRecord:
    __slots__ = ("name", "inputs", "out", "backward_fn")

    def __init__(self, name, inputs, out, backward_fn):
        self.name = name
        self.inputs = inputs
        self.out = out
        self.backward_fn = backward_fn


_ACTIVE = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_ACTIVE, "tape", None)


class Tape:
    """Ordered record of primitive ops; replaying it in reverse is backprop.

    Use as a context manager around a forward pass; the tape is confined to
    the thread that opened it.  ``backward`` may run once per record (reset()
    rearms it).
    """

    def __init__(self):
        self._ops: list[_OpRecord] = []
        self._consumed = False
        self._trainables: dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise RuntimeError("a Tape is already active on this thread; nested tapes are not supported")
        _ACTIVE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE.tape = None

    def _append(self, record: _OpRecord) -> None:
        self._ops.append(record)
        for t in record.inputs:
            if t.trainable:
                self._trainables[id(t)] = t

    def op_names(self) -> list[str]:
        """Names of recorded ops in execution order (structural fingerprint)."""
        return [r.name for r in self._ops]

    def reset(self) -> None:
        self._consumed = False

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(tensor) into ``.grad`` for every recorded tensor.

        ``loss`` must be a scalar produced while this tape was active.
        Trainable tensors that took part in the forward pass but do not
        influence the loss receive an explicit zero gradient.
        """
        if self._consumed:
            raise RuntimeError("backward() already ran on this record; call reset() to rearm it")
        if loss._tape is not self:
            raise ValueError("loss was not produced while this tape was recording")
        if loss.size != 1:
            raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for rec in reversed(self._ops):
            out_grad = rec.out.grad
            if out_grad is None:
                continue
            grads = rec.backward_fn(out_grad)
            for tensor, g in zip(rec.inputs, grads):
                if g is None:
                    continue
                if tensor.grad is None:
                    tensor.grad = g
                else:
                    tensor.grad = tensor.grad + g
        for t in self._trainables.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)


def backward(loss: Tensor) -> None:
    """Run backprop from ``loss`` through the tape that recorded it."""
    if loss._tape is None:
        raise ValueError("loss was not produced by a recorded forward pass (no active Tape at the time)")
    loss._tape.backward(loss)


def _t(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(name: str, inputs: tuple[Tensor, ...], out: Tensor, backward_fn) -> None:
    tape = _active_tape()
    if tape is None:
        return
    if not any(t.needs_grad for t in inputs):
        return
    out.needs_grad = True
    out._tape = tape
    tape._append(_OpRecord(name, inputs, out, backward_fn))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    ta, tb = _t(a), _t(b)
    out = Tensor(ta.data + tb.data)

    def bw(g):
        return (
            _unbroadcast(g, ta.data.shape) if ta.needs_grad else None,
            _unbroadcast(g, tb.data.shape) if tb.needs_grad else None,
        )

    _record("add", (ta, tb), out, bw)
    return out


def sub(a, b) -> Tensor:
    ta, tb = _t(a), _t(b)
    out = Tensor(ta.data - tb.data)

    def bw(g):
        return (
            _unbroadcast(g, ta.data.shape) if ta.needs_grad else None,
            _unbroadcast(-g, tb.data.shape) if tb.needs_grad else None,
        )

    _record("sub", (ta, tb), out, bw)
    return out


def neg(a) -> Tensor:
    ta = _t(a)
    out = Tensor(-ta.data)

    def bw(g):
        return ((-g) if ta.needs_grad else None,)

    _record("neg", (ta,), out, bw)
    return out


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with numpy broadcasting."""
    ta, tb = _t(a), _t(b)
    out = Tensor(ta.data * tb.data)

    def bw(g):
        return (
            _unbroadcast(g * tb.data, ta.data.shape) if ta.needs_grad else None,
            _unbroadcast(g * ta.data, tb.data.shape) if tb.needs_grad else None,
        )

    _record("mul", (ta, tb), out, bw)
    return out


elementwise_mul = mul


def scale(a, c: float) -> Tensor:
    """Multiply by a python constant (kept out of the parameter set)."""
    ta = _t(a)
    cval = ta.data.dtype.type(c)
    out = Tensor(ta.data * cval)

    def bw(g):
        return ((g * cval) if ta.needs_grad else None,)

    _record("scale", (ta,), out, bw)
    return out


# ---------------------------------------------------------------------------
# linear algebra


def matvec(W, x) -> Tensor:
    tw, tx = _t(W), _t(x)
    if tw.data.ndim != 2 or tx.data.ndim != 1 or tw.data.shape[1] != tx.data.shape[0]:
        raise ValueError(f"matvec shape mismatch: W has shape {tw.data.shape}, x has shape {tx.data.shape}")
    out = Tensor(tw.data @ tx.data)

    def bw(g):
        return (
            np.outer(g, tx.data) if tw.needs_grad else None,
            tw.data.T @ g if tx.needs_grad else None,
        )

    _record("matvec", (tw, tx), out, bw)
    return out


def matmul(A, B) -> Tensor:
    ta, tb = _t(A), _t(B)
    if ta.data.ndim != 2 or tb.data.ndim != 2 or ta.data.shape[1] != tb.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {ta.data.shape} @ {tb.data.shape}")
    out = Tensor(ta.data @ tb.data)

    def bw(g):
        return (
            g @ tb.data.T if ta.needs_grad else None,
            ta.data.T @ g if tb.needs_grad else None,
        )

    _record("matmul", (ta, tb), out, bw)
    return out


def linear(W, x, b=None) -> Tensor:
    """W @ x (+ b) fused into one record."""
    tw, tx = _t(W), _t(x)
    if tw.data.ndim != 2 or tx.data.ndim != 1 or tw.data.shape[1] != tx.data.shape[0]:
        raise ValueError(f"linear shape mismatch: W has shape {tw.data.shape}, x has shape {tx.data.shape}")
    if b is None:
        return matvec(tw, tx)
    tb = _t(b)
    if tb.data.shape != (tw.data.shape[0],):
        raise ValueError(f"linear bias shape {tb.data.shape} does not match output dim {tw.data.shape[0]}")
    out = Tensor(tw.data @ tx.data + tb.data)

    def bw(g):
        return (
            np.outer(g, tx.data) if tw.needs_grad else None,
            tw.data.T @ g if tx.needs_grad else None,
            g if tb.needs_grad else None,
        )

    _record("linear", (tw, tx, tb), out, bw)
    return out


def linear_rows(X, W, b=None) -> Tensor:
    """Row-batched linear map: X @ W.T (+ b), X is (m, in), W is (out, in)."""
    tx, tw = _t(X), _t(W)
    if tx.data.ndim != 2 or tw.data.ndim != 2 or tx.data.shape[1] != tw.data.shape[1]:
        raise ValueError(f"linear_rows shape mismatch: X has shape {tx.data.shape}, W has shape {tw.data.shape}")
    val = tx.data @ tw.data.T
    if b is None:
        out = Tensor(val)

        def bw(g):
            return (
                g @ tw.data if tx.needs_grad else None,
                g.T @ tx.data if tw.needs_grad else None,
            )

        _record("linear_rows", (tx, tw), out, bw)
        return out

    tb = _t(b)
    if tb.data.shape != (tw.data.shape[0],):
        raise ValueError(f"linear_rows bias shape {tb.data.shape} does not match output dim {tw.data.shape[0]}")
    out = Tensor(val + tb.data)

    def bw(g):
        return (
            g @ tw.data if tx.needs_grad else None,
            g.T @ tx.data if tw.needs_grad else None,
            g.sum(axis=0) if tb.needs_grad else None,
        )

    _record("linear_rows", (tx, tw, tb), out, bw)
    return out


def take_row(M, i: int) -> Tensor:
    tm = _t(M)
    if tm.data.ndim != 2:
        raise ValueError(f"take_row expects a matrix, got shape {tm.data.shape}")
    if not 0 <= i < tm.data.shape[0]:
        raise ValueError(f"take_row index {i} out of range for shape {tm.data.shape}")
    out = Tensor(tm.data[i].copy())

    def bw(g):
        if not tm.needs_grad:
            return (None,)
        full = np.zeros_like(tm.data)
        full[i] = g
        return (full,)

    _record("take_row", (tm,), out, bw)
    return out


def concat(parts: Sequence) -> Tensor:
    tensors = [_t(p) for p in parts]
    if not tensors:
        raise ValueError("concat needs at least one input")
    for t in tensors:
        if t.data.ndim != 1:
            raise ValueError(f"concat expects vectors, got shape {t.data.shape}")
    out = Tensor(np.concatenate([t.data for t in tensors]))
    sizes = [t.data.shape[0] for t in tensors]

    def bw(g):
        grads = []
        pos = 0
        for t, n in zip(tensors, sizes):
            grads.append(g[pos : pos + n] if t.needs_grad else None)
            pos += n
        return tuple(grads)

    _record("concat", tuple(tensors), out, bw)
    return out


def dot(a, b) -> Tensor:
    ta, tb = _t(a), _t(b)
    if ta.data.shape != tb.data.shape or ta.data.ndim != 1:
        raise ValueError(f"dot shape mismatch: {ta.data.shape} vs {tb.data.shape}")
    out = Tensor(np.asarray(ta.data @ tb.data))

    def bw(g):
        return (
            g * tb.data if ta.needs_grad else None,
            g * ta.data if tb.needs_grad else None,
        )

    _record("dot", (ta, tb), out, bw)
    return out


def cosine(a, b) -> Tensor:
    """Cosine similarity of two vectors; zero-norm input is a hard error."""
    ta, tb = _t(a), _t(b)
    if ta.data.shape != tb.data.shape or ta.data.ndim != 1:
        raise ValueError(f"cosine shape mismatch: {ta.data.shape} vs {tb.data.shape}")
    na = float(np.linalg.norm(ta.data))
    nb = float(np.linalg.norm(tb.data))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine of a zero vector is undefined (degenerate embedding)")
    cos = (ta.data @ tb.data) / (na * nb)
    out = Tensor(np.asarray(ta.data.dtype.type(cos)))

    def bw(g):
        ga = g * (tb.data / (na * nb) - cos * ta.data / (na * na)) if ta.needs_grad else None
        gb = g * (ta.data / (na * nb) - cos * tb.data / (nb * nb)) if tb.needs_grad else None
        return (ga, gb)

    _record("cosine", (ta, tb), out, bw)
    return out


def reduce_sum(a) -> Tensor:
    ta = _t(a)
    out = Tensor(np.asarray(ta.data.sum(dtype=np.float64)).astype(ta.data.dtype))

    def bw(g):
        if not ta.needs_grad:
            return (None,)
        return (np.full_like(ta.data, float(g)),)

    _record("reduce_sum", (ta,), out, bw)
    return out


def sqsum(tensors: Iterable) -> Tensor:
    """Sum of squared entries over a list of tensors (the L2 penalty body)."""
    ts = [_t(t) for t in tensors]
    if not ts:
        raise ValueError("sqsum needs at least one tensor")
    total = 0.0
    for t in ts:
        flat = t.data.ravel()
        total += float(flat @ flat)
    out = Tensor(np.asarray(ts[0].data.dtype.type(total)))

    def bw(g):
        gf = float(g)
        return tuple((2.0 * gf) * t.data if t.needs_grad else None for t in ts)

    _record("sqsum", tuple(ts), out, bw)
    return out


def weighted_sum(vectors: Sequence, alpha) -> Tensor:
    """sum_i alpha[i] * vectors[i] for 1-d vectors of equal length."""
    vs = [_t(v) for v in vectors]
    ta = _t(alpha)
    if ta.data.ndim != 1 or len(vs) != ta.data.shape[0]:
        raise ValueError(f"weighted_sum got {len(vs)} vectors but alpha has shape {ta.data.shape}")
    if not vs:
        raise ValueError("weighted_sum needs at least one vector")
    V = np.stack([v.data for v in vs])
    out = Tensor(ta.data @ V)

    def bw(g):
        grads_v = tuple((ta.data[i] * g) if vs[i].needs_grad else None for i in range(len(vs)))
        grad_a = V @ g if ta.needs_grad else None
        return grads_v + (grad_a,)

    _record("weighted_sum", tuple(vs) + (ta,), out, bw)
    return out


# ---------------------------------------------------------------------------
# nonlinearities


def _sigmoid_stable(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))


def sigmoid(a) -> Tensor:
    ta = _t(a)
    val = _sigmoid_stable(ta.data)
    out = Tensor(val)

    def bw(g):
        if not ta.needs_grad:
            return (None,)
        return (g * val * (1.0 - val),)

    _record("sigmoid", (ta,), out, bw)
    return out


def tanh(a) -> Tensor:
    ta = _t(a)
    val = np.tanh(ta.data)
    out = Tensor(val)

    def bw(g):
        if not ta.needs_grad:
            return (None,)
        return (g * (1.0 - val * val),)

    _record("tanh", (ta,), out, bw)
    return out


def elu(a, alpha: float = 1.0) -> Tensor:
    ta = _t(a)
    x = ta.data
    val = np.where(x > 0, x, alpha * np.expm1(x))
    out = Tensor(val)

    def bw(g):
        if not ta.needs_grad:
            return (None,)
        return (np.where(x > 0, g, g * (val + alpha)),)

    _record("elu", (ta,), out, bw)
    return out


def softmax(a) -> Tensor:
    """Numerically stabilized softmax over a 1-d vector."""
    ta = _t(a)
    if ta.data.ndim != 1 or ta.data.shape[0] == 0:
        raise ValueError(f"softmax expects a non-empty vector, got shape {ta.data.shape}")
    shifted = ta.data - ta.data.max()
    e = np.exp(shifted)
    val = e / e.sum()
    out = Tensor(val)

    def bw(g):
        if not ta.needs_grad:
            return (None,)
        inner = float(g @ val)
        return (val * (g - inner),)

    _record("softmax", (ta,), out, bw)
    return out


def logsigmoid(a) -> Tensor:
    """log(sigmoid(x)), stable for large |x|."""
    ta = _t(a)
    x = ta.data
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.where(x < 0, x - np.log1p(np.exp(x)), -np.log1p(np.exp(-x)))
    out = Tensor(val)

    def bw(g):
        if not ta.needs_grad:
            return (None,)
        return (g * _sigmoid_stable(-x),)

    _record("logsigmoid", (ta,), out, bw)
    return out


# ---------------------------------------------------------------------------
# fused recurrent step


def _gru_core(x, h, W_z, U_z, W_r, U_r, W_h, U_h):
    """Shared forward arithmetic for the gated recurrent step (no biases).

    Returns the new hidden state plus the intermediate gate activations
    needed by the backward rule.  Also used directly by inference-mode code
    so the differentiable op and the fast replay path cannot diverge.
    """
    z = _sigmoid_stable(W_z @ x + U_z @ h)
    r = _sigmoid_stable(W_r @ x + U_r @ h)
    rh = r * h
    c = np.tanh(W_h @ x + U_h @ rh)
    h_new = (1.0 - z) * h + z * c
    return h_new, z, r, rh, c


def gru_step(x, h_prev, W_z, U_z, W_r, U_r, W_h, U_h) -> Tensor:
    """One step of the update/reset-gated recurrent unit (bias-free form).

    z = sigmoid(W_z x + U_z h);  r = sigmoid(W_r x + U_r h)
    c = tanh(W_h x + U_h (r * h));  h' = (1 - z) * h + z * c
    """
    tensors = tuple(_t(v) for v in (x, h_prev, W_z, U_z, W_r, U_r, W_h, U_h))
    tx, th, twz, tuz, twr, tur, twh, tuh = tensors
    k = th.data.shape[0]
    for name, t in (("W_z", twz), ("U_z", tuz), ("W_r", twr), ("U_r", tur), ("W_h", twh), ("U_h", tuh)):
        if t.data.shape != (k, k):
            raise ValueError(f"gru_step: {name} has shape {t.data.shape}, expected {(k, k)}")
    if twz.data.shape[1] != tx.data.shape[0]:
        raise ValueError(f"gru_step: input shape {tx.data.shape} does not match gate width {twz.data.shape}")
    h_new, z, r, rh, c = _gru_core(
        tx.data, th.data, twz.data, tuz.data, twr.data, tur.data, twh.data, tuh.data
    )
    out = Tensor(h_new)

    def bw(g):
        h = th.data
        dz = g * (c - h)
        dc = g * z
        dh = g * (1.0 - z)
        dac = dc * (1.0 - c * c)
        drh = tuh.data.T @ dac
        dr = drh * h
        dh = dh + drh * r
        dar = dr * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        dh = dh + tur.data.T @ dar + tuz.data.T @ daz
        dx = None
        if tx.needs_grad:
            dx = twz.data.T @ daz + twr.data.T @ dar + twh.data.T @ dac
        return (
            dx,
            dh if th.needs_grad else None,
            np.outer(daz, tx.data) if twz.needs_grad else None,
            np.outer(daz, h) if tuz.needs_grad else None,
            np.outer(dar, tx.data) if twr.needs_grad else None,
            np.outer(dar, h) if tur.needs_grad else None,
            np.outer(dac, tx.data) if twh.needs_grad else None,
            np.outer(dac, rh) if tuh.needs_grad else None,
        )

    _record("gru_step", tensors, out, bw)
    return out


# ---------------------------------------------------------------------------
# finite-difference verification


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-4,
    max_coords_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare recorded gradients of ``f()`` against central differences.

    ``f`` must be a deterministic closure over ``params`` returning a scalar
    Tensor.  Returns the worst relative error
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`` over the
    checked coordinates.  Use float64 parameters for tight tolerances; the
    truncation+rounding floor of the central difference in float32 is around
    1e-3.
    """
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    analytic = []
    for p in params:
        # a parameter the forward pass never touched has gradient zero
        analytic.append(p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        p.grad = None

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        n = flat.shape[0]
        if max_coords_per_tensor is not None and n > max_coords_per_tensor:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = np.sort(gen.choice(n, size=max_coords_per_tensor, replace=False))
        else:
            coords = range(n)
        for j in coords:
            orig = flat[j]
            flat[j] = orig + eps
            f_plus = float(f().data)
            flat[j] = orig - eps
            f_minus = float(f().data)
            flat[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(float(aflat[j])), abs(numeric), 1e-8)
            rel = abs(float(aflat[j]) - numeric) / denom
            if rel > worst:
                worst = rel
    return worst
