"""Reverse-mode differentiation over a fixed primitive set.

A Tape records each primitive application in execution order (a Wengert
list); since execution order is a topological order, the backward pass is a
single reverse sweep that visits every node exactly once. Primitives are
plain functions taking the tape first; passing tape=None runs the same
forward computation without recording, which is the inference path.

Tensors are boxed in Var. Convolution tensors are channel-major:
(batch, channels, time).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import InvalidArgument


class Var:
    """A boxed ndarray with an optional accumulated gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Var(shape={self.data.shape}, requires_grad={self.requires_grad})"


def param(data) -> Var:
    """A trainable leaf."""
    return Var(np.asarray(data), requires_grad=True)


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


class Tape:
    """Execution-ordered record of primitive ops for one backward sweep."""

    def __init__(self):
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    def _record(self, out: Var, parents, backward):
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            self._nodes.append((out, parents, backward))

    def backward(self, loss: Var, seed=None):
        """Accumulate gradients of a scalar loss into every recorded leaf."""
        if seed is None:
            if loss.data.size != 1:
                raise InvalidArgument("backward() needs a scalar loss or an explicit seed")
            seed = np.ones_like(loss.data)
        loss.grad = np.asarray(seed) if loss.grad is None else loss.grad + seed
        for out, parents, backward in reversed(self._nodes):
            if out.grad is None:
                continue
            for parent, g in zip(parents, backward(out.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient over axes that were broadcast in the forward op."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ---------------------------------------------------------------


def add(tape, a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.data + b.data)
    if tape is not None:
        tape._record(
            out,
            (a, b),
            lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
        )
    return out


def sub(tape, a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.data - b.data)
    if tape is not None:
        tape._record(
            out,
            (a, b),
            lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
        )
    return out


def mul(tape, a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.data * b.data)
    if tape is not None:
        tape._record(
            out,
            (a, b),
            lambda g: (
                _unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape),
            ),
        )
    return out


def scale(tape, a, s: float) -> Var:
    a = _wrap(a)
    out = Var(a.data * s)
    if tape is not None:
        tape._record(out, (a,), lambda g: (g * s,))
    return out


def slice_channels(tape, x, lo: int, hi: int) -> Var:
    """x[:, lo:hi, :] for (B, C, T) tensors."""
    x = _wrap(x)
    out = Var(x.data[:, lo:hi, :])

    def backward(g):
        dx = np.zeros_like(x.data)
        dx[:, lo:hi, :] = g
        return (dx,)

    if tape is not None:
        tape._record(out, (x,), backward)
    return out


def time_diff(tape, x) -> Var:
    """Frame-wise difference along the last axis: out[..., l] = x[..., l+1] - x[..., l]."""
    x = _wrap(x)
    if x.data.shape[-1] < 2:
        raise InvalidArgument("time_diff needs at least 2 frames")
    out = Var(x.data[..., 1:] - x.data[..., :-1])

    def backward(g):
        dx = np.zeros_like(x.data)
        dx[..., 1:] += g
        dx[..., :-1] -= g
        return (dx,)

    if tape is not None:
        tape._record(out, (x,), backward)
    return out


# -- activations --------------------------------------------------------------


def leaky_relu(tape, x, alpha: float = 0.2) -> Var:
    x = _wrap(x)
    pos = x.data >= 0
    out = Var(np.where(pos, x.data, alpha * x.data))
    if tape is not None:
        tape._record(out, (x,), lambda g: (g * np.where(pos, 1.0, alpha),))
    return out


def tanh(tape, x) -> Var:
    x = _wrap(x)
    y = np.tanh(x.data)
    out = Var(y)
    if tape is not None:
        tape._record(out, (x,), lambda g: (g * (1.0 - y * y),))
    return out


def straight_through(tape, z, values: np.ndarray) -> Var:
    """Forward the given values, pass the gradient to z unchanged."""
    z = _wrap(z)
    if np.shape(values) != z.data.shape:
        raise InvalidArgument(f"straight_through shape {np.shape(values)} != latent {z.data.shape}")
    out = Var(np.asarray(values))
    if tape is not None:
        tape._record(out, (z,), lambda g: (g,))
    return out


# -- convolutions -------------------------------------------------------------


def _im2col(xp: np.ndarray, k: int, stride: int, out_t: int) -> np.ndarray:
    """(B, C, Tp) -> contiguous (B*out_t, C*k) patch matrix."""
    b, c, _ = xp.shape
    s0, s1, s2 = xp.strides
    col = as_strided(xp, shape=(b, c, out_t, k), strides=(s0, s1, s2 * stride, s2))
    return np.ascontiguousarray(col.transpose(0, 2, 1, 3)).reshape(b * out_t, c * k)


def conv1d(tape, x, w, b=None, stride: int = 1, pad: int = 0) -> Var:
    """1-D convolution. x: (B, Cin, T), w: (Cout, Cin, k), b: (Cout,)."""
    x, w = _wrap(x), _wrap(w)
    bv = _wrap(b) if b is not None else None
    batch, cin, t = x.data.shape
    cout, cin_w, k = w.data.shape
    if cin != cin_w:
        raise InvalidArgument(f"conv1d channel mismatch: input {cin}, weight {cin_w}")
    out_t = (t + 2 * pad - k) // stride + 1
    if out_t <= 0:
        raise InvalidArgument(f"conv1d output length {out_t} <= 0")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad))) if pad else np.ascontiguousarray(x.data)
    colm = _im2col(xp, k, stride, out_t)
    wm = w.data.reshape(cout, cin * k)
    y = (colm @ wm.T).reshape(batch, out_t, cout).transpose(0, 2, 1)
    if bv is not None:
        y = y + bv.data[None, :, None]
    out = Var(np.ascontiguousarray(y))

    def backward(g):
        gm = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(batch * out_t, cout)
        dw = (gm.T @ colm).reshape(cout, cin, k)
        dcol = (gm @ wm).reshape(batch, out_t, cin, k).transpose(0, 2, 1, 3)
        dxp = np.zeros_like(xp)
        for kk in range(k):
            dxp[:, :, kk : kk + stride * out_t : stride] += dcol[:, :, :, kk]
        dx = dxp[:, :, pad : pad + t] if pad else dxp
        db = gm.sum(axis=0) if bv is not None else None
        return (dx, dw, db) if bv is not None else (dx, dw)

    if tape is not None:
        tape._record(out, (x, w, bv) if bv is not None else (x, w), backward)
    return out


def conv1d_transpose(tape, x, w, b=None, stride: int = 2, pad: int = 1) -> Var:
    """Transposed 1-D convolution. x: (B, Cin, T), w: (Cin, Cout, k), b: (Cout,).

    Output length is (T-1)*stride - 2*pad + k.
    """
    x, w = _wrap(x), _wrap(w)
    bv = _wrap(b) if b is not None else None
    batch, cin, t = x.data.shape
    cin_w, cout, k = w.data.shape
    if cin != cin_w:
        raise InvalidArgument(f"conv1d_transpose channel mismatch: input {cin}, weight {cin_w}")
    out_t = (t - 1) * stride - 2 * pad + k
    if out_t <= 0:
        raise InvalidArgument(f"conv1d_transpose output length {out_t} <= 0")
    full_t = (t - 1) * stride + k
    xm = np.ascontiguousarray(x.data.transpose(0, 2, 1)).reshape(batch * t, cin)
    wm = w.data.reshape(cin, cout * k)
    contrib = (xm @ wm).reshape(batch, t, cout, k)
    full = np.zeros((batch, cout, full_t), dtype=contrib.dtype)
    for kk in range(k):
        full[:, :, kk : kk + stride * t : stride] += contrib[:, :, :, kk].transpose(0, 2, 1)
    y = full[:, :, pad : pad + out_t]
    if bv is not None:
        y = y + bv.data[None, :, None]
    out = Var(np.ascontiguousarray(y))

    def backward(g):
        dfull = np.zeros((batch, cout, full_t), dtype=g.dtype)
        dfull[:, :, pad : pad + out_t] = g
        dcontrib = np.empty((batch, t, cout, k), dtype=g.dtype)
        for kk in range(k):
            dcontrib[:, :, :, kk] = dfull[:, :, kk : kk + stride * t : stride].transpose(0, 2, 1)
        dcm = dcontrib.reshape(batch * t, cout * k)
        dx = (dcm @ wm.T).reshape(batch, t, cin).transpose(0, 2, 1)
        dw = (xm.T @ dcm).reshape(cin, cout, k)
        db = g.sum(axis=(0, 2)) if bv is not None else None
        return (dx, dw, db) if bv is not None else (dx, dw)

    if tape is not None:
        tape._record(out, (x, w, bv) if bv is not None else (x, w), backward)
    return out


# -- reductions / losses -------------------------------------------------------


def _mask_and_count(diff_shape, mask):
    if mask is None:
        m = None
        n = int(np.prod(diff_shape))
    else:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), diff_shape)
        n = int(m.sum())
    if n == 0:
        raise InvalidArgument("loss over an empty mask")
    return m, n


def masked_l1(tape, pred, target, mask=None) -> Var:
    """Mean absolute difference over unmasked entries."""
    pred, target = _wrap(pred), _wrap(target)
    if pred.data.shape != target.data.shape:
        raise InvalidArgument(f"shape mismatch {pred.data.shape} vs {target.data.shape}")
    diff = pred.data - target.data
    m, n = _mask_and_count(diff.shape, mask)
    if m is not None:
        diff = np.where(m, diff, 0.0)
    out = Var(np.abs(diff).sum() / n)

    def backward(g):
        base = np.sign(diff) * (g / n)
        return (base, -base)

    if tape is not None:
        tape._record(out, (pred, target), backward)
    return out


def masked_sq(tape, pred, target, mask=None) -> Var:
    """Mean squared difference over unmasked entries."""
    pred, target = _wrap(pred), _wrap(target)
    if pred.data.shape != target.data.shape:
        raise InvalidArgument(f"shape mismatch {pred.data.shape} vs {target.data.shape}")
    diff = pred.data - target.data
    m, n = _mask_and_count(diff.shape, mask)
    if m is not None:
        diff = np.where(m, diff, 0.0)
    out = Var((diff * diff).sum() / n)

    def backward(g):
        base = 2.0 * diff * (g / n)
        return (base, -base)

    if tape is not None:
        tape._record(out, (pred, target), backward)
    return out


def masked_smooth_l1(tape, pred, target, mask=None, beta: float = 1.0) -> Var:
    """Huber-style smooth L1: quadratic within beta, linear outside."""
    pred, target = _wrap(pred), _wrap(target)
    if pred.data.shape != target.data.shape:
        raise InvalidArgument(f"shape mismatch {pred.data.shape} vs {target.data.shape}")
    diff = pred.data - target.data
    m, n = _mask_and_count(diff.shape, mask)
    if m is not None:
        diff = np.where(m, diff, 0.0)
    absd = np.abs(diff)
    small = absd < beta
    vals = np.where(small, 0.5 * diff * diff / beta, absd - 0.5 * beta)
    out = Var(vals.sum() / n)

    def backward(g):
        base = np.where(small, diff / beta, np.sign(diff)) * (g / n)
        return (base, -base)

    if tape is not None:
        tape._record(out, (pred, target), backward)
    return out


# -- verification helpers -----------------------------------------------------


def finite_diff_grad(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f at x, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a-b||2 / max(1e-12, ||a||2 + ||b||2).

    Norm-ratio form so exact zeros in one tensor do not divide FD noise by
    itself and report a spurious mismatch.
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    num = float(np.linalg.norm((a - b).reshape(-1)))
    denom = float(np.linalg.norm(a.reshape(-1)) + np.linalg.norm(b.reshape(-1)))
    return num / max(denom, 1e-12)
