"""Differentiable primitives.

Every op computes its forward value with numpy and, when any input is on a
tape, records an exact vector-Jacobian product. Elementwise ops follow numpy
broadcasting; gradients are summed back to each input's shape.
"""
from __future__ import annotations

import builtins
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, shape_error, tape_of


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _out(data, inputs, vjp):
    tape = tape_of(*inputs)
    if tape is None:
        return Tensor(data, _copy=False)
    return tape.record(data, inputs, vjp)


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise shape_error(op, a.shape, b.shape) from None


# --- elementwise -----------------------------------------------------------------

def add(a, b):
    x, y = _data(a), _data(b)
    _broadcast_shape("add", x, y)
    return _out(x + y, (a, b), lambda g: (unbroadcast(g, x.shape), unbroadcast(g, y.shape)))


def sub(a, b):
    x, y = _data(a), _data(b)
    _broadcast_shape("sub", x, y)
    return _out(x - y, (a, b), lambda g: (unbroadcast(g, x.shape), -unbroadcast(g, y.shape)))


def mul(a, b):
    x, y = _data(a), _data(b)
    _broadcast_shape("mul", x, y)
    return _out(x * y, (a, b),
                lambda g: (unbroadcast(g * y, x.shape), unbroadcast(g * x, y.shape)))


def minimum(a, b):
    x, y = _data(a), _data(b)
    _broadcast_shape("minimum", x, y)
    pick = x <= y
    return _out(np.where(pick, x, y), (a, b),
                lambda g: (unbroadcast(np.where(pick, g, 0.0), x.shape),
                           unbroadcast(np.where(pick, 0.0, g), y.shape)))


def square(a):
    x = _data(a)
    return _out(x * x, (a,), lambda g: (2.0 * x * g,))


def tanh(a):
    y = np.tanh(_data(a))
    return _out(y, (a,), lambda g: (g * (1.0 - y * y),))


def leaky_relu(a, slope=0.2):
    x = _data(a)
    scale = np.where(x > 0, 1.0, slope)
    return _out(x * scale, (a,), lambda g: (g * scale,))


# --- reductions and shape ops --------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    x = _data(a)
    axes = _norm_axis(axis, x.ndim)
    y = x.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)
    return _out(y, (a,), vjp)


def mean(a, axis=None, keepdims=False):
    x = _data(a)
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[i] for i in axes])) if axes else 1
    return mul(sum(a, axis, keepdims), 1.0 / count) if count else sum(a, axis, keepdims)


def reshape(a, shape):
    x = _data(a)
    try:
        y = x.reshape(shape)
    except ValueError:
        raise shape_error("reshape", x.shape, shape) from None
    return _out(y, (a,), lambda g: (g.reshape(x.shape),))


def transpose(a, axes=None):
    x = _data(a)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return _out(np.transpose(x, axes), (a,), lambda g: (np.transpose(g, inv),))


def broadcast(a, shape):
    x = _data(a)
    try:
        y = np.broadcast_to(x, shape)
    except ValueError:
        raise shape_error("broadcast", x.shape, shape) from None
    return _out(np.ascontiguousarray(y), (a,), lambda g: (unbroadcast(g, x.shape),))


def slice(a, index):  # noqa: A001
    x = _data(a)
    y = np.array(x[index])

    advanced = _is_advanced(index)

    def vjp(g):
        full = np.zeros_like(x)
        if advanced:
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)
    return _out(y, (a,), vjp)


def _is_advanced(index):
    items = index if isinstance(index, tuple) else (index,)
    return builtins.any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors, axis=0):
    datas = [_data(t) for t in tensors]
    try:
        y = np.concatenate(datas, axis=axis)
    except ValueError:
        raise shape_error("concat", *[d.shape for d in datas]) from None
    bounds = np.cumsum([d.shape[axis] for d in datas])[:-1]
    return _out(y, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors, axis=0):
    datas = [_data(t) for t in tensors]
    try:
        y = np.stack(datas, axis=axis)
    except ValueError:
        raise shape_error("stack", *[d.shape for d in datas]) from None
    n = len(datas)
    return _out(y, tuple(tensors),
                lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


# --- linear algebra ----------------------------------------------------------------

def matmul(a, b):
    x, y = _data(a), _data(b)
    if x.ndim < 2 or y.ndim < 2 or x.shape[-1] != y.shape[-2]:
        raise shape_error("matmul", x.shape, y.shape)
    try:
        out = x @ y
    except ValueError:
        raise shape_error("matmul", x.shape, y.shape) from None

    def vjp(g):
        ga = gb = None
        if isinstance(a, Tensor) and a.tape is not None:
            ga = unbroadcast(g @ np.swapaxes(y, -1, -2), x.shape)
        if isinstance(b, Tensor) and b.tape is not None:
            gb = unbroadcast(np.swapaxes(x, -1, -2) @ g, y.shape)
        return ga, gb
    return _out(out, (a, b), vjp)


def normalize_l2(a, axis=-1, eps=1e-12):
    x = _data(a)
    norm = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))
    norm = np.maximum(norm, eps)
    y = x / norm

    def vjp(g):
        return ((g - y * np.sum(g * y, axis=axis, keepdims=True)) / norm,)
    return _out(y, (a,), vjp)


# --- temporal ops ---------------------------------------------------------------------

@lru_cache(maxsize=256)
def _pad_index(length, left, right, mode):
    """Source index of each padded position, ``-1`` for zero padding."""
    idx = np.arange(length)
    if mode == "reflect":
        if length == 1:
            return np.zeros(length + left + right, dtype=int)
        return np.pad(idx, (left, right), mode="reflect")
    if mode == "zero":
        return np.pad(idx, (left, right), mode="constant", constant_values=-1)
    if mode == "replicate":
        return np.pad(idx, (left, right), mode="edge")
    raise ValueError(f"unknown padding mode {mode!r}")


@lru_cache(maxsize=256)
def _pad_matrix(length, left, right, mode):
    idx = _pad_index(length, left, right, mode)
    m = np.zeros((len(idx), length))
    rows = np.nonzero(idx >= 0)[0]
    m[rows, idx[rows]] = 1.0
    return m


def _im2col(xp, k, stride, t_out):
    """``[N, C, T_pad]`` -> ``[N, T_out, C * K]``."""
    n, c, _ = xp.shape
    cols = sliding_window_view(xp, k, axis=2)[:, :, ::stride][:, :, :t_out]  # [N, C, T_out, K]
    return np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(n, t_out, c * k)


def _col2im(gcols, k, stride, tp):
    """Adjoint of :func:`_im2col` for ``gcols`` laid out ``[N, C, K, T_out]``."""
    n, c, _, t_out = gcols.shape
    gxp = np.zeros((n, c, tp))
    span = stride * (t_out - 1) + 1
    for j in range(k):
        gxp[:, :, j:j + span:stride] += gcols[:, :, j]
    return gxp


def conv1d(x, weight, bias=None, stride=1, padding="reflect", pad=None, groups=None):
    """Temporal convolution (cross-correlation).

    ``x`` is ``[C_in, T]`` or ``[B, C_in, T]``; ``weight`` is
    ``[C_out, C_in, K]``; ``bias`` is ``[C_out]``. ``pad`` defaults to
    ``K // 2`` on both sides; ``padding`` is ``"reflect"``, ``"zero"`` or
    ``"replicate"``.

    ``groups`` optionally lists ``(out_channels, in_channels)`` index arrays:
    each output channel then only sees the input channels of its block, and
    weight entries outside every block are treated as zero (their gradient
    is zero). Output channels in no block get only the bias.
    """
    xd, wd = _data(x), _data(weight)
    unbatched = xd.ndim == 2
    xb = xd[None] if unbatched else xd
    if xb.ndim != 3 or wd.ndim != 3 or wd.shape[1] != xb.shape[1]:
        raise shape_error("conv1d", xd.shape, wd.shape)
    n, c_in, t = xb.shape
    c_out, _, k = wd.shape
    p = k // 2 if pad is None else int(pad)
    idx = _pad_index(t, p, p, padding)
    tp = t + 2 * p
    if tp < k:
        raise shape_error("conv1d", xd.shape, wd.shape)
    if padding == "zero":
        xp = np.zeros((n, c_in, tp))
        keep = idx >= 0
        xp[:, :, keep] = xb[:, :, idx[keep]]
    else:
        xp = xb[:, :, idx]
    t_out = (tp - k) // stride + 1
    if groups is None:
        blocks = [(builtins.slice(None), builtins.slice(None))]
    else:
        blocks = [(np.asarray(o, dtype=int), np.asarray(i, dtype=int)) for o, i in groups]
    out = np.zeros((n, c_out, t_out))
    saved = []
    for oi, ii in blocks:
        wg = wd[oi][:, ii] if groups is not None else wd
        cols = _im2col(xp[:, ii] if groups is not None else xp, k, stride, t_out)
        w2 = wg.reshape(len(wg), -1)
        out[:, oi] = np.swapaxes(cols @ w2.T, 1, 2)
        saved.append((cols, wg))
    if bias is not None:
        bd = _data(bias)
        if bd.shape != (c_out,):
            raise shape_error("conv1d bias", bd.shape, (c_out,))
        out += bd[None, :, None]
    out = np.ascontiguousarray(out[0] if unbatched else out)

    def vjp(g):
        gb = g[None] if unbatched else g
        gw = gx = gbias = None
        need_w = isinstance(weight, Tensor) and weight.tape is not None
        need_x = isinstance(x, Tensor) and x.tape is not None
        if need_w:
            gw = np.zeros_like(wd)
        if need_x:
            gxp = np.zeros((n, c_in, tp))
        for (oi, ii), (cols, wg) in zip(blocks, saved):
            go = gb[:, oi]  # [N, C_o, T_out]
            co, ci = wg.shape[:2]
            if need_w:
                gwg = (np.swapaxes(go, 1, 2).reshape(n * t_out, co).T
                       @ cols.reshape(n * t_out, ci * k)).reshape(wg.shape)
                if groups is None:
                    gw = gwg
                else:
                    gw[np.ix_(oi, ii)] += gwg
            if need_x:
                wt = wg.transpose(1, 2, 0).reshape(ci * k, co)
                gcols = (wt @ go).reshape(n, ci, k, t_out)
                if groups is None:
                    gxp += _col2im(gcols, k, stride, tp)
                else:
                    gxp[:, ii] += _col2im(gcols, k, stride, tp)
        if need_x:
            gx = gxp @ _pad_matrix(t, p, p, padding)
            if unbatched:
                gx = gx[0]
        if bias is not None:
            gbias = gb.sum(axis=(0, 2))
        return gx, gw, gbias

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _out(out, inputs, vjp)


@lru_cache(maxsize=64)
def upsample_matrix(length, factor):
    """Linear interpolation matrix ``[T, T * factor]`` (half-pixel centers, edge clamped)."""
    out_len = length * factor
    src = (np.arange(out_len) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, length - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, length - 1)
    frac = src - lo
    m = np.zeros((length, out_len))
    cols = np.arange(out_len)
    np.add.at(m, (lo, cols), 1.0 - frac)
    np.add.at(m, (hi, cols), frac)
    return m


def upsample1d(a, factor=2):
    """Linear upsampling along the last (time) axis."""
    x = _data(a)
    m = upsample_matrix(x.shape[-1], int(factor))
    return _out(x @ m, (a,), lambda g: (g @ m.T,))


# --- quaternions -----------------------------------------------------------------------

def _qmul(a, b):
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


_CONJ = np.array([1.0, -1.0, -1.0, -1.0])


def quat_mul(a, b):
    """Hamilton product of ``(w, x, y, z)`` quaternions along the last axis."""
    x, y = _data(a), _data(b)
    if x.shape[-1] != 4 or y.shape[-1] != 4:
        raise shape_error("quat_mul", x.shape, y.shape)
    _broadcast_shape("quat_mul", x, y)
    return _out(_qmul(x, y), (a, b),
                lambda g: (unbroadcast(_qmul(g, y * _CONJ), x.shape),
                           unbroadcast(_qmul(x * _CONJ, g), y.shape)))


def quat_rotate(q, v):
    """Rotate 3-vectors ``v`` by quaternions ``q`` (``q v q*``, exact for unit ``q``)."""
    qd, vd = _data(q), _data(v)
    if qd.shape[-1] != 4 or vd.shape[-1] != 3:
        raise shape_error("quat_rotate", qd.shape, vd.shape)
    try:
        np.broadcast_shapes(qd.shape[:-1], vd.shape[:-1])
    except ValueError:
        raise shape_error("quat_rotate", qd.shape, vd.shape) from None
    w = qd[..., :1]
    u = qd[..., 1:]
    uxv = np.cross(u, vd)
    out = vd + 2.0 * w * uxv + 2.0 * np.cross(u, uxv)

    def vjp(g):
        gv = g - 2.0 * w * np.cross(u, g) + 2.0 * np.cross(u, np.cross(u, g))
        gw = 2.0 * np.sum(g * uxv, axis=-1, keepdims=True)
        gu = (2.0 * w * np.cross(vd, g)
              + 2.0 * np.sum(g * u, axis=-1, keepdims=True) * vd
              + 2.0 * np.sum(u * vd, axis=-1, keepdims=True) * g
              - 4.0 * np.sum(g * vd, axis=-1, keepdims=True) * u)
        gq = np.concatenate([gw, gu], axis=-1)
        return unbroadcast(gq, qd.shape), unbroadcast(gv, vd.shape)
    return _out(out, (q, v), vjp)
