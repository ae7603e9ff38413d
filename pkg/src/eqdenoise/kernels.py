"""Numeric kernels behind the autodiff primitives.

Every kernel exists twice: a loop version compiled with numba and a NumPy
version built from per-tap ``tensordot`` calls / reshapes.  The public
functions at the bottom dispatch on :data:`eqdenoise._jit.USE_NUMBA`; both
paths are deterministic and agree to floating-point accumulation error.

Array conventions: images are ``(B, C, H, W)`` float64, kernels are
``(C_out, C_in, p, q)``, cross-correlation semantics, zero padding.
"""

import numpy as np

from . import _jit
from ._jit import njit


def conv_output_size(n, p, stride, pad):
    return (n + 2 * pad - p) // stride + 1


# ----------------------------------------------------------------------------
# numba kernels
# ----------------------------------------------------------------------------


@njit
def _conv2d_fwd_nb(x, w, stride, pad):
    B, C, H, W = x.shape
    O, _, p, q = w.shape
    Ho = (H + 2 * pad - p) // stride + 1
    Wo = (W + 2 * pad - q) // stride + 1
    xp = np.zeros((C, H + 2 * pad, W + 2 * pad))
    out = np.empty((B, O, Ho, Wo))
    acc = np.empty(Wo)
    for b in range(B):
        xp[:, pad:pad + H, pad:pad + W] = x[b]
        for o in range(O):
            for y in range(Ho):
                acc[:] = 0.0
                for c in range(C):
                    for i in range(p):
                        row = xp[c, y * stride + i]
                        for j in range(q):
                            wv = w[o, c, i, j]
                            if stride == 1:
                                for xx in range(Wo):
                                    acc[xx] += wv * row[xx + j]
                            else:
                                for xx in range(Wo):
                                    acc[xx] += wv * row[xx * stride + j]
                out[b, o, y, :] = acc
    return out


@njit
def _conv2d_grad_input_nb(gy, w, H, W, stride, pad):
    B, O, Ho, Wo = gy.shape
    _, C, p, q = w.shape
    gxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad))
    for b in range(B):
        for c in range(C):
            for o in range(O):
                for y in range(Ho):
                    grow = gy[b, o, y]
                    for i in range(p):
                        trow = gxp[b, c, y * stride + i]
                        for j in range(q):
                            wv = w[o, c, i, j]
                            if stride == 1:
                                for xx in range(Wo):
                                    trow[xx + j] += wv * grow[xx]
                            else:
                                for xx in range(Wo):
                                    trow[xx * stride + j] += wv * grow[xx]
    return gxp[:, :, pad:pad + H, pad:pad + W].copy()


@njit
def _conv2d_grad_weight_nb(x, gy, p, q, stride, pad):
    B, C, H, W = x.shape
    _, O, Ho, Wo = gy.shape
    xp = np.zeros((C, H + 2 * pad, W + 2 * pad))
    # per-column partial sums keep the inner loop free of a serial reduction
    acc = np.zeros((O, C, p, q, Wo))
    for b in range(B):
        xp[:, pad:pad + H, pad:pad + W] = x[b]
        for y in range(Ho):
            for o in range(O):
                grow = gy[b, o, y]
                for c in range(C):
                    for i in range(p):
                        xrow = xp[c, y * stride + i]
                        for j in range(q):
                            arow = acc[o, c, i, j]
                            if stride == 1:
                                for xx in range(Wo):
                                    arow[xx] += grow[xx] * xrow[xx + j]
                            else:
                                for xx in range(Wo):
                                    arow[xx] += grow[xx] * xrow[xx * stride + j]
    gw = np.empty((O, C, p, q))
    for o in range(O):
        for c in range(C):
            for i in range(p):
                for j in range(q):
                    s = 0.0
                    for xx in range(Wo):
                        s += acc[o, c, i, j, xx]
                    gw[o, c, i, j] = s
    return gw


@njit
def _maxpool2_fwd_nb(x):
    N, H, W = x.shape
    Ho = H // 2
    Wo = W // 2
    out = np.empty((N, Ho, Wo))
    arg = np.empty((N, Ho, Wo), dtype=np.int8)
    for n in range(N):
        for y in range(Ho):
            for xx in range(Wo):
                best = x[n, 2 * y, 2 * xx]
                k = 0
                v = x[n, 2 * y, 2 * xx + 1]
                if v > best:
                    best = v
                    k = 1
                v = x[n, 2 * y + 1, 2 * xx]
                if v > best:
                    best = v
                    k = 2
                v = x[n, 2 * y + 1, 2 * xx + 1]
                if v > best:
                    best = v
                    k = 3
                out[n, y, xx] = best
                arg[n, y, xx] = k
    return out, arg


@njit
def _maxpool2_bwd_nb(gy, arg):
    N, Ho, Wo = gy.shape
    gx = np.zeros((N, 2 * Ho, 2 * Wo))
    for n in range(N):
        for y in range(Ho):
            for xx in range(Wo):
                k = arg[n, y, xx]
                gx[n, 2 * y + k // 2, 2 * xx + k % 2] = gy[n, y, xx]
    return gx


@njit
def _bilinear_sample_nb(img, rows, cols):
    N, H, W = img.shape
    Ho, Wo = rows.shape
    out = np.zeros((N, Ho, Wo))
    for y in range(Ho):
        for xx in range(Wo):
            r = rows[y, xx]
            c = cols[y, xx]
            r0 = int(np.floor(r))
            c0 = int(np.floor(c))
            fr = r - r0
            fc = c - c0
            for dr in range(2):
                rr = r0 + dr
                if rr < 0 or rr >= H:
                    continue
                wr = fr if dr == 1 else 1.0 - fr
                for dc in range(2):
                    cc = c0 + dc
                    if cc < 0 or cc >= W:
                        continue
                    wgt = wr * (fc if dc == 1 else 1.0 - fc)
                    if wgt == 0.0:
                        continue
                    for n in range(N):
                        out[n, y, xx] += wgt * img[n, rr, cc]
    return out


# ----------------------------------------------------------------------------
# NumPy fallbacks
# ----------------------------------------------------------------------------


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _conv2d_fwd_np(x, w, stride, pad):
    B, C, H, W = x.shape
    O, _, p, q = w.shape
    Ho = conv_output_size(H, p, stride, pad)
    Wo = conv_output_size(W, q, stride, pad)
    xp = _pad(x, pad)
    out = np.zeros((O, B, Ho, Wo))
    for i in range(p):
        for j in range(q):
            patch = xp[:, :, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride]
            out += np.tensordot(w[:, :, i, j], patch, axes=([1], [1]))
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def _conv2d_grad_input_np(gy, w, H, W, stride, pad):
    B, O, Ho, Wo = gy.shape
    _, C, p, q = w.shape
    gxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad))
    for i in range(p):
        for j in range(q):
            contrib = np.tensordot(w[:, :, i, j], gy, axes=([0], [1]))  # (C, B, Ho, Wo)
            gxp[:, :, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride] += (
                contrib.transpose(1, 0, 2, 3)
            )
    return np.ascontiguousarray(gxp[:, :, pad:pad + H, pad:pad + W])


def _conv2d_grad_weight_np(x, gy, p, q, stride, pad):
    B, C, H, W = x.shape
    _, O, Ho, Wo = gy.shape
    xp = _pad(x, pad)
    gw = np.empty((O, C, p, q))
    for i in range(p):
        for j in range(q):
            patch = xp[:, :, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride]
            gw[:, :, i, j] = np.tensordot(gy, patch, axes=([0, 2, 3], [0, 2, 3]))
    return gw


def _maxpool2_fwd_np(x):
    N, H, W = x.shape
    blocks = x.reshape(N, H // 2, 2, W // 2, 2).transpose(0, 1, 3, 2, 4).reshape(N, H // 2, W // 2, 4)
    arg = blocks.argmax(axis=-1).astype(np.int8)  # first maximum in row-major window order
    out = np.take_along_axis(blocks, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return out, arg


def _maxpool2_bwd_np(gy, arg):
    N, Ho, Wo = gy.shape
    blocks = np.zeros((N, Ho, Wo, 4))
    np.put_along_axis(blocks, arg[..., None].astype(np.intp), gy[..., None], axis=-1)
    return blocks.reshape(N, Ho, Wo, 2, 2).transpose(0, 1, 3, 2, 4).reshape(N, 2 * Ho, 2 * Wo)


def _bilinear_sample_np(img, rows, cols):
    N, H, W = img.shape
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    fr = rows - r0
    fc = cols - c0
    out = np.zeros((N,) + rows.shape)
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            rr = r0 + dr
            cc = c0 + dc
            ok = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W)
            vals = img[:, np.where(ok, rr, 0), np.where(ok, cc, 0)]
            out += np.where(ok, wr * wc, 0.0) * vals
    return out


# ----------------------------------------------------------------------------
# FFT path for large stride-1 kernels (shared by both backends)
# ----------------------------------------------------------------------------

# Direct convolution costs O(p q) per output; above this many taps the
# spectral product is cheaper (refined filters reach 15 x 15 and more).
FFT_MIN_TAPS = 49


def _use_fft(stride, p, q):
    return stride == 1 and p * q >= FFT_MIN_TAPS


def _channel_product(a, b):
    # a: (B, C, u, v), b: (C, O, u, v) -> (B, O, u, v) as one matmul per frequency
    return np.matmul(a.transpose(2, 3, 0, 1), b.transpose(2, 3, 0, 1)).transpose(2, 3, 0, 1)


def _conv2d_fwd_fft(x, w, pad):
    _, _, p, q = w.shape
    xp = _pad(x, pad)
    s = xp.shape[-2:]
    spec = np.conj(np.fft.rfft2(w, s=s)).transpose(1, 0, 2, 3)
    out = np.fft.irfft2(_channel_product(np.fft.rfft2(xp), spec), s=s)
    return np.ascontiguousarray(out[..., :s[0] - p + 1, :s[1] - q + 1])


def _conv2d_grad_input_fft(gy, w, H, W, pad):
    s = (H + 2 * pad, W + 2 * pad)
    gxp = np.fft.irfft2(_channel_product(np.fft.rfft2(gy, s=s), np.fft.rfft2(w, s=s)), s=s)
    return np.ascontiguousarray(gxp[..., pad:pad + H, pad:pad + W])


def _conv2d_grad_weight_fft(x, gy, p, q, pad):
    xp = _pad(x, pad)
    s = xp.shape[-2:]
    a = np.conj(np.fft.rfft2(gy, s=s)).transpose(1, 0, 2, 3)  # (O, B, u, v)
    gw = np.fft.irfft2(_channel_product(a, np.fft.rfft2(xp)), s=s)
    return np.ascontiguousarray(gw[..., :p, :q])


# ----------------------------------------------------------------------------
# dispatch
# ----------------------------------------------------------------------------


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_forward(x, w, stride=1, pad=0, use_numba=None):
    use_numba = _jit.USE_NUMBA if use_numba is None else use_numba
    if _use_fft(stride, *w.shape[-2:]):
        return _conv2d_fwd_fft(_f64(x), _f64(w), pad)
    if use_numba:
        return _conv2d_fwd_nb(_f64(x), _f64(w), stride, pad)
    return _conv2d_fwd_np(_f64(x), _f64(w), stride, pad)


def conv2d_grad_input(gy, w, in_hw, stride=1, pad=0, use_numba=None):
    use_numba = _jit.USE_NUMBA if use_numba is None else use_numba
    H, W = in_hw
    if _use_fft(stride, *w.shape[-2:]):
        return _conv2d_grad_input_fft(_f64(gy), _f64(w), H, W, pad)
    if use_numba:
        return _conv2d_grad_input_nb(_f64(gy), _f64(w), H, W, stride, pad)
    return _conv2d_grad_input_np(_f64(gy), _f64(w), H, W, stride, pad)


def conv2d_grad_weight(x, gy, kernel_hw, stride=1, pad=0, use_numba=None):
    use_numba = _jit.USE_NUMBA if use_numba is None else use_numba
    p, q = kernel_hw
    if _use_fft(stride, p, q):
        return _conv2d_grad_weight_fft(_f64(x), _f64(gy), p, q, pad)
    if use_numba:
        return _conv2d_grad_weight_nb(_f64(x), _f64(gy), p, q, stride, pad)
    return _conv2d_grad_weight_np(_f64(x), _f64(gy), p, q, stride, pad)


def maxpool2_forward(x, use_numba=None):
    """2x2 non-overlapping max pool over the last two axes.

    Returns the pooled array and the int8 window offset (0..3, row-major) of
    the first maximum in each window.
    """
    use_numba = _jit.USE_NUMBA if use_numba is None else use_numba
    lead = x.shape[:-2]
    flat = _f64(x).reshape((-1,) + x.shape[-2:])
    out, arg = (_maxpool2_fwd_nb if use_numba else _maxpool2_fwd_np)(flat)
    return out.reshape(lead + out.shape[-2:]), arg.reshape(lead + arg.shape[-2:])


def maxpool2_backward(gy, arg, use_numba=None):
    use_numba = _jit.USE_NUMBA if use_numba is None else use_numba
    lead = gy.shape[:-2]
    g = _f64(gy).reshape((-1,) + gy.shape[-2:])
    a = np.ascontiguousarray(arg).reshape((-1,) + arg.shape[-2:])
    gx = (_maxpool2_bwd_nb if use_numba else _maxpool2_bwd_np)(g, a)
    return gx.reshape(lead + gx.shape[-2:])


def bilinear_sample(img, rows, cols, use_numba=None):
    """Sample ``img[..., H, W]`` at fractional (row, col) index positions.

    Neighbours outside the array contribute zero (zero extension).
    """
    use_numba = _jit.USE_NUMBA if use_numba is None else use_numba
    lead = img.shape[:-2]
    flat = _f64(img).reshape((-1,) + img.shape[-2:])
    rows = _f64(rows)
    cols = _f64(cols)
    out = (_bilinear_sample_nb if use_numba else _bilinear_sample_np)(flat, rows, cols)
    return out.reshape(lead + rows.shape)
