"""Slow, obviously-correct reference implementations used only by the tests."""

import numpy as np


def conv2d_loops(x, w, stride=1, pad=0):
    """Cross-correlation by explicit loops over every output and tap."""
    B, C, H, W = x.shape
    O, _, p, q = w.shape
    xp = np.zeros((B, C, H + 2 * pad, W + 2 * pad))
    xp[:, :, pad:pad + H, pad:pad + W] = x
    Ho = (H + 2 * pad - p) // stride + 1
    Wo = (W + 2 * pad - q) // stride + 1
    out = np.zeros((B, O, Ho, Wo))
    for b in range(B):
        for o in range(O):
            for y in range(Ho):
                for xx in range(Wo):
                    s = 0.0
                    for c in range(C):
                        for i in range(p):
                            for j in range(q):
                                s += w[o, c, i, j] * xp[b, c, y * stride + i, xx * stride + j]
                    out[b, o, y, xx] = s
    return out


def numeric_grad(f, x, eps=1e-6):
    """Central differences of scalar ``f`` with respect to every entry of ``x`` (modified in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / den)


def maxpool_windows(x):
    """Max over each 2x2 window, by enumeration."""
    H, W = x.shape[-2:]
    out = np.empty(x.shape[:-2] + (H // 2, W // 2))
    for i in range(H // 2):
        for j in range(W // 2):
            out[..., i, j] = np.max(
                np.stack([x[..., 2 * i, 2 * j], x[..., 2 * i, 2 * j + 1],
                          x[..., 2 * i + 1, 2 * j], x[..., 2 * i + 1, 2 * j + 1]]), axis=0)
    return out


def bilinear_at(img, r, c):
    """Bilinear value at fractional index (r, c) with zero outside the array."""
    H, W = img.shape
    r0, c0 = int(np.floor(r)), int(np.floor(c))
    total = 0.0
    for rr, wr in ((r0, 1 - (r - r0)), (r0 + 1, r - r0)):
        for cc, wc in ((c0, 1 - (c - c0)), (c0 + 1, c - c0)):
            if 0 <= rr < H and 0 <= cc < W:
                total += wr * wc * img[rr, cc]
    return total


def rotate_point_index(n, i, j, theta):
    """Fractional source index of A_theta^{-1} x_ij on a centred n x n grid (unit mesh)."""
    off = (n - 1) / 2
    x1, x2 = i - off, j - off
    c, s = np.cos(theta), np.sin(theta)
    # A = [[c, s], [-s, c]], A^{-1} = A^T
    y1 = c * x1 - s * x2
    y2 = s * x1 + c * x2
    return y1 + off, y2 + off


def upsample_bilinear_1d(v):
    """Cell-centred x2 linear interpolation with edge clamping, one point at a time."""
    n = len(v)
    out = np.empty(2 * n)
    for k in range(2 * n):
        pos = (k + 0.5) / 2 - 0.5  # fine centre in coarse index units
        lo = int(np.floor(pos))
        t = pos - lo
        a = v[min(max(lo, 0), n - 1)]
        b = v[min(max(lo + 1, 0), n - 1)]
        out[k] = (1 - t) * a + t * b
    return out


def gaussian_ssim_reference(a, b, peak=255.0):
    """SSIM by direct summation over every fully covered 11x11 window."""
    x = np.arange(11) - 5
    g = np.exp(-x ** 2 / (2 * 1.5 ** 2))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    H, W = a.shape
    vals = []
    for i in range(H - 10):
        for j in range(W - 10):
            pa = a[i:i + 11, j:j + 11]
            pb = b[i:i + 11, j:j + 11]
            ma, mb = (w * pa).sum(), (w * pb).sum()
            va = (w * (pa - ma) ** 2).sum()
            vb = (w * (pb - mb) ** 2).sum()
            cov = (w * (pa - ma) * (pb - mb)).sum()
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))
