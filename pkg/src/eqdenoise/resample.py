"""x2 down/upsampling on the last two (spatial) axes.

Each operator acts independently on every leading index (batch, channel,
orientation) and accepts arrays, :class:`~eqdenoise.tensor.Tensor` values or
:class:`~eqdenoise.groups.GroupFeatureMap` / ``ImageGrid`` wrappers; wrappers
come back with their mesh size doubled (down) or halved (up).
"""

from dataclasses import replace
from functools import lru_cache

import numpy as np

from . import kernels
from .groups import GroupFeatureMap, ImageGrid
from .tensor import Function, _lift

# Window offset (row, col) picked by stride downsampling inside each 2x2
# window {(i, j), (i+1, j), (i, j+1), (i+1, j+1)}.  The reference definition
# takes F_{i, j+1}, which is not quarter-turn symmetric.
STRIDE_REPRESENTATIVE = (0, 1)


def _check_even(shape):
    if shape[-1] % 2 or shape[-2] % 2:
        raise ValueError(f"2x2 window partition needs even spatial size, got {shape[-2:]}")


class MaxPool2(Function):
    def forward(self, x):
        _check_even(x.shape)
        out, self.arg = kernels.maxpool2_forward(x)
        return out

    def backward(self, g):
        return (kernels.maxpool2_backward(g, self.arg),)


class StrideDown(Function):
    def forward(self, x):
        _check_even(x.shape)
        self.shape = x.shape
        r, c = STRIDE_REPRESENTATIVE
        return np.ascontiguousarray(x[..., r::2, c::2])

    def backward(self, g):
        gx = np.zeros(self.shape)
        r, c = STRIDE_REPRESENTATIVE
        gx[..., r::2, c::2] = g
        return (gx,)


class UpsampleNearest(Function):
    def forward(self, x):
        return np.repeat(np.repeat(x, 2, axis=-2), 2, axis=-1)

    def backward(self, g):
        s = g.shape
        return (g.reshape(s[:-2] + (s[-2] // 2, 2, s[-1] // 2, 2)).sum(axis=(-3, -1)),)


@lru_cache(maxsize=32)
def bilinear_matrix(n):
    """``(2n, n)`` matrix of 1-D cell-centred x2 interpolation weights.

    Fine centre ``2a`` sits at coarse coordinate ``a - 1/4`` and ``2a + 1`` at
    ``a + 1/4``; indices beyond the edge are clamped.
    """
    u = np.zeros((2 * n, n))
    for a in range(n):
        u[2 * a, a] += 0.75
        u[2 * a, max(a - 1, 0)] += 0.25
        u[2 * a + 1, a] += 0.75
        u[2 * a + 1, min(a + 1, n - 1)] += 0.25
    u.setflags(write=False)
    return u


class UpsampleBilinear(Function):
    def forward(self, x):
        self.ur = bilinear_matrix(x.shape[-2])
        self.uc = bilinear_matrix(x.shape[-1])
        return np.matmul(np.matmul(self.ur, x), self.uc.T)

    def backward(self, g):
        return (np.matmul(np.matmul(self.ur.T, g), self.uc),)


def _apply(fn, x, mesh_factor):
    if isinstance(x, (GroupFeatureMap, ImageGrid)):
        out = fn.apply(_lift(x.data)).data
        return replace(x, data=out, h=x.h * mesh_factor)
    return fn.apply(_lift(x))


def maxpool_down(x):
    """Max over non-overlapping 2x2 windows; mesh size doubles."""
    return _apply(MaxPool2, x, 2.0)


def stride_down(x):
    """Keep the fixed representative of every 2x2 window; mesh size doubles."""
    return _apply(StrideDown, x, 2.0)


def upsample_nearest(x):
    """Replicate each cell into a 2x2 block; mesh size halves."""
    return _apply(UpsampleNearest, x, 0.5)


def upsample_bilinear(x):
    """Cell-centred bilinear x2 upsampling with edge clamping; mesh size halves."""
    return _apply(UpsampleBilinear, x, 0.5)


DOWNSAMPLERS = {"maxpool": maxpool_down, "stride": stride_down}
UPSAMPLERS = {"nearest": upsample_nearest, "bilinear": upsample_bilinear}
