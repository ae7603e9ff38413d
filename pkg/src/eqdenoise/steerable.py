"""Fourier-series filters that can be sampled on arbitrarily rotated grids.

A filter is a continuous function on the plane,

    phi(x) = mask(|x|) * sum_{(k, l)} c_kl * b_kl(x),

where ``b_kl`` is ``cos(w (k x1 + l x2))`` for indices in the upper half
plane and ``sin(w (k x1 + l x2))`` for the lower half, ``w = 2 pi / (p h)``,
and ``mask`` is 1 up to radius ``p h / 2`` and rolls off with a raised
cosine to exactly 0 at ``(p + 1) h / 2``.  Because ``phi`` is defined in the
continuum, a rotated copy is obtained by evaluating it at rotated grid
points; there is no interpolation.

The trainable parameters are the coefficients ``c_kl``.  Sampling is linear
in them, so layers build their discrete kernels as an ``einsum`` between the
coefficient tensor and a cached basis stack (see :func:`basis_stack`).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class BasisIndexSet:
    """Frequency pairs kept for filter size ``p`` (radius <= (p - 1) / 2)."""

    p: int
    pairs: tuple

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __contains__(self, kl):
        return tuple(kl) in self.pairs


@lru_cache(maxsize=None)
def aliasing_mask(p):
    """Retain ``(k, l)`` with ``sqrt(k^2 + l^2) <= (p - 1) / 2``.

    Higher radial frequencies alias once the basis is sampled on a rotated
    ``p x p`` grid.
    """
    if p < 3 or p % 2 == 0:
        raise ValueError(f"filter size must be odd and >= 3, got {p}")
    r = (p - 1) // 2
    pairs = tuple(
        (k, l) for k in range(-r, r + 1) for l in range(-r, r + 1) if k * k + l * l <= r * r
    )
    return BasisIndexSet(p, pairs)


def radial_mask(r, p, h=1.0):
    """Raised-cosine window: 1 for ``r <= p h / 2``, 0 for ``r >= (p + 1) h / 2``."""
    r = np.asarray(r, dtype=np.float64)
    inner = 0.5 * p * h
    outer = 0.5 * (p + 1) * h
    t = np.clip((r - inner) / (outer - inner), 0.0, 1.0)
    out = 0.5 * (1.0 + np.cos(np.pi * t))
    return np.where(r >= outer, 0.0, out)


def _is_upper(k, l):
    return k > 0 or (k == 0 and l >= 0)


def basis_eval(k, l, x, p, h=1.0):
    """Value of basis function ``(k, l)`` at point(s) ``x`` (last axis of size 2)."""
    if (k, l) not in aliasing_mask(p):
        raise ValueError(f"basis index {(k, l)} is not retained for p={p}")
    x = np.asarray(x, dtype=np.float64)
    w = 2.0 * np.pi / (p * h)
    phase = w * (k * x[..., 0] + l * x[..., 1])
    wave = np.cos(phase) if _is_upper(k, l) else np.sin(phase)
    return radial_mask(np.hypot(x[..., 0], x[..., 1]), p, h) * wave


def rotation_matrix(theta):
    """``[[cos, sin], [-sin, cos]]``; quarter turns are snapped to exact integers."""
    c, s = np.cos(theta), np.sin(theta)
    q = theta / (0.5 * np.pi)
    if abs(q - round(q)) < 1e-12:
        c, s = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(round(q)) % 4]
    return np.array([[c, s], [-s, c]])


def cell_centers(n, h=1.0):
    """1-D cell-centre coordinates ``(i - (n + 1) / 2) h`` for ``i = 1..n``."""
    return (np.arange(1, n + 1) - 0.5 * (n + 1)) * h


def taps_for_mesh(p, h, mesh):
    """Number of taps needed to cover the support of a ``(p, h)`` filter at ``mesh``."""
    taps = int(round((p + 1) * h / mesh)) - 1
    if taps < 1 or taps % 2 == 0:
        raise ValueError(f"mesh {mesh} does not tile the support of a p={p}, h={h} filter with odd taps")
    return taps


def rotated_grid(taps, mesh, theta):
    """Points ``A_theta^{-1} x_ij`` of a ``taps x taps`` cell-centred grid, shape (taps, taps, 2)."""
    c = cell_centers(taps, mesh)
    x = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)
    a_inv = rotation_matrix(theta).T
    return x @ a_inv.T


@lru_cache(maxsize=64)
def _basis_stack_cached(p, thetas, mesh, h):
    taps = taps_for_mesh(p, h, mesh)
    idx = aliasing_mask(p)
    out = np.empty((len(thetas), len(idx), taps, taps))
    for a, theta in enumerate(thetas):
        pts = rotated_grid(taps, mesh, theta)
        for b, (k, l) in enumerate(idx):
            out[a, b] = basis_eval(k, l, pts, p, h)
    out.setflags(write=False)
    return out


def basis_stack(p, thetas, mesh=None, h=1.0):
    """Sampled basis, shape ``(len(thetas), n_basis, taps, taps)``.

    ``mesh`` defaults to ``h`` (the filter's native grid, ``taps == p``);
    a finer mesh samples the same continuous function on more taps.
    """
    mesh = h if mesh is None else mesh
    return _basis_stack_cached(int(p), tuple(float(t) for t in thetas), float(mesh), float(h))


@dataclass(frozen=True)
class SteerableFilter:
    coeffs: np.ndarray
    p: int
    h: float = 1.0

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        n = len(aliasing_mask(self.p))
        if coeffs.shape != (n,):
            raise ValueError(f"p={self.p} filter needs {n} coefficients, got shape {coeffs.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def support_radius(self):
        return 0.5 * (self.p + 1) * self.h

    @property
    def index_set(self):
        return aliasing_mask(self.p)

    def __call__(self, x):
        """Evaluate the continuous filter at point(s) ``x``."""
        x = np.asarray(x, dtype=np.float64)
        return sum(c * basis_eval(k, l, x, self.p, self.h) for c, (k, l) in zip(self.coeffs, self.index_set))


def sample_filter(f, theta, mesh=None):
    """Discrete kernel ``phi(A_theta^{-1} x_ij)`` on the cell-centred grid."""
    basis = basis_stack(f.p, (theta,), mesh, f.h)[0]
    return np.tensordot(f.coeffs, basis, axes=(0, 0))


def coefficient_std(p, fan_in, gain=2.0):
    """Coefficient std matching He initialisation on constant inputs.

    ``fan_in`` counts input channels (not taps).  A He-initialised ``p x p``
    kernel has tap sum of variance ``gain / fan_in``; sampled steerable taps
    are strongly correlated, so matching the per-tap variance instead would
    amplify smooth signals by up to ``p^2`` per layer.  Here the tap sum
    ``sum_b c_b sum_ij B_b(x_ij)`` gets variance ``gain / fan_in``.
    """
    basis = basis_stack(p, (0.0,))[0]
    dc = np.sum(basis.sum(axis=(-2, -1)) ** 2)
    return float(np.sqrt(gain / fan_in / dc))
