"""Cyclic rotation groups acting on images and orientation-indexed feature maps.

Layout: images are arrays/tensors whose last two axes are the ``n x n``
spatial grid; group feature maps additionally carry the orientation axis of
length ``t`` third from the end, i.e. ``(..., C, t, n, n)``.

Sign convention (single source of truth, pinned by the composition tests):
rotating a feature map by the group element ``theta_k`` rotates every
orientation slice spatially and then *rolls the orientation axis forward by
k*, so output slice ``m`` is the rotated input slice ``m - k``.  This is the
discrete form of ``e(x, A) -> e(A_theta^{-1} x, A_theta^{-1} A)``.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .steerable import basis_stack, cell_centers, rotation_matrix
from .tensor import Tensor, _lift, conv2d, einsum


@dataclass(frozen=True)
class RotationGroup:
    t: int

    def __post_init__(self):
        if int(self.t) < 1:
            raise ValueError(f"group order must be >= 1, got {self.t}")

    @property
    def elements(self):
        return 2.0 * np.pi * np.arange(self.t) / self.t

    def compose(self, a, b):
        return (a + b) % self.t

    def index_of(self, theta, tol=1e-9):
        """Index ``k`` with ``theta == 2 pi k / t`` (mod 2 pi); ``ValueError`` otherwise."""
        k = theta * self.t / (2.0 * np.pi)
        kr = round(k)
        if abs(k - kr) > tol:
            raise ValueError(f"angle {theta!r} is not an element of the order-{self.t} rotation group")
        return int(kr) % self.t

    def contains(self, theta, tol=1e-9):
        try:
            self.index_of(theta, tol)
        except ValueError:
            return False
        return True


@dataclass(frozen=True)
class ImageGrid:
    """Image samples at cell centres; ``data`` is ``(..., n, n)``."""

    data: np.ndarray
    h: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=np.float64))
        if self.data.ndim < 2 or self.data.shape[-1] != self.data.shape[-2]:
            raise ValueError(f"image grid must be square in its last two axes, got {self.data.shape}")
        if self.n < 2 or self.h <= 0:
            raise ValueError(f"need n >= 2 and h > 0, got n={self.n}, h={self.h}")

    @property
    def n(self):
        return self.data.shape[-1]


@dataclass(frozen=True)
class GroupFeatureMap:
    """Samples of ``e(x_ij, theta_k)``; ``data`` is ``(..., t, n, n)``."""

    data: np.ndarray
    group: RotationGroup
    h: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=np.float64))
        if self.data.ndim < 3 or self.data.shape[-3] != self.group.t:
            raise ValueError(
                f"orientation axis length {self.data.shape[-3] if self.data.ndim >= 3 else None} "
                f"does not match group order {self.group.t}"
            )

    @property
    def n(self):
        return self.data.shape[-1]


def grid_points(n, h=1.0):
    """Cell centres ``x_ij`` as an ``(n, n, 2)`` array."""
    c = cell_centers(n, h)
    return np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)


def quarter_turns(theta, tol=1e-12):
    """Number of quarter turns in ``theta`` if it is a multiple of pi/2, else ``None``."""
    q = theta / (0.5 * np.pi)
    if abs(q - round(q)) < tol:
        return int(round(q)) % 4
    return None


def source_indices(n, theta):
    """Fractional (row, col) indices of ``A_theta^{-1} x_ij`` on an ``n x n`` grid."""
    pts = grid_points(n) @ rotation_matrix(theta)  # rows are A^{-1} x
    off = 0.5 * (n - 1)
    return pts[..., 0] + off, pts[..., 1] + off


def _rotate_array(a, theta):
    q = quarter_turns(theta)
    if q is not None:
        # A^{-1} at +pi/2 maps (x1, x2) -> (-x2, x1), i.e. a clockwise array turn
        return np.ascontiguousarray(np.rot90(a, k=-q, axes=(-2, -1)))
    rows, cols = source_indices(a.shape[-1], theta)
    return kernels.bilinear_sample(a, rows, cols)


def rotate_image(image, theta):
    """Discrete rotation: output at ``x_ij`` is the input's value at ``A_theta^{-1} x_ij``.

    Quarter turns are exact index permutations; other angles use bilinear
    interpolation with zero extension outside the grid.
    """
    if isinstance(image, ImageGrid):
        return replace(image, data=_rotate_array(image.data, theta))
    return _rotate_array(np.asarray(image, dtype=np.float64), theta)


def rotate_feature(fmap, theta, group=None):
    """Rotate a group feature map by a group element (spatial rotation + orientation roll)."""
    if isinstance(fmap, GroupFeatureMap):
        k = fmap.group.index_of(theta)
        data = np.roll(_rotate_array(fmap.data, theta), k, axis=-3)
        return replace(fmap, data=data)
    if group is None:
        raise ValueError("rotate_feature on a raw array needs the group")
    a = np.asarray(fmap, dtype=np.float64)
    if a.shape[-3] != group.t:
        raise ValueError(f"orientation axis length {a.shape[-3]} does not match group order {group.t}")
    k = group.index_of(theta)
    return np.roll(_rotate_array(a, theta), k, axis=-3)


def _data(x):
    if isinstance(x, (ImageGrid, GroupFeatureMap)):
        return Tensor(x.data)
    return _lift(x)


def lift_kernels(coeffs, group, p, mesh=1.0, h=1.0):
    """Kernels ``(C_out * t, C_in, taps, taps)`` for the lifting layer.

    ``coeffs`` has shape ``(C_out, C_in, n_basis)``; output channel ``o * t + k``
    holds the filters rotated by ``theta_k``.
    """
    coeffs = _lift(coeffs)
    basis = basis_stack(p, group.elements, mesh, h)
    w = einsum("ocb,kbxy->okcxy", coeffs, basis)
    c_out, c_in = coeffs.shape[:2]
    return w.reshape(c_out * group.t, c_in, basis.shape[-2], basis.shape[-1])


def _orientation_permutation(t):
    # P[k, q, j] = 1 iff the filter slice used for input orientation q at output k is j = (q - k) mod t
    k = np.arange(t)[:, None]
    q = np.arange(t)[None, :]
    perm = np.zeros((t, t, t))
    perm[k, q, (q - k) % t] = 1.0
    return perm


def group_kernels(coeffs, group, p, mesh=1.0, h=1.0):
    """Kernels ``(C_out * t, C_in * t, taps, taps)`` for a group convolution.

    ``coeffs`` has shape ``(C_out, C_in, t, n_basis)``.  Block ``(k, q)`` is
    filter slice ``(q - k) mod t`` sampled at angle ``theta_k``.
    """
    coeffs = _lift(coeffs)
    t = group.t
    basis = basis_stack(p, group.elements, mesh, h)
    w = einsum("ocjb,kqj,kbxy->okcqxy", coeffs, _orientation_permutation(t), basis)
    c_out, c_in = coeffs.shape[:2]
    return w.reshape(c_out * t, c_in * t, basis.shape[-2], basis.shape[-1])


def lift_conv(image, coeffs, group, p, mesh=1.0, h=1.0, bias=None, weight=1.0):
    """Lifting convolution: slice ``k`` is the image correlated with filters rotated by ``theta_k``.

    ``image`` is ``(C_in, n, n)`` / ``(B, C_in, n, n)`` (array, Tensor or
    :class:`ImageGrid`); the result is ``(..., C_out, t, n, n)``.  ``weight``
    scales the sampled kernels (quadrature weight when ``mesh < h``).
    """
    x = _data(image)
    w = lift_kernels(coeffs, group, p, mesh, h)
    if weight != 1.0:
        w = w * weight
    taps = w.shape[-1]
    squeeze = x.ndim == 3
    if squeeze:
        x = x.reshape((1,) + x.shape)
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"image has {x.shape[1]} channels, filters expect C_in={w.shape[1]}")
    out = conv2d(x, w, padding=(taps - 1) // 2)
    b, _, n1, n2 = out.shape
    out = out.reshape(b, -1, group.t, n1, n2)
    if bias is not None:
        out = out + _lift(bias).reshape(1, -1, 1, 1, 1)
    if squeeze:
        out = out.reshape(out.shape[1:])
    if isinstance(image, ImageGrid):
        return GroupFeatureMap(out.data, group, image.h)
    return out


def group_conv(fmap, coeffs, group, p, mesh=1.0, h=1.0, bias=None, weight=1.0):
    """Group convolution over position and orientation.

    ``out[:, k] = sum_q conv2d(F[:, q], sample(filter[..., (q - k) mod t], theta_k))``.
    ``fmap`` is ``(C_in, t, n, n)`` / ``(B, C_in, t, n, n)``.
    """
    x = _data(fmap)
    if isinstance(fmap, GroupFeatureMap) and fmap.group.t != group.t:
        raise ValueError(f"feature map group order {fmap.group.t} does not match {group.t}")
    squeeze = x.ndim == 4
    if squeeze:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 5 or x.shape[2] != group.t:
        raise ValueError(f"orientation axis of input {x.shape} does not match group order {group.t}")
    w = group_kernels(coeffs, group, p, mesh, h)
    if weight != 1.0:
        w = w * weight
    taps = w.shape[-1]
    b, c_in, t, n1, n2 = x.shape
    if c_in != coeffs.shape[1]:
        raise ValueError(f"input has {c_in} fields, filters expect C_in={coeffs.shape[1]}")
    out = conv2d(x.reshape(b, c_in * t, n1, n2), w, padding=(taps - 1) // 2)
    out = out.reshape(b, -1, t, n1, n2)
    if bias is not None:
        out = out + _lift(bias).reshape(1, -1, 1, 1, 1)
    if squeeze:
        out = out.reshape(out.shape[1:])
    if isinstance(fmap, GroupFeatureMap):
        return GroupFeatureMap(out.data, group, fmap.h)
    return out


def project(fmap):
    """Per-pixel mean over the orientation axis."""
    if isinstance(fmap, GroupFeatureMap):
        return ImageGrid(fmap.data.mean(axis=-3), fmap.h)
    return _lift(fmap).mean(axis=-3)
