"""Noise synthesis, self-supervised training pairs and image-quality metrics.

Pixel values live on the [0, 255] scale throughout; noise levels use the same
units, so ``sigma=25`` means a standard deviation of 25 grey levels.  Nothing
here clips; clip only for display or export.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .tensor import Tensor, _lift

NOISE_KINDS = ("gaussian", "poisson", "poisson_gaussian", "salt_pepper", "speckle")


@dataclass(frozen=True)
class NoiseModel:
    """Corruption process.

    ``sigma_range`` (low, high) switches Gaussian noise to the blind setting:
    every example draws its own ``sigma ~ U[low, high]``.  ``scale`` is the
    photon count at peak white for the Poisson kinds.
    """

    kind: str = "gaussian"
    sigma: float = 25.0
    sigma_range: tuple = None
    scale: float = 30.0
    density: float = 0.1
    variance: float = 0.04

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; choose from {', '.join(NOISE_KINDS)}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.sigma_range is not None:
            lo, hi = self.sigma_range
            if not 0 <= lo <= hi:
                raise ValueError(f"sigma_range must satisfy 0 <= low <= high, got {self.sigma_range}")
        if self.scale <= 0:
            raise ValueError(f"poisson scale must be > 0, got {self.scale}")
        if not 0.0 <= self.density <= 1.0:
            raise ValueError(f"density must lie in [0, 1], got {self.density}")
        if self.variance < 0:
            raise ValueError(f"speckle variance must be >= 0, got {self.variance}")

    @property
    def blind(self):
        return self.sigma_range is not None

    def resolve(self, rng):
        """Fix the per-example sigma (no-op unless blind)."""
        if not self.blind:
            return self
        return replace(self, sigma=float(rng.uniform(*self.sigma_range)), sigma_range=None)


def corrupt(image, model, rng):
    """One noisy realisation of ``image`` (float, [0, 255] scale)."""
    image = np.asarray(image, dtype=np.float64)
    model = model.resolve(rng)
    kind = model.kind
    if kind == "gaussian":
        return image + model.sigma * rng.standard_normal(image.shape)
    if kind in ("poisson", "poisson_gaussian"):
        photons = rng.poisson(np.clip(image, 0.0, None) * (model.scale / 255.0))
        out = photons * (255.0 / model.scale)
        if kind == "poisson_gaussian":
            out = out + model.sigma * rng.standard_normal(image.shape)
        return out
    if kind == "salt_pepper":
        out = image.copy()
        hit = rng.random(image.shape) < model.density
        salt = rng.random(image.shape) < 0.5
        out[hit] = np.where(salt[hit], 255.0, 0.0)
        return out
    # speckle
    return image * (1.0 + math.sqrt(model.variance) * rng.standard_normal(image.shape))


def n2n_pair(image, model, rng):
    """Two independent corruptions of one clean image (same sigma when blind)."""
    model = model.resolve(rng)
    return corrupt(image, model, rng), corrupt(image, model, rng)


# ----------------------------------------------------------------------------
# Noise2Void
# ----------------------------------------------------------------------------


def stratified_positions(shape, count, rng):
    """``count`` distinct pixel positions, at most one per stratum of a regular box grid."""
    H, W = shape
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if count > H * W:
        raise ValueError(f"cannot mask {count} pixels in a {H}x{W} image")
    box = max(1, int(math.sqrt(H * W / count)))
    rows = np.arange(0, H, box)
    cols = np.arange(0, W, box)
    r0, c0 = np.meshgrid(rows, cols, indexing="ij")
    r0, c0 = r0.ravel(), c0.ravel()
    r = r0 + (rng.random(r0.size) * np.minimum(box, H - r0)).astype(np.intp)
    c = c0 + (rng.random(c0.size) * np.minimum(box, W - c0)).astype(np.intp)
    if r.size >= count:
        pick = rng.choice(r.size, size=count, replace=False)
        pos = np.stack([r[pick], c[pick]], axis=1)
    else:
        taken = np.zeros((H, W), dtype=bool)
        taken[r, c] = True
        rest = np.flatnonzero(~taken.ravel())
        extra = rng.choice(rest, size=count - r.size, replace=False)
        pos = np.concatenate([np.stack([r, c], axis=1), np.stack(np.divmod(extra, W), axis=1)])
    return pos[np.lexsort((pos[:, 1], pos[:, 0]))]


def n2v_mask_batch(noisy, count=64, window=2, rng=None):
    """Blind-spot masking.

    Returns ``(masked, targets, positions)``: ``masked`` is a copy of ``noisy``
    in which each of ``count`` stratified positions holds the value of a
    uniformly chosen *other* pixel from its ``(2 window + 1)^2`` neighbourhood
    (restricted to the image); ``targets`` are the original values there,
    shape ``(..., count)``; ``positions`` is ``(count, 2)``.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    rng = np.random.default_rng() if rng is None else rng
    noisy = np.asarray(noisy, dtype=np.float64)
    H, W = noisy.shape[-2:]
    pos = stratified_positions((H, W), count, rng)
    masked = noisy.copy()
    span = 2 * window + 1
    for r, c in pos:
        while True:
            dr, dc = divmod(int(rng.integers(span * span)), span)
            dr -= window
            dc -= window
            rr, cc = r + dr, c + dc
            if (dr or dc) and 0 <= rr < H and 0 <= cc < W:
                break
        masked[..., r, c] = noisy[..., rr, cc]
    targets = noisy[..., pos[:, 0], pos[:, 1]]
    return masked, targets, pos


def masked_mse(pred, targets, positions):
    """Mean squared error restricted to the masked positions.

    Implemented as a dense product with a 0/1 mask, so the gradient at every
    unmasked pixel is exactly zero.
    """
    pred = _lift(pred)
    H, W = pred.shape[-2:]
    mask = np.zeros((H, W))
    mask[positions[:, 0], positions[:, 1]] = 1.0
    full = np.zeros(pred.shape)
    full[..., positions[:, 0], positions[:, 1]] = targets
    d = (pred - Tensor(full)) * Tensor(np.broadcast_to(mask, pred.shape).copy())
    return (d * d).sum() * (1.0 / (targets.size))


# ----------------------------------------------------------------------------
# Recorrupted-to-Recorrupted
# ----------------------------------------------------------------------------


def _check_r2r(sigma, alpha):
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")


def r2r_pair(noisy, sigma, alpha=0.5, rng=None, z=None):
    """``(noisy + alpha sigma z, noisy - sigma z / alpha)`` with ``z ~ N(0, 1)``.

    The two added noises have covariance ``alpha sigma^2 (-1 / alpha) + sigma^2 = 0``
    with respect to the original noise, so input and target noise are uncorrelated.
    """
    _check_r2r(sigma, alpha)
    noisy = np.asarray(noisy, dtype=np.float64)
    if z is None:
        rng = np.random.default_rng() if rng is None else rng
        z = rng.standard_normal(noisy.shape)
    return noisy + alpha * sigma * z, noisy - sigma * z / alpha


def r2r_inference(denoise, noisy, sigma, alpha=0.5, samples=8, rng=None):
    """Average of ``denoise(noisy + alpha sigma z_k)`` over ``samples`` draws."""
    _check_r2r(sigma, alpha)
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    rng = np.random.default_rng() if rng is None else rng
    noisy = np.asarray(noisy, dtype=np.float64)
    acc = np.zeros_like(noisy)
    for _ in range(samples):
        acc += denoise(noisy + alpha * sigma * rng.standard_normal(noisy.shape))
    return acc / samples


# ----------------------------------------------------------------------------
# metrics
# ----------------------------------------------------------------------------


def psnr(a, b, peak=255.0):
    """``10 log10(peak^2 / MSE)``; ``inf`` for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size=11, std=1.5):
    x = np.arange(size) - (size - 1) / 2
    w = np.exp(-0.5 * (x / std) ** 2)
    return w / w.sum()


def _filter_valid(img, w):
    k = w.size
    v = np.lib.stride_tricks.sliding_window_view(img, k, axis=-2) @ w
    return np.lib.stride_tricks.sliding_window_view(v, k, axis=-1) @ w


def ssim(a, b, peak=255.0, window=11, std=1.5):
    """Mean SSIM over all fully covered 11x11 Gaussian windows.

    Leading axes (channels) are averaged.  Uses population (not sample)
    moments and stabilisers ``(0.01 peak)^2``, ``(0.03 peak)^2``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape[-2:]) < window:
        raise ValueError(f"image {a.shape[-2:]} is smaller than the {window}x{window} SSIM window")
    w = _gaussian_window(window, std)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a * mu_a
    var_b = _filter_valid(b * b, w) - mu_b * mu_b
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(s.mean())
