"""Empirical equivariance-error measurements and convergence-rate fits.

Test inputs are band-limited random fields known in closed form, so a
rotated input can be sampled exactly at any resolution and mesh refinement
never changes the underlying function (fixed physical domain of side ``L``,
``h = L / n``).
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .groups import (
    GroupFeatureMap, ImageGrid, RotationGroup, grid_points, quarter_turns, rotate_feature,
    rotate_image, source_indices,
)
from .steerable import rotation_matrix
from .tensor import Tensor

DOWN_BOUND = 2.0 * math.sqrt(2.0)
UP_BOUND = 2.0 * (math.sqrt(2.0) + 1.0)


@dataclass(frozen=True)
class SmoothTestFunction:
    """``e(x, theta) = w(|x|) * sum_m a_m cos(omega_m . x + phi_m + beta_m cos(theta - gamma_m))``.

    ``w`` is an optional compactly supported bump ``cos^2(pi r / (2 R))`` for
    ``r < R``.  Rotating the field only rotates the frequencies and shifts
    ``gamma``, so rotated copies are again closed-form.
    """

    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray
    coupling: np.ndarray
    coupling_phase: np.ndarray
    window_radius: float = None

    @classmethod
    def random(cls, rng, modes=6, omega_min=2 * np.pi, omega_max=6 * np.pi, orientation=True,
               window_radius=None):
        radius = rng.uniform(omega_min, omega_max, modes)
        angle = rng.uniform(0.0, 2.0 * np.pi, modes)
        return cls(
            amplitudes=rng.standard_normal(modes) / math.sqrt(modes),
            frequencies=np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1),
            phases=rng.uniform(0.0, 2.0 * np.pi, modes),
            coupling=rng.uniform(0.5, 1.5, modes) if orientation else np.zeros(modes),
            coupling_phase=rng.uniform(0.0, 2.0 * np.pi, modes),
            window_radius=window_radius,
        )

    @classmethod
    def zero(cls, modes=1):
        z = np.zeros(modes)
        return cls(z, np.zeros((modes, 2)), z, z, z)

    @property
    def sup_bound(self):
        return float(np.sum(np.abs(self.amplitudes)))

    @property
    def gradient_bound(self):
        """``G >= |grad_x e|`` everywhere: sum of |a| |omega| (+ window product-rule term)."""
        g = float(np.sum(np.abs(self.amplitudes) * np.linalg.norm(self.frequencies, axis=-1)))
        if self.window_radius is not None:
            # |d/dr cos^2(pi r / 2R)| <= pi / (2R)
            g += self.sup_bound * math.pi / (2.0 * self.window_radius)
        return g

    def __call__(self, x, theta=0.0):
        x = np.asarray(x, dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)[..., None]
        phase = x @ self.frequencies.T + self.phases
        phase = phase + self.coupling * np.cos(theta - self.coupling_phase)
        val = np.cos(phase) @ self.amplitudes
        if self.window_radius is not None:
            r = np.hypot(x[..., 0], x[..., 1])
            w = np.where(r < self.window_radius, np.cos(0.5 * np.pi * r / self.window_radius) ** 2, 0.0)
            val = val * w
        return val

    def rotated(self, theta):
        """Closed form of ``e(A_theta^{-1} x, theta' - theta)``."""
        a = rotation_matrix(theta)
        return SmoothTestFunction(
            self.amplitudes, self.frequencies @ a.T, self.phases, self.coupling,
            self.coupling_phase + theta, self.window_radius,
        )


def sample_field(f, n, t, L=1.0):
    """Group feature map ``F[k, i, j] = e(x_ij, theta_k)`` with ``h = L / n``."""
    if n < 8:
        raise ValueError(f"resolution must be >= 8, got {n}")
    group = RotationGroup(t)
    h = L / n
    pts = grid_points(n, h)
    data = np.stack([f(pts, th) for th in group.elements])
    return GroupFeatureMap(data, group, h)


def sample_image(f, n, L=1.0, channels=1):
    """Image ``I[c, i, j] = e(x_ij, 0)`` with ``h = L / n``."""
    h = L / n
    img = f(grid_points(n, h), 0.0)
    return ImageGrid(np.repeat(img[None], channels, axis=0), h)


# ----------------------------------------------------------------------------
# error measurement
# ----------------------------------------------------------------------------


def interior_mask(n, theta, margin=2):
    """Cells at least ``margin`` from the edge whose rotation source also is.

    For quarter turns this is just the interior square; for other angles the
    zero-extended corners of the rotated grid are excluded as well.
    """
    idx = np.arange(n)
    inner = (idx >= margin) & (idx < n - margin)
    mask = inner[:, None] & inner[None, :]
    if quarter_turns(theta) is None:
        rows, cols = source_indices(n, theta)
        lo, hi = margin, n - 1 - margin
        mask &= (rows >= lo) & (rows <= hi) & (cols >= lo) & (cols <= hi)
    return mask


def _rotate_any(x, theta):
    if isinstance(x, GroupFeatureMap):
        return rotate_feature(x, theta)
    return rotate_image(x, theta)


def _norm(diff, mask, kind, h):
    d = diff[..., mask]
    if d.size == 0:
        raise ValueError("measurement region is empty")
    if kind == "max":
        return float(np.max(np.abs(d)))
    if kind == "l2":
        lead = int(np.prod(diff.shape[:-2])) or 1
        return float(np.sqrt(np.sum(d * d) * h * h / lead))
    raise ValueError(f"unknown norm {kind!r}; use 'max' or 'l2'")


def _margin_cells(margin, margin_width, h):
    if margin_width is None:
        return margin
    return max(margin, int(math.ceil(margin_width / h - 1e-9)))


def equivariance_error(op, F, theta, norm="max", rotated=None, margin=2, margin_width=None):
    """``|| op(pi_theta F) - pi'_theta op(F) ||`` over the interior.

    ``F`` is a :class:`GroupFeatureMap` or :class:`ImageGrid`; ``op`` maps it
    to another one.  ``rotated`` may supply ``pi_theta F`` sampled exactly
    from the latent function; otherwise it is computed discretely.
    ``margin_width`` (physical length) widens the excluded boundary layer for
    operators whose zero-padding reach is fixed in physical units.
    """
    if rotated is None:
        rotated = _rotate_any(F, theta)
    left = op(rotated)
    right = _rotate_any(op(F), theta)
    if left.data.shape != right.data.shape:
        raise ValueError(f"branch shapes differ: {left.data.shape} vs {right.data.shape}")
    mask = interior_mask(left.n, theta, _margin_cells(margin, margin_width, left.h))
    return _norm(left.data - right.data, mask, norm, left.h)


def relative_network_error(net, image, theta, rotated=None, margin=2, margin_width=None):
    """``||R net(f) - net(R f)||^2 / ||R net(f)||^2`` over the interior.

    ``net`` maps an :class:`ImageGrid` (or ``(..., n, n)`` array) to the same
    kind.  Returns ``None`` when the denominator vanishes.
    """
    if not isinstance(image, ImageGrid):
        image = ImageGrid(image)
    if rotated is None:
        rotated = rotate_image(image, theta)
    elif not isinstance(rotated, ImageGrid):
        rotated = ImageGrid(rotated, image.h)
    a = _as_grid(net(image), image.h)
    b = _as_grid(net(rotated), image.h)
    ref = rotate_image(a, theta).data
    mask = interior_mask(ref.shape[-1], theta, _margin_cells(margin, margin_width, image.h))
    num = float(np.sum((ref - b.data)[..., mask] ** 2))
    den = float(np.sum(ref[..., mask] ** 2))
    if den == 0.0:
        return None
    return num / den


def _as_grid(x, h):
    if isinstance(x, ImageGrid):
        return x
    if isinstance(x, Tensor):
        x = x.data
    return ImageGrid(x, h)


def network_operator(net, h_ref, refine=True):
    """Wrap a model as an ``ImageGrid -> ImageGrid`` map.

    With ``refine`` the network's continuous filters are sampled at the
    input's mesh: ``refine = h_ref / h`` (must be a positive integer).
    """

    def op(image):
        r = 1
        if refine:
            ratio = h_ref / image.h
            r = int(round(ratio))
            if r < 1 or abs(ratio - r) > 1e-9:
                raise ValueError(f"mesh {image.h} is not an integer refinement of {h_ref}")
        data = image.data
        batched = data if data.ndim == 4 else data.reshape((1,) * (4 - data.ndim) + data.shape)
        out = net(Tensor(batched), refine=r).data
        return ImageGrid(out.reshape(data.shape[:-2] + out.shape[-2:]), image.h)

    return op


# ----------------------------------------------------------------------------
# sweeps and fits
# ----------------------------------------------------------------------------


def fit_loglog(h, err):
    """Least-squares slope and intercept of ``log err`` against ``log h``."""
    slope, intercept = np.polyfit(np.log(h), np.log(err), 1)
    return float(slope), float(intercept)


def fit_constants(h, err, t=None):
    """Least-squares ``R1 h + R2 h^2`` (plus ``R3 h / t`` when ``t`` is given).

    Rows are scaled by ``1/err`` so each point counts by its relative misfit.
    """
    h = np.asarray(h, dtype=np.float64)
    err = np.asarray(err, dtype=np.float64)
    cols = [h, h * h]
    if t is not None:
        cols.append(h / np.asarray(t, dtype=np.float64))
    a = np.stack(cols, axis=1) / err[:, None]
    coef, *_ = np.linalg.lstsq(a, np.ones_like(err), rcond=None)
    return [float(c) for c in coef]


@dataclass
class EquivarianceReport:
    operator: str
    theta: float
    t: int
    rows: list = field(default_factory=list)  # dicts: n, h, error, bound
    slope: float = None
    intercept: float = None
    exact: bool = False
    excluded: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def hs(self):
        return [r["h"] for r in self.rows]

    @property
    def errors(self):
        return [r["error"] for r in self.rows]

    @property
    def bound_ok(self):
        return all(r["bound"] is None or r["error"] <= r["bound"] for r in self.rows)

    def passes(self, min_slope=None):
        if not self.bound_ok:
            return False
        if min_slope is None or self.exact:
            return True
        return self.slope is not None and self.slope >= min_slope

    def summary(self, min_slope=None):
        return {
            "operator": self.operator, "theta": self.theta, "t": self.t, "slope": self.slope,
            "intercept": self.intercept, "exact": self.exact, "bound_ok": self.bound_ok,
            "excluded_n": self.excluded, "constants": self.constants, "notes": self.notes,
            "min_slope": min_slope, "pass": self.passes(min_slope),
        }


def _finish(report, exact_tol):
    errs = np.array(report.errors)
    scale = max(exact_tol, 1e-300)
    keep = errs > scale
    report.excluded = [r["n"] for r, k in zip(report.rows, keep) if not k]
    if report.excluded:
        report.notes.append(f"errors at n={report.excluded} are exact to {exact_tol:.0e}; excluded from the fit")
    if keep.sum() == 0:
        report.exact = True
        report.notes.append("exact at every resolution; slope undefined")
        return report
    if keep.sum() >= 2:
        h = np.array(report.hs)[keep]
        report.slope, report.intercept = fit_loglog(h, errs[keep])
        r1, r2 = fit_constants(h, errs[keep])
        report.constants = {"R1": r1, "R2": r2}
    return report


def mesh_sweep(op, f, resolutions, theta, t, name="op", bound=None, norm="max", L=1.0, margin=2,
               exact_tol=1e-12, margin_width=None):
    """Measure ``equivariance_error`` of a feature-map operator across resolutions.

    ``bound`` is ``None``, ``"down"`` (``2 sqrt2 G h``) or ``"up"``
    (``2 (sqrt2 + 1) G h``), with ``h`` the input mesh.
    """
    resolutions = list(resolutions)
    if len(resolutions) < 4:
        raise ValueError(f"need at least four resolutions, got {resolutions}")
    if sorted(resolutions) != resolutions or len(set(resolutions)) != len(resolutions):
        raise ValueError(f"resolutions must be strictly increasing, got {resolutions}")
    if any(n % 2 for n in resolutions):
        raise ValueError(f"resolutions must be even, got {resolutions}")
    if resolutions[-1] < 8 * resolutions[0]:
        raise ValueError(f"resolutions must span at least a factor of 8, got {resolutions}")
    factor = {None: None, "down": DOWN_BOUND, "up": UP_BOUND}[bound]
    g = f.gradient_bound
    report = EquivarianceReport(name, float(theta), t)
    group = RotationGroup(t)
    exact_input = quarter_turns(theta) is not None
    for n in resolutions:
        F = sample_field(f, n, t, L)
        if exact_input:
            rotated = rotate_feature(F, theta)
        else:
            group.index_of(theta)
            rotated = sample_field(f.rotated(theta), n, t, L)
        err = equivariance_error(op, F, theta, norm=norm, rotated=rotated, margin=margin,
                                 margin_width=margin_width)
        report.rows.append({
            "n": n, "h": F.h, "error": err,
            "bound": None if factor is None else factor * g * F.h,
        })
    tol = exact_tol * max(f.sup_bound, 1.0)
    return _finish(report, tol)


def network_sweep(net, f, resolutions, theta, h_ref, name="network", L=1.0, margin=2, norm="max",
                  exact_tol=1e-12, margin_width=None):
    """Equivariance error of an image-to-image network under mesh refinement.

    The network is evaluated with its filters sampled at each mesh
    (``refine = h_ref / h``); inputs are sampled exactly from ``f``.
    """
    op = network_operator(net, h_ref)
    report = EquivarianceReport(name, float(theta), getattr(getattr(net, "spec", None), "t", 0))
    for n in resolutions:
        image = sample_image(f, n, L)
        rotated = sample_image(f.rotated(theta), n, L)
        err = equivariance_error(op, image, theta, norm=norm, rotated=rotated, margin=margin,
                                 margin_width=margin_width)
        report.rows.append({"n": n, "h": image.h, "error": err, "bound": None})
    return _finish(report, exact_tol * max(f.sup_bound, 1.0))


def angle_sweep(net_factory, f, angles, t_values, n, resolutions=None, h_ref=None, L=1.0, margin=2,
                norm="max", margin_width=None):
    """Equivariance error against group order and angle.

    ``net_factory(t)`` builds the network for group order ``t``.  Each angle
    gets one report listing the error against ``t`` at resolution ``n``
    (rows carry ``group_angle``).  When ``resolutions`` is given, a mesh
    sweep (``network_sweep``) is added for every ``(angle, t)`` pair.
    """
    h_ref = L / n if h_ref is None else h_ref
    nets = {t: net_factory(t) for t in t_values}
    reports = []
    image = sample_image(f, n, L)
    for theta in angles:
        by_t = EquivarianceReport(f"angle_sweep[{theta:.6g}]", float(theta), 0)
        for t in t_values:
            op = network_operator(nets[t], h_ref)
            rotated = sample_image(f.rotated(theta), n, L)
            err = equivariance_error(op, image, theta, norm=norm, rotated=rotated, margin=margin,
                                     margin_width=margin_width)
            by_t.rows.append({"n": n, "h": image.h, "t": t, "error": err, "bound": None,
                              "group_angle": RotationGroup(t).contains(theta)})
        reports.append(by_t)
        if resolutions:
            for t in t_values:
                reports.append(network_sweep(nets[t], f, resolutions, theta, h_ref,
                                             name=f"network[t={t}]", L=L, margin=margin, norm=norm,
                                             margin_width=margin_width))
    return reports


# ----------------------------------------------------------------------------
# report files
# ----------------------------------------------------------------------------

CSV_COLUMNS = ["operator", "theta", "t", "n", "h", "error", "bound"]


def write_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for rep in reports:
            for row in rep.rows:
                w.writerow([rep.operator, repr(rep.theta), row.get("t", rep.t), row["n"], repr(row["h"]),
                            repr(row["error"]), "" if row["bound"] is None else repr(row["bound"])])


def write_json(summary, path):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
