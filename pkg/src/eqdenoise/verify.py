"""Operator registry and the default-suite runner behind ``verify-equivariance``."""

import math

import numpy as np

from .groups import GroupFeatureMap, RotationGroup
from .harness import SmoothTestFunction, angle_sweep, mesh_sweep, network_sweep
from .models import UNetSpec, build_equivariant_unet
from .nn import GroupConv
from .resample import maxpool_down, stride_down, upsample_bilinear, upsample_nearest
from .tensor import Tensor

# name -> (kind, bound); kind selects the slope threshold
OPERATORS = {
    "identity": ("exact", None),
    "maxpool": ("resample", "down"),
    "stride": ("resample", "down"),
    "nearest": ("resample", "up"),
    "bilinear": ("resample", "up"),
    "econv": ("conv", None),
}

_RESAMPLERS = {
    "maxpool": maxpool_down, "stride": stride_down, "nearest": upsample_nearest, "bilinear": upsample_bilinear,
}


def econv_operator(t, p, h_ref, rng):
    """Single-field group convolution whose filters keep their physical size ``(p + 1) h_ref / 2``."""
    layer = GroupConv(1, 1, RotationGroup(t), p, rng, bias=False)

    def op(F):
        r = int(round(h_ref / F.h))
        out = layer(Tensor(F.data[None]), refine=r).data[0]
        return GroupFeatureMap(out, F.group, F.h)

    return op, 0.5 * (p + 1) * h_ref


def make_operator(name, cfg, rng):
    """``(op, margin_width)`` for a registered operator name."""
    if name not in OPERATORS:
        raise KeyError(f"unknown operator {name!r}; choose from {', '.join(sorted(OPERATORS))}")
    if name == "identity":
        return (lambda F: F), None
    if name == "econv":
        h_ref = cfg.domain / cfg.conv_reference
        op, reach = econv_operator(cfg.t, cfg.conv_p, h_ref, rng)
        # exclude the zero-padding layer (filter reach) plus the usual 2 cells at the reference mesh
        return op, reach + 2 * h_ref
    return _RESAMPLERS[name], None


def _threshold(name, cfg):
    kind = OPERATORS[name][0]
    return {"exact": None, "resample": cfg.min_slope_resample, "conv": cfg.min_slope_conv}[kind]


def run(cfg):
    """Run every configured sweep; returns ``(reports, summary)``.

    ``summary["pass"]`` is true iff every report meets its slope threshold
    and never exceeds its theoretical bound.
    """
    for name in cfg.operators:
        if name not in OPERATORS:
            raise KeyError(f"unknown operator {name!r}; choose from {', '.join(sorted(OPERATORS))}")
    reports, entries = [], []
    for i in range(cfg.fields):
        f = SmoothTestFunction.random(np.random.default_rng([cfg.seed, 0, i]))
        for name in cfg.operators:
            for theta in cfg.angles:
                op, width = make_operator(name, cfg, np.random.default_rng([cfg.seed, 1, i]))
                rep = mesh_sweep(op, f, cfg.resolutions, theta, cfg.t, name=name, bound=OPERATORS[name][1],
                                 L=cfg.domain, margin_width=width)
                rep.notes.append(f"field {i}")
                reports.append(rep)
                entries.append(rep.summary(_threshold(name, cfg)))
    if cfg.network:
        reports_n, entries_n = _network(cfg.network)
        reports += reports_n
        entries += entries_n
    if cfg.corollary:
        reports_c, entries_c = _corollary(cfg.corollary)
        reports += reports_c
        entries += entries_c
    summary = {"reports": entries, "pass": all(e["pass"] for e in entries)}
    return reports, summary


def _unet(sec, t, init="random", seed=0):
    spec = UNetSpec(depth=sec["depth"], channels=sec["channels"], p=sec["p"], t=t, init=init)
    return build_equivariant_unet(spec, seed)


def _test_image(sec, seed):
    return SmoothTestFunction.random(np.random.default_rng([seed, 2]), orientation=False,
                                     window_radius=sec["window"])


def _network(sec):
    net = _unet(sec, sec["t"], seed=sec["seed"])
    f = _test_image(sec, sec["seed"])
    rep = network_sweep(net, f, sec["resolutions"], sec["angle"], sec["domain"] / sec["reference"],
                        name="unet", L=sec["domain"], margin_width=sec["margin_width"])
    entry = rep.summary(sec["min_slope"])
    nonneg = bool(rep.constants) and min(rep.constants.values()) >= 0
    entry["constants_nonnegative"] = nonneg
    entry["pass"] = entry["pass"] and nonneg
    return [rep], [entry]


def _corollary(sec):
    f = _test_image(sec, sec["seed"])
    reps = angle_sweep(lambda t: _unet(sec, t, init="smooth", seed=sec["seed"]), f, [sec["angle"]],
                       list(sec["t_values"]), sec["n"], h_ref=sec["domain"] / sec["reference"],
                       L=sec["domain"], margin_width=sec["margin_width"])
    rep = reps[0]
    errs = rep.errors
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    entry = {"operator": "unet_vs_t", "theta": rep.theta, "t_values": list(sec["t_values"]),
             "errors": errs, "strictly_decreasing": decreasing, "pass": decreasing}
    return reps, [entry]


def fmt_angle(theta):
    frac = theta / math.pi
    for den in range(1, 33):
        num = frac * den
        if abs(num - round(num)) < 1e-9:
            return f"{int(round(num))}pi/{den}" if den > 1 else f"{int(round(num))}pi"
    return f"{theta:.6g}"
