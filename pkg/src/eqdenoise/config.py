"""INI run configuration.

Sections ``[train]``, ``[noise]``, ``[model]`` and ``[adarenet]`` describe a
training run; ``[verify]``, ``[network]`` and ``[corollary]`` describe an
equivariance verification.  Unknown sections or keys are errors, so typos
never silently fall back to defaults.
"""

import configparser
import math
import os
import re
from dataclasses import dataclass, fields

from .models import AdaReNetSpec, UNetSpec
from .selfsup import NoiseModel
from .train import TrainConfig


class ConfigError(ValueError):
    pass


_ANGLE = re.compile(r"^\s*(?:(\d+(?:\.\d*)?)\s*\*?\s*)?pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_angle(text):
    """``"pi/7"``, ``"2pi/8"``, ``"2*pi/8"`` or a plain number of radians."""
    m = _ANGLE.match(text)
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse angle {text!r}") from None


def _list(text, conv=str):
    return [conv(v.strip()) for v in text.split(",") if v.strip()]


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _coerce(value, default, key):
    try:
        if isinstance(default, bool):
            return _bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(_list(value, int if all(isinstance(v, int) for v in default) else float))
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from None
    return value.strip()


def _section(cp, name, defaults, path):
    """Dict of typed values for the keys present in section ``name``."""
    if not cp.has_section(name):
        return {}
    out = {}
    for key, value in cp.items(name):
        if key not in defaults:
            raise ConfigError(f"{path}: unknown key {key!r} in [{name}]")
        out[key] = _coerce(value, defaults[key], f"{name}.{key}")
    return out


def _defaults(cls):
    obj = cls()
    return {f.name: getattr(obj, f.name) for f in fields(cls)}


def read(path):
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    known = {"train", "noise", "model", "adarenet", "verify", "network", "corollary"}
    for name in cp.sections():
        if name not in known:
            raise ConfigError(f"{path}: unknown section [{name}]")
    return cp


# ----------------------------------------------------------------------------
# training
# ----------------------------------------------------------------------------

_ADARENET_KEYS = {
    "vanilla_channels": (8, 8, 8), "eq_channels": (4, 4, 4), "mask_hidden": 32, "mask_layers": 4,
    "correct_hidden": 32, "correct_blocks": 2, "identity_init": False, "alpha1": 0.1, "alpha2": 0.1,
}


def train_config(cp, path="config", seed=None):
    """Build a :class:`TrainConfig`; ``seed`` overrides ``[train] seed``."""
    try:
        noise_d = _defaults(NoiseModel)
        noise_d["sigma_range"] = (0.0, 50.0)
        noise = NoiseModel(**_section(cp, "noise", noise_d, path))
        unet = UNetSpec(**{"channels": (8, 8, 8), "t": 4, "residual": True, "zero_output": True,
                           **_section(cp, "model", _defaults(UNetSpec), path)})
        train_d = {k: v for k, v in _defaults(TrainConfig).items() if k not in ("noise", "unet", "adarenet")}
        values = _section(cp, "train", train_d, path)
        if values.get("dataset") and not os.path.isabs(values["dataset"]):
            values["dataset"] = os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(path)),
                                                              values["dataset"]))
        if seed is not None:
            values["seed"] = int(seed)
        ada = None
        if values.get("model") == "adarenet":
            a = {**_ADARENET_KEYS, **_section(cp, "adarenet", _ADARENET_KEYS, path)}
            base = unet.to_dict()
            ada = AdaReNetSpec(
                vanilla=UNetSpec(**{**base, "channels": a.pop("vanilla_channels")}),
                equivariant=UNetSpec(**{**base, "channels": a.pop("eq_channels")}),
                **a,
            )
        return TrainConfig(noise=noise, unet=unet, adarenet=ada, **values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ----------------------------------------------------------------------------
# verification
# ----------------------------------------------------------------------------


@dataclass
class VerifyConfig:
    operators: tuple = ("maxpool", "stride", "nearest", "bilinear", "econv")
    angles: tuple = (math.pi / 2, math.pi / 4)
    t: int = 8
    resolutions: tuple = (32, 64, 128, 256)
    fields: int = 3
    seed: int = 0
    domain: float = 1.0
    min_slope_resample: float = 0.8
    min_slope_conv: float = 1.7
    conv_p: int = 3
    conv_reference: int = 32
    # optional whole-network sweep (disabled unless the section is present)
    network: dict = None
    corollary: dict = None


_NETWORK_KEYS = {
    "angle": "pi/4", "t": 8, "resolutions": (64, 128, 256), "reference": 32, "domain": 2.0,
    "channels": (4, 4, 4), "depth": 2, "p": 3, "window": 0.3, "margin_width": 0.2, "min_slope": 0.8,
    "seed": 0,
}
_COROLLARY_KEYS = {
    "angle": "pi/7", "t_values": (4, 8, 16), "n": 128, "reference": 32, "domain": 2.0,
    "channels": (4, 4, 4), "depth": 2, "p": 3, "window": 0.3, "margin_width": 0.2, "seed": 0,
}


def verify_config(cp, path="config", seed=None):
    d = _defaults(VerifyConfig)
    raw_defaults = {k: v for k, v in d.items() if k not in ("network", "corollary")}
    raw_defaults["operators"] = ""
    raw_defaults["angles"] = ""
    raw = {}
    if cp.has_section("verify"):
        for key, value in cp.items("verify"):
            if key not in raw_defaults:
                raise ConfigError(f"{path}: unknown key {key!r} in [verify]")
            if key == "operators":
                raw[key] = tuple(_list(value))
            elif key == "angles":
                raw[key] = tuple(parse_angle(v) for v in _list(value))
            else:
                raw[key] = _coerce(value, d[key], f"verify.{key}")
    if seed is not None:
        raw["seed"] = int(seed)
    cfg = VerifyConfig(**raw)
    for name, keys in (("network", _NETWORK_KEYS), ("corollary", _COROLLARY_KEYS)):
        if cp.has_section(name):
            sec = {**keys, **_section(cp, name, keys, path)}
            sec["angle"] = parse_angle(sec["angle"])
            setattr(cfg, name, sec)
    if not cfg.operators:
        raise ConfigError(f"{path}: [verify] operators is empty")
    if len(cfg.resolutions) < 4:
        raise ConfigError(f"{path}: need at least four resolutions")
    return cfg
