"""Parameter containers and layers."""

import numpy as np

from .groups import group_conv, lift_conv
from .steerable import aliasing_mask, coefficient_std
from .tensor import Tensor, conv2d


class Module:
    """Minimal parameter container.

    Parameters are ``Tensor`` attributes with ``requires_grad=True``; child
    modules may be attributes or lists of modules.  Iteration order follows
    attribute assignment order, which makes state dicts reproducible.
    """

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        """Copy arrays from ``state``; raises ``KeyError``/``ValueError`` naming the first mismatch."""
        for name, p in self.named_parameters():
            if name not in state:
                raise KeyError(f"checkpoint is missing tensor {name!r}")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"tensor {name!r}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _param(data):
    return Tensor(data, requires_grad=True)


class Conv2d(Module):
    """Plain ``p x p`` convolution, He-normal init, 'same' zero padding."""

    def __init__(self, c_in, c_out, p, rng, bias=True):
        self.p = p
        std = np.sqrt(2.0 / (c_in * p * p))
        self.weight = _param(rng.standard_normal((c_out, c_in, p, p)) * std)
        self.bias = _param(np.zeros(c_out)) if bias else None

    def forward(self, x, refine=1):
        return conv2d(x, self.weight, padding=self.p // 2, bias=self.bias)


class LiftConv(Module):
    """Image -> group feature map with steerable filters."""

    def __init__(self, c_in, c_out, group, p, rng, bias=True):
        self.group, self.p = group, p
        nb = len(aliasing_mask(p))
        std = coefficient_std(p, c_in)
        self.coeffs = _param(rng.standard_normal((c_out, c_in, nb)) * std)
        self.bias = _param(np.zeros(c_out)) if bias else None

    def forward(self, x, refine=1):
        return lift_conv(x, self.coeffs, self.group, self.p, mesh=1.0 / refine, bias=self.bias,
                         weight=1.0 / refine ** 2)


class GroupConv(Module):
    """Group feature map -> group feature map with steerable filters.

    ``init="random"`` draws every orientation slice independently.
    ``init="smooth"`` makes the filter a low-order trigonometric function of
    the relative orientation and scales it by ``1/t``, so networks built with
    the same seed but different ``t`` sample one continuous-angle network.
    """

    def __init__(self, c_in, c_out, group, p, rng, bias=True, init="random", harmonics=2):
        self.group, self.p = group, p
        t = group.t
        nb = len(aliasing_mask(p))
        if init == "random":
            std = coefficient_std(p, c_in * t)
            coeffs = rng.standard_normal((c_out, c_in, t, nb)) * std
        elif init == "smooth":
            # the orientation sum of the slices is amp[:, :, 0], so fan-in is c_in
            std = coefficient_std(p, c_in)
            amp = rng.standard_normal((c_out, c_in, 2 * harmonics + 1, nb)) * std
            ang = 2.0 * np.pi * np.arange(t) / t
            waves = [np.ones(t)]
            for m in range(1, harmonics + 1):
                waves += [np.cos(m * ang), np.sin(m * ang)]
            coeffs = np.einsum("ocmb,mj->ocjb", amp, np.array(waves)) / t
        else:
            raise ValueError(f"unknown init {init!r}")
        self.coeffs = _param(coeffs)
        self.bias = _param(np.zeros(c_out)) if bias else None

    def forward(self, x, refine=1):
        return group_conv(x, self.coeffs, self.group, self.p, mesh=1.0 / refine, bias=self.bias,
                          weight=1.0 / refine ** 2)

