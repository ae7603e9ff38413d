"""U-Net variants and the AdaReNet fusion model.

Both U-Nets share one topology (``m`` down blocks, a middle layer, ``m`` up
blocks):

    input conv -> [conv + ReLU, downsample] x m -> middle conv
               -> [upsample, concat skip, conv + ReLU, conv + ReLU] x m -> output conv

In the equivariant variant the input conv is a lifting convolution, every
other conv is a group convolution with steerable filters, and the output
conv is followed by a mean over orientations.  ``channels[l]`` is the width
at level ``l`` (fields per orientation for the equivariant net).
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .groups import RotationGroup
from .nn import Conv2d, GroupConv, LiftConv, Module
from .resample import DOWNSAMPLERS, UPSAMPLERS
from .tensor import _lift, concat, l2_norm, relu


@dataclass
class UNetSpec:
    depth: int = 2
    channels: tuple = (8, 8, 8)
    p: int = 3
    t: int = 8
    down: str = "maxpool"
    up: str = "nearest"
    in_channels: int = 1
    out_channels: int = 1
    skip: str = "concat"
    bias: bool = True
    residual: bool = False
    init: str = "random"
    zero_output: bool = False

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if len(self.channels) != self.depth + 1:
            raise ValueError(f"need depth + 1 = {self.depth + 1} channel widths, got {len(self.channels)}")
        if min(self.channels) <= 0:
            raise ValueError(f"channel widths must be positive, got {self.channels}")
        if self.p % 2 == 0 or self.p < 1:
            raise ValueError(f"filter size must be odd, got {self.p}")
        if self.down not in DOWNSAMPLERS:
            raise ValueError(f"unknown downsampler {self.down!r}; choose from {sorted(DOWNSAMPLERS)}")
        if self.up not in UPSAMPLERS:
            raise ValueError(f"unknown upsampler {self.up!r}; choose from {sorted(UPSAMPLERS)}")
        if self.skip not in ("concat", "none"):
            raise ValueError(f"skip must be 'concat' or 'none', got {self.skip!r}")
        if self.residual and self.in_channels != self.out_channels:
            raise ValueError("residual output needs in_channels == out_channels")

    def check_input(self, n):
        if n % (2 ** self.depth):
            raise ValueError(f"input resolution {n} is not divisible by 2^depth = {2 ** self.depth}")

    def to_dict(self):
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


class _UNet(Module):
    equivariant = False

    def __init__(self, spec, rng):
        self.spec = spec
        ch, m = spec.channels, spec.depth
        self.head = self._input_layer(spec.in_channels, ch[0], rng)
        self.down_convs = [self._layer(ch[i], ch[i + 1], rng) for i in range(m)]
        self.middle = self._layer(ch[m], ch[m], rng)
        self.up_convs = []
        for i in range(m, 0, -1):
            c_in = 2 * ch[i] if spec.skip == "concat" else ch[i]
            self.up_convs.append([self._layer(c_in, ch[i - 1], rng), self._layer(ch[i - 1], ch[i - 1], rng)])
        self.tail = self._layer(ch[0], spec.out_channels, rng)
        if spec.zero_output:
            # with residual=True the untrained network is then the identity map
            for _, p in self.tail.named_parameters():
                p.data[...] = 0.0
        self._down = DOWNSAMPLERS[spec.down]
        self._up = UPSAMPLERS[spec.up]

    def named_parameters(self, prefix=""):
        yield from self.head.named_parameters(prefix + "head.")
        for i, layer in enumerate(self.down_convs):
            yield from layer.named_parameters(f"{prefix}down.{i}.")
        yield from self.middle.named_parameters(prefix + "middle.")
        for i, (a, b) in enumerate(self.up_convs):
            yield from a.named_parameters(f"{prefix}up.{i}.0.")
            yield from b.named_parameters(f"{prefix}up.{i}.1.")
        yield from self.tail.named_parameters(prefix + "tail.")

    def _output(self, f):
        return f

    def forward(self, x, refine=1):
        x = _lift(x)
        squeeze = x.ndim == 3
        if squeeze:
            x = x.reshape((1,) + x.shape)
        for n in x.shape[-2:]:
            self.spec.check_input(n)
        f = relu(self.head(x, refine))
        skips = []
        for conv in self.down_convs:
            f = relu(conv(f, refine))
            skips.append(f)
            f = self._down(f)
        f = relu(self.middle(f, refine))
        for (conv_a, conv_b), skip in zip(self.up_convs, reversed(skips)):
            f = self._up(f)
            if self.spec.skip == "concat":
                f = concat([f, skip], axis=1)
            f = relu(conv_a(f, refine))
            f = relu(conv_b(f, refine))
        out = self._output(self.tail(f, refine))
        if self.spec.residual:
            out = out + x
        if squeeze:
            out = out.reshape(out.shape[1:])
        return out


class EquivariantUNet(_UNet):
    """Rotation-equivariant U-Net (lifting conv, group convs, orientation mean).

    ``forward(x, refine=r)`` evaluates the same continuous filters on an
    ``r``-times finer mesh (``(p + 1) r - 1`` taps, quadrature weight
    ``1 / r^2``); ``refine=1`` is the ordinary network.
    """

    equivariant = True

    def __init__(self, spec, rng):
        self.group = RotationGroup(spec.t)
        super().__init__(spec, rng)

    def _input_layer(self, c_in, c_out, rng):
        return LiftConv(c_in, c_out, self.group, self.spec.p, rng, bias=self.spec.bias)

    def _layer(self, c_in, c_out, rng):
        return GroupConv(c_in, c_out, self.group, self.spec.p, rng, bias=self.spec.bias, init=self.spec.init)

    def _output(self, f):
        return f.mean(axis=2)


class VanillaUNet(_UNet):
    """Same topology with free ``p x p`` kernels; ``refine`` is ignored."""

    def _input_layer(self, c_in, c_out, rng):
        return Conv2d(c_in, c_out, self.spec.p, rng, bias=self.spec.bias)

    _layer = _input_layer


def build_equivariant_unet(spec, seed=0):
    return EquivariantUNet(spec, np.random.default_rng(seed))


def build_vanilla_unet(spec, seed=0):
    return VanillaUNet(spec, np.random.default_rng(seed))


def matched_vanilla_spec(eq_spec, max_scale=64):
    """Vanilla spec whose widths are a common multiple of ``eq_spec.channels``
    chosen to make the parameter count closest to the equivariant net's."""
    target = EquivariantUNet(eq_spec, np.random.default_rng(0)).num_parameters()
    best = None
    for k in range(1, max_scale + 1):
        for frac in (1.0, 0.75, 0.5):
            widths = tuple(max(1, int(round(c * k * frac))) for c in eq_spec.channels)
            spec = UNetSpec(**{**eq_spec.to_dict(), "channels": widths})
            count = VanillaUNet(spec, np.random.default_rng(0)).num_parameters()
            gap = abs(count - target)
            if best is None or gap < best[0]:
                best = (gap, spec)
    return best[1]


# ----------------------------------------------------------------------------
# AdaReNet
# ----------------------------------------------------------------------------


class MaskNet(Module):
    """Stack of 3x3 convs with ReLU between and a sigmoid at the end."""

    def __init__(self, c_in, c_out, rng, hidden=32, layers=4):
        widths = [c_in] + [hidden] * (layers - 1) + [c_out]
        self.convs = [Conv2d(a, b, 3, rng) for a, b in zip(widths[:-1], widths[1:])]

    def forward(self, x):
        for conv in self.convs[:-1]:
            x = relu(conv(x))
        return self.convs[-1](x).sigmoid()


class ResBlock(Module):
    def __init__(self, c, rng):
        self.conv1 = Conv2d(c, c, 3, rng)
        self.conv2 = Conv2d(c, c, 3, rng)

    def forward(self, x):
        return x + self.conv2(relu(self.conv1(x)))


class SelfCorrect(Module):
    """``x + tail(res(res(head(x))))``; a zero tail makes it the identity."""

    def __init__(self, c, rng, hidden=32, blocks=2, identity_init=False):
        self.head = Conv2d(c, hidden, 3, rng)
        self.blocks = [ResBlock(hidden, rng) for _ in range(blocks)]
        self.tail = Conv2d(hidden, c, 3, rng)
        if identity_init:
            self.tail.weight.data[...] = 0.0

    def forward(self, x):
        f = self.head(x)
        for block in self.blocks:
            f = block(f)
        return x + self.tail(f)


@dataclass
class AdaReNetSpec:
    vanilla: UNetSpec = field(default_factory=UNetSpec)
    equivariant: UNetSpec = field(default_factory=UNetSpec)
    mask_hidden: int = 32
    mask_layers: int = 4
    correct_hidden: int = 32
    correct_blocks: int = 2
    identity_init: bool = False
    alpha1: float = 0.1
    alpha2: float = 0.1


class AdaReNet(Module):
    def __init__(self, spec, rng):
        if spec.vanilla.in_channels != spec.equivariant.in_channels or \
                spec.vanilla.out_channels != spec.equivariant.out_channels:
            raise ValueError("vanilla and equivariant branches must agree on in/out channels")
        self.spec = spec
        c_in, c_out = spec.vanilla.in_channels, spec.vanilla.out_channels
        self.vanilla = VanillaUNet(spec.vanilla, rng)
        self.eq = EquivariantUNet(spec.equivariant, rng)
        self.mask = MaskNet(c_in, c_out, rng, spec.mask_hidden, spec.mask_layers)
        self.correct = SelfCorrect(c_out, rng, spec.correct_hidden, spec.correct_blocks, spec.identity_init)

    def forward(self, x, mask=None):
        """Return ``(f_c, f_e, M_f, fused, corrected)``.

        ``mask`` overrides the mask network output (used to test the fusion rule).
        """
        x = _lift(x)
        f_c = self.vanilla(x)
        f_e = self.eq(x)
        if f_c.shape != f_e.shape:
            raise ValueError(f"branch outputs disagree: {f_c.shape} vs {f_e.shape}")
        m = self.mask(x) if mask is None else _lift(mask)
        if m.shape != f_c.shape:
            raise ValueError(f"mask shape {m.shape} does not match branch output {f_c.shape}")
        fused = fuse(m, f_c, f_e)
        return f_c, f_e, m, fused, self.correct(fused)


def fuse(mask, f_c, f_e):
    """Pixelwise convex combination ``M * f_c + (1 - M) * f_e``."""
    mask = _lift(mask)
    return mask * f_c + (1.0 - mask) * f_e


def build_adarenet(spec, seed=0):
    return AdaReNet(spec, np.random.default_rng(seed))


def _per_sample_l2(d):
    if d.ndim <= 1:
        return l2_norm(d)
    return l2_norm(d, axis=tuple(range(1, d.ndim))).mean()


def adarenet_loss(corrected, f_c, f_e, target, alpha1=0.1, alpha2=0.1):
    """``||I_bar - y|| + a1 ||f_c - y|| + a2 ||f_e - y||`` (L2 per sample, batch mean)."""
    if alpha1 < 0 or alpha2 < 0:
        raise ValueError(f"loss weights must be non-negative, got {alpha1}, {alpha2}")
    target = _lift(target)
    for name, t in (("corrected", corrected), ("f_c", f_c), ("f_e", f_e)):
        if t.shape != target.shape:
            raise ValueError(f"{name} shape {t.shape} does not match target {target.shape}")
    loss = _per_sample_l2(corrected - target)
    if alpha1:
        loss = loss + alpha1 * _per_sample_l2(f_c - target)
    if alpha2:
        loss = loss + alpha2 * _per_sample_l2(f_e - target)
    return loss


def image_forward(net, x, refine=1):
    """Denoised image from any of the models (AdaReNet returns its corrected output)."""
    if isinstance(net, AdaReNet):
        return net(x)[-1]
    return net(x, refine=refine)


__all__ = [
    "UNetSpec", "EquivariantUNet", "VanillaUNet", "build_equivariant_unet", "build_vanilla_unet",
    "matched_vanilla_spec", "AdaReNetSpec", "AdaReNet", "build_adarenet", "adarenet_loss", "fuse",
    "MaskNet", "SelfCorrect", "image_forward",
]
