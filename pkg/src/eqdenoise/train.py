"""Self-supervised training loop (Noise2Noise, Noise2Void, Recorrupted-to-Recorrupted).

All randomness comes from named sub-streams ``default_rng([seed, stream, index])``
so a batch depends only on ``(seed, step)``; resuming from a checkpoint
therefore reproduces the uninterrupted loss trajectory exactly.
"""

import csv
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import checkpoint
from .data import load_dataset, pad_to_multiple, random_patches
from .models import AdaReNetSpec, UNetSpec, adarenet_loss, build_adarenet, build_equivariant_unet, \
    build_vanilla_unet
from .selfsup import NoiseModel, corrupt, n2n_pair, n2v_mask_batch, psnr, r2r_inference, \
    r2r_pair, ssim
from .tensor import Tensor, mse_loss

log = logging.getLogger(__name__)

METHODS = ("n2n", "n2v", "r2r")
MODELS = ("eq", "vanilla", "adarenet")
STREAMS = {"init": 1, "split": 2, "batch": 3, "val": 4, "infer": 5}
METRIC_COLUMNS = ["epoch", "step", "loss", "val_psnr", "val_ssim"]


def stream(seed, name, *index):
    return np.random.default_rng([int(seed), STREAMS[name], *index])


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    method: str = "n2n"
    model: str = "eq"
    noise: NoiseModel = field(default_factory=NoiseModel)
    unet: UNetSpec = field(default_factory=lambda: UNetSpec(channels=(8, 8, 8), t=4, residual=True))
    adarenet: AdaReNetSpec = None
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 8
    patch_size: int = 64
    epochs: int = 10
    steps_per_epoch: int = 50
    seed: int = 0
    dataset: str = ""
    rgb: bool = False
    val_count: int = 0
    augment: bool = True
    n2v_count: int = 64
    n2v_window: int = 2
    r2r_alpha: float = 0.5
    r2r_samples: int = 8

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.model == "adarenet" and self.adarenet is None:
            self.adarenet = AdaReNetSpec(vanilla=self.unet, equivariant=self.unet)
        depth = max(s.depth for s in self.specs())
        if self.patch_size % (2 ** depth):
            raise ValueError(f"patch size {self.patch_size} is not divisible by 2^depth = {2 ** depth}")
        for name in ("batch_size", "epochs", "steps_per_epoch", "r2r_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lr <= 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("need lr > 0 and moment decays in [0, 1)")
        if self.method == "r2r" and (self.r2r_alpha <= 0 or self.noise.kind != "gaussian" or self.noise.blind):
            raise ValueError("r2r needs alpha > 0 and non-blind gaussian noise with known sigma")
        if self.method == "n2v" and self.n2v_count > self.patch_size ** 2:
            raise ValueError(f"n2v_count {self.n2v_count} exceeds the pixels in a patch")

    def specs(self):
        if self.model == "adarenet":
            return [self.adarenet.vanilla, self.adarenet.equivariant]
        return [self.unet]

    @property
    def multiple(self):
        return 2 ** max(s.depth for s in self.specs())

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        noise = dict(d.pop("noise"))
        if noise.get("sigma_range") is not None:
            noise["sigma_range"] = tuple(noise["sigma_range"])
        unet = UNetSpec(**d.pop("unet"))
        ada = d.pop("adarenet", None)
        if ada is not None:
            ada = dict(ada)
            ada["vanilla"] = UNetSpec(**ada["vanilla"])
            ada["equivariant"] = UNetSpec(**ada["equivariant"])
            ada = AdaReNetSpec(**ada)
        return cls(noise=NoiseModel(**noise), unet=unet, adarenet=ada, **d)


def build_model(cfg):
    rng_seed = int(stream(cfg.seed, "init").integers(2 ** 31))
    if cfg.model == "eq":
        return build_equivariant_unet(cfg.unet, rng_seed)
    if cfg.model == "vanilla":
        return build_vanilla_unet(cfg.unet, rng_seed)
    return build_adarenet(cfg.adarenet, rng_seed)


class Adam:
    """Adaptive-moment SGD on a list of parameter tensors."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr, self.betas, self.eps = lr, betas, eps
        self.t = 0
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        state = {"adam.t": np.array([float(self.t)])}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            state[f"adam.m.{i}"] = m
            state[f"adam.v.{i}"] = v
        return state

    def load_state_dict(self, state):
        self.t = int(state["adam.t"][0])
        for i in range(len(self.params)):
            self.m[i] = np.array(state[f"adam.m.{i}"], dtype=np.float64)
            self.v[i] = np.array(state[f"adam.v.{i}"], dtype=np.float64)


def _forward(net, cfg, x):
    """Network output(s) on the [0, 1] scale for input on [0, 255]."""
    return net(Tensor(x / 255.0))


def _loss(net, cfg, batch_clean, rng):
    """Build the method's (input, target) pairs for one batch and return the loss tensor."""
    noisy_in, target, extra = [], [], []
    for img in batch_clean:
        if cfg.method == "n2n":
            a, b = n2n_pair(img, cfg.noise, rng)
        elif cfg.method == "r2r":
            noisy = corrupt(img, cfg.noise, rng)
            a, b = r2r_pair(noisy, cfg.noise.sigma, cfg.r2r_alpha, rng)
        else:
            noisy = corrupt(img, cfg.noise, rng)
            a, _, pos = n2v_mask_batch(noisy, cfg.n2v_count, cfg.n2v_window, rng)
            b = noisy
            extra.append(pos)
        noisy_in.append(a)
        target.append(b)
    x = np.stack(noisy_in)
    y = np.stack(target) / 255.0
    out = _forward(net, cfg, x)
    if cfg.method == "n2v":
        mask = np.zeros(y.shape)
        for i, pos in enumerate(extra):
            mask[i, ..., pos[:, 0], pos[:, 1]] = 1.0
        count = int(mask.sum())

        def term(pred):
            return _masked(pred, y, mask, count)

        if cfg.model == "adarenet":
            f_c, f_e, _, _, corrected = out
            s = cfg.adarenet
            return term(corrected) + s.alpha1 * term(f_c) + s.alpha2 * term(f_e)
        return term(out)
    if cfg.model == "adarenet":
        f_c, f_e, _, _, corrected = out
        return adarenet_loss(corrected, f_c, f_e, y, cfg.adarenet.alpha1, cfg.adarenet.alpha2)
    return mse_loss(out, y)


def _masked(pred, y, mask, count):
    d = (pred - Tensor(y)) * Tensor(mask)
    return (d * d).sum() * (1.0 / count)


def denoise(net, cfg, noisy, rng=None):
    """Denoise one ``(H, W)`` or ``(C, H, W)`` image on the [0, 255] scale."""
    noisy = np.asarray(noisy, dtype=np.float64)
    squeeze = noisy.ndim == 2
    x = noisy[None] if squeeze else noisy
    x, (H, W) = pad_to_multiple(x, cfg.multiple)

    def run(inp):
        out = _forward(net, cfg, inp[None])
        if cfg.model == "adarenet":
            out = out[-1]
        return out.data[0] * 255.0

    if cfg.method == "r2r":
        rng = stream(cfg.seed, "infer") if rng is None else rng
        out = r2r_inference(run, x, cfg.noise.sigma, cfg.r2r_alpha, cfg.r2r_samples, rng)
    else:
        out = run(x)
    out = out[..., :H, :W]
    return out[0] if squeeze else out


def _validation_set(cfg, images):
    if cfg.val_count <= 0:
        return images, []
    if cfg.val_count >= len(images):
        raise ValueError(f"val_count {cfg.val_count} leaves no training images out of {len(images)}")
    order = stream(cfg.seed, "split").permutation(len(images))
    val_idx = set(order[:cfg.val_count].tolist())
    train = [im for i, im in enumerate(images) if i not in val_idx]
    rng = stream(cfg.seed, "val")
    val = [(images[i], corrupt(images[i], cfg.noise, rng)) for i in sorted(val_idx)]
    return train, val


def evaluate(net, cfg, val):
    """Mean PSNR/SSIM of denoised validation images and of the noisy inputs."""
    if not val:
        return None
    out = {"psnr": [], "ssim": [], "noisy_psnr": [], "noisy_ssim": []}
    for clean, noisy in val:
        den = denoise(net, cfg, noisy)
        out["psnr"].append(psnr(den, clean))
        out["ssim"].append(ssim(den, clean))
        out["noisy_psnr"].append(psnr(noisy, clean))
        out["noisy_ssim"].append(ssim(noisy, clean))
    return {k: float(np.mean(v)) for k, v in out.items()}


def _read_metrics(path, keep_epochs):
    if not os.path.exists(path):
        return []
    with open(path, newline="") as fh:
        return [row for row in csv.DictReader(fh) if int(row["epoch"]) < keep_epochs]


def _write_metrics(path, rows):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    os.replace(tmp, path)


def train(cfg, out_dir, resume=False, images=None, stop_after_epoch=None):
    """Train and write ``checkpoint.bin`` and ``metrics.csv`` into ``out_dir``.

    ``images`` overrides loading ``cfg.dataset``.  With ``resume`` the run
    continues after the last completed epoch stored in the checkpoint.
    ``stop_after_epoch`` ends the run early (simulated interruption).
    Returns ``(net, summary)``.
    """
    os.makedirs(out_dir, exist_ok=True)
    if images is None:
        images = load_dataset(cfg.dataset, cfg.rgb)
    channels = 3 if cfg.rgb else 1
    for spec in cfg.specs():
        if spec.in_channels != channels:
            raise ValueError(f"model expects {spec.in_channels} input channels, data has {channels}")
    train_imgs, val = _validation_set(cfg, images)
    net = build_model(cfg)
    opt = Adam(net.parameters(), cfg.lr, (cfg.beta1, cfg.beta2), cfg.eps)
    ckpt_path = os.path.join(out_dir, "checkpoint.bin")
    metrics_path = os.path.join(out_dir, "metrics.csv")
    start = 0
    if resume:
        tensors, meta = checkpoint.load(ckpt_path)
        net.load_state_dict(tensors)
        opt.load_state_dict(tensors)
        start = int(meta["epoch"]) + 1
        log.info("resuming after epoch %d", start - 1)
    rows = _read_metrics(metrics_path, start) if resume else []
    summary = {}
    last = cfg.epochs if stop_after_epoch is None else min(cfg.epochs, stop_after_epoch + 1)
    for epoch in range(start, last):
        losses = []
        for s in range(cfg.steps_per_epoch):
            step = epoch * cfg.steps_per_epoch + s
            rng = stream(cfg.seed, "batch", step)
            batch = random_patches(train_imgs, cfg.batch_size, cfg.patch_size, rng, cfg.augment)
            net.zero_grad()
            loss = _loss(net, cfg, batch, rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at epoch {epoch}, step {step}; "
                    f"batch seed = [{cfg.seed}, {STREAMS['batch']}, {step}]"
                )
            loss.backward()
            opt.step()
            losses.append(value)
            rows.append({"epoch": epoch, "step": step, "loss": repr(value), "val_psnr": "", "val_ssim": ""})
        metrics = evaluate(net, cfg, val)
        if metrics:
            rows[-1]["val_psnr"] = repr(metrics["psnr"])
            rows[-1]["val_ssim"] = repr(metrics["ssim"])
        log.info("epoch %d loss %.6g %s", epoch, np.mean(losses), metrics or "")
        summary = {"epoch": epoch, "loss": float(np.mean(losses)), "validation": metrics}
        state = {**net.state_dict(), **opt.state_dict()}
        checkpoint.save(ckpt_path, state, meta={"epoch": epoch, "config": _jsonable(cfg.to_dict())})
        _write_metrics(metrics_path, rows)
    return net, summary


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
