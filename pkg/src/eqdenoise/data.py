"""Image files, datasets and patch sampling."""

import os

import numpy as np
from PIL import Image

IMAGE_EXTENSIONS = (".pgm", ".ppm", ".pnm", ".png")
LUMA = np.array([0.299, 0.587, 0.114])


def read_image(path, rgb=False):
    """8-bit image as float64 on [0, 255].

    Greyscale result is ``(H, W)``; colour files are reduced by luma weights
    unless ``rgb``, in which case the result is ``(3, H, W)``.
    """
    with Image.open(path) as im:
        if im.mode in ("L", "P", "1") and not rgb:
            return np.asarray(im.convert("L"), dtype=np.float64)
        a = np.asarray(im.convert("RGB"), dtype=np.float64)
    if rgb:
        return np.ascontiguousarray(a.transpose(2, 0, 1))
    return a @ LUMA


def to_uint8(a):
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


def write_image(path, a):
    """Write ``(H, W)`` or ``(3, H, W)`` data (clipped and rounded) as PGM/PPM/PNG."""
    a = np.asarray(a)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    if a.ndim == 3:
        a = a.transpose(1, 2, 0)
    ext = os.path.splitext(path)[1].lower()
    if ext not in IMAGE_EXTENSIONS:
        raise ValueError(f"unsupported image extension {ext!r}; use one of {IMAGE_EXTENSIONS}")
    fmt = "PNG" if ext == ".png" else "PPM"
    Image.fromarray(to_uint8(a)).save(path, format=fmt)


def list_images(directory):
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(IMAGE_EXTENSIONS))
    return [os.path.join(directory, n) for n in names]


def load_dataset(directory, rgb=False):
    paths = list_images(directory)
    if not paths:
        raise FileNotFoundError(f"no PGM/PPM/PNG images in {directory}")
    return [read_image(p, rgb) for p in paths]


def synthetic_image(size, rng):
    """Piecewise-smooth test scene: shaded background, discs, boxes and stripes."""
    y, x = np.mgrid[0:size, 0:size] / size
    img = 60 + 120 * (rng.uniform(-0.5, 0.5) * x + rng.uniform(-0.5, 0.5) * y + 0.5)
    for _ in range(rng.integers(3, 7)):
        shape = rng.integers(3)
        level = rng.uniform(20, 235)
        cy, cx = rng.uniform(0.1, 0.9, 2)
        if shape == 0:
            r = rng.uniform(0.05, 0.25)
            region = (x - cx) ** 2 + (y - cy) ** 2 < r * r
        elif shape == 1:
            hy, hx = rng.uniform(0.05, 0.25, 2)
            region = (np.abs(x - cx) < hx) & (np.abs(y - cy) < hy)
        else:
            ang = rng.uniform(0, np.pi)
            freq = rng.uniform(4, 12)
            r = rng.uniform(0.1, 0.3)
            region = (x - cx) ** 2 + (y - cy) ** 2 < r * r
            stripes = np.sin(2 * np.pi * freq * (np.cos(ang) * x + np.sin(ang) * y)) > 0
            region &= stripes
        img = np.where(region, level, img)
    return np.clip(img, 0, 255)


def make_synthetic_dataset(directory, count, size, seed=0, ext=".png"):
    """Write ``count`` synthetic greyscale scenes; returns their paths."""
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        path = os.path.join(directory, f"img{i:04d}{ext}")
        write_image(path, synthetic_image(size, rng))
        paths.append(path)
    return paths


def random_patches(images, count, size, rng, augment=True):
    """``(count, C, size, size)`` random crops (random quarter turns and flips when ``augment``)."""
    out = []
    for _ in range(count):
        img = images[rng.integers(len(images))]
        if img.ndim == 2:
            img = img[None]
        H, W = img.shape[-2:]
        if H < size or W < size:
            raise ValueError(f"image {H}x{W} is smaller than the {size}x{size} patch")
        r = rng.integers(H - size + 1)
        c = rng.integers(W - size + 1)
        patch = img[:, r:r + size, c:c + size]
        if augment:
            patch = np.rot90(patch, k=int(rng.integers(4)), axes=(-2, -1))
            if rng.integers(2):
                patch = patch[..., ::-1]
        out.append(patch)
    return np.ascontiguousarray(np.stack(out), dtype=np.float64)


def pad_to_multiple(img, multiple):
    """Reflect-pad the last two axes up to a multiple; returns the padded image and the crop."""
    H, W = img.shape[-2:]
    ph = (-H) % multiple
    pw = (-W) % multiple
    if ph == 0 and pw == 0:
        return img, (H, W)
    widths = [(0, 0)] * (img.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(img, widths, mode="reflect"), (H, W)
