import numpy as np
import pytest
from PIL import Image

from eqdenoise.data import (list_images, load_dataset, make_synthetic_dataset, pad_to_multiple, random_patches,
                            read_image, synthetic_image, write_image)


def test_png_and_pgm_roundtrip(tmp_path, rng):
    img = rng.integers(0, 256, (5, 7)).astype(np.float64)
    for ext in (".png", ".pgm"):
        write_image(str(tmp_path / f"a{ext}"), img)
        np.testing.assert_array_equal(read_image(str(tmp_path / f"a{ext}")), img)


def test_rgb_read_and_luma(tmp_path, rng):
    rgb = rng.integers(0, 256, (4, 6, 3)).astype(np.uint8)
    Image.fromarray(rgb).save(tmp_path / "c.ppm")
    chw = read_image(str(tmp_path / "c.ppm"), rgb=True)
    assert chw.shape == (3, 4, 6)
    grey = read_image(str(tmp_path / "c.ppm"))
    np.testing.assert_allclose(grey, rgb @ [0.299, 0.587, 0.114])


def test_write_clips_and_rejects_unknown_extension(tmp_path):
    write_image(str(tmp_path / "x.png"), np.array([[-5.0, 300.0]]))
    np.testing.assert_array_equal(read_image(str(tmp_path / "x.png")), [[0.0, 255.0]])
    with pytest.raises(ValueError):
        write_image(str(tmp_path / "x.jpg"), np.zeros((2, 2)))


def test_dataset_listing(tmp_path):
    make_synthetic_dataset(str(tmp_path / "d"), 3, 16, seed=1)
    (tmp_path / "d" / "notes.txt").write_text("x")
    assert [p.split("/")[-1] for p in list_images(str(tmp_path / "d"))] == ["img0000.png", "img0001.png",
                                                                           "img0002.png"]
    assert len(load_dataset(str(tmp_path / "d"))) == 3
    with pytest.raises(FileNotFoundError):
        list_images(str(tmp_path / "missing"))
    (tmp_path / "e").mkdir()
    with pytest.raises(FileNotFoundError):
        load_dataset(str(tmp_path / "e"))


def test_synthetic_image_range_and_determinism():
    a = synthetic_image(32, np.random.default_rng(0))
    b = synthetic_image(32, np.random.default_rng(0))
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 255 and a.std() > 5


def test_random_patches_shapes_and_content(rng):
    img = np.arange(100.0).reshape(10, 10)
    p = random_patches([img], 5, 4, rng, augment=False)
    assert p.shape == (5, 1, 4, 4)
    r, c = divmod(int(p[0, 0, 0, 0]), 10)
    np.testing.assert_array_equal(p[0, 0], img[r:r + 4, c:c + 4])
    # augmented patches are rotations/flips of some crop, so their value sets match one
    windows = {tuple(sorted(img[r:r + 4, c:c + 4].ravel())) for r in range(7) for c in range(7)}
    aug = random_patches([img], 20, 4, rng)
    assert all(tuple(sorted(q.ravel())) in windows for q in aug[:, 0])
    with pytest.raises(ValueError):
        random_patches([img], 1, 12, rng)


def test_pad_to_multiple():
    img = np.arange(30.0).reshape(5, 6)
    out, (H, W) = pad_to_multiple(img, 4)
    assert out.shape == (8, 8) and (H, W) == (5, 6)
    np.testing.assert_array_equal(out[:5, :6], img)
    same, _ = pad_to_multiple(np.zeros((8, 8)), 4)
    assert same.shape == (8, 8)
