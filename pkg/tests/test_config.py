import math

import pytest

from eqdenoise.config import ConfigError, parse_angle, read, train_config, verify_config


@pytest.mark.parametrize("text,value", [("pi/7", math.pi / 7), ("2pi/8", math.pi / 4), ("2*pi/8", math.pi / 4),
                                        ("pi", math.pi), ("0.5", 0.5), (" 3 pi / 2 ", 1.5 * math.pi)])
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value)


def test_parse_angle_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_angle("tau/4")


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_unknown_section_and_key(tmp_path):
    with pytest.raises(ConfigError, match="section"):
        read(_write(tmp_path, "[trian]\nepochs = 1\n"))
    path = _write(tmp_path, "[train]\nepoch = 1\n")
    with pytest.raises(ConfigError, match="epoch"):
        train_config(read(path), path)


def test_missing_and_unparsable_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        read(str(tmp_path / "none.ini"))
    with pytest.raises(ConfigError):
        read(_write(tmp_path, "no section header\n"))


def test_train_config_values(tmp_path):
    path = _write(tmp_path, "[train]\nmethod = n2v\nepochs = 3\ndataset = data\n"
                            "[noise]\nsigma = 15\n[model]\nchannels = 4, 4, 4\nt = 8\n")
    cfg = train_config(read(path), path, seed=7)
    assert cfg.method == "n2v" and cfg.epochs == 3 and cfg.seed == 7
    assert cfg.noise.sigma == 15.0 and cfg.unet.channels == (4, 4, 4) and cfg.unet.t == 8
    assert cfg.dataset == str(tmp_path / "data")
    assert cfg.unet.zero_output and cfg.unet.residual


def test_bad_values_become_config_errors(tmp_path):
    for text in ("[train]\nepochs = many\n", "[model]\nresidual = maybe\n", "[noise]\nkind = pink\n",
                 "[train]\nmethod = n2v\npatch_size = 18\n"):
        path = _write(tmp_path, text)
        with pytest.raises(ConfigError):
            train_config(read(path), path)


def test_adarenet_section(tmp_path):
    path = _write(tmp_path, "[train]\nmodel = adarenet\n[adarenet]\nvanilla_channels = 6, 6, 6\n"
                            "alpha1 = 0.3\nidentity_init = yes\n")
    cfg = train_config(read(path), path)
    assert cfg.adarenet.vanilla.channels == (6, 6, 6)
    assert cfg.adarenet.equivariant.channels == (4, 4, 4)
    assert cfg.adarenet.alpha1 == 0.3 and cfg.adarenet.identity_init


def test_verify_config(tmp_path):
    path = _write(tmp_path, "[verify]\noperators = stride, econv\nangles = pi/2, 2pi/8\n"
                            "resolutions = 16, 32, 64, 128\n[network]\nangle = pi/4\n")
    cfg = verify_config(read(path), path, seed=3)
    assert cfg.operators == ("stride", "econv") and cfg.seed == 3
    assert cfg.angles == pytest.approx((math.pi / 2, math.pi / 4))
    assert cfg.network["angle"] == pytest.approx(math.pi / 4) and cfg.corollary is None
    for bad in ("[verify]\noperators =\n", "[verify]\nresolutions = 16, 32\n", "[verify]\nspeed = 1\n"):
        p = _write(tmp_path, bad)
        with pytest.raises(ConfigError):
            verify_config(read(p), p)
