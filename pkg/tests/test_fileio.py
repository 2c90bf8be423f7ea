import numpy as np
import pytest

from curvsal import fileio
from curvsal.errors import FormatError
from curvsal.saliency_depth import SaliencyMap


def test_pfm_round_trip_gray(tmp_path, rng):
    a = rng.normal(size=(7, 5)).astype(np.float32).astype(np.float64)
    p = tmp_path / "a.pfm"
    assert fileio.write_pfm(p, a) == 1
    assert np.array_equal(fileio.read_pfm(p), a)
    head = p.read_bytes()[:12]
    assert head.startswith(b"Pf\n5 7\n-1.0\n")


def test_pfm_two_channels_padded(tmp_path, rng):
    a = rng.normal(size=(4, 6, 2)).astype(np.float32).astype(np.float64)
    p = tmp_path / "o.pfm"
    assert fileio.write_pfm(p, a) == 3
    back = fileio.read_pfm(p)
    assert back.shape == (4, 6, 3) and np.array_equal(back[..., :2], a)
    assert not back[..., 2].any()


def test_pfm_rows_bottom_to_top(tmp_path):
    a = np.array([[1.0], [2.0]])
    p = tmp_path / "r.pfm"
    fileio.write_pfm(p, a)
    body = np.frombuffer(p.read_bytes()[-8:], "<f4")
    assert body.tolist() == [2.0, 1.0]


def test_pfm_bad_file(tmp_path):
    p = tmp_path / "bad.pfm"
    p.write_bytes(b"P6\n1 1\n255\n")
    with pytest.raises(FormatError):
        fileio.read_pfm(p)
    p.write_bytes(b"Pf\n2 2\n-1.0\n" + b"\0" * 8)
    with pytest.raises(FormatError):
        fileio.read_pfm(p)


def test_depth_round_trip(tmp_path):
    z = np.array([[1.5, np.inf], [np.inf, 2.25]])
    p = tmp_path / "d.pfm"
    m = fileio.write_depth(str(p), z)
    assert m.endswith("d_mask.pgm")
    assert fileio.read_pfm(p)[0, 1] == fileio.FLOAT32_MAX
    assert np.array_equal(fileio.read_depth(str(p)), z)
    (tmp_path / "d_mask.pgm").unlink()
    assert np.array_equal(fileio.read_depth(str(p)), z)


def test_image_round_trip(tmp_path):
    img = np.linspace(0, 1, 20).reshape(4, 5)
    p = tmp_path / "i.png"
    fileio.write_image(p, img)
    assert np.abs(fileio.read_image(p) / 255 - img).max() <= 0.5 / 255 + 1e-12


def test_read_image_missing(tmp_path):
    with pytest.raises(FormatError):
        fileio.read_image(tmp_path / "nope.png")


def test_json(tmp_path):
    p = tmp_path / "x.json"
    fileio.write_json(p, {"b": 1, "a": [1.5]})
    assert p.read_text() == '{\n "a": [\n  1.5\n ],\n "b": 1\n}\n'
    p.write_text("{bad")
    with pytest.raises(FormatError):
        fileio.read_json(p)


def test_saliency_round_trip(tmp_path, rng):
    v = rng.uniform(0, 1, (6, 8)).astype(np.float32).astype(np.float64)
    t = rng.uniform(0, np.pi, (6, 8))
    o = np.stack([np.cos(t), np.sin(t)], -1).astype(np.float32).astype(np.float64)
    mask = np.ones((6, 8), bool)
    mask[0, 0] = False
    v[0, 0] = 0
    prefix = str(tmp_path / "s")
    fileio.write_saliency(prefix, SaliencyMap(v, o, mask, "MCS"), {"mode": "MCS"})
    back = fileio.read_saliency(prefix)
    assert np.array_equal(back.value, v) and np.array_equal(back.orient, o)
    assert np.array_equal(back.mask, mask) and back.source == "MCS"
