import numpy as np
import pytest

from proxmag.cimg import MAGIC, read_cimg, write_cimg
from proxmag.core import ComplexImage


def test_roundtrip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    img = ComplexImage(rng.standard_normal((3, 4, 5)) + 1j * rng.standard_normal((3, 4, 5)))
    path = tmp_path / "x.cimg"
    write_cimg(path, img)
    back = read_cimg(path)
    assert back.shape == img.shape
    assert np.array_equal(back.data, img.data)


def test_write_accepts_plain_arrays(tmp_path):
    path = tmp_path / "v.cimg"
    write_cimg(path, np.array([1 + 2j, 3 - 4j]))
    assert read_cimg(path).shape == (1, 1, 2)


def test_header_layout(tmp_path):
    path = tmp_path / "h.cimg"
    write_cimg(path, np.zeros((2, 3, 4), dtype=complex))
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    assert np.frombuffer(raw[8:20], dtype="<u4").tolist() == [2, 3, 4]
    assert len(raw) == 20 + 16 * 24


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.cimg"
    path.write_bytes(b"NOTCIMG0" + b"\x00" * 32)
    with pytest.raises(ValueError, match="not a CIMG"):
        read_cimg(path)


def test_truncated_rejected(tmp_path):
    path = tmp_path / "trunc.cimg"
    write_cimg(path, np.ones((1, 2, 2), dtype=complex))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="truncated"):
        read_cimg(path)
