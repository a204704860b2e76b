import numpy as np
import pytest

from amfm_faces.errors import FormatError
from amfm_faces.imageio import read_gray, read_pnm, rescale_to_u8, to_gray, write_pgm, write_ppm


def test_pgm_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (7, 11), dtype=np.uint8)
    write_pgm(tmp_path / "a.pgm", img)
    np.testing.assert_array_equal(read_pnm(tmp_path / "a.pgm"), img)


def test_pgm_16bit_round_trip(tmp_path, rng):
    img = rng.integers(0, 65536, (5, 4)).astype(np.uint16)
    write_pgm(tmp_path / "a.pgm", img, maxval=65535)
    np.testing.assert_array_equal(read_pnm(tmp_path / "a.pgm"), img)


def test_ppm_round_trip_and_luma(tmp_path, rng):
    img = rng.integers(0, 256, (6, 5, 3), dtype=np.uint8)
    write_ppm(tmp_path / "a.ppm", img)
    np.testing.assert_array_equal(read_pnm(tmp_path / "a.ppm"), img)
    gray = read_gray(tmp_path / "a.ppm")
    expected = 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
    np.testing.assert_allclose(gray, expected, rtol=1e-12)


def test_header_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n2 1\n# another\n255\n\x01\x02")
    np.testing.assert_array_equal(read_pnm(path), [[1, 2]])


@pytest.mark.parametrize(
    "data", [b"P2\n2 1\n255\n12", b"P5\n2 1\n255\n\x01", b"P5\n2", b"P5\nx 1\n255\n\x01\x02", b"P5\n2 1\n0\n\x01\x02"]
)
def test_bad_files(tmp_path, data):
    path = tmp_path / "bad.pgm"
    path.write_bytes(data)
    with pytest.raises(FormatError):
        read_pnm(path)


def test_rescale_and_gray():
    np.testing.assert_array_equal(rescale_to_u8([[1.0, 3.0]]), [[0, 255]])
    assert not rescale_to_u8(np.full((2, 2), 4.0)).any()
    np.testing.assert_array_equal(to_gray(np.ones((2, 2))), np.ones((2, 2)))
