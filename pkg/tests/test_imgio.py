"""Image file round trips and error handling."""

import numpy as np
import pytest

from hazeflow.errors import DataError
from hazeflow.imgio import load_image, save_image


def random_image(rng, h=9, w=7):
    return rng.uniform(0, 1, (1, 3, h, w)).astype(np.float32)


class TestPpm:
    def test_quantization_grid_roundtrip_exact(self, tmp_path):
        # values already on the 8-bit grid survive save/load exactly
        levels = np.arange(256, dtype=np.float32) / 255.0
        img = np.tile(levels, 3 * 2).reshape(1, 3, 2, 256)
        path = tmp_path / "grid.ppm"
        save_image(img, str(path))
        np.testing.assert_array_equal(load_image(str(path)), img)

    def test_roundtrip_quantization_bound(self, tmp_path, rng):
        img = random_image(rng, 16, 16)
        path = tmp_path / "img.ppm"
        save_image(img, str(path))
        loaded = load_image(str(path))
        assert np.abs(loaded - img).max() <= 1.0 / 510.0 + 1e-9

    def test_byte_extremes(self, tmp_path):
        img = np.zeros((1, 3, 1, 2), dtype=np.float32)
        img[0, :, 0, 1] = 1.0
        path = tmp_path / "extremes.ppm"
        save_image(img, str(path))
        loaded = load_image(str(path))
        assert loaded[0, 0, 0, 0] == 0.0
        assert loaded[0, 0, 0, 1] == 1.0

    def test_16bit_roundtrip(self, tmp_path, rng):
        img = random_image(rng, 8, 8)
        path = tmp_path / "deep.ppm"
        save_image(img, str(path), bits=16)
        loaded = load_image(str(path))
        assert np.abs(loaded - img).max() <= 1.0 / (2 * 65535) + 1e-9

    def test_comment_in_header(self, tmp_path):
        raw = b"P6\n# a comment\n2 1\n255\n" + bytes([0, 0, 0, 255, 255, 255])
        path = tmp_path / "commented.ppm"
        path.write_bytes(raw)
        img = load_image(str(path))
        assert img.shape == (1, 3, 1, 2)
        assert img[0, 0, 0, 1] == 1.0

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P5\n1 1\n255\n\x00")
        with pytest.raises(DataError):
            load_image(str(path))

    def test_truncated_pixels_rejected(self, tmp_path):
        path = tmp_path / "short.ppm"
        path.write_bytes(b"P6\n4 4\n255\n\x00\x01")
        with pytest.raises(DataError):
            load_image(str(path))


def test_missing_file():
    with pytest.raises(DataError):
        load_image("/nonexistent/never.ppm")


def test_png_roundtrip(tmp_path, rng):
    img = random_image(rng, 12, 10)
    path = tmp_path / "img.png"
    save_image(img, str(path))
    loaded = load_image(str(path))
    assert loaded.shape == img.shape
    assert np.abs(loaded - img).max() <= 1.0 / 510.0 + 1e-9


def test_save_rejects_batches(tmp_path, rng):
    batch = rng.uniform(0, 1, (2, 3, 4, 4)).astype(np.float32)
    with pytest.raises(DataError):
        save_image(batch, str(tmp_path / "batch.ppm"))
