import numpy as np
import pytest
from PIL import Image

from lensqc import load_image, save_gray_png, to_gray
from lensqc.errors import ImageTooSmallError, UnsupportedFormatError


def test_gray_endpoints(tmp_path):
    arr = np.zeros((16, 16), dtype=np.uint8)
    arr[0, 0] = 255
    Image.fromarray(arr, mode="L").save(tmp_path / "g.png")
    img = load_image(tmp_path / "g.png")
    assert img[0, 0] == 1.0
    assert img[1, 1] == 0.0


def test_rgb_red_pixel_luma(tmp_path):
    arr = np.zeros((16, 16, 3), dtype=np.uint8)
    arr[..., 0] = 255
    Image.fromarray(arr, mode="RGB").save(tmp_path / "red.png")
    img = load_image(tmp_path / "red.png")
    assert abs(img[3, 3] - 0.299) < 1e-6


def test_to_gray_values():
    assert abs(to_gray(1.0, 1.0, 1.0) - 1.0) < 1e-9
    assert to_gray(0.0, 0.0, 0.0) == 0.0
    assert to_gray(0.0, 1.0, 0.0) == 0.587


def test_to_gray_stays_in_unit_interval(rng):
    for _ in range(200):
        r, g, b = rng.uniform(0, 1, 3)
        v = to_gray(r, g, b)
        assert 0.0 <= v <= 1.0


def test_too_small_rejected(tmp_path):
    arr = np.zeros((5, 20), dtype=np.uint8)
    Image.fromarray(arr, mode="L").save(tmp_path / "tiny.png")
    with pytest.raises(ImageTooSmallError):
        load_image(tmp_path / "tiny.png")


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_image("/nonexistent/nowhere.png")


def test_unsupported_format(tmp_path):
    bad = tmp_path / "fake.png"
    bad.write_bytes(b"not an image at all")
    with pytest.raises(UnsupportedFormatError):
        load_image(bad)


def test_bmp_rejected(tmp_path):
    arr = np.zeros((16, 16), dtype=np.uint8)
    Image.fromarray(arr, mode="L").save(tmp_path / "img.bmp", format="BMP")
    with pytest.raises(UnsupportedFormatError):
        load_image(tmp_path / "img.bmp")


def test_jpeg_loads(tmp_path, textured):
    save = Image.fromarray((textured * 255).astype(np.uint8), mode="L")
    save.save(tmp_path / "t.jpg", format="JPEG", quality=95)
    img = load_image(tmp_path / "t.jpg")
    assert img.shape == textured.shape
    assert 0.0 <= img.min() and img.max() <= 1.0


def test_16bit_png(tmp_path):
    arr = np.full((16, 16), 65535, dtype=np.uint16)
    Image.fromarray(arr).save(tmp_path / "deep.png")
    img = load_image(tmp_path / "deep.png")
    assert img.max() == 1.0


def test_save_load_roundtrip_within_quantization(tmp_path, rng):
    img = rng.uniform(0, 1, (24, 24))
    save_gray_png(img, tmp_path / "rt.png")
    back = load_image(tmp_path / "rt.png")
    # 8-bit quantization bound
    assert np.abs(back - img).max() <= 1.0 / (2 * 255) + 1e-12
