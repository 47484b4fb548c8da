"""Image file I/O.

Binary PPM (P6) is read and written natively, 8- and 16-bit; other formats
(PNG etc.) go through Pillow. Pixels are normalized to [0, 1] float32 on
load, shaped (1, 3, H, W).
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DataError
from .tensor import Tensor


def _read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise DataError(f"{path}: not a binary PPM (P6) file")

    # header tokens may be separated by whitespace and '#' comments
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PPM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval

    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise DataError(f"{path}: malformed PPM header") from exc
    if maxval <= 0 or maxval >= 65536:
        raise DataError(f"{path}: unsupported maxval {maxval}")

    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    count = width * height * 3
    try:
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    except ValueError as exc:
        raise DataError(f"{path}: truncated pixel data") from exc
    img = raw.reshape(height, width, 3).astype(np.float32) / maxval
    return img


def load_image(path: str) -> np.ndarray:
    """Load an RGB image file as a (1, 3, H, W) float32 array in [0, 1]."""
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    ext = os.path.splitext(path)[1].lower()
    if ext in (".ppm", ".pnm"):
        img = _read_ppm(path)
    else:
        try:
            from PIL import Image
        except ImportError as exc:
            raise DataError(
                f"{path}: Pillow is required for non-PPM formats") from exc
        try:
            with Image.open(path) as im:
                img = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        except DataError:
            raise
        except Exception as exc:
            raise DataError(f"{path}: unreadable image ({exc})") from exc
    return np.ascontiguousarray(img.transpose(2, 0, 1)[None])


def _to_hwc(image) -> np.ndarray:
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise DataError("can only save a single image, not a batch")
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DataError(f"expected a (3, H, W) image, got shape {arr.shape}")
    return arr.transpose(1, 2, 0)


def save_image(image, path: str, bits: int = 8) -> None:
    """Save a [0, 1] image. PPM supports 8 or 16 bits; PNG and friends use 8."""
    hwc = np.clip(_to_hwc(image), 0.0, 1.0)
    ext = os.path.splitext(path)[1].lower()
    if ext in (".ppm", ".pnm"):
        if bits == 8:
            maxval, dtype = 255, np.uint8
        elif bits == 16:
            maxval, dtype = 65535, np.dtype(">u2")
        else:
            raise DataError("PPM bit depth must be 8 or 16")
        quantized = np.rint(hwc.astype(np.float64) * maxval).astype(dtype)
        h, w = hwc.shape[:2]
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n{maxval}\n".encode("ascii"))
            fh.write(quantized.tobytes())
    else:
        try:
            from PIL import Image
        except ImportError as exc:
            raise DataError(
                f"{path}: Pillow is required for non-PPM formats") from exc
        quantized = np.rint(hwc.astype(np.float64) * 255).astype(np.uint8)
        Image.fromarray(quantized, mode="RGB").save(path)
