"""PNG/JPEG ingestion and PNG export for standalone slice images."""
from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .volume_io import SliceImage


def decode_image(data: bytes) -> SliceImage:
    """Decode PNG or JPEG bytes to a grayscale [0,1] slice."""
    img = Image.open(io.BytesIO(data))
    img.load()
    gray = img.convert("L")
    pixels = np.asarray(gray, dtype=np.float32) / 255.0
    return SliceImage(pixels=pixels)


def load_image(path) -> SliceImage:
    with open(path, "rb") as f:
        return decode_image(f.read())


def encode_png(image_or_array) -> bytes:
    pixels = (
        image_or_array.pixels
        if isinstance(image_or_array, SliceImage)
        else np.asarray(image_or_array)
    )
    if pixels.dtype == bool:
        arr = (pixels * 255).astype(np.uint8)
    else:
        arr = np.clip(np.asarray(pixels, dtype=np.float64) * 255.0, 0, 255).astype(
            np.uint8
        )
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def save_png(image_or_array, path) -> None:
    with open(path, "wb") as f:
        f.write(encode_png(image_or_array))
