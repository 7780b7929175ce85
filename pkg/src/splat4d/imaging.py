"""PNG encode/decode helpers used at streaming and export boundaries."""

from __future__ import annotations

from io import BytesIO

import numpy as np
from PIL import Image


def encode_png(rgb8: np.ndarray) -> bytes:
    """8-bit RGB array -> PNG bytes (deterministic for identical input)."""
    buf = BytesIO()
    Image.fromarray(np.ascontiguousarray(rgb8, dtype=np.uint8), "RGB").save(buf, "PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"))
