"""Binary PNM image ingestion and emission.

Supported formats: P5 (8-bit grayscale) and P6 (8-bit RGB), max value 255.
Pixels map to float32 in [0, 1]; tensors are NCHW with batch 1. Anything
else is converted externally (e.g. ``convert in.jpg out.ppm``).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError
from .ops import DTYPE, tensor


def _read_header_tokens(data: bytes, count: int, start: int) -> tuple[list[bytes], int]:
    """Read whitespace-separated tokens, skipping # comments."""
    tokens = []
    i = start
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise DataError("truncated PNM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i


def read_pnm_size(path) -> tuple[int, int]:
    """Return (width, height) from the header without decoding pixels."""
    data = Path(path).read_bytes()[:4096]
    if data[:2] not in (b"P5", b"P6"):
        raise DataError(f"{path}: not a binary PNM (P5/P6) file")
    tokens, _ = _read_header_tokens(data, 2, 2)
    return int(tokens[0]), int(tokens[1])


def read_pnm(path) -> np.ndarray:
    """Load a P5/P6 file as a (1, c, h, w) float32 tensor in [0, 1]."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise DataError(f"{path}: not a binary PNM (P5/P6) file")
    channels = 1 if magic == b"P5" else 3
    tokens, i = _read_header_tokens(data, 3, 2)
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PNM supported (maxval 255), got {maxval}")
    i += 1  # single whitespace byte after maxval
    payload = data[i : i + width * height * channels]
    if len(payload) != width * height * channels:
        raise DataError(f"{path}: pixel payload truncated")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    arr = arr.transpose(2, 0, 1)[None].astype(DTYPE) / 255.0
    return np.ascontiguousarray(arr)


def write_pnm(path, image: np.ndarray) -> None:
    """Write a (1, 1|3, h, w) tensor in [0, 1] as P5 or P6."""
    image = tensor(image)
    n, c, h, w = image.shape
    if n != 1 or c not in (1, 3):
        raise DataError(f"cannot encode shape {image.shape} as PNM")
    magic = b"P5" if c == 1 else b"P6"
    pixels = np.rint(np.clip(image[0], 0.0, 1.0) * 255.0).astype(np.uint8)
    payload = pixels.transpose(1, 2, 0).tobytes()
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(payload)
