"""Binary NetPBM image I/O (P5 grayscale, P6 color), maxval 255 only.

Written headers are exactly ``P5\\n<width> <height>\\n255\\n`` followed by
the raster, so files are byte-reproducible.  The reader accepts arbitrary
header whitespace and ``#`` comments but insists on maxval 255 and a
complete raster, and every failure names the offending file.
"""

from __future__ import annotations

import numpy as np


class NetpbmError(IOError):
    """Raised for malformed or unsupported NetPBM files."""


def _to_bytes(values: np.ndarray) -> np.ndarray:
    """Round half up from [0, 1] to uint8."""
    return np.clip(np.floor(values * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """Write one [H, W] array with values in [0, 1] as binary P5."""
    if image.ndim != 2:
        raise NetpbmError(f"{path}: P5 needs a 2-d array, got shape {image.shape}")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(_to_bytes(image).tobytes())


def write_ppm(path, image: np.ndarray) -> None:
    """Write one [3, H, W] array with values in [0, 1] as binary P6."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise NetpbmError(f"{path}: P6 needs a [3, H, W] array, got shape {image.shape}")
    _, h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(_to_bytes(image).transpose(1, 2, 0).tobytes())


def _read_header_tokens(blob: bytes, path) -> tuple:
    """Pull magic, width, height, maxval; return them and the raster offset."""
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(blob):
            raise NetpbmError(f"{path}: header ended before width/height/maxval")
        ch = blob[i : i + 1]
        if ch == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            start = i
            while i < len(blob) and not blob[i : i + 1].isspace() and blob[i : i + 1] != b"#":
                i += 1
            tokens.append(blob[start:i])
    # exactly one whitespace byte separates the maxval from the raster
    if i >= len(blob) or not blob[i : i + 1].isspace():
        raise NetpbmError(f"{path}: missing separator before raster")
    return tokens, i + 1


def read_netpbm(path) -> np.ndarray:
    """Read P5 into [H, W] or P6 into [3, H, W], scaled to [0, 1] float64."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens, offset = _read_header_tokens(blob, path)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"{path}: unsupported magic {magic!r}, need P5 or P6")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise NetpbmError(f"{path}: non-numeric header fields {tokens[1:]}") from None
    if width <= 0 or height <= 0:
        raise NetpbmError(f"{path}: bad extents {width}x{height}")
    if maxval != 255:
        raise NetpbmError(f"{path}: unsupported maxval {maxval}, need 255")
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    raster = blob[offset:]
    if len(raster) != expected:
        raise NetpbmError(
            f"{path}: raster holds {len(raster)} bytes, expected {expected}"
        )
    data = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 1:
        return data.reshape(height, width)
    return data.reshape(height, width, 3).transpose(2, 0, 1)
