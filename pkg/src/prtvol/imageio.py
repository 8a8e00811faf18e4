"""PFM and PPM file readers and writers.

PFM rasters are stored bottom-to-top per the de facto format, so these
helpers flip on read and write; in-memory arrays always have row 0 at the
top. A negative scale in the header means little-endian floats. Files are
written little-endian with scale -1.0.
"""

import struct

import numpy as np


class PfmError(ValueError):
    pass


def _read_token(f):
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise PfmError("unexpected end of file in PFM header")
        if c in b" \t\n\r":
            if tok:
                return tok
            continue
        tok += c


def read_pfm(path, require_finite=True):
    """Read a PFM file into a float64 array, shape (H, W, 3) or (H, W).

    Args:
        path: file to read.
        require_finite: reject NaN or infinite samples, reporting the
            image coordinates of the first offender.
    """
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic not in (b"PF", b"Pf"):
            raise PfmError(f"{path}: bad PFM magic {magic!r}, expected 'PF' or 'Pf'")
        channels = 3 if magic == b"PF" else 1
        try:
            width = int(_read_token(f))
            height = int(_read_token(f))
            scale = float(_read_token(f))
        except ValueError as e:
            raise PfmError(f"{path}: malformed PFM dimensions or scale header") from e
        if width <= 0 or height <= 0:
            raise PfmError(f"{path}: invalid PFM size {width}x{height}")
        if scale == 0.0:
            raise PfmError(f"{path}: PFM scale must be non-zero")
        count = width * height * channels
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise PfmError(f"{path}: truncated PFM raster")
    dtype = "<f4" if scale < 0.0 else ">f4"
    data = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    if abs(scale) != 1.0:
        data = data * abs(scale)
    if channels == 3:
        img = data.reshape(height, width, 3)
    else:
        img = data.reshape(height, width)
    img = img[::-1].copy()
    if require_finite and not np.all(np.isfinite(img)):
        bad = np.argwhere(~np.isfinite(img))
        y, x = int(bad[0][0]), int(bad[0][1])
        raise PfmError(f"{path}: non-finite sample at pixel (x={x}, y={y})")
    return img


def write_pfm(path, img):
    """Write a (H, W, 3) or (H, W) float array as little-endian PFM."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 3 and img.shape[2] == 3:
        magic = b"PF"
    elif img.ndim == 2:
        magic = b"Pf"
    else:
        raise ValueError(f"expected (H, W, 3) or (H, W) array, got {img.shape}")
    height, width = img.shape[0], img.shape[1]
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(img[::-1], dtype="<f4").tobytes())


def write_ppm(path, img):
    """Write uint8 pixels as binary PPM (P6 for color, P5 for gray)."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ValueError("PPM writer expects uint8 pixels")
    if img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    elif img.ndim == 2:
        magic = b"P5"
    else:
        raise ValueError(f"expected (H, W, 3) or (H, W) array, got {img.shape}")
    height, width = img.shape[0], img.shape[1]
    with open(path, "wb") as f:
        f.write(magic + b"\n" + f"{width} {height}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(img).tobytes())


def read_ppm(path):
    """Read a binary P6/P5 PPM back into a uint8 array."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic not in (b"P6", b"P5"):
            raise PfmError(f"{path}: bad PPM magic {magic!r}")
        width = int(_read_token(f))
        height = int(_read_token(f))
        maxval = int(_read_token(f))
        if maxval != 255:
            raise PfmError(f"{path}: only maxval 255 supported")
        channels = 3 if magic == b"P6" else 1
        raw = f.read(width * height * channels)
    arr = np.frombuffer(raw, dtype=np.uint8)
    if channels == 3:
        return arr.reshape(height, width, 3).copy()
    return arr.reshape(height, width).copy()
