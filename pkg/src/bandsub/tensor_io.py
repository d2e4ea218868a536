"""Latent feature tensors, their on-disk format, and pixel-mask downsampling.

A latent feature is a plain ``numpy`` array of shape ``(channels, height,
width)`` holding finite float64 values. Everything in this package passes
these arrays around by value; no function mutates its inputs.

File format (bit-exact, little-endian):

========  ====  =====================================================
offset    size  contents
========  ====  =====================================================
0         8     magic ``b"FBSTNSR1"``
8         24    channels, height, width as three unsigned 64-bit ints
32        16    reserved, written as zeros
48        8chw  payload: float64 values in (channel, row, column) order
========  ====  =====================================================
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FBSTNSR1"
HEADER_SIZE = 48
_HEADER_STRUCT = struct.Struct("<8sQQQ16s")


class TensorFormatError(Exception):
    """A tensor file violates the on-disk format."""


class BadMagicError(TensorFormatError):
    """The file does not start with the expected magic bytes."""


class TruncatedPayloadError(TensorFormatError):
    """The file ends before the declared payload (or header) is complete."""


class PayloadSizeError(TensorFormatError):
    """The payload size disagrees with the shape declared in the header."""


def validate_feature(z, name: str = "feature") -> np.ndarray:
    """Check shape and finiteness of a latent feature; return it as float64.

    Accepts anything array-like of shape (c, h, w) with c >= 1 and
    h, w >= 2. Raises ValueError otherwise.
    """
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 3-dimensional (c, h, w), got ndim={arr.ndim}")
    c, h, w = arr.shape
    if c < 1 or h < 2 or w < 2:
        raise ValueError(f"{name} shape {arr.shape} violates c >= 1, h >= 2, w >= 2")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def validate_mask(m, name: str = "mask") -> np.ndarray:
    """Check that ``m`` is a 2-D binary (0/1) mask; return it as float64."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional (h, w), got ndim={arr.ndim}")
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError(f"{name} must be binary (0/1 valued)")
    return arr


def save_tensor(z, path) -> None:
    """Write a latent feature to ``path`` in the binary tensor format.

    Refuses non-finite data. Loading the written file returns a
    bit-identical array.
    """
    arr = validate_feature(z)
    c, h, w = arr.shape
    header = _HEADER_STRUCT.pack(MAGIC, c, h, w, b"")
    payload = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def load_tensor(path) -> np.ndarray:
    """Read a latent feature written by :func:`save_tensor`.

    Raises BadMagicError, TruncatedPayloadError, or PayloadSizeError for
    the corresponding corruptions, and TensorFormatError for an invalid
    declared shape or non-finite payload.
    """
    with open(path, "rb") as f:
        header = f.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE:
            raise TruncatedPayloadError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
        magic, c, h, w, _reserved = _HEADER_STRUCT.unpack(header)
        if magic != MAGIC:
            raise BadMagicError(f"{path}: bad magic {magic!r}")
        if c < 1 or h < 2 or w < 2:
            raise TensorFormatError(f"{path}: header declares invalid shape ({c}, {h}, {w})")
        expected = c * h * w * 8
        payload = f.read()
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, header declares {expected}"
        )
    if len(payload) > expected:
        raise PayloadSizeError(
            f"{path}: payload has {len(payload)} bytes, header declares {expected}"
        )
    arr = np.frombuffer(payload, dtype="<f8").reshape(c, h, w).astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise TensorFormatError(f"{path}: payload contains non-finite values")
    return arr


def downsample_mask(src, target_h: int, target_w: int) -> np.ndarray:
    """Nearest-neighbor downsample of a binary pixel mask to (target_h, target_w).

    Each output cell takes the source pixel nearest to its center, so the
    result stays binary and an all-ones input maps to an all-ones output.
    Only downscaling is supported.
    """
    arr = validate_mask(src, "source mask")
    src_h, src_w = arr.shape
    if target_h < 1 or target_w < 1:
        raise ValueError(f"target shape ({target_h}, {target_w}) must be positive")
    if target_h > src_h or target_w > src_w:
        raise ValueError(
            f"cannot upsample mask from ({src_h}, {src_w}) to ({target_h}, {target_w})"
        )
    rows = np.minimum((np.arange(target_h) + 0.5) * src_h / target_h, src_h - 1).astype(np.int64)
    cols = np.minimum((np.arange(target_w) + 0.5) * src_w / target_w, src_w - 1).astype(np.int64)
    return arr[np.ix_(rows, cols)]
