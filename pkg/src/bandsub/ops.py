"""Feature-space operators: spectral band substitution, masked blending, and
the randomized spatial transform used to decouple structure from style.

All operators are pure; outputs are fresh arrays and identical inputs give
bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dct import AXIS_HEIGHT, AXIS_WIDTH, dct1d_axis, dct2d, idct1d_axis, idct2d
from .tensor_io import validate_feature, validate_mask

RESIZE_BILINEAR = "bilinear"
RESIZE_NEAREST = "nearest"


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"feature shapes differ: {a.shape} vs {b.shape}")


def _check_mask_shape(mask: np.ndarray, z: np.ndarray) -> None:
    if mask.shape != z.shape[1:]:
        raise ValueError(f"mask shape {mask.shape} does not match feature spatial shape {z.shape[1:]}")


def substitute_band_2d(guide, sample, mask) -> np.ndarray:
    """Replace the masked 2-D DCT band of ``sample`` with that of ``guide``.

    Returns IDCT2D( DCT2D(guide)*mask + DCT2D(sample)*(1 - mask) ).
    """
    guide = validate_feature(guide, "guide")
    sample = validate_feature(sample, "sample")
    _check_same_shape(guide, sample)
    mask = validate_mask(mask)
    _check_mask_shape(mask, sample)
    spectrum = np.where(mask == 1.0, dct2d(guide), dct2d(sample))
    return idct2d(spectrum)


def substitute_band_axes(guide, sample, mask_w, mask_h) -> np.ndarray:
    """Cascaded per-axis band substitution (width pass, then height pass).

    Both passes take the guide's spectrum from the *original* guide; the
    height pass transforms the width-updated sample. In the 2-D spectrum
    this overwrites exactly the union region of the two masks.
    """
    guide = validate_feature(guide, "guide")
    sample = validate_feature(sample, "sample")
    _check_same_shape(guide, sample)
    mask_w = validate_mask(mask_w, "mask_w")
    mask_h = validate_mask(mask_h, "mask_h")
    _check_mask_shape(mask_w, sample)
    _check_mask_shape(mask_h, sample)

    spec_w = np.where(mask_w == 1.0, dct1d_axis(guide, AXIS_WIDTH), dct1d_axis(sample, AXIS_WIDTH))
    updated = idct1d_axis(spec_w, AXIS_WIDTH)
    spec_h = np.where(mask_h == 1.0, dct1d_axis(guide, AXIS_HEIGHT), dct1d_axis(updated, AXIS_HEIGHT))
    return idct1d_axis(spec_h, AXIS_HEIGHT)


def blend_masked(a, b, mask) -> np.ndarray:
    """Spatial blend a*mask + b*(1-mask), mask broadcast over channels.

    Realized as exact selection, so elements are copied bit-for-bit from
    their source side.
    """
    a = validate_feature(a, "a")
    b = validate_feature(b, "b")
    _check_same_shape(a, b)
    mask = validate_mask(mask)
    _check_mask_shape(mask, a)
    return np.where(mask == 1.0, a, b)


@dataclass(frozen=True)
class SpatialTransformParams:
    """One draw of the spatial transform: rotate, flip, mirror-expand, crop.

    Crop coordinates live on the mirror-expanded grid of the *rotated*
    feature (shape (3*h', 3*w') where (h', w') is the post-rotation shape).
    A single draw is reused unchanged at every trajectory step.
    """

    rotation_deg: int
    hflip: bool
    vflip: bool
    crop_top: int
    crop_left: int
    crop_h: int
    crop_w: int

    def __post_init__(self):
        if self.rotation_deg not in (0, 90, 180, 270):
            raise ValueError(f"rotation must be one of 0/90/180/270, got {self.rotation_deg}")
        for name in ("crop_top", "crop_left", "crop_h", "crop_w"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def identity_transform(h: int, w: int) -> SpatialTransformParams:
    """Params whose application reproduces the input exactly: no rotation or
    flip, crop equal to the center tile of the expanded grid."""
    return SpatialTransformParams(
        rotation_deg=0, hflip=False, vflip=False,
        crop_top=h, crop_left=w, crop_h=h, crop_w=w,
    )


def sample_spatial_transform(h: int, w: int, seed: int) -> SpatialTransformParams:
    """Draw transform parameters for an (h, w) feature, deterministic in seed.

    Rotation is uniform over the four right angles, each flip fires with
    probability 1/2, the crop height/width are uniform over [h', 3h'] and
    [w', 3w'] (post-rotation shape), and the crop position is uniform over
    all placements inside the expanded grid. RNG is NumPy's PCG64.
    """
    if h < 2 or w < 2:
        raise ValueError(f"feature shape ({h}, {w}) must be at least 2x2")
    rng = np.random.default_rng(seed)
    rotation = int(rng.integers(0, 4)) * 90
    hflip = bool(rng.integers(0, 2))
    vflip = bool(rng.integers(0, 2))
    rot_h, rot_w = (w, h) if rotation in (90, 270) else (h, w)
    crop_h = int(rng.integers(rot_h, 3 * rot_h + 1))
    crop_w = int(rng.integers(rot_w, 3 * rot_w + 1))
    crop_top = int(rng.integers(0, 3 * rot_h - crop_h + 1))
    crop_left = int(rng.integers(0, 3 * rot_w - crop_w + 1))
    return SpatialTransformParams(
        rotation_deg=rotation, hflip=hflip, vflip=vflip,
        crop_top=crop_top, crop_left=crop_left, crop_h=crop_h, crop_w=crop_w,
    )


def mirror_expand(z) -> np.ndarray:
    """Expand (c, h, w) to (c, 3h, 3w) by mirror reflection with border
    continuity: adjacent tiles share their edge values."""
    arr = validate_feature(z)
    _, h, w = arr.shape
    return np.pad(arr, ((0, 0), (h, h), (w, w)), mode="symmetric")


def _resize_axis_indices(src_len: int, dst_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel-center sampling; src == dst gives exact integer hits.
    centers = (np.arange(dst_len) + 0.5) * (src_len / dst_len) - 0.5
    centers = np.clip(centers, 0.0, src_len - 1.0)
    lo = np.floor(centers).astype(np.int64)
    hi = np.minimum(lo + 1, src_len - 1)
    frac = centers - lo
    return lo, hi, frac


def _resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    _, src_h, src_w = arr.shape
    row_lo, row_hi, row_frac = _resize_axis_indices(src_h, out_h)
    col_lo, col_hi, col_frac = _resize_axis_indices(src_w, out_w)
    top = arr[:, row_lo, :]
    bottom = arr[:, row_hi, :]
    rows = top + (bottom - top) * row_frac.reshape(1, -1, 1)
    left = rows[:, :, col_lo]
    right = rows[:, :, col_hi]
    return np.ascontiguousarray(left + (right - left) * col_frac.reshape(1, 1, -1))


def _resize_nearest(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    _, src_h, src_w = arr.shape
    rows = np.minimum((np.arange(out_h) + 0.5) * src_h / out_h, src_h - 1).astype(np.int64)
    cols = np.minimum((np.arange(out_w) + 0.5) * src_w / out_w, src_w - 1).astype(np.int64)
    return np.ascontiguousarray(arr[:, rows, :][:, :, cols])


def apply_spatial_transform(z, params: SpatialTransformParams, resize: str = RESIZE_BILINEAR) -> np.ndarray:
    """Apply rotate -> hflip -> vflip -> mirror-expand -> crop -> resize.

    The output has the input's shape and its values stay inside the input's
    value range (mirroring and interpolation cannot extrapolate).
    """
    arr = validate_feature(z)
    _, h, w = arr.shape
    if resize not in (RESIZE_BILINEAR, RESIZE_NEAREST):
        raise ValueError(f"resize must be {RESIZE_BILINEAR!r} or {RESIZE_NEAREST!r}, got {resize!r}")

    out = np.rot90(arr, k=params.rotation_deg // 90, axes=(1, 2))
    if params.hflip:
        out = out[:, :, ::-1]
    if params.vflip:
        out = out[:, ::-1, :]

    rot_h, rot_w = out.shape[1], out.shape[2]
    if not rot_h <= params.crop_h <= 3 * rot_h:
        raise ValueError(f"crop_h={params.crop_h} outside [{rot_h}, {3 * rot_h}]")
    if not rot_w <= params.crop_w <= 3 * rot_w:
        raise ValueError(f"crop_w={params.crop_w} outside [{rot_w}, {3 * rot_w}]")
    if params.crop_top + params.crop_h > 3 * rot_h or params.crop_left + params.crop_w > 3 * rot_w:
        raise ValueError("crop window extends outside the mirror-expanded grid")

    expanded = mirror_expand(out)
    patch = expanded[:, params.crop_top:params.crop_top + params.crop_h,
                     params.crop_left:params.crop_left + params.crop_w]
    if resize == RESIZE_BILINEAR:
        return _resize_bilinear(np.ascontiguousarray(patch), h, w)
    return _resize_nearest(np.ascontiguousarray(patch), h, w)
