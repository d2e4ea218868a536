"""Binary DCT filtering masks: 2-D diagonal bands and per-axis percentile bands.

Two threshold families exist. The absolute family thresholds the sum of the
zero-based 2-D spectral coordinates:

    low  : i + j <= th_lp
    high : i + j >  th_hp
    mid  : th_mp1 < i + j <= th_mp2

The percentile family thresholds each axis separately with cutoffs scaled to
the axis length, producing a (width mask, height mask) pair:

    low  : j <= pt_lp * w / 100           (and i <= pt_lp * h / 100)
    high : j >  pt_hp * w / 100
    mid  : pt_mp1 * w / 100 < j <= pt_mp2 * w / 100

Cutoff comparisons are done against the unrounded product (as 100*j <= pt*w),
so integral boundaries like pt=60, w=5 pass exactly; rounding the cutoff
first would silently change band widths there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODE_LOW = "low"
MODE_HIGH = "high"
MODE_MID = "mid"
MODES = (MODE_LOW, MODE_HIGH, MODE_MID)

KIND_ABSOLUTE = "absolute"
KIND_PERCENTILE = "percentile"

# Default thresholds, tuned for 64x64 latents (absolute) and any size (percentile).
DEFAULT_TH_LP = 80
DEFAULT_TH_HP = 5
DEFAULT_TH_MP = (5, 80)
DEFAULT_PT_LP = 60.0
DEFAULT_PT_HP = 5.0
DEFAULT_PT_MP = (7.0, 50.0)


@dataclass(frozen=True)
class BandSpec:
    """A band selection: one active mode plus the thresholds of one family."""

    mode: str
    kind: str = KIND_PERCENTILE
    th_lp: int = DEFAULT_TH_LP
    th_hp: int = DEFAULT_TH_HP
    th_mp1: int = DEFAULT_TH_MP[0]
    th_mp2: int = DEFAULT_TH_MP[1]
    pt_lp: float = DEFAULT_PT_LP
    pt_hp: float = DEFAULT_PT_HP
    pt_mp1: float = DEFAULT_PT_MP[0]
    pt_mp2: float = DEFAULT_PT_MP[1]

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.kind not in (KIND_ABSOLUTE, KIND_PERCENTILE):
            raise ValueError(f"kind must be absolute or percentile, got {self.kind!r}")
        if self.kind == KIND_ABSOLUTE:
            if self.mode == MODE_MID and not self.th_mp1 < self.th_mp2:
                raise ValueError(f"mid band needs th_mp1 < th_mp2, got ({self.th_mp1}, {self.th_mp2})")
        else:
            for name in ("pt_lp", "pt_hp", "pt_mp1", "pt_mp2"):
                value = getattr(self, name)
                if not 0.0 <= value <= 100.0:
                    raise ValueError(f"{name}={value} outside [0, 100]")
            if self.mode == MODE_MID and not self.pt_mp1 < self.pt_mp2:
                raise ValueError(f"mid band needs pt_mp1 < pt_mp2, got ({self.pt_mp1}, {self.pt_mp2})")

    @classmethod
    def absolute(cls, mode: str, **thresholds) -> "BandSpec":
        return cls(mode=mode, kind=KIND_ABSOLUTE, **thresholds)

    @classmethod
    def percentile(cls, mode: str, **thresholds) -> "BandSpec":
        return cls(mode=mode, kind=KIND_PERCENTILE, **thresholds)


def _coordinate_sums(h: int, w: int) -> np.ndarray:
    return np.add.outer(np.arange(h), np.arange(w))


def _check_shape(h: int, w: int) -> None:
    if h < 1 or w < 1:
        raise ValueError(f"mask shape ({h}, {w}) must be positive")


def make_mask_2d(spec: BandSpec, h: int, w: int) -> np.ndarray:
    """Absolute-threshold diagonal band mask of shape (h, w)."""
    if spec.kind != KIND_ABSOLUTE:
        raise ValueError("make_mask_2d needs an absolute-threshold BandSpec")
    _check_shape(h, w)
    sums = _coordinate_sums(h, w)
    if spec.mode == MODE_LOW:
        keep = sums <= spec.th_lp
    elif spec.mode == MODE_HIGH:
        keep = sums > spec.th_hp
    else:
        keep = (sums > spec.th_mp1) & (sums <= spec.th_mp2)
    return keep.astype(np.float64)


def _axis_pass(spec: BandSpec, length: int) -> np.ndarray:
    idx = 100.0 * np.arange(length)
    if spec.mode == MODE_LOW:
        return idx <= spec.pt_lp * length
    if spec.mode == MODE_HIGH:
        return idx > spec.pt_hp * length
    return (idx > spec.pt_mp1 * length) & (idx <= spec.pt_mp2 * length)


def make_mask_pair_1d(spec: BandSpec, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Percentile-threshold mask pair (width mask, height mask), each (h, w).

    The width mask is constant over rows and filters columns; the height
    mask is constant over columns and filters rows.
    """
    if spec.kind != KIND_PERCENTILE:
        raise ValueError("make_mask_pair_1d needs a percentile-threshold BandSpec")
    _check_shape(h, w)
    cols = _axis_pass(spec, w).astype(np.float64)
    rows = _axis_pass(spec, h).astype(np.float64)
    mask_w = np.broadcast_to(cols, (h, w)).copy()
    mask_h = np.broadcast_to(rows.reshape(-1, 1), (h, w)).copy()
    return mask_w, mask_h


def union_region(mask_w: np.ndarray, mask_h: np.ndarray) -> np.ndarray:
    """2-D spectral region selected by a cascaded per-axis substitution.

    Applying the width mask then the height mask overwrites every
    coefficient whose column passes the width mask or whose row passes the
    height mask, i.e. the elementwise union of the pair.
    """
    return np.maximum(mask_w, mask_h)


def band_regions(spec: BandSpec, h: int, w: int) -> dict[str, np.ndarray]:
    """The low/mid/high 2-D spectral regions implied by a spec's thresholds.

    For the absolute family these are the diagonal masks themselves; for the
    percentile family each region is the union region of that mode's pair.
    Computed directly from the thresholds so a spec whose inactive mid bounds
    are degenerate still yields (empty) regions instead of an error.
    """
    _check_shape(h, w)
    if spec.kind == KIND_ABSOLUTE:
        sums = _coordinate_sums(h, w)
        return {
            MODE_LOW: (sums <= spec.th_lp).astype(np.float64),
            MODE_MID: ((sums > spec.th_mp1) & (sums <= spec.th_mp2)).astype(np.float64),
            MODE_HIGH: (sums > spec.th_hp).astype(np.float64),
        }
    rows_idx = 100.0 * np.arange(h).reshape(-1, 1)
    cols_idx = 100.0 * np.arange(w).reshape(1, -1)
    return {
        MODE_LOW: ((rows_idx <= spec.pt_lp * h) | (cols_idx <= spec.pt_lp * w))
        .astype(np.float64),
        MODE_MID: (((rows_idx > spec.pt_mp1 * h) & (rows_idx <= spec.pt_mp2 * h))
                   | ((cols_idx > spec.pt_mp1 * w) & (cols_idx <= spec.pt_mp2 * w)))
        .astype(np.float64),
        MODE_HIGH: ((rows_idx > spec.pt_hp * h) | (cols_idx > spec.pt_hp * w))
        .astype(np.float64),
    }
