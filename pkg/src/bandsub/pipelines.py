"""End-to-end text-driven translation pipelines in latent space.

Two variants share the same skeleton: invert the source feature to noise
under the null conditioning, then run a guided sampling trajectory from a
seeded Gaussian draw, transplanting a spectral band from a guiding feature
into the sampling feature at every step of the early section (down to the
switch step), and sampling freely afterwards.

* variant "recon": a long inversion provides the starting noise for a
  *reconstruction* trajectory that is advanced in parallel with sampling;
  its features guide a 2-D band substitution with absolute thresholds.
* variant "inversion": the inversion trajectory itself is stored and
  replayed in reverse as the guiding trajectory (no reconstruction), and
  the substitution is the cascaded per-axis form with percentile
  thresholds. Localized editing and style-only generation are small
  modifications of this variant.

Pipelines are deterministic: the only randomness is the seeded Gaussian
draw of the initial sampling noise (NumPy PCG64) and, for style-only runs,
the seeded spatial-transform draw, both recorded in the run report.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .dct import dct2d
from .denoisers import Denoiser
from .diffusion import (COND_NULL, COND_TARGET, Schedule, cfg_eps,
                        ddim_invert_step, ddim_sample_step, make_schedule, with_grid)
from .masks import (BandSpec, KIND_ABSOLUTE, KIND_PERCENTILE, MODE_LOW,
                    band_regions, make_mask_2d, make_mask_pair_1d)
from .ops import (SpatialTransformParams, apply_spatial_transform, blend_masked,
                  sample_spatial_transform, substitute_band_2d, substitute_band_axes)
from .tensor_io import (downsample_mask, load_tensor, save_tensor, validate_feature,
                        validate_mask)

VARIANT_RECON = "recon"
VARIANT_INVERSION = "inversion"

DEFAULT_INV_STEPS = 1000


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs besides the input feature and the denoiser."""

    variant: str = VARIANT_INVERSION
    band: BandSpec = field(default_factory=lambda: BandSpec.percentile(MODE_LOW))
    steps: int = 50
    inv_steps: int | None = None          # recon variant only; defaults to 1000
    switch_frac: float = 0.5              # fraction of steps with substitution on
    guidance_scale: float = 7.5
    seed: int = 0
    shuffle_seed: int | None = None       # spatial-transform draw; defaults to seed
    shuffle_enabled: bool = False
    shuffle_resize: str = "bilinear"      # crop resize kernel: bilinear or nearest
    substitute_once: bool = False         # ablation: substitute only at the switch step
    substitute_full: bool = False         # ablation: substitute the whole spectrum
    spill_dir: str | None = None          # park guiding features on disk for large runs
    n_train: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self):
        if self.variant not in (VARIANT_RECON, VARIANT_INVERSION):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not 0.0 <= self.switch_frac <= 1.0:
            raise ValueError(f"switch_frac must be in [0, 1], got {self.switch_frac}")
        if self.variant == VARIANT_RECON and self.resolved_inv_steps < self.steps:
            raise ValueError(
                f"inv_steps={self.resolved_inv_steps} must be >= steps={self.steps}")

    @property
    def mode(self) -> str:
        return self.band.mode

    @property
    def resolved_inv_steps(self) -> int:
        return DEFAULT_INV_STEPS if self.inv_steps is None else self.inv_steps

    @property
    def switch_step(self) -> int:
        # round half-up to an integer step index
        return int(np.floor(self.switch_frac * self.steps + 0.5))


@dataclass(frozen=True)
class TraceRow:
    """Band-energy snapshot of the sampling feature after one step."""

    step: int
    low: float
    mid: float
    high: float
    energy: float


@dataclass
class RunReport:
    output: np.ndarray
    denoiser_calls: dict[str, int]
    trace: list[TraceRow]
    switch_latent: np.ndarray | None
    guide_at_switch: np.ndarray | None
    transform_params: SpatialTransformParams | None
    timing: dict[str, float]


def band_energy_fractions(z, spec: BandSpec) -> dict[str, float]:
    """Fractions of spectral energy in the low/mid/high regions of ``spec``."""
    arr = validate_feature(z)
    spectrum = dct2d(arr)
    total = float(np.sum(spectrum * spectrum))
    regions = band_regions(spec, arr.shape[1], arr.shape[2])
    if total == 0.0:
        return {mode: 0.0 for mode in regions}
    return {mode: float(np.sum((spectrum * region) ** 2)) / total
            for mode, region in regions.items()}


def spectral_correlation(a, b, region) -> float:
    """Pearson correlation of two features' DCT coefficients inside a region."""
    region = validate_mask(region, "region")
    sel = region == 1.0
    if not np.any(sel):
        return 0.0
    x = dct2d(validate_feature(a, "a"))[:, sel].ravel()
    y = dct2d(validate_feature(b, "b"))[:, sel].ravel()
    if x.size < 2 or float(np.std(x)) == 0.0 or float(np.std(y)) == 0.0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


def expected_denoiser_calls(cfg: PipelineConfig) -> dict[str, int]:
    """Closed-form per-conditioning call counts for a run of ``cfg``."""
    steps = cfg.steps
    if cfg.variant == VARIANT_RECON:
        return {COND_NULL: cfg.resolved_inv_steps + 2 * steps, COND_TARGET: steps}
    return {COND_NULL: 2 * steps, COND_TARGET: steps}


def schedule_from_table(n_train: int, alpha_bar, steps: int) -> Schedule:
    """Schedule adopting an externally supplied alpha_bar table."""
    table = np.asarray(alpha_bar, dtype=np.float64)
    if table.ndim != 1 or len(table) not in (n_train, n_train + 1):
        raise ValueError(f"alpha_bar table must have length {n_train} or {n_train + 1}")
    if len(table) == n_train:
        table = np.concatenate(([1.0], table))
    grid = make_schedule(n_train=n_train, steps=steps)
    return Schedule(n_train=n_train, alpha_bar=table.copy(), tau=grid.tau)


class _GuideStack:
    """LIFO store for inversion-trajectory features.

    In memory by default; with a spill directory each feature is parked in a
    tensor file and re-read on pop, so arbitrarily long trajectories at real
    latent sizes stay out of RAM. The file roundtrip is bit-exact, so spilled
    and in-memory runs produce identical outputs.
    """

    def __init__(self, spill_dir: str | None):
        self._spill_dir = spill_dir
        self._items: list = []
        if spill_dir is not None:
            os.makedirs(spill_dir, exist_ok=True)

    def push(self, z: np.ndarray) -> None:
        if self._spill_dir is None:
            self._items.append(z)
            return
        path = os.path.join(self._spill_dir, f"guide_{len(self._items):06d}.fbst")
        save_tensor(z, path)
        self._items.append(path)

    def pop(self) -> np.ndarray:
        item = self._items.pop()
        if self._spill_dir is None:
            return item
        z = load_tensor(item)
        os.remove(item)
        return z

    def drop_top(self) -> None:
        item = self._items.pop()
        if self._spill_dir is not None:
            os.remove(item)

    def clear(self) -> None:
        if self._spill_dir is not None:
            for item in self._items:
                os.remove(item)
        self._items.clear()


class _CallLedger:
    """Records per-conditioning call deltas and checks them after a run."""

    def __init__(self, denoiser: Denoiser):
        self.denoiser = denoiser
        self.before = dict(denoiser.call_counts)

    def settle(self, expected: dict[str, int]) -> dict[str, int]:
        delta = {cond: self.denoiser.call_counts.get(cond, 0) - self.before.get(cond, 0)
                 for cond in set(self.denoiser.call_counts) | set(self.before)}
        delta = {cond: n for cond, n in delta.items() if n}
        if delta != {cond: n for cond, n in expected.items() if n}:
            raise RuntimeError(f"denoiser call accounting mismatch: {delta} != {expected}")
        return delta


def _predict_inversion_eps(denoiser, z, t_from, t_to):
    # The predictor is undefined at t=0 (no noise to predict); the first
    # step's eps only feeds the additive noise term, evaluated at the target.
    t_pred = t_from if t_from >= 1 else t_to
    return denoiser.predict(z, t_pred, COND_NULL)


def _invert(z0, schedule: Schedule, denoiser: Denoiser,
            stack: "_GuideStack | None" = None):
    z = z0
    for i in range(schedule.steps):
        t_from = int(schedule.tau[i])
        t_to = int(schedule.tau[i + 1])
        eps = _predict_inversion_eps(denoiser, z, t_from, t_to)
        z = ddim_invert_step(z, t_from, t_to, eps, schedule)
        if stack is not None:
            stack.push(z)
    return z


def _cfg_sample_step(z, i, schedule, denoiser, guidance_scale):
    t_from = int(schedule.tau[i])
    t_to = int(schedule.tau[i - 1])
    eps_cond = denoiser.predict(z, t_from, COND_TARGET)
    eps_uncond = denoiser.predict(z, t_from, COND_NULL)
    return ddim_sample_step(z, t_from, t_to, cfg_eps(eps_cond, eps_uncond, guidance_scale), schedule)


def _plain_sample_step(z, i, schedule, denoiser):
    t_from = int(schedule.tau[i])
    t_to = int(schedule.tau[i - 1])
    return ddim_sample_step(z, t_from, t_to, denoiser.predict(z, t_from, COND_NULL), schedule)


def _trace_row(step: int, sample: np.ndarray, regions: dict[str, np.ndarray]) -> TraceRow:
    spectrum = dct2d(sample)
    total = float(np.sum(spectrum * spectrum))
    energies = {mode: float(np.sum((spectrum * region) ** 2))
                for mode, region in regions.items()}
    scale = 1.0 / total if total > 0.0 else 0.0
    return TraceRow(step=step, low=energies["low"] * scale, mid=energies["mid"] * scale,
                    high=energies["high"] * scale, energy=total)


def _substitute_now(cfg: PipelineConfig, i: int) -> bool:
    if cfg.substitute_once:
        return i == cfg.switch_step + 1
    return True


def run_recon_guided(z0, cfg: PipelineConfig, denoiser: Denoiser,
                     schedule: Schedule | None = None, observer=None) -> RunReport:
    """Reconstruction-guided translation: long inversion, then parallel
    reconstruction and sampling trajectories with 2-D band substitution."""
    z0 = validate_feature(z0, "z0")
    if cfg.variant != VARIANT_RECON:
        raise ValueError(f"config variant is {cfg.variant!r}, expected {VARIANT_RECON!r}")
    if cfg.band.kind != KIND_ABSOLUTE:
        raise ValueError("recon variant needs absolute-threshold bands")
    _, h, w = z0.shape
    base = schedule if schedule is not None else make_schedule(
        cfg.n_train, cfg.steps, cfg.beta_start, cfg.beta_end)
    sched = base if base.steps == cfg.steps else with_grid(base, cfg.steps)
    sched_inv = with_grid(base, cfg.resolved_inv_steps)
    mask = np.ones((h, w)) if cfg.substitute_full else make_mask_2d(cfg.band, h, w)
    regions = band_regions(cfg.band, h, w)
    switch = cfg.switch_step
    ledger = _CallLedger(denoiser)

    t0 = time.perf_counter()
    guide = _invert(z0, sched_inv, denoiser)
    inversion_s = time.perf_counter() - t0

    sample = np.random.default_rng(cfg.seed).standard_normal(z0.shape)
    trace: list[TraceRow] = []
    switch_latent = guide_at_switch = None
    t1 = time.perf_counter()
    for i in range(cfg.steps, 0, -1):
        guide = _plain_sample_step(guide, i, sched, denoiser)
        sample = _cfg_sample_step(sample, i, sched, denoiser, cfg.guidance_scale)
        if i > switch and _substitute_now(cfg, i):
            sample = substitute_band_2d(guide, sample, mask)
        if i - 1 == switch:
            switch_latent, guide_at_switch = sample.copy(), guide.copy()
        trace.append(_trace_row(i - 1, sample, regions))
        if observer is not None:
            observer(i - 1, sample, guide)
    sampling_s = time.perf_counter() - t1

    calls = ledger.settle(expected_denoiser_calls(cfg))
    return RunReport(output=sample, denoiser_calls=calls, trace=trace,
                     switch_latent=switch_latent, guide_at_switch=guide_at_switch,
                     transform_params=None,
                     timing={"inversion_s": inversion_s, "sampling_s": sampling_s,
                             "total_s": inversion_s + sampling_s})


def _run_inversion_family(z0, cfg: PipelineConfig, denoiser: Denoiser,
                          feature_mask: np.ndarray | None,
                          transform: SpatialTransformParams | None,
                          schedule: Schedule | None, observer) -> RunReport:
    z0 = validate_feature(z0, "z0")
    if cfg.variant != VARIANT_INVERSION:
        raise ValueError(f"config variant is {cfg.variant!r}, expected {VARIANT_INVERSION!r}")
    if cfg.band.kind != KIND_PERCENTILE:
        raise ValueError("inversion variant needs percentile-threshold bands")
    _, h, w = z0.shape
    base = schedule if schedule is not None else make_schedule(
        cfg.n_train, cfg.steps, cfg.beta_start, cfg.beta_end)
    sched = base if base.steps == cfg.steps else with_grid(base, cfg.steps)
    if cfg.substitute_full:
        mask_w = mask_h = np.ones((h, w))
    else:
        mask_w, mask_h = make_mask_pair_1d(cfg.band, h, w)
    regions = band_regions(cfg.band, h, w)
    switch = cfg.switch_step
    ledger = _CallLedger(denoiser)

    t0 = time.perf_counter()
    stack = _GuideStack(cfg.spill_dir)
    _invert(z0, sched, denoiser, stack)
    stack.drop_top()  # the endpoint seeds nothing; guiding starts one step below
    inversion_s = time.perf_counter() - t0

    sample = np.random.default_rng(cfg.seed).standard_normal(z0.shape)
    trace: list[TraceRow] = []
    switch_latent = guide_at_switch = None
    t1 = time.perf_counter()
    for i in range(cfg.steps, 0, -1):
        sample = _cfg_sample_step(sample, i, sched, denoiser, cfg.guidance_scale)
        guide = None
        if i > switch:
            guide = stack.pop() if i > 1 else z0
            guide_used = (guide if transform is None
                          else apply_spatial_transform(guide, transform, resize=cfg.shuffle_resize))
            if _substitute_now(cfg, i):
                sample = substitute_band_axes(guide_used, sample, mask_w, mask_h)
            if feature_mask is not None:
                sample = blend_masked(sample, guide, feature_mask)
            if i - 1 == switch:
                switch_latent, guide_at_switch = sample.copy(), guide_used.copy()
        elif feature_mask is not None:
            guide = stack.pop() if i > 1 else z0
            sample = blend_masked(sample, guide, feature_mask)
        trace.append(_trace_row(i - 1, sample, regions))
        if observer is not None:
            observer(i - 1, sample, guide)
    sampling_s = time.perf_counter() - t1
    stack.clear()

    calls = ledger.settle(expected_denoiser_calls(cfg))
    return RunReport(output=sample, denoiser_calls=calls, trace=trace,
                     switch_latent=switch_latent, guide_at_switch=guide_at_switch,
                     transform_params=transform,
                     timing={"inversion_s": inversion_s, "sampling_s": sampling_s,
                             "total_s": inversion_s + sampling_s})


def run_inversion_guided(z0, cfg: PipelineConfig, denoiser: Denoiser,
                         schedule: Schedule | None = None, observer=None) -> RunReport:
    """Inversion-guided translation: the reversed inversion trajectory feeds
    a cascaded per-axis band substitution (no reconstruction trajectory)."""
    return _run_inversion_family(z0, cfg, denoiser, feature_mask=None,
                                 transform=None, schedule=schedule, observer=observer)


def run_localized(z0, source_mask, cfg: PipelineConfig, denoiser: Denoiser,
                  schedule: Schedule | None = None, observer=None) -> RunReport:
    """Localized manipulation: every step is spatially blended against the
    aligned guiding feature so the region outside the mask stays the source.

    ``source_mask`` is a binary pixel mask of any shape at least the feature
    size; it is nearest-neighbor downsampled to the feature's spatial shape.
    The final step blends against the original input, so the output equals
    it bit-exactly outside the mask.
    """
    z0 = validate_feature(z0, "z0")
    source_mask = validate_mask(source_mask, "source_mask")
    feature_mask = downsample_mask(source_mask, z0.shape[1], z0.shape[2])
    return _run_inversion_family(z0, cfg, denoiser, feature_mask=feature_mask,
                                 transform=None, schedule=schedule, observer=observer)


def run_style_specific(z0, cfg: PipelineConfig, denoiser: Denoiser,
                       transform_params: SpatialTransformParams | None = None,
                       schedule: Schedule | None = None, observer=None) -> RunReport:
    """Style-only generation: guiding features pass through one fixed random
    spatial transform before a low-band substitution, erasing structural
    correlation while keeping the source's spectral style statistics."""
    z0 = validate_feature(z0, "z0")
    if cfg.band.mode != MODE_LOW:
        raise ValueError("style-specific runs are defined for the low band only")
    if not cfg.shuffle_enabled:
        raise ValueError("style-specific runs need shuffle_enabled=True")
    if transform_params is None:
        seed = cfg.seed if cfg.shuffle_seed is None else cfg.shuffle_seed
        transform_params = sample_spatial_transform(z0.shape[1], z0.shape[2], seed)
    return _run_inversion_family(z0, cfg, denoiser, feature_mask=None,
                                 transform=transform_params, schedule=schedule,
                                 observer=observer)
