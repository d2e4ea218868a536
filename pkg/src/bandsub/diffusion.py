"""Noise schedules and deterministic DDIM step math.

The signal-retention sequence alpha_bar is the running product of
(1 - beta_t) over a linear beta schedule, indexed 1..n_train with
alpha_bar[0] = 1 by convention. A trajectory walks a sub-sampled timestep
grid tau_0=0 < tau_1 < ... < tau_T = n_train; each step estimates the clean
feature from the current one and re-noises it at the destination level:

    x0_est  = (z - sqrt(1 - abar_from) * eps) / sqrt(abar_from)
    z_next  = sqrt(abar_to) * x0_est + sqrt(1 - abar_to) * eps

Run downward in noise level this samples; run upward it inverts. With the
same eps value the two directions are exact algebraic inverses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_io import validate_feature

COND_NULL = "null_text"
COND_TARGET = "target_text"


@dataclass(frozen=True)
class Schedule:
    """Immutable alpha_bar table plus one sub-sampled timestep grid."""

    n_train: int
    alpha_bar: np.ndarray = field(repr=False)  # length n_train + 1, alpha_bar[0] == 1
    tau: np.ndarray = field(repr=False)        # length steps + 1, tau[0] == 0

    def __post_init__(self):
        self.alpha_bar.flags.writeable = False
        self.tau.flags.writeable = False

    @property
    def steps(self) -> int:
        return len(self.tau) - 1


def make_schedule(n_train: int = 1000, steps: int = 50,
                  beta_start: float = 1e-4, beta_end: float = 0.02) -> Schedule:
    """Linear-beta schedule with a uniform-stride timestep grid.

    tau_i = round(i * n_train / steps), rounded half-up in exact integer
    arithmetic so grids are identical across platforms.
    """
    if n_train < 1:
        raise ValueError(f"n_train must be >= 1, got {n_train}")
    if not 1 <= steps <= n_train:
        raise ValueError(f"steps must be in [1, n_train={n_train}], got {steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, n_train)
    alpha_bar = np.concatenate(([1.0], np.cumprod(1.0 - betas)))
    tau = np.array([(2 * i * n_train + steps) // (2 * steps) for i in range(steps + 1)],
                   dtype=np.int64)
    return Schedule(n_train=n_train, alpha_bar=alpha_bar, tau=tau)


def with_grid(schedule: Schedule, steps: int) -> Schedule:
    """The same alpha_bar table with a different timestep grid."""
    if not 1 <= steps <= schedule.n_train:
        raise ValueError(f"steps must be in [1, {schedule.n_train}], got {steps}")
    n = schedule.n_train
    tau = np.array([(2 * i * n + steps) // (2 * steps) for i in range(steps + 1)], dtype=np.int64)
    return Schedule(n_train=n, alpha_bar=schedule.alpha_bar, tau=tau)


def _check_timestep(s: Schedule, t: int, name: str = "t") -> None:
    if not 0 <= t <= s.n_train:
        raise ValueError(f"{name}={t} outside [0, {s.n_train}]")


def predict_x0(z_t, eps, t: int, s: Schedule) -> np.ndarray:
    """Clean-feature estimate implied by a noise prediction at level t >= 1."""
    z_t = validate_feature(z_t, "z_t")
    eps = validate_feature(eps, "eps")
    _check_timestep(s, t)
    if t < 1:
        raise ValueError("predict_x0 needs t >= 1 (alpha_bar[0] == 1 makes eps unrecoverable)")
    abar = s.alpha_bar[t]
    return (z_t - np.sqrt(1.0 - abar) * eps) / np.sqrt(abar)


def ddim_invert_step(z_t, t_from: int, t_to: int, eps, s: Schedule) -> np.ndarray:
    """One deterministic step up in noise level (t_to > t_from >= 0).

    At t_from == 0 the clean-feature estimate is the feature itself.
    """
    z_t = validate_feature(z_t, "z_t")
    eps = validate_feature(eps, "eps")
    _check_timestep(s, t_from, "t_from")
    _check_timestep(s, t_to, "t_to")
    if not t_to > t_from >= 0:
        raise ValueError(f"inversion needs t_to > t_from >= 0, got {t_from} -> {t_to}")
    x0_est = z_t if t_from == 0 else predict_x0(z_t, eps, t_from, s)
    abar_to = s.alpha_bar[t_to]
    return np.sqrt(abar_to) * x0_est + np.sqrt(1.0 - abar_to) * eps


def ddim_sample_step(z_t, t_from: int, t_to: int, eps, s: Schedule) -> np.ndarray:
    """One deterministic step down in noise level (t_from > t_to >= 0)."""
    z_t = validate_feature(z_t, "z_t")
    eps = validate_feature(eps, "eps")
    _check_timestep(s, t_from, "t_from")
    _check_timestep(s, t_to, "t_to")
    if not t_from > t_to >= 0:
        raise ValueError(f"sampling needs t_from > t_to >= 0, got {t_from} -> {t_to}")
    x0_est = predict_x0(z_t, eps, t_from, s)
    abar_to = s.alpha_bar[t_to]
    return np.sqrt(abar_to) * x0_est + np.sqrt(1.0 - abar_to) * eps


def cfg_eps(eps_cond, eps_uncond, omega: float) -> np.ndarray:
    """Classifier-free guidance blend omega*eps_cond + (1-omega)*eps_uncond."""
    eps_cond = validate_feature(eps_cond, "eps_cond")
    eps_uncond = validate_feature(eps_uncond, "eps_uncond")
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError(f"eps shapes differ: {eps_cond.shape} vs {eps_uncond.shape}")
    return omega * eps_cond + (1.0 - omega) * eps_uncond
