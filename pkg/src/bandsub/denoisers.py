"""The pluggable noise-prediction boundary.

A denoiser maps (feature, timestep, conditioning id) to a same-shape noise
prediction, deterministically, and keeps a per-conditioning call counter.
Two implementations ship here: a closed-form oracle for isotropic Gaussian
toy distributions (the verification workhorse: every pipeline claim can be
checked against it without any pretrained model) and a thin adapter over the
frame-protocol client.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from .diffusion import Schedule
from .protocol import BridgeClient
from .tensor_io import validate_feature


class Denoiser(ABC):
    """Noise-prediction contract with call accounting.

    ``predict`` must be deterministic in (z_t, t, cond) and return an array
    of the input's shape. One instance serves one trajectory at a time.
    """

    def __init__(self):
        self.call_counts: dict[str, int] = {}

    @property
    def call_count(self) -> int:
        return sum(self.call_counts.values())

    def predict(self, z_t, t: int, cond: str) -> np.ndarray:
        z_t = validate_feature(z_t, "z_t")
        self.call_counts[cond] = self.call_counts.get(cond, 0) + 1
        eps = self._predict_eps(z_t, int(t), cond)
        if eps.shape != z_t.shape:
            raise ValueError(f"denoiser returned shape {eps.shape} for input {z_t.shape}")
        if not np.all(np.isfinite(eps)):
            raise ValueError("denoiser returned non-finite values")
        return eps

    @abstractmethod
    def _predict_eps(self, z_t: np.ndarray, t: int, cond: str) -> np.ndarray:
        ...


class AnalyticGaussianDenoiser(Denoiser):
    """Optimal noise predictor for per-conditioning isotropic Gaussian data.

    For x0 ~ N(mu, sigma2 * I) and z_t = sqrt(abar)*x0 + sqrt(1-abar)*e the
    posterior mean of x0 given z_t is

        m = (sqrt(abar)*sigma2*z_t + (1-abar)*mu) / (abar*sigma2 + (1-abar))

    and the implied noise prediction is (z_t - sqrt(abar)*m)/sqrt(1-abar).
    Distinct conditioning ids may carry distinct (mu, sigma2), so guidance
    pulls toward a genuinely different distribution than the null id.
    """

    def __init__(self, schedule: Schedule, table: dict[str, tuple]):
        super().__init__()
        self.schedule = schedule
        self._table: dict[str, tuple[np.ndarray | float, float]] = {}
        for cond, (mu, sigma2) in table.items():
            sigma2 = float(sigma2)
            if sigma2 < 0.0:
                raise ValueError(f"sigma2 must be non-negative, got {sigma2} for {cond!r}")
            mu_arr = np.asarray(mu, dtype=np.float64)
            self._table[cond] = (mu_arr, sigma2)

    def _predict_eps(self, z_t: np.ndarray, t: int, cond: str) -> np.ndarray:
        if t < 1:
            raise ValueError("analytic denoiser needs t >= 1 (no noise to predict at t=0)")
        if not 1 <= t <= self.schedule.n_train:
            raise ValueError(f"t={t} outside [1, {self.schedule.n_train}]")
        if cond not in self._table:
            raise KeyError(f"no distribution bound to conditioning id {cond!r}")
        mu, sigma2 = self._table[cond]
        abar = self.schedule.alpha_bar[t]
        root_abar = np.sqrt(abar)
        posterior_mean = (root_abar * sigma2 * z_t + (1.0 - abar) * mu) / (abar * sigma2 + (1.0 - abar))
        return (z_t - root_abar * posterior_mean) / np.sqrt(1.0 - abar)


class BridgeDenoiser(Denoiser):
    """Denoiser backed by a remote server over the frame protocol."""

    def __init__(self, client: BridgeClient):
        super().__init__()
        self.client = client

    def _predict_eps(self, z_t: np.ndarray, t: int, cond: str) -> np.ndarray:
        return self.client.predict_eps(z_t, t, cond)
