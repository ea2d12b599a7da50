"""Seeded emulation of slow phase drift, power-meter noise and detector background."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseModel:
    """Noise sources of the shutter-cycle measurement.

    ``phase_jitter_sigma`` is the per-cycle step (rad) of a Gaussian random
    walk on Phi; ``power_noise_rel`` is the relative standard deviation of
    each power reading; ``background_power`` (W) is added to every reading.
    The default ``power_noise_rel`` is a tuning constant chosen to give
    per-term spreads of a few percent, not a measured value.
    """

    phase_jitter_sigma: float = 0.0
    power_noise_rel: float = 0.0
    readings_per_measurement: int = 500
    background_power: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("phase_jitter_sigma", "power_noise_rel", "background_power"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if self.readings_per_measurement < 1:
            raise ValueError("readings_per_measurement must be >= 1")

    @property
    def readings(self) -> int:
        return self.readings_per_measurement

    @property
    def is_silent(self) -> bool:
        return self.phase_jitter_sigma == 0 and self.power_noise_rel == 0 and self.background_power == 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def phase_walk(self, cycles: int, rng: np.random.Generator) -> np.ndarray:
        """Phi offset per cycle; the walk starts at zero on the first cycle."""
        steps = rng.normal(0.0, self.phase_jitter_sigma, size=cycles)
        steps[0] = 0.0
        return np.cumsum(steps)

    def readings_from(self, clean: np.ndarray, total_power: float, rng: np.random.Generator) -> np.ndarray:
        """Noisy normalized readings, shape (cycles, readings, 8), from clean terms (cycles, 8).

        Readings are clipped at zero since a power meter cannot report
        negative power.
        """
        clean = np.asarray(clean, dtype=float)
        shape = (clean.shape[0], self.readings, clean.shape[1])
        factor = 1.0 + self.power_noise_rel * rng.standard_normal(shape)
        background = self.background_power / total_power
        return np.clip(clean[:, None, :] * factor + background, 0.0, None)


def random_walk_variance(sigma: float, cycles: int) -> np.ndarray:
    """Analytic variance of the Phi offset at each cycle index (first cycle pinned to 0)."""
    return sigma**2 * np.arange(cycles, dtype=float)
