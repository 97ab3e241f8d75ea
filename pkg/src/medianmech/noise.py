"""Laplace noise source and the independent-perturbation baseline.

Samples are produced by inverse-CDF transform from a single uniform draw per
sample, so a fixed seed yields a fixed stream and draw counts are easy to
audit. Sessions document their draw order as: threshold draw first, then the
r-perturbation, then the answer perturbation, every query.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Database, Predicate, evaluate_query


@dataclass(frozen=True)
class LaplaceScale:
    """Scale sigma of a zero-mean Laplace distribution."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def laplace_cdf(scale: LaplaceScale | float, x: float) -> float:
    """Cumulative distribution of Lap(sigma): 1 - exp(-x/sigma)/2 for x >= 0."""
    sigma = scale.sigma if isinstance(scale, LaplaceScale) else float(scale)
    if x >= 0:
        return 1.0 - 0.5 * math.exp(-x / sigma)
    return 0.5 * math.exp(x / sigma)


def laplace_ppf(scale: LaplaceScale | float, u: float) -> float:
    """Inverse CDF; u in (0, 1)."""
    sigma = scale.sigma if isinstance(scale, LaplaceScale) else float(scale)
    p = u - 0.5
    return -sigma * math.copysign(1.0, p) * math.log1p(-2.0 * abs(p))


def sample_laplace(scale: LaplaceScale | float, rng: np.random.Generator) -> float:
    """One Lap(sigma) sample from one uniform draw."""
    return laplace_ppf(scale, rng.random())


def sample_laplace_array(scale: float, rng: np.random.Generator, size) -> np.ndarray:
    """Vectorized inverse-CDF sampling; same transform as sample_laplace."""
    p = rng.random(size) - 0.5
    return -scale * np.sign(p) * np.log1p(-2.0 * np.abs(p))


class NoiseControl:
    """Per-session noise hooks, honored only with unsafe_testing=True.

    `force_zero` turns every perturbation into 0; `fixed_draws` replaces the
    draws for a named channel ("r" or "answer") with a fixed sequence, cycled.
    Intended for tests that condition on noise events; never use in runs whose
    output is treated as private.
    """

    def __init__(self, unsafe_testing: bool = False, force_zero: bool = False,
                 fixed_draws: dict[str, list[float]] | None = None):
        if (force_zero or fixed_draws) and not unsafe_testing:
            raise ValueError("noise overrides require unsafe_testing=True")
        self.unsafe_testing = unsafe_testing
        self.force_zero = force_zero
        self._fixed = {k: list(v) for k, v in (fixed_draws or {}).items()}
        self._idx = {k: 0 for k in self._fixed}

    def perturb(self, channel: str, scale: float, rng: np.random.Generator) -> float:
        """Draw a perturbation for `channel`, consuming one uniform either way."""
        raw = sample_laplace(scale, rng)
        if not self.unsafe_testing:
            return raw
        if channel in self._fixed:
            seq = self._fixed[channel]
            value = seq[self._idx[channel] % len(seq)]
            self._idx[channel] += 1
            return value
        if self.force_zero:
            return 0.0
        return raw


def laplace_mechanism(db: Database, queries: list[Predicate], alpha: float,
                      rng: np.random.Generator) -> list[float]:
    """Answer k queries with independent Lap(k/(n*alpha)) perturbations.

    Answers are not clamped to [0, 1].
    """
    k = len(queries)
    if k < 1:
        raise ValueError("need at least one query")
    scale = k / (db.n * alpha)
    return [evaluate_query(f, db) + sample_laplace(scale, rng) for f in queries]
