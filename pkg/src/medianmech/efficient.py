"""Sampling-based median mechanism over the fractional consistent polytope.

Same control flow as the enumerated variant, with the agreement score and the
median estimated from approximately uniform polytope samples, halfspace-pair
updates after hard answers, and a doubled hard-query cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .basic import (
    FAIL_DEGENERATE,
    FAIL_HARD_CAP,
    Transcript,
    TranscriptEntry,
    _iter_queries,
    sample_threshold,
)
from .core import Database, Domain, MechanismParams, Predicate, evaluate_query
from .exceptions import (
    DegeneratePolytopeError,
    DimensionMismatchError,
    MechanismError,
    RegimeError,
    SessionFailedError,
)
from .noise import NoiseControl
from .polytope import ConsistentPolytope, interior_point
from .sampler import WalkConfig, sample_uniform


@dataclass(frozen=True)
class EstimatorConfig:
    """Monte Carlo budget per query plus walk passthrough.

    With n_samples unset, N follows the Chernoff-shaped default
    ceil(ln(4k/delta) * (50/eps)^2); experiment configs usually pin a smaller
    N explicitly. When resample_per_query is False the sample batch is reused
    until a hard answer changes the polytope.
    """

    n_samples: int | None = None
    delta: float = 0.05
    walk: WalkConfig = field(default_factory=WalkConfig)
    resample_per_query: bool = True

    def resolve_n(self, eps: float, k: float) -> int:
        if self.n_samples is not None:
            if self.n_samples < 1:
                raise ValueError("n_samples must be >= 1")
            return self.n_samples
        return math.ceil(math.log(4.0 * k / self.delta) * (50.0 / eps) ** 2)


def evaluate_query_fractional(f: Predicate, hist: np.ndarray, m: float) -> float:
    """Query value of a fractional histogram: (1/m) * sum of selected weights."""
    hist = np.asarray(hist, dtype=float)
    if hist.shape != f.indicator.shape:
        raise DimensionMismatchError("histogram length disagrees with predicate")
    return float(hist[f.indicator].sum() / m)


def _batch_values(f: Predicate, samples: np.ndarray, m: float) -> np.ndarray:
    return samples[:, f.indicator].sum(axis=1) / m


class REstimate(NamedTuple):
    value: float
    stderr: float | None


def estimate_r(db: Database, f: Predicate, p: ConsistentPolytope, eps: float,
               config: EstimatorConfig, rng: np.random.Generator,
               samples: np.ndarray | None = None) -> REstimate:
    """Monte Carlo mean of exp(-|f(F) - f(D)|/eps) over polytope samples."""
    if samples is None:
        n = config.resolve_n(eps, k=2)
        samples = sample_uniform(p, n, config.walk, rng)
    truth = evaluate_query(f, db)
    vals = np.exp(-np.abs(_batch_values(f, samples, p.m) - truth) / eps)
    n = vals.shape[0]
    stderr = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else None
    return REstimate(value=float(vals.mean()), stderr=stderr)


def estimate_median(f: Predicate, p: ConsistentPolytope,
                    config: EstimatorConfig, rng: np.random.Generator,
                    samples: np.ndarray | None = None) -> float:
    """Empirical lower median of the query over polytope samples."""
    if samples is None:
        n = config.resolve_n(1.0, k=2) if config.n_samples is None else config.n_samples
        samples = sample_uniform(p, n, config.walk, rng)
    vals = _batch_values(f, samples, p.m)
    idx = (vals.shape[0] - 1) // 2
    return float(np.partition(vals, idx)[idx])


class EfficientMedianSession:
    """Median-mechanism session over the fractional consistent polytope.

    Noise draws come from `rng` in the same fixed per-query order as the basic
    session (threshold, r-perturbation, answer-perturbation), so paired runs
    can share a noise stream; polytope sampling consumes the separate
    `sampler_rng` (spawned from `rng` when not given).
    """

    def __init__(self, db: Database, params: MechanismParams,
                 rng: np.random.Generator,
                 config: EstimatorConfig | None = None,
                 noise: NoiseControl | None = None,
                 sampler_rng: np.random.Generator | None = None):
        if db.domain_size != params.domain_size:
            raise MechanismError("database dimension disagrees with params")
        if db.n != params.n:
            raise MechanismError("database size disagrees with params")
        self.db = db
        self.params = params
        self.rng = rng
        self.sampler_rng = sampler_rng if sampler_rng is not None else rng.spawn(1)[0]
        self.config = config or EstimatorConfig()
        self.noise = noise or NoiseControl()
        self.polytope = ConsistentPolytope(domain_size=params.domain_size,
                                           m=float(params.m))
        self.hard_cap = params.hard_cap_efficient
        self.transcript = Transcript()
        self.stderr_budget_violations = 0
        self._r_scale = 2.0 / (params.eps * params.n * params.alpha_prime)
        self._a_scale = 1.0 / (params.n * params.alpha_prime)
        self._n_per_query = self.config.resolve_n(params.eps, params.k)
        self._batch: np.ndarray | None = None
        self._start = interior_point(self.polytope)

    @property
    def failed(self) -> bool:
        return self.transcript.failed

    @property
    def answered(self) -> int:
        return len(self.transcript.entries)

    def _current_batch(self) -> np.ndarray:
        if self._batch is None or self.config.resample_per_query:
            self._batch = sample_uniform(self.polytope, self._n_per_query,
                                         self.config.walk, self.sampler_rng,
                                         start=self._start)
        return self._batch

    def answer(self, f: Predicate) -> TranscriptEntry:
        """Classify and answer one query, updating the polytope on hard ones."""
        if self.failed:
            raise SessionFailedError(
                f"session failed ({self.transcript.failure_cause}); "
                "no further queries can be answered")
        if self.answered >= self.params.k:
            raise MechanismError("query budget k exhausted")
        draw = sample_threshold(self.params.gamma, self.rng)
        noise_r = self.noise.perturb("r", self._r_scale, self.rng)
        noise_a = self.noise.perturb("answer", self._a_scale, self.rng)

        batch = self._current_batch()
        est = estimate_r(self.db, f, self.polytope, self.params.eps,
                         self.config, self.sampler_rng, samples=batch)
        if est.stderr is not None and 3.0 * est.stderr > 1.0 / 200.0:
            self.stderr_budget_violations += 1
        r_hat = est.value + noise_r
        hard_count = self.transcript.hard_count
        degenerate = False
        if r_hat >= draw.t:
            a = estimate_median(f, self.polytope, self.config,
                                self.sampler_rng, samples=batch)
            hard = False
        else:
            a = evaluate_query(f, self.db) + noise_a
            hard = True
            hard_count += 1
            halfwidth = self.params.eps * self.polytope.m / 50.0
            self.polytope = self.polytope.with_pair(f.indicator, a, halfwidth)
            self._batch = None
            try:
                self._start = interior_point(self.polytope)
            except DegeneratePolytopeError:
                degenerate = True

        entry = TranscriptEntry(i=self.answered + 1, hard=hard, a=a,
                                r=est.value, r_hat=r_hat, t=draw.t,
                                hard_count=hard_count, r_stderr=est.stderr,
                                polytope_pairs=len(self.polytope.pairs))
        self.transcript.entries.append(entry)
        if degenerate:
            self.transcript.failed = True
            self.transcript.failure_cause = FAIL_DEGENERATE
        elif hard_count > self.hard_cap:
            self.transcript.failed = True
            self.transcript.failure_cause = FAIL_HARD_CAP
        return entry


def run_session_efficient(db: Database, query_source, params: MechanismParams,
                          config: EstimatorConfig | None = None,
                          rng: np.random.Generator | None = None,
                          noise: NoiseControl | None = None,
                          sampler_rng: np.random.Generator | None = None) -> Transcript:
    """Drive an efficient session over a query stream (see basic.run_session)."""
    rng = rng if rng is not None else np.random.default_rng()
    session = EfficientMedianSession(db, params, rng, config=config, noise=noise,
                                     sampler_rng=sampler_rng)
    for f in _iter_queries(query_source, session):
        session.answer(f)
        if session.failed:
            break
    return session.transcript


def sample_histograms(domain: Domain, count: int, rng: np.random.Generator,
                      walk_config: WalkConfig | None = None,
                      m: float = 1.0) -> np.ndarray:
    """Uniform draws from the base body {F >= 0, sum(F) <= m}."""
    base = ConsistentPolytope(domain_size=domain.size, m=m)
    return sample_uniform(base, count, walk_config, rng)


def database_sample(domain: Domain, n: int, rng: np.random.Generator,
                    walk_config: WalkConfig | None = None) -> Database:
    """Draw a histogram uniformly, then n i.i.d. elements proportional to it."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if domain.size == 1:
        return Database(counts=np.array([n], dtype=np.int64))
    hist = sample_histograms(domain, 1, rng, walk_config)[0]
    total = hist.sum()
    probs = hist / total if total > 0 else np.full(domain.size, 1.0 / domain.size)
    return Database(counts=rng.multinomial(n, probs).astype(np.int64))


@dataclass(frozen=True)
class GoodVolumeReport:
    ratio: float
    threshold: float
    satisfied: bool
    resolution: int


def good_volume_check(db: Database, queries: list[Predicate], eps: float,
                      m: float, grid_resolution: int) -> GoodVolumeReport:
    """Grid estimate of Vol(Good_{eps/100}(D)) / Vol(C_0) vs |X|^(-2m).

    The good set keeps histograms whose value agrees with f(D) within eps/100
    on every query. Dense-grid only; domains above four elements are refused.
    """
    d = db.domain_size
    if d > 4:
        raise RegimeError("good_volume_check runs dense grids only for |X| <= 4")
    tol = eps / 100.0
    # cells must resolve the slab width 2*tol*m or the ratio reads as 0
    min_res = max(4, math.ceil(1.0 / tol)) if queries else 4
    if grid_resolution < min_res:
        raise ValueError(
            f"grid_resolution {grid_resolution} too coarse for eps={eps}; "
            f"need >= {min_res} cells per axis")
    truths = np.array([evaluate_query(f, db) for f in queries])
    indicators = [f.indicator for f in queries]
    centers = (np.arange(grid_resolution) + 0.5) * (m / grid_resolution)

    total = 0
    good = 0
    if d == 1:
        pts = centers[:, None]
        slabs = [pts]
    else:
        grids = np.meshgrid(*([centers] * (d - 1)), indexing="ij")
        rest = np.stack([g.ravel() for g in grids], axis=1)
        slabs = (np.hstack([np.full((rest.shape[0], 1), c), rest]) for c in centers)
    for pts in slabs:
        inside = pts.sum(axis=1) <= m
        pts = pts[inside]
        total += pts.shape[0]
        if pts.shape[0] == 0:
            continue
        ok = np.ones(pts.shape[0], dtype=bool)
        for ind, truth in zip(indicators, truths):
            ok &= np.abs(pts[:, ind].sum(axis=1) / m - truth) <= tol
        good += int(ok.sum())
    ratio = good / total if total else 0.0
    threshold = float(d) ** (-2.0 * m)
    return GoodVolumeReport(ratio=ratio, threshold=threshold,
                            satisfied=ratio >= threshold,
                            resolution=grid_resolution)
