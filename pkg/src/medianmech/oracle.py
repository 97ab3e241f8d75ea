"""Independent brute-force verifiers for tests and acceptance runs.

Everything here is reimplemented from first principles (multiset enumeration
via combinations-with-replacement, scalar fsum reductions, dense grids) and
is never imported by the mechanism modules, so a bug would have to appear
twice to go unnoticed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import Database
from .exceptions import MechanismError, RegimeError
from .polytope import ConsistentPolytope


@dataclass(frozen=True)
class NeighborPair:
    """Databases of equal size differing in the identity of one element."""

    db: Database
    db_prime: Database


def enumerate_neighbors(db: Database) -> list[NeighborPair]:
    """All databases reachable by moving one element to another identity."""
    pairs = []
    counts = db.counts
    for src in range(db.domain_size):
        if counts[src] == 0:
            continue
        for dst in range(db.domain_size):
            if dst == src:
                continue
            moved = counts.copy()
            moved[src] -= 1
            moved[dst] += 1
            pairs.append(NeighborPair(db=db, db_prime=Database(counts=moved)))
    return pairs


def multisets(size: int, total: int) -> np.ndarray:
    """All count vectors of `total` elements over `size` identities."""
    rows = []
    for combo in itertools.combinations_with_replacement(range(size), total):
        v = [0] * size
        for idx in combo:
            v[idx] += 1
        rows.append(v)
    return np.asarray(rows, dtype=np.int64)


def r_value(db_counts, f_indicator, member_counts, m: int, eps: float) -> float:
    """Scalar transcription of the agreement score, fsum over the set."""
    db_counts = list(db_counts)
    n = sum(db_counts)
    f_db = sum(c for c, ind in zip(db_counts, f_indicator) if ind) / n
    terms = []
    for member in member_counts:
        f_s = sum(c for c, ind in zip(member, f_indicator) if ind) / m
        terms.append(math.exp(-abs(f_db - f_s) / eps))
    return math.fsum(terms) / len(terms)


@dataclass(frozen=True)
class SensitivityReport:
    max_delta: float
    bound: float
    databases: int
    predicates: int
    sets: int


def verify_r_sensitivity(domain_size: int, n: int, m: int, eps: float,
                         predicates: np.ndarray | None = None,
                         subset_draws: int = 3,
                         rng: np.random.Generator | None = None) -> SensitivityReport:
    """Exhaustive max of |r(D) - r(D')| over neighbors, predicates, and sets.

    Sweeps every size-n database, every neighbor move, every predicate (all
    2^|X| by default), and C ranging over the full size-m multiset family plus
    random nonempty subsets of it. Raises when the observed maximum exceeds
    2/(eps*n) + 1e-12.
    """
    if domain_size > 5 or n > 4 or m > 3:
        raise RegimeError("exhaustive sweep limited to |X| <= 5, n <= 4, m <= 3")
    rng = rng if rng is not None else np.random.default_rng(0)
    if predicates is None:
        predicates = np.array(list(itertools.product([False, True],
                                                     repeat=domain_size)))
    preds = np.asarray(predicates, dtype=bool)

    members = multisets(domain_size, m)
    sets = [members]
    for _ in range(subset_draws):
        mask = rng.random(members.shape[0]) < 0.5
        if not mask.any():
            mask[rng.integers(members.shape[0])] = True
        sets.append(members[mask])

    dbs = multisets(domain_size, n)
    index = {tuple(row): i for i, row in enumerate(dbs)}
    db_vals = dbs @ preds.T.astype(np.int64) / n  # (num_db, P)

    max_delta = 0.0
    for c_members in sets:
        set_vals = c_members @ preds.T.astype(np.int64) / m  # (|C|, P)
        # r matrix over all databases at once: (num_db, P)
        r_all = np.exp(-np.abs(db_vals[:, None, :] - set_vals[None, :, :]) / eps)
        r_all = r_all.mean(axis=1)
        for i, row in enumerate(dbs):
            for src in range(domain_size):
                if row[src] == 0:
                    continue
                for dst in range(domain_size):
                    if dst == src:
                        continue
                    moved = row.copy()
                    moved[src] -= 1
                    moved[dst] += 1
                    j = index[tuple(moved)]
                    delta = float(np.abs(r_all[i] - r_all[j]).max())
                    if delta > max_delta:
                        max_delta = delta
    bound = 2.0 / (eps * n)
    if max_delta > bound + 1e-12:
        raise MechanismError(
            f"r-sensitivity violated: observed {max_delta:.6g} > bound {bound:.6g}")
    return SensitivityReport(max_delta=max_delta, bound=bound,
                             databases=dbs.shape[0], predicates=preds.shape[0],
                             sets=len(sets))


@dataclass(frozen=True)
class PrivacyLossReport:
    estimate: float
    qualifying_bins: int
    flagged_bins: int
    min_count: int
    trials: int


def privacy_loss_estimate(sample_outputs, db: Database, db_prime: Database,
                          bins: int, trials: int, rng: np.random.Generator,
                          min_count: int | None = None) -> PrivacyLossReport:
    """Monte Carlo max log-likelihood ratio over occupied output bins.

    `sample_outputs(db, rng, trials)` must return a (trials, dim) array of
    mechanism outputs. Outputs are binned per coordinate over the pooled
    0.1%-99.9% range (outliers clipped into edge bins); the estimate is the
    max of |ln((c+1)/(c'+1))| over bins whose raw count reaches `min_count`
    under both databases, and thinner occupied bins are flagged rather than
    silently smoothed.
    """
    if min_count is None:
        min_count = max(50, trials // bins)
    out_a = np.asarray(sample_outputs(db, rng, trials), dtype=float)
    out_b = np.asarray(sample_outputs(db_prime, rng, trials), dtype=float)
    if out_a.ndim == 1:
        out_a = out_a[:, None]
        out_b = out_b[:, None]
    dim = out_a.shape[1]
    pooled = np.vstack([out_a, out_b])
    lo = np.quantile(pooled, 0.001, axis=0)
    hi = np.quantile(pooled, 0.999, axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    edges = [np.linspace(lo[d], hi[d], bins + 1) for d in range(dim)]
    clip_a = np.clip(out_a, lo, hi)
    clip_b = np.clip(out_b, lo, hi)
    count_a, _ = np.histogramdd(clip_a, bins=edges)
    count_b, _ = np.histogramdd(clip_b, bins=edges)

    occupied = (count_a + count_b) > 0
    qualifying = (count_a >= min_count) & (count_b >= min_count)
    flagged = int((occupied & ~qualifying).sum())
    if not qualifying.any():
        raise MechanismError(
            "no bin reached min_count under both databases; increase trials")
    ratios = np.abs(np.log((count_a[qualifying] + 1.0) / (count_b[qualifying] + 1.0)))
    return PrivacyLossReport(estimate=float(ratios.max()),
                             qualifying_bins=int(qualifying.sum()),
                             flagged_bins=flagged, min_count=min_count,
                             trials=trials)


@dataclass(frozen=True)
class VolumeEstimate:
    volume: float
    rel_error_bound: float
    resolution: int


def quadrature_volume(p: ConsistentPolytope, resolution: int) -> VolumeEstimate:
    """Dense-grid volume of a consistent polytope, cells per axis given.

    Independent constraint evaluation (does not call the mechanism's
    membership). Limited to |X| <= 4.
    """
    d = p.domain_size
    if d > 4:
        raise RegimeError("quadrature runs dense grids only for |X| <= 4")
    if resolution < 4:
        raise ValueError("resolution too coarse")
    step = p.m / resolution
    centers = (np.arange(resolution) + 0.5) * step
    count = 0
    if d == 1:
        slabs = [centers[:, None]]
    else:
        grids = np.meshgrid(*([centers] * (d - 1)), indexing="ij")
        rest = np.stack([g.ravel() for g in grids], axis=1)
        slabs = (np.hstack([np.full((rest.shape[0], 1), c), rest]) for c in centers)
    for pts in slabs:
        inside = pts.sum(axis=1) <= p.m
        for pair in p.pairs:
            s = pts[:, pair.indicator].sum(axis=1)
            inside &= np.abs(s - p.m * pair.center) <= pair.halfwidth
        count += int(inside.sum())
    return VolumeEstimate(volume=count * step**d,
                          rel_error_bound=d / resolution,
                          resolution=resolution)
