"""Halfspace representation of the fractional consistent set.

The base body is the scaled nonnegative l1 ball {F >= 0, sum(F) <= m}; every
hard answer intersects it with a pair of halfspaces pinning one predicate sum
to an interval. Geometry here is exact and deterministic; randomness lives in
the sampler.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .exceptions import DegeneratePolytopeError, DimensionMismatchError


@dataclass(frozen=True)
class HalfspacePair:
    """Constraint |sum_{j: f(x_j)=1} F_j - m*center| <= halfwidth."""

    indicator: np.ndarray
    center: float
    halfwidth: float

    def __post_init__(self):
        ind = np.asarray(self.indicator, dtype=bool)
        ind.setflags(write=False)
        object.__setattr__(self, "indicator", ind)
        if self.halfwidth < 0:
            raise ValueError("halfwidth must be nonnegative")

    def __eq__(self, other):
        if not isinstance(other, HalfspacePair):
            return NotImplemented
        return (np.array_equal(self.indicator, other.indicator)
                and self.center == other.center
                and self.halfwidth == other.halfwidth)

    __hash__ = None

    def to_json(self) -> dict:
        return {"indicator": [int(b) for b in self.indicator],
                "center": self.center, "halfwidth": self.halfwidth}

    @classmethod
    def from_json(cls, doc: dict) -> "HalfspacePair":
        return cls(indicator=np.asarray(doc["indicator"], dtype=bool),
                   center=float(doc["center"]), halfwidth=float(doc["halfwidth"]))


@dataclass(frozen=True)
class ConsistentPolytope:
    """Base simplex of scale m intersected with halfspace pairs."""

    domain_size: int
    m: float
    pairs: tuple[HalfspacePair, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.domain_size < 1 or not self.m > 0:
            raise ValueError("need domain_size >= 1 and m > 0")
        for p in self.pairs:
            if p.indicator.shape[0] != self.domain_size:
                raise DimensionMismatchError("pair indicator has wrong length")

    def with_pair(self, indicator: np.ndarray, center: float,
                  halfwidth: float) -> "ConsistentPolytope":
        pair = HalfspacePair(indicator=indicator, center=center, halfwidth=halfwidth)
        return ConsistentPolytope(domain_size=self.domain_size, m=self.m,
                                  pairs=self.pairs + (pair,))

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Full system A x <= b including the base constraints."""
        d = self.domain_size
        rows = [-np.eye(d), np.ones((1, d))]
        rhs = [np.zeros(d), np.array([float(self.m)])]
        for p in self.pairs:
            ind = p.indicator.astype(float)
            hi = self.m * p.center + p.halfwidth
            lo = self.m * p.center - p.halfwidth
            rows.append(ind[None, :])
            rhs.append(np.array([hi]))
            rows.append(-ind[None, :])
            rhs.append(np.array([-lo]))
        return np.vstack(rows), np.concatenate(rhs)

    def bounding_box_upper(self) -> np.ndarray:
        """Cheap per-coordinate upper bounds implied by the constraints.

        F_i <= m from the base simplex; a pair upper-bounds every coordinate
        it covers, since the others are nonnegative.
        """
        upper = np.full(self.domain_size, float(self.m))
        for p in self.pairs:
            hi = self.m * p.center + p.halfwidth
            upper[p.indicator] = np.minimum(upper[p.indicator], hi)
        return np.maximum(upper, 0.0)

    def to_json(self) -> dict:
        return {"m": self.m, "domain_size": self.domain_size,
                "pairs": [p.to_json() for p in self.pairs]}

    @classmethod
    def from_json(cls, doc: dict) -> "ConsistentPolytope":
        pairs = tuple(HalfspacePair.from_json(p) for p in doc.get("pairs", []))
        return cls(domain_size=int(doc["domain_size"]), m=float(doc["m"]),
                   pairs=pairs)


def membership(p: ConsistentPolytope, f: np.ndarray) -> bool:
    """Strict check that F satisfies every constraint, tolerance 0."""
    f = np.asarray(f, dtype=float)
    if f.shape != (p.domain_size,):
        raise DimensionMismatchError(
            f"point has shape {f.shape}, expected ({p.domain_size},)")
    if (f < 0).any() or f.sum() > p.m:
        return False
    for pair in p.pairs:
        s = f[pair.indicator].sum()
        if abs(s - p.m * pair.center) > pair.halfwidth:
            return False
    return True


def membership_many(p: ConsistentPolytope, points: np.ndarray) -> np.ndarray:
    """Vectorized membership for an (n, |X|) array of points."""
    pts = np.asarray(points, dtype=float)
    ok = (pts >= 0).all(axis=1) & (pts.sum(axis=1) <= p.m)
    for pair in p.pairs:
        s = pts[:, pair.indicator].sum(axis=1)
        ok &= np.abs(s - p.m * pair.center) <= pair.halfwidth
    return ok


def chebyshev_center(p: ConsistentPolytope) -> tuple[np.ndarray, float]:
    """Point maximizing the minimum (row-normalized) constraint slack.

    Returns (center, radius); radius <= 0 means infeasible or measure-zero.
    """
    a, b = p.halfspaces()
    norms = np.linalg.norm(a, axis=1)
    # maximize r subject to A x + r * ||a_row|| <= b
    a_ext = np.hstack([a, norms[:, None]])
    c = np.zeros(a.shape[1] + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=a_ext, b_ub=b,
                  bounds=[(None, None)] * a.shape[1] + [(0, None)],
                  method="highs")
    if not res.success:
        raise DegeneratePolytopeError(f"interior-point LP failed: {res.message}")
    return res.x[:-1], float(res.x[-1])


def interior_point(p: ConsistentPolytope, min_radius: float | None = None) -> np.ndarray:
    """A strictly feasible point with declared slack margin.

    Raises DegeneratePolytopeError when the polytope is infeasible or its
    inscribed radius falls below `min_radius` (default 1e-9 * m).
    """
    if min_radius is None:
        min_radius = 1e-9 * max(1.0, p.m)
    x, radius = chebyshev_center(p)
    if radius < min_radius:
        raise DegeneratePolytopeError(
            f"polytope is degenerate (inscribed radius {radius:.3g} < {min_radius:.3g})")
    return x
