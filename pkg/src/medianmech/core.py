"""Domains, databases, predicate queries, and mechanism parameters.

A domain is a finite universe of indexed elements; a database is a size-n
multiset over it, stored as a count histogram so that neighboring databases
are a unit move of one count to another. Predicates are boolean indicator
vectors over the domain, and a predicate query returns the fraction of
database elements satisfying the predicate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatchError, ParamsInfeasibleError

#: Multipliers (c_m, c_alpha_denom, c_gamma) used by the parameter formulas.
PAPER_CONSTANTS = (160000.0, 720.0, 4.0)


@dataclass(frozen=True)
class Domain:
    """Finite universe of `size` indexed elements, optionally labeled."""

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("domain size must be >= 1")
        if self.labels is not None:
            if len(self.labels) != self.size:
                raise ValueError("label count must equal domain size")
            if len(set(self.labels)) != self.size:
                raise ValueError("labels must be unique")

    def to_json(self) -> dict:
        doc = {"domain_size": self.size}
        if self.labels is not None:
            doc["labels"] = list(self.labels)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Domain":
        labels = doc.get("labels")
        return cls(size=int(doc["domain_size"]),
                   labels=tuple(labels) if labels is not None else None)


@dataclass(frozen=True)
class Database:
    """Multiset over a domain, stored as a nonnegative count histogram."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1:
            raise ValueError("counts must be a 1-d vector")
        if (counts < 0).any():
            raise ValueError("counts must be nonnegative")
        if counts.sum() < 1:
            raise ValueError("database must contain at least one element")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other):
        if not isinstance(other, Database):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    __hash__ = None

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def domain_size(self) -> int:
        return int(self.counts.shape[0])

    def to_json(self) -> dict:
        return {"domain_size": self.domain_size, "counts": self.counts.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "Database":
        counts = np.asarray(doc["counts"], dtype=np.int64)
        if "domain_size" in doc and int(doc["domain_size"]) != counts.shape[0]:
            raise DimensionMismatchError("counts length disagrees with domain_size")
        return cls(counts=counts)


@dataclass(frozen=True)
class Predicate:
    """Boolean function over the domain, stored as an indicator vector."""

    indicator: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.indicator, dtype=bool)
        if ind.ndim != 1:
            raise ValueError("indicator must be a 1-d vector")
        ind.setflags(write=False)
        object.__setattr__(self, "indicator", ind)

    def __eq__(self, other):
        if not isinstance(other, Predicate):
            return NotImplemented
        return np.array_equal(self.indicator, other.indicator)

    __hash__ = None

    @property
    def domain_size(self) -> int:
        return int(self.indicator.shape[0])

    def to_json(self) -> dict:
        return {"domain_size": self.domain_size,
                "indicator": [int(b) for b in self.indicator]}

    @classmethod
    def from_json(cls, doc: dict) -> "Predicate":
        ind = np.asarray(doc["indicator"], dtype=bool)
        if "domain_size" in doc and int(doc["domain_size"]) != ind.shape[0]:
            raise DimensionMismatchError("indicator length disagrees with domain_size")
        return cls(indicator=ind)


def evaluate_query(f: Predicate, db: Database) -> float:
    """Fraction of database elements satisfying the predicate.

    Integer count arithmetic with a single final division, so the result is
    exact up to one rounding.
    """
    if f.domain_size != db.domain_size:
        raise DimensionMismatchError(
            f"predicate over {f.domain_size} elements, database over {db.domain_size}")
    satisfied = int(db.counts[f.indicator].sum())
    return satisfied / db.n


def query_sensitivity(n: int) -> float:
    """Sensitivity of a non-trivial predicate query on size-n databases."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 1.0 / n


@dataclass(frozen=True)
class MechanismParams:
    """Derived parameter bundle shared by the median-mechanism variants.

    `m` is the consistent-database size, `alpha_prime` the per-step privacy
    scale, and `gamma` the threshold-grid gap. `n_bound_ok` records whether
    the database-size requirement held at derivation time.
    """

    alpha: float
    eps: float
    k: float
    n: int
    domain_size: int
    m: int
    alpha_prime: float
    gamma: float
    constants: tuple[float, float, float] = PAPER_CONSTANTS
    mode: str = "paper-exact"
    n_bound_ok: bool = True

    def __post_init__(self):
        if self.m < 1 or self.alpha_prime <= 0 or self.gamma <= 0:
            raise ValueError("derived parameters out of range")

    @property
    def hard_cap_basic(self) -> int:
        return math.ceil(20.0 * self.m * math.log(self.domain_size))

    @property
    def hard_cap_efficient(self) -> int:
        return math.ceil(40.0 * self.m * math.log(self.domain_size))

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha, "eps": self.eps, "k": self.k, "n": self.n,
            "domain_size": self.domain_size, "m": self.m,
            "alpha_prime": self.alpha_prime, "gamma": self.gamma,
            "constants": list(self.constants), "mode": self.mode,
            "n_bound_ok": self.n_bound_ok,
        }


def n_bound(alpha: float, eps: float, k: float, alpha_prime: float) -> float:
    """Smallest database size under which the derivation is guaranteed."""
    return 30.0 * math.log(2.0 * k / alpha) * math.log2(k) / (alpha_prime * eps)


def derive_params(alpha: float, eps: float, k: float, n: int, domain_size: int,
                  constants: tuple[float, float, float] = PAPER_CONSTANTS,
                  mode: str = "paper-exact",
                  overrides: dict | None = None) -> MechanismParams:
    """Fill in (m, alpha_prime, gamma) from the accuracy/privacy inputs.

    In paper-exact mode the three formulas are evaluated verbatim and a
    violated database-size bound raises ParamsInfeasibleError. In scaled mode
    the bound is only recorded in `n_bound_ok`, and `overrides` may pin any of
    m / alpha_prime / gamma directly (the remaining values are derived from
    the overridden ones).
    """
    if mode not in ("paper-exact", "scaled"):
        raise ValueError(f"unknown mode {mode!r}")
    if not (0.0 < alpha <= 1.0 and 0.0 < eps <= 1.0):
        raise ValueError("alpha and eps must lie in (0, 1]")
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < 1:
        raise ValueError("n must be >= 1")
    if domain_size < 2:
        raise ValueError("domain_size must be >= 2 (ln|X| appears in denominators)")
    c_m, c_adenom, c_gamma = constants
    if min(constants) <= 0:
        raise ValueError("constants must be positive")
    if overrides and mode != "scaled":
        raise ValueError("overrides are only allowed in scaled mode")
    overrides = overrides or {}

    m = overrides.get("m")
    if m is None:
        m = math.ceil(c_m * math.log(k) * math.log(1.0 / eps) / eps**2)
    m = int(m)

    alpha_prime = overrides.get("alpha_prime")
    if alpha_prime is None:
        alpha_prime = alpha / (c_adenom * m * math.log(domain_size))

    gamma = overrides.get("gamma")
    if gamma is None:
        gamma = (c_gamma / (alpha_prime * eps * n)) * math.log(2.0 * k / alpha)

    ok = n >= n_bound(alpha, eps, k, alpha_prime)
    if mode == "paper-exact" and not ok:
        raise ParamsInfeasibleError(
            f"n={n} is below the required bound "
            f"{n_bound(alpha, eps, k, alpha_prime):.6g}")
    return MechanismParams(alpha=alpha, eps=eps, k=k, n=n,
                           domain_size=domain_size, m=m,
                           alpha_prime=alpha_prime, gamma=gamma,
                           constants=tuple(constants), mode=mode,
                           n_bound_ok=bool(ok))


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
