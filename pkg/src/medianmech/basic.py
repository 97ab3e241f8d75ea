"""Median mechanism over an explicitly enumerated consistent set.

The session keeps the set of size-m candidate databases consistent with all
previous hard answers, classifies each incoming query as easy or hard by
comparing a noisy agreement score against a randomly shifted threshold,
answers easy queries with the median candidate value and hard queries with a
Laplace perturbation of the truth, and fails once the hard-answer cap is
exceeded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Database, Domain, MechanismParams, Predicate, evaluate_query
from .exceptions import (
    EmptyConsistentSetError,
    EnumerationCapError,
    MechanismError,
    SessionFailedError,
)
from .noise import NoiseControl

DEFAULT_ENUMERATION_CAP = 10_000_000

#: Failure causes recorded on transcripts.
FAIL_HARD_CAP = "hard-cap"
FAIL_EMPTY_SET = "empty-consistent-set"
FAIL_DEGENERATE = "degenerate-polytope"


@dataclass(frozen=True)
class ConsistentSetBasic:
    """Explicit list of size-m databases, stored as a count matrix."""

    members: np.ndarray  # (count, |X|) int64
    m: int

    @property
    def size(self) -> int:
        return int(self.members.shape[0])

    def query_values(self, f: Predicate) -> np.ndarray:
        """f(S) for every member S, each an exact multiple of 1/m."""
        if f.domain_size != self.members.shape[1]:
            raise MechanismError("predicate dimension disagrees with member dimension")
        return self.members[:, f.indicator].sum(axis=1) / self.m


def _compositions(total: int, parts: int) -> np.ndarray:
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for first in range(total, -1, -1):
        rest = _compositions(total - first, parts - 1)
        col = np.full((rest.shape[0], 1), first, dtype=np.int64)
        blocks.append(np.hstack([col, rest]))
    return np.vstack(blocks)


def enumerate_c0(domain: Domain, m: int,
                 cap: int = DEFAULT_ENUMERATION_CAP) -> ConsistentSetBasic:
    """All size-m multisets over the domain, each exactly once."""
    if m < 1:
        raise ValueError("m must be >= 1")
    count = math.comb(domain.size + m - 1, m)
    if count > cap:
        raise EnumerationCapError(
            f"C_0 would contain {count} databases (cap {cap}); "
            "use the efficient polytope implementation instead")
    return ConsistentSetBasic(members=_compositions(m, domain.size), m=m)


def compute_r(db: Database, f: Predicate, c: ConsistentSetBasic, eps: float) -> float:
    """Mean of exp(-|f(D) - f(S)| / eps) over the consistent set."""
    if c.size == 0:
        raise EmptyConsistentSetError("consistent set is empty")
    truth = evaluate_query(f, db)
    return float(np.mean(np.exp(-np.abs(truth - c.query_values(f)) / eps)))


@dataclass(frozen=True)
class ThresholdDraw:
    """Random threshold t = 3/4 + j*gamma with Pr[j] proportional to 2^-j."""

    j: int
    t: float


def threshold_support(gamma: float) -> int:
    """Largest admissible j, floor(3 / (20*gamma))."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return int(math.floor(3.0 / (20.0 * gamma)))


def sample_threshold(gamma: float, rng: np.random.Generator) -> ThresholdDraw:
    """Draw from the normalized truncated-geometric threshold distribution.

    Consumes exactly one uniform; degenerate support (coarse gamma) yields
    j=0 with probability 1.
    """
    big_j = threshold_support(gamma)
    u = rng.random()
    if big_j == 0:
        return ThresholdDraw(j=0, t=0.75)
    z = 1.0 - 2.0 ** (-(big_j + 1))
    # smallest j with normalized CDF (1 - 2^-(j+1))/z >= u
    j = max(0, math.ceil(-math.log2(1.0 - u * z) - 1.0))
    j = min(int(j), big_j)
    return ThresholdDraw(j=j, t=0.75 + j * gamma)


def median_of(f: Predicate, c: ConsistentSetBasic) -> float:
    """Lower median of f over the consistent set (ascending order)."""
    if c.size == 0:
        raise EmptyConsistentSetError("consistent set is empty")
    vals = c.query_values(f)
    idx = (vals.shape[0] - 1) // 2
    return float(np.partition(vals, idx)[idx])


@dataclass
class TranscriptEntry:
    """One answered query; d follows the hard-indicator convention (1 = hard)."""

    i: int
    hard: bool
    a: float
    r: float
    r_hat: float
    t: float
    hard_count: int
    r_stderr: float | None = None
    polytope_pairs: int | None = None

    @property
    def classification(self) -> str:
        return "hard" if self.hard else "easy"

    def to_json(self) -> dict:
        doc = {"i": self.i, "d": int(self.hard), "a": self.a, "r": self.r,
               "r_hat": self.r_hat, "t": self.t, "hard_count": self.hard_count}
        if self.r_stderr is not None:
            doc["r_stderr"] = self.r_stderr
        if self.polytope_pairs is not None:
            doc["polytope_pairs"] = self.polytope_pairs
        return doc

    def release_json(self) -> dict:
        """Public view: classification bit and answer only."""
        return {"i": self.i, "d": int(self.hard), "a": self.a}


@dataclass
class Transcript:
    """Per-query records plus the failure flag."""

    entries: list[TranscriptEntry] = field(default_factory=list)
    failed: bool = False
    failure_cause: str | None = None

    @property
    def hard_count(self) -> int:
        return self.entries[-1].hard_count if self.entries else 0

    def answers(self) -> list[float]:
        return [e.a for e in self.entries]

    def to_jsonl(self) -> str:
        lines = [json.dumps(e.to_json()) for e in self.entries]
        if self.failed:
            lines.append(json.dumps({"failed": True, "cause": self.failure_cause}))
        return "\n".join(lines) + ("\n" if lines else "")

    def release_jsonl(self) -> str:
        lines = [json.dumps(e.release_json()) for e in self.entries]
        if self.failed:
            lines.append(json.dumps({"failed": True}))
        return "\n".join(lines) + ("\n" if lines else "")


class BasicMedianSession:
    """Stateful single-owner session answering up to k queries against one D."""

    def __init__(self, db: Database, params: MechanismParams,
                 rng: np.random.Generator,
                 enum_cap: int = DEFAULT_ENUMERATION_CAP,
                 noise: NoiseControl | None = None):
        if db.domain_size != params.domain_size:
            raise MechanismError("database dimension disagrees with params")
        if db.n != params.n:
            raise MechanismError("database size disagrees with params")
        self.db = db
        self.params = params
        self.rng = rng
        self.noise = noise or NoiseControl()
        self.consistent = enumerate_c0(Domain(size=params.domain_size),
                                       params.m, cap=enum_cap)
        self.hard_cap = params.hard_cap_basic
        self.transcript = Transcript()
        self._r_scale = 2.0 / (params.eps * params.n * params.alpha_prime)
        self._a_scale = 1.0 / (params.n * params.alpha_prime)

    @property
    def failed(self) -> bool:
        return self.transcript.failed

    @property
    def answered(self) -> int:
        return len(self.transcript.entries)

    def answer(self, f: Predicate) -> TranscriptEntry:
        """Classify and answer one query, updating the consistent set."""
        if self.failed:
            raise SessionFailedError(
                f"session failed ({self.transcript.failure_cause}); "
                "no further queries can be answered")
        if self.answered >= self.params.k:
            raise MechanismError("query budget k exhausted")
        # Fixed draw order: threshold, r-perturbation, answer-perturbation.
        draw = sample_threshold(self.params.gamma, self.rng)
        noise_r = self.noise.perturb("r", self._r_scale, self.rng)
        noise_a = self.noise.perturb("answer", self._a_scale, self.rng)

        r = compute_r(self.db, f, self.consistent, self.params.eps)
        r_hat = r + noise_r
        hard_count = self.transcript.hard_count
        if r_hat >= draw.t:
            a = median_of(f, self.consistent)
            hard = False
        else:
            a = evaluate_query(f, self.db) + noise_a
            hard = True
            hard_count += 1
            keep = np.abs(self.consistent.query_values(f) - a) <= self.params.eps / 50.0
            self.consistent = ConsistentSetBasic(
                members=self.consistent.members[keep], m=self.consistent.m)

        entry = TranscriptEntry(i=self.answered + 1, hard=hard, a=a, r=r,
                                r_hat=r_hat, t=draw.t, hard_count=hard_count)
        self.transcript.entries.append(entry)
        if hard and self.consistent.size == 0:
            self.transcript.failed = True
            self.transcript.failure_cause = FAIL_EMPTY_SET
        elif hard_count > self.hard_cap:
            self.transcript.failed = True
            self.transcript.failure_cause = FAIL_HARD_CAP
        return entry


def run_session(db: Database, query_source, params: MechanismParams,
                rng: np.random.Generator,
                enum_cap: int = DEFAULT_ENUMERATION_CAP,
                noise: NoiseControl | None = None) -> Transcript:
    """Drive a session over a query stream.

    `query_source` is either an iterable of predicates or a callable receiving
    the list of prior transcript entries and returning the next predicate (or
    None to stop), which is how adaptive adversaries are fed.
    """
    session = BasicMedianSession(db, params, rng, enum_cap=enum_cap, noise=noise)
    for f in _iter_queries(query_source, session):
        session.answer(f)
        if session.failed:
            break
    return session.transcript


def _iter_queries(query_source, session):
    if callable(query_source):
        while session.answered < session.params.k:
            f = query_source(list(session.transcript.entries))
            if f is None:
                return
            yield f
    else:
        for f in query_source:
            if session.answered >= session.params.k:
                return
            yield f
