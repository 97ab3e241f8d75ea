"""Experiment harness: configs, query streams, metrics, and comparisons.

Runs are deterministic given (config, seed): per-trial streams are derived
from SeedSequence((seed, trial)) and split into independent database, query,
noise, and sampler streams. Transcript JSONL and metrics CSV schemas are
fixed; see README.
"""

from __future__ import annotations

import csv
import glob as globmod
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .basic import Transcript, TranscriptEntry, run_session
from .core import (
    PAPER_CONSTANTS,
    Database,
    Domain,
    Predicate,
    derive_params,
    evaluate_query,
)
from .efficient import EstimatorConfig, database_sample, run_session_efficient
from .exceptions import MechanismError
from .noise import sample_laplace
from .sampler import WalkConfig, backend_name

MECHANISMS = ("laplace", "median-basic", "median-efficient")
QUERY_KINDS = ("random", "singletons", "bisection")
METRICS_COLUMNS = ("mechanism", "trial", "answered", "easy_count", "hard_count",
                   "failed", "failure_cause", "eps_accurate_fraction",
                   "mean_abs_error", "max_abs_error")


# ---------------------------------------------------------------------------
# query streams

class RandomQueryStream:
    """Each element included independently with probability 1/2."""

    def __init__(self, domain: Domain, count: int, rng: np.random.Generator):
        self.domain = domain
        self.count = count
        self.rng = rng
        self.issued = 0

    def __call__(self, prior) -> Predicate | None:
        if self.issued >= self.count:
            return None
        self.issued += 1
        return Predicate(indicator=self.rng.random(self.domain.size) < 0.5)


class SingletonSweep:
    """e_1, e_2, ..., cycling through the domain."""

    def __init__(self, domain: Domain, count: int):
        self.domain = domain
        self.count = count
        self.issued = 0

    def __call__(self, prior) -> Predicate | None:
        if self.issued >= self.count:
            return None
        ind = np.zeros(self.domain.size, dtype=bool)
        ind[self.issued % self.domain.size] = True
        self.issued += 1
        return Predicate(indicator=ind)


class BisectionAdversary:
    """Prefix bisection against the mechanism's own answers.

    Maintains an index interval and a target level; each answer halves the
    interval, and a fresh random target restarts the search once it collapses.
    Stresses the hard branch with strongly correlated adaptive queries.
    """

    def __init__(self, domain: Domain, count: int, rng: np.random.Generator):
        if domain.size < 2:
            raise ValueError("bisection adversary needs |X| >= 2")
        self.domain = domain
        self.count = count
        self.rng = rng
        self.issued = 0
        self.lo, self.hi = 0, domain.size
        self.target = 0.5
        self.pending_mid: int | None = None

    def __call__(self, prior) -> Predicate | None:
        if self.issued >= self.count:
            return None
        if self.pending_mid is not None and prior:
            if prior[-1].a >= self.target:
                self.hi = self.pending_mid
            else:
                self.lo = self.pending_mid
        if self.hi - self.lo <= 1:
            self.lo, self.hi = 0, self.domain.size
            self.target = float(self.rng.random())
        mid = (self.lo + self.hi) // 2
        self.pending_mid = mid
        ind = np.zeros(self.domain.size, dtype=bool)
        ind[:mid] = True
        self.issued += 1
        return Predicate(indicator=ind)


def generate_queries(spec: dict, domain: Domain, rng: np.random.Generator):
    """Build a query stream callable from its config spec."""
    kind = spec.get("kind")
    count = int(spec.get("count", 0))
    if kind == "random":
        return RandomQueryStream(domain, count, rng)
    if kind == "singletons":
        return SingletonSweep(domain, count)
    if kind == "bisection":
        return BisectionAdversary(domain, count, rng)
    raise MechanismError(f"unknown query kind {kind!r}")


# ---------------------------------------------------------------------------
# configuration

@dataclass
class ExperimentConfig:
    """One experiment: domain, database source, mechanism, streams, seed."""

    domain_size: int
    database: dict
    mechanism: str
    alpha: float
    eps: float
    queries: dict
    seed: int = 0
    trials: int = 1
    mode: str = "scaled"
    constants: tuple[float, float, float] = PAPER_CONSTANTS
    overrides: dict | None = None
    estimator: dict | None = None
    enum_cap: int = 10_000_000
    labels: list[str] | None = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise MechanismError(f"unknown mechanism {self.mechanism!r}")
        if self.queries.get("kind") not in QUERY_KINDS:
            raise MechanismError(f"unknown query kind {self.queries.get('kind')!r}")
        sources = ("counts", "uniform", "sampled")
        if self.database.get("type") not in sources:
            raise MechanismError("database.type must be one of " + ", ".join(sources))
        if self.database["type"] == "counts" and "counts" not in self.database:
            raise MechanismError("database.type=counts requires a counts array")
        if self.database["type"] in ("uniform", "sampled") and "n" not in self.database:
            raise MechanismError(f"database.type={self.database['type']} requires n")
        if self.estimator is not None and self.mechanism != "median-efficient":
            raise MechanismError("estimator settings only apply to median-efficient")
        if self.trials < 1:
            raise MechanismError("trials must be >= 1")

    @property
    def n(self) -> int:
        if self.database["type"] == "counts":
            return int(np.sum(self.database["counts"]))
        return int(self.database["n"])

    def to_json(self) -> dict:
        doc = {
            "domain": {"size": self.domain_size},
            "database": self.database,
            "mechanism": self.mechanism,
            "params": {"alpha": self.alpha, "eps": self.eps, "mode": self.mode,
                       "constants": list(self.constants)},
            "queries": self.queries,
            "seed": self.seed,
            "trials": self.trials,
            "enum_cap": self.enum_cap,
        }
        if self.labels:
            doc["domain"]["labels"] = self.labels
        if self.overrides:
            doc["params"]["overrides"] = self.overrides
        if self.estimator is not None:
            doc["estimator"] = self.estimator
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        params = doc.get("params", {})
        return cls(
            domain_size=int(doc["domain"]["size"]),
            labels=doc["domain"].get("labels"),
            database=doc["database"],
            mechanism=doc["mechanism"],
            alpha=float(params["alpha"]),
            eps=float(params["eps"]),
            mode=params.get("mode", "scaled"),
            constants=tuple(params.get("constants", PAPER_CONSTANTS)),
            overrides=params.get("overrides"),
            queries=doc["queries"],
            estimator=doc.get("estimator"),
            seed=int(doc.get("seed", 0)),
            trials=int(doc.get("trials", 1)),
            enum_cap=int(doc.get("enum_cap", 10_000_000)),
        )

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _estimator_from_spec(spec: dict | None) -> EstimatorConfig:
    spec = spec or {}
    walk_spec = spec.get("walk", {})
    walk = WalkConfig(burn_in=walk_spec.get("burn_in"),
                      thinning=walk_spec.get("thinning"),
                      chains=walk_spec.get("chains", 4))
    return EstimatorConfig(n_samples=spec.get("n_samples"),
                           delta=spec.get("delta", 0.05),
                           walk=walk,
                           resample_per_query=spec.get("resample_per_query", True))


# ---------------------------------------------------------------------------
# running

@dataclass
class RunMetrics:
    """Deterministic per-trial summary row (see METRICS_COLUMNS)."""

    mechanism: str
    trial: int
    answered: int
    easy_count: int
    hard_count: int
    failed: bool
    failure_cause: str | None
    eps_accurate_fraction: float | None
    mean_abs_error: float | None
    max_abs_error: float | None

    def row(self) -> list:
        def cell(v):
            return "" if v is None else v
        return [self.mechanism, self.trial, self.answered, self.easy_count,
                self.hard_count, int(self.failed), cell(self.failure_cause),
                cell(self.eps_accurate_fraction), cell(self.mean_abs_error),
                cell(self.max_abs_error)]


class _RecordingStream:
    """Wraps a stream, recording each issued predicate for metrics."""

    def __init__(self, inner, db: Database):
        self.inner = inner
        self.db = db
        self.predicates: list[Predicate] = []
        self.truths: list[float] = []

    def __call__(self, prior):
        f = self.inner(prior)
        if f is not None:
            self.predicates.append(f)
            self.truths.append(evaluate_query(f, self.db))
        return f


def _trial_rngs(seed: int, trial: int):
    ss = np.random.SeedSequence((seed, trial))
    children = ss.spawn(4)
    return tuple(np.random.default_rng(c) for c in children)


def _build_database(config: ExperimentConfig, rng: np.random.Generator) -> Database:
    spec = config.database
    if spec["type"] == "counts":
        return Database(counts=np.asarray(spec["counts"], dtype=np.int64))
    n = int(spec["n"])
    domain = Domain(size=config.domain_size)
    if spec["type"] == "uniform":
        probs = np.full(config.domain_size, 1.0 / config.domain_size)
        return Database(counts=rng.multinomial(n, probs).astype(np.int64))
    return database_sample(domain, n, rng)


def _run_laplace(db: Database, stream, count: int, alpha: float,
                 rng: np.random.Generator) -> Transcript:
    transcript = Transcript()
    if count < 1:
        return transcript
    scale = count / (db.n * alpha)
    while len(transcript.entries) < count:
        f = stream(list(transcript.entries))
        if f is None:
            break
        a = evaluate_query(f, db) + sample_laplace(scale, rng)
        transcript.entries.append(TranscriptEntry(
            i=len(transcript.entries) + 1, hard=True, a=a, r=None, r_hat=None,
            t=None, hard_count=len(transcript.entries) + 1))
    return transcript


def run_trial(config: ExperimentConfig, trial: int,
              noise=None) -> tuple[Transcript, RunMetrics]:
    """Run one seeded trial; returns the transcript and its metrics row.

    `noise` is an optional unsafe-testing NoiseControl forwarded to median
    sessions; it is not part of the config schema on purpose.
    """
    db_rng, query_rng, noise_rng, sampler_rng = _trial_rngs(config.seed, trial)
    db = _build_database(config, db_rng)
    domain = Domain(size=config.domain_size,
                    labels=tuple(config.labels) if config.labels else None)
    count = int(config.queries.get("count", 0))
    stream = _RecordingStream(generate_queries(config.queries, domain, query_rng), db)

    if config.mechanism == "laplace":
        transcript = _run_laplace(db, stream, count, config.alpha, noise_rng)
    else:
        params = derive_params(config.alpha, config.eps, k=max(count, 2), n=db.n,
                               domain_size=config.domain_size,
                               constants=config.constants, mode=config.mode,
                               overrides=config.overrides)
        if config.mechanism == "median-basic":
            transcript = run_session(db, stream, params, noise_rng,
                                     enum_cap=config.enum_cap, noise=noise)
        else:
            est = _estimator_from_spec(config.estimator)
            transcript = run_session_efficient(db, stream, params, config=est,
                                               rng=noise_rng, noise=noise,
                                               sampler_rng=sampler_rng)
    return transcript, compute_metrics(config.mechanism, trial, transcript,
                                       stream.truths, config.eps)


def compute_metrics(mechanism: str, trial: int, transcript: Transcript,
                    truths: list[float], eps: float) -> RunMetrics:
    entries = transcript.entries
    answered = len(entries)
    if answered == 0:
        return RunMetrics(mechanism=mechanism, trial=trial, answered=0,
                          easy_count=0, hard_count=0, failed=transcript.failed,
                          failure_cause=transcript.failure_cause,
                          eps_accurate_fraction=None, mean_abs_error=None,
                          max_abs_error=None)
    errors = np.abs(np.array([e.a for e in entries]) - np.array(truths[:answered]))
    hard = sum(1 for e in entries if e.hard)
    return RunMetrics(
        mechanism=mechanism, trial=trial, answered=answered,
        easy_count=answered - hard, hard_count=hard,
        failed=transcript.failed, failure_cause=transcript.failure_cause,
        eps_accurate_fraction=float((errors <= eps).mean()),
        mean_abs_error=float(errors.mean()), max_abs_error=float(errors.max()))


def run_experiment(config: ExperimentConfig, out_dir=None,
                   write_release: bool = False, noise=None) -> list[RunMetrics]:
    """Run all trials; optionally write transcripts, metrics.csv, metadata.json."""
    t0 = time.perf_counter()
    results = []
    transcripts = []
    for trial in range(config.trials):
        transcript, metrics = run_trial(config, trial, noise=noise)
        transcripts.append(transcript)
        results.append(metrics)
    wall = time.perf_counter() - t0

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for trial, transcript in enumerate(transcripts):
            (out / f"transcript_{trial:03d}.jsonl").write_text(transcript.to_jsonl())
            if write_release:
                (out / f"release_{trial:03d}.jsonl").write_text(
                    transcript.release_jsonl())
        (out / "metrics.csv").write_text(render_metrics_csv(results))
        meta = {"config": config.to_json(), "version": __version__,
                "sampler_backend": backend_name(), "wall_time_s": wall}
        (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    return results


def render_metrics_csv(rows: list[RunMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for r in rows:
        writer.writerow(r.row())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# comparison

def _read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
            raise MechanismError(f"{path}: unexpected metrics schema "
                                 f"{reader.fieldnames}")
        return list(reader)


def compare_report(inputs: list[str]) -> tuple[list[dict], str]:
    """Aggregate metrics files by mechanism; returns (rows, text table)."""
    paths = []
    for pattern in inputs:
        matched = sorted(globmod.glob(str(pattern)))
        paths.extend(matched if matched else [pattern])
    if not paths:
        raise MechanismError("no metrics files given")
    records = []
    for p in paths:
        records.extend(_read_metrics(p))
    by_mech: dict[str, list[dict]] = {}
    for rec in records:
        by_mech.setdefault(rec["mechanism"], []).append(rec)

    rows = []
    for mech in sorted(by_mech):
        recs = by_mech[mech]
        errs = np.array([float(r["mean_abs_error"]) for r in recs
                         if r["mean_abs_error"] != ""])
        hards = np.array([int(r["hard_count"]) for r in recs], dtype=float)
        accs = np.array([float(r["eps_accurate_fraction"]) for r in recs
                         if r["eps_accurate_fraction"] != ""])
        fails = np.array([int(r["failed"]) for r in recs], dtype=float)
        rows.append({
            "mechanism": mech,
            "runs": len(recs),
            "mean_error": float(errs.mean()) if errs.size else None,
            "median_error": float(np.median(errs)) if errs.size else None,
            "q90_error": float(np.quantile(errs, 0.9)) if errs.size else None,
            "mean_hard": float(hards.mean()) if hards.size else None,
            "accuracy_rate": float(accs.mean()) if accs.size else None,
            "failure_rate": float(fails.mean()) if fails.size else None,
        })
    return rows, _render_table(rows)


def _render_table(rows: list[dict]) -> str:
    if not rows:
        return "(no data)\n"
    cols = list(rows[0].keys())
    cells = [[_fmt(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def aggregate_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()),
                            lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# query-budget sweep (median-vs-Laplace headline comparison)

def trial_useful(metrics: RunMetrics, k: int, eps: float) -> bool:
    """All k queries answered and every answer eps-accurate."""
    return (not metrics.failed and metrics.answered == k
            and metrics.max_abs_error is not None
            and metrics.max_abs_error <= eps)


def sweep_useful_k(config: ExperimentConfig, ks: list[int],
                   delta: float = 0.05) -> tuple[int, dict[int, float]]:
    """Largest k (from the ascending ladder) at which the configured mechanism
    stays (eps, delta)-useful empirically; stops at the first failing k."""
    rates: dict[int, float] = {}
    largest = 0
    for k in ks:
        cfg_doc = config.to_json()
        cfg_doc["queries"] = dict(cfg_doc["queries"], count=int(k))
        cfg = ExperimentConfig.from_json(cfg_doc)
        results = run_experiment(cfg)
        rate = float(np.mean([trial_useful(m, k, config.eps) for m in results]))
        rates[k] = rate
        if rate >= 1.0 - delta:
            largest = k
        else:
            break
    return largest, rates
