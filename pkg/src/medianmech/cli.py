"""Command line interface: run experiments, compare metrics, verify, bench."""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__
from .core import Domain
from .harness import ExperimentConfig, aggregate_csv, compare_report, run_experiment
from .noise import laplace_cdf, laplace_mechanism, sample_laplace_array
from .oracle import privacy_loss_estimate, verify_r_sensitivity
from .polytope import ConsistentPolytope, membership_many
from .sampler import WalkConfig, load_backend, sample_uniform


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="medianmech",
        description="Interactive differentially private query answering "
                    "(Laplace baseline and median mechanisms).")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True, help="experiment JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override seed (u64)")
    p_run.add_argument("--mechanism", default=None,
                       help="override mechanism (laplace|median-basic|median-efficient)")
    p_run.add_argument("--trials", type=int, default=None, help="override trial count")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--release", action="store_true",
                       help="also write release-view transcripts (d, a only)")

    p_cmp = sub.add_parser("compare", help="aggregate metrics CSV files")
    p_cmp.add_argument("--inputs", nargs="+", required=True,
                       help="metrics.csv paths or globs")
    p_cmp.add_argument("--out", default=None, help="write aggregate CSV here")

    p_ver = sub.add_parser("verify", help="run a brute-force oracle suite")
    p_ver.add_argument("--suite", required=True,
                       choices=["r-sensitivity", "laplace", "privacy-laplace",
                                "sampler", "all"])
    p_ver.add_argument("--seed", type=int, default=0)

    p_bench = sub.add_parser("bench", help="benchmark walk kernels (compiled vs python)")
    p_bench.add_argument("--dim", type=int, default=8)
    p_bench.add_argument("--pairs", type=int, default=6)
    p_bench.add_argument("--samples", type=int, default=4000)
    p_bench.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "compare":
        return _cmd_compare(args)
    if args.command == "verify":
        return _cmd_verify(args)
    if args.command == "bench":
        return _cmd_bench(args)
    return 2


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    doc = config.to_json()
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.mechanism is not None:
        doc["mechanism"] = args.mechanism
    if args.trials is not None:
        doc["trials"] = args.trials
    config = ExperimentConfig.from_json(doc)
    results = run_experiment(config, out_dir=args.out, write_release=args.release)
    failed = sum(1 for r in results if r.failed)
    accs = [r.eps_accurate_fraction for r in results
            if r.eps_accurate_fraction is not None]
    summary = {
        "mechanism": config.mechanism,
        "trials": len(results),
        "failed_trials": failed,
        "mean_eps_accurate_fraction": float(np.mean(accs)) if accs else None,
        "out": args.out,
    }
    print(json.dumps(summary))
    return 0


def _cmd_compare(args) -> int:
    rows, table = compare_report(args.inputs)
    print(table, end="")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(aggregate_csv(rows))
    return 0


def _suite_r_sensitivity(seed: int) -> dict:
    worst = 0.0
    cases = 0
    for size in (2, 3, 4):
        for n in (1, 2, 3):
            for m in (1, 2):
                for eps in (0.5, 1.0):
                    rep = verify_r_sensitivity(size, n, m, eps,
                                               rng=np.random.default_rng(seed))
                    worst = max(worst, rep.max_delta / rep.bound)
                    cases += 1
    return {"passed": True, "cases": cases, "worst_ratio_to_bound": worst}


def _suite_laplace(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    samples = np.sort(sample_laplace_array(1.0, rng, 100_000))
    grid = np.arange(1, samples.size + 1) / samples.size
    cdf = np.array([laplace_cdf(1.0, x) for x in samples])
    ks = float(np.max(np.abs(grid - cdf)))
    mean = float(samples.mean())
    passed = ks <= 0.02 and abs(mean) < 0.02
    return {"passed": passed, "ks_statistic": ks, "empirical_mean": mean}


def _suite_privacy_laplace(seed: int, trials: int = 200_000) -> dict:
    from .core import Database, Predicate

    alpha = 0.5
    db = Database(counts=np.array([50, 50]))
    db_prime = Database(counts=np.array([51, 49]))
    f = Predicate(indicator=np.array([True, False]))

    def outputs(d, rng, count):
        base = np.sum(d.counts[f.indicator]) / d.n
        return base + sample_laplace_array(1.0 / (d.n * alpha), rng, (count, 1))

    rep = privacy_loss_estimate(outputs, db, db_prime, bins=200, trials=trials,
                                rng=np.random.default_rng(seed))
    passed = 0.4 <= rep.estimate <= 0.6
    return {"passed": passed, "estimate": rep.estimate, "alpha": alpha,
            "trials": trials, "flagged_bins": rep.flagged_bins}


def _suite_sampler(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    simplex = ConsistentPolytope(domain_size=3, m=1.0)
    pts = sample_uniform(simplex, 10_000, WalkConfig(), rng)
    sound = bool(membership_many(simplex, pts).all())
    first = pts.mean(axis=0)
    target = 1.0 / (3 + 1)
    err = float(np.abs(first - target).max() / target)
    passed = sound and err <= 0.02
    return {"passed": passed, "membership_sound": sound,
            "first_moment_rel_err": err}


def _cmd_verify(args) -> int:
    suites = {
        "r-sensitivity": _suite_r_sensitivity,
        "laplace": _suite_laplace,
        "privacy-laplace": _suite_privacy_laplace,
        "sampler": _suite_sampler,
    }
    names = list(suites) if args.suite == "all" else [args.suite]
    report = {}
    ok = True
    for name in names:
        report[name] = suites[name](args.seed)
        ok = ok and report[name]["passed"]
    print(json.dumps({"suites": report, "passed": ok}))
    return 0 if ok else 1


def _bench_polytope(dim: int, pairs: int, rng) -> ConsistentPolytope:
    p = ConsistentPolytope(domain_size=dim, m=float(dim))
    center = np.full(dim, 0.5)  # reference point with value ~ sel/dim per pair
    for _ in range(pairs):
        ind = rng.random(dim) < 0.5
        if not ind.any():
            ind[0] = True
        value = center[ind].sum() / p.m
        p = p.with_pair(ind, value, 0.15 * p.m / 2)
    return p


def _cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    p = _bench_polytope(args.dim, args.pairs, rng)
    thin = 5 * args.dim
    results = {}
    for name in ("python", "compiled"):
        try:
            load_backend(name)
        except ImportError:
            print(f"{name:>9}: not available")
            continue
        t0 = time.perf_counter()
        pts = sample_uniform(p, args.samples, WalkConfig(chains=4),
                             np.random.default_rng(args.seed), backend=name)
        dt = time.perf_counter() - t0
        steps = (args.samples / 4) * thin + 50 * args.dim
        results[name] = dt
        print(f"{name:>9}: {dt:8.3f}s  ({steps * 4 / dt:,.0f} chain-steps/s, "
              f"{pts.shape[0]} samples)")
    if "python" in results and "compiled" in results:
        print(f"  speedup: {results['python'] / results['compiled']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
