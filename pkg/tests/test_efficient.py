import math

import numpy as np
import pytest

from medianmech.basic import FAIL_DEGENERATE, FAIL_HARD_CAP, run_session
from medianmech.core import Database, Domain, Predicate, derive_params, evaluate_query
from medianmech.efficient import (
    EfficientMedianSession,
    EstimatorConfig,
    database_sample,
    estimate_median,
    estimate_r,
    evaluate_query_fractional,
    good_volume_check,
    run_session_efficient,
    sample_histograms,
)
from medianmech.exceptions import (
    DimensionMismatchError,
    RegimeError,
    SessionFailedError,
)
from medianmech.noise import NoiseControl
from medianmech.oracle import quadrature_volume
from medianmech.polytope import ConsistentPolytope
from medianmech.sampler import WalkConfig


def scaled_params(domain_size, n, *, m, alpha_prime, eps=0.5, k=50, alpha=1.0):
    return derive_params(alpha, eps, k, n=n, domain_size=domain_size,
                         mode="scaled",
                         overrides={"m": m, "alpha_prime": alpha_prime})


def triangle_r_quadrature(f_db, eps, m, resolution=2000):
    """Dense-grid value of the continuous agreement score on the 2-d base body."""
    step = m / resolution
    centers = (np.arange(resolution) + 0.5) * step
    x, y = np.meshgrid(centers, centers, indexing="ij")
    inside = (x + y) <= m
    vals = x[inside] / m
    return float(np.exp(-np.abs(vals - f_db) / eps).mean())


def test_evaluate_query_fractional_cases():
    f = Predicate(np.array([True, False, True]))
    assert evaluate_query_fractional(f, np.zeros(3), m=2.0) == 0.0
    e1 = Predicate(np.array([True, False, False]))
    assert evaluate_query_fractional(e1, np.array([2.0, 0.0, 0.0]), m=2.0) == 1.0
    assert evaluate_query_fractional(f, np.array([1.0, 1.0, 0.0]), m=2.0) == 0.5
    with pytest.raises(DimensionMismatchError):
        evaluate_query_fractional(f, np.zeros(4), m=2.0)


def test_estimate_r_constant_integrand():
    db = Database(counts=np.array([1, 1]))  # f(D) = 0.5
    f = Predicate(np.array([True, False]))
    p = ConsistentPolytope(domain_size=2, m=2.0)
    config = EstimatorConfig(n_samples=16)
    # crafted samples where f(F) is constant at f(D): estimate exactly 1
    at_truth = np.tile([1.0, 0.5], (16, 1))
    est = estimate_r(db, f, p, eps=0.5, config=config,
                     rng=np.random.default_rng(0), samples=at_truth)
    assert est.value == 1.0
    # constant at distance eps: exactly 1/e
    at_eps = np.tile([2.0, 0.0], (16, 1))  # f(F) = 1.0, |1.0 - 0.5| = eps
    est = estimate_r(db, f, p, eps=0.5, config=config,
                     rng=np.random.default_rng(0), samples=at_eps)
    assert est.value == pytest.approx(math.exp(-1.0))
    assert est.stderr == pytest.approx(0.0)


def test_estimate_r_matches_quadrature():
    db = Database(counts=np.array([3, 1]))  # f(D) = 0.75
    f = Predicate(np.array([True, False]))
    p = ConsistentPolytope(domain_size=2, m=2.0)
    config = EstimatorConfig(n_samples=20_000)
    est = estimate_r(db, f, p, eps=0.5, config=config,
                     rng=np.random.default_rng(42))
    truth = triangle_r_quadrature(0.75, eps=0.5, m=2.0)
    assert abs(est.value - truth) <= 3 * est.stderr + 2e-3  # grid error allowance


def test_estimator_consistency_error_decays():
    db = Database(counts=np.array([3, 1]))
    f = Predicate(np.array([True, False]))
    p = ConsistentPolytope(domain_size=2, m=2.0)
    truth = triangle_r_quadrature(0.75, eps=0.5, m=2.0)
    mean_errs = []
    for n in (100, 1000, 10_000):
        errs = []
        for seed in range(8):
            est = estimate_r(db, f, p, eps=0.5,
                             config=EstimatorConfig(n_samples=n),
                             rng=np.random.default_rng(1000 + seed))
            errs.append(abs(est.value - truth))
        mean_errs.append(np.mean(errs))
    assert mean_errs[0] > mean_errs[1] > mean_errs[2]


def test_estimate_median_cases():
    p = ConsistentPolytope(domain_size=2, m=2.0)
    f = Predicate(np.array([True, False]))
    config = EstimatorConfig(n_samples=4)
    const = np.tile([0.8, 0.1], (5, 1))
    assert estimate_median(f, p, config, np.random.default_rng(0),
                           samples=const) == pytest.approx(0.4)
    single = np.array([[1.2, 0.3]])
    assert estimate_median(f, p, config, np.random.default_rng(0),
                           samples=single) == pytest.approx(0.6)


def test_estimate_median_box_coordinate():
    # unit box via pairs; f reads one coordinate: median of U[0,1]/m = 0.25
    p = ConsistentPolytope(domain_size=2, m=2.0)
    p = p.with_pair(np.array([True, False]), 0.25, 0.5)
    p = p.with_pair(np.array([False, True]), 0.25, 0.5)
    f = Predicate(np.array([True, False]))
    med = estimate_median(f, p, EstimatorConfig(n_samples=10_000),
                          np.random.default_rng(3))
    assert med == pytest.approx(0.25, abs=0.03)


def test_session_constant_queries_stay_easy():
    db = Database(counts=np.array([2, 2]))
    params = scaled_params(2, 4, m=2, alpha_prime=100.0)
    f = Predicate(np.zeros(2, bool))  # f(F) = 0 = f(D) everywhere
    transcript = run_session_efficient(
        db, [f] * 8, params, config=EstimatorConfig(n_samples=200),
        rng=np.random.default_rng(0), noise=NoiseControl(unsafe_testing=True,
                                                         force_zero=True))
    assert len(transcript.entries) == 8
    assert all(not e.hard for e in transcript.entries)
    assert all(e.polytope_pairs == 0 for e in transcript.entries)
    assert all(e.a == 0.0 for e in transcript.entries)


def test_session_hard_cap_failure():
    db = Database(counts=np.array([2, 2]))
    params = scaled_params(2, 4, m=1, alpha_prime=3000.0, k=100)
    cap = params.hard_cap_efficient
    noise = NoiseControl(unsafe_testing=True, force_zero=True,
                         fixed_draws={"r": [-10.0]})
    qrng = np.random.default_rng(2)
    session = EfficientMedianSession(db, params, np.random.default_rng(0),
                                     config=EstimatorConfig(n_samples=50),
                                     noise=noise)
    while not session.failed:
        session.answer(Predicate(qrng.random(2) < 0.5))
    assert session.transcript.failure_cause == FAIL_HARD_CAP
    assert session.transcript.entries[-1].hard_count == cap + 1
    for e in session.transcript.entries[:-1]:
        assert e.hard_count <= cap


def test_session_degenerate_failure_distinct():
    db = Database(counts=np.array([2, 2]))
    params = scaled_params(2, 4, m=2, alpha_prime=3000.0)
    noise = NoiseControl(unsafe_testing=True, force_zero=True,
                         fixed_draws={"r": [-10.0], "answer": [10.0]})
    session = EfficientMedianSession(db, params, np.random.default_rng(0),
                                     config=EstimatorConfig(n_samples=50),
                                     noise=noise)
    entry = session.answer(Predicate(np.array([True, False])))
    assert entry.hard
    assert session.failed
    assert session.transcript.failure_cause == FAIL_DEGENERATE
    with pytest.raises(SessionFailedError):
        session.answer(Predicate(np.array([True, False])))


def test_session_entries_carry_estimator_fields():
    db = Database(counts=np.array([2, 2]))
    params = scaled_params(2, 4, m=2, alpha_prime=100.0)
    transcript = run_session_efficient(
        db, [Predicate(np.array([True, False]))] * 3, params,
        config=EstimatorConfig(n_samples=64), rng=np.random.default_rng(5))
    for e in transcript.entries:
        assert e.r_stderr is not None
        assert e.polytope_pairs is not None


def test_stderr_budget_violations_counted():
    db = Database(counts=np.array([2, 2]))
    params = scaled_params(2, 4, m=2, alpha_prime=100.0)
    session = EfficientMedianSession(db, params, np.random.default_rng(0),
                                     config=EstimatorConfig(n_samples=8))
    session.answer(Predicate(np.array([True, False])))
    # 8 samples cannot meet 3*se <= 1/200 for a spread-out integrand
    assert session.stderr_budget_violations >= 1


def test_default_n_is_chernoff_shaped():
    config = EstimatorConfig()
    assert config.resolve_n(0.5, 16) == math.ceil(math.log(4 * 16 / 0.05) * 100 ** 2)


def test_database_sample_basics():
    assert database_sample(Domain(size=1), 7, np.random.default_rng(0)).counts[0] == 7
    db = database_sample(Domain(size=5), 40, np.random.default_rng(1))
    assert db.n == 40 and db.domain_size == 5


def test_database_sample_beta_marginal_smoke():
    # small-sample version of the |X|=10 second-moment check
    hists = sample_histograms(Domain(size=10), 20_000, np.random.default_rng(4))
    normalized = hists / hists.sum(axis=1, keepdims=True)
    target = 2.0 / (10 * 11)
    assert (normalized**2).mean() == pytest.approx(target, rel=0.10)


def test_good_volume_vacuous_cases():
    db = Database(counts=np.array([1, 1]))
    rep = good_volume_check(db, [], eps=1.0, m=2.0, grid_resolution=50)
    assert rep.ratio == 1.0 and rep.satisfied
    f = Predicate(np.array([True, False]))
    rep = good_volume_check(db, [f], eps=100.0, m=2.0, grid_resolution=100)
    assert rep.ratio == 1.0


def test_good_volume_slab_triangle_closed_form():
    # |X|=2, m=1, balanced singleton query: ratio = 2 * tol exactly
    db = Database(counts=np.array([1, 1]))
    f = Predicate(np.array([True, False]))
    eps = 10.0  # tol = 0.1
    rep = good_volume_check(db, [f], eps=eps, m=1.0, grid_resolution=400)
    tol = eps / 100
    b, a = 0.5 + tol, 0.5 - tol
    slab_area = (b - a) - (b**2 - a**2) / 2
    assert rep.ratio == pytest.approx(slab_area / 0.5, rel=0.02)
    assert rep.ratio == pytest.approx(2 * tol, rel=0.02)


def test_good_volume_guards():
    db = Database(counts=np.array([1, 1, 1, 1, 1]))
    with pytest.raises(RegimeError):
        good_volume_check(db, [], eps=1.0, m=2.0, grid_resolution=100)
    db2 = Database(counts=np.array([1, 1]))
    f = Predicate(np.array([True, False]))
    with pytest.raises(ValueError, match="coarse"):
        good_volume_check(db2, [f], eps=1.0, m=2.0, grid_resolution=50)


def test_continuous_contraction_via_quadrature():
    # hard steps with estimated r < 0.91 contract the polytope volume to <= 94%
    db = Database(counts=np.array([2, 2]))
    params = scaled_params(2, 4, m=2, alpha_prime=4000.0, eps=0.5, k=25)
    predicates = []

    def stream(prior):
        if len(predicates) >= 25:
            return None
        qrng = np.random.default_rng(100 + len(predicates))
        f = Predicate(qrng.random(2) < 0.5)
        predicates.append(f)
        return f

    transcript = run_session_efficient(
        db, stream, params, config=EstimatorConfig(n_samples=10_000),
        rng=np.random.default_rng(9))
    polytope = ConsistentPolytope(domain_size=2, m=float(params.m))
    prev_vol = quadrature_volume(polytope, 600).volume
    checked = 0
    for entry, f in zip(transcript.entries, predicates):
        if entry.hard:
            polytope = polytope.with_pair(f.indicator, entry.a,
                                          params.eps * polytope.m / 50.0)
            vol = quadrature_volume(polytope, 600).volume
            if entry.r < 0.91:
                assert vol <= 0.94 * prev_vol
                checked += 1
            prev_vol = vol
    assert checked >= 1


def test_database_sample_good_volume_trend():
    # sampled databases fail the volume condition less often as n grows
    dom = Domain(size=3)
    f = [Predicate(np.array([True, False, False]))]
    rng = np.random.default_rng(12)
    frac = {}
    for n in (2, 8, 64):
        fails = sum(
            not good_volume_check(database_sample(dom, n, rng), f, eps=1.0,
                                  m=4, grid_resolution=100).satisfied
            for _ in range(80))
        frac[n] = fails / 80
    assert frac[2] > frac[8] + 0.05
    assert frac[8] >= frac[64]
    assert frac[2] > frac[64] + 0.1


def test_paired_runs_share_noise_smoke():
    # identical noise streams: thresholds match query-by-query across variants
    db = Database(counts=np.array([2, 2, 0]))
    params = scaled_params(3, 4, m=2, alpha_prime=2000.0, k=10)
    queries = [Predicate(np.random.default_rng(50 + i).random(3) < 0.5)
               for i in range(10)]
    basic_tr = run_session(db, queries, params, np.random.default_rng(77))
    eff_tr = run_session_efficient(db, queries, params,
                                   config=EstimatorConfig(n_samples=2000),
                                   rng=np.random.default_rng(77),
                                   sampler_rng=np.random.default_rng(1))
    for a, b in zip(basic_tr.entries, eff_tr.entries):
        assert a.t == b.t
        assert (a.r_hat - a.r) == pytest.approx(b.r_hat - b.r, abs=1e-12)
