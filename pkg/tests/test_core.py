import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medianmech.core import (
    Database,
    Domain,
    Predicate,
    derive_params,
    evaluate_query,
    n_bound,
    query_sensitivity,
)
from medianmech.exceptions import DimensionMismatchError, ParamsInfeasibleError
from medianmech.oracle import enumerate_neighbors, multisets


def test_evaluate_query_all_ones_and_zeros():
    db = Database(counts=np.array([3, 1, 2]))
    assert evaluate_query(Predicate(np.ones(3, bool)), db) == 1.0
    assert evaluate_query(Predicate(np.zeros(3, bool)), db) == 0.0


def test_evaluate_query_hand_count():
    # counts (2,1,1,0), predicate selects elements 0 and 2: (2+1)/4
    db = Database(counts=np.array([2, 1, 1, 0]))
    f = Predicate(np.array([1, 0, 1, 0], dtype=bool))
    assert evaluate_query(f, db) == 3 / 4


def test_evaluate_query_dimension_mismatch():
    db = Database(counts=np.array([1, 1]))
    with pytest.raises(DimensionMismatchError):
        evaluate_query(Predicate(np.array([True])), db)


@pytest.mark.parametrize("n,expected", [(1, 1.0), (4, 0.25), (100, 0.01)])
def test_query_sensitivity(n, expected):
    assert query_sensitivity(n) == expected


def test_evaluate_query_neighbor_sensitivity_exhaustive():
    # |f(D) - f(D')| <= 1/n over all databases, neighbors, and predicates
    for size in (2, 3, 4):
        preds = [Predicate(np.array(bits, dtype=bool))
                 for bits in np.ndindex(*([2] * size))]
        for n in (1, 2, 3, 4):
            for counts in multisets(size, n):
                db = Database(counts=counts)
                for pair in enumerate_neighbors(db):
                    for f in preds:
                        delta = abs(evaluate_query(f, pair.db)
                                    - evaluate_query(f, pair.db_prime))
                        assert delta <= 1.0 / n + 1e-15
                        assert 0.0 <= evaluate_query(f, db) <= 1.0


def test_derive_params_paper_constants_m():
    # Eq-shape oracle with arbitrary precision via mpmath
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 50
    expected = int(mpmath.ceil(
        mpmath.mpf(160000) * mpmath.log(mpmath.e) * mpmath.log(2) / mpmath.mpf("0.25")))
    assert expected == 443615
    p = derive_params(0.5, 0.5, math.e, n=10**9, domain_size=4, mode="scaled")
    assert p.m == 443615


def test_derive_params_scaled_cm1():
    p = derive_params(0.5, 0.5, math.e, n=100, domain_size=4,
                      constants=(1.0, 720.0, 4.0), mode="scaled")
    assert p.m == 3


def test_derive_params_infeasible_paper_exact():
    with pytest.raises(ParamsInfeasibleError):
        derive_params(0.5, 0.5, 10, n=100, domain_size=4, mode="paper-exact")
    # scaled mode records the violated bound instead of raising
    p = derive_params(0.5, 0.5, 10, n=100, domain_size=4, mode="scaled")
    assert p.n_bound_ok is False
    assert n_bound(0.5, 0.5, 10, p.alpha_prime) > 100


def test_derive_params_formula_values():
    p = derive_params(0.5, 0.5, 16, n=1000, domain_size=8, mode="scaled")
    assert p.m == math.ceil(160000 * math.log(16) * math.log(2) / 0.25)
    assert p.alpha_prime == pytest.approx(0.5 / (720 * p.m * math.log(8)))
    assert p.gamma == pytest.approx(
        4 / (p.alpha_prime * 0.5 * 1000) * math.log(2 * 16 / 0.5))


def test_derive_params_overrides_scaled_only():
    p = derive_params(1.0, 0.5, 8, n=16, domain_size=4, mode="scaled",
                      overrides={"m": 3, "alpha_prime": 100.0})
    assert p.m == 3 and p.alpha_prime == 100.0
    # gamma derived from the overridden alpha_prime
    assert p.gamma == pytest.approx(4 / (100.0 * 0.5 * 16) * math.log(16))
    with pytest.raises(ValueError):
        derive_params(1.0, 0.5, 8, n=16, domain_size=4, mode="paper-exact",
                      overrides={"m": 3})


@settings(max_examples=60, deadline=None)
@given(k1=st.floats(2, 1e6), k2=st.floats(2, 1e6),
       eps=st.sampled_from([0.1, 0.25, 0.5, 0.9]))
def test_derive_params_monotone_in_k(k1, k2, eps):
    lo, hi = sorted((k1, k2))
    p_lo = derive_params(0.5, eps, lo, n=10, domain_size=4, mode="scaled")
    p_hi = derive_params(0.5, eps, hi, n=10, domain_size=4, mode="scaled")
    assert p_hi.m >= p_lo.m


@pytest.mark.parametrize("eps_hi,eps_lo", [(0.9, 0.5), (0.5, 0.25), (0.25, 0.1)])
def test_derive_params_strict_in_eps(eps_hi, eps_lo):
    p_hi = derive_params(0.5, eps_hi, 100, n=10, domain_size=4, mode="scaled")
    p_lo = derive_params(0.5, eps_lo, 100, n=10, domain_size=4, mode="scaled")
    assert p_lo.m > p_hi.m


def test_derive_params_deterministic():
    args = dict(alpha=0.7, eps=0.3, k=50, n=64, domain_size=6, mode="scaled")
    assert derive_params(**args) == derive_params(**args)


def test_hard_caps_use_natural_log():
    p = derive_params(1.0, 0.5, 8, n=12, domain_size=4, mode="scaled",
                      overrides={"m": 3})
    assert p.hard_cap_basic == math.ceil(20 * 3 * math.log(4))
    assert p.hard_cap_efficient == math.ceil(40 * 3 * math.log(4))


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain(size=0)
    with pytest.raises(ValueError):
        Domain(size=2, labels=("a",))
    with pytest.raises(ValueError):
        Domain(size=2, labels=("a", "a"))
    d = Domain(size=2, labels=("a", "b"))
    assert Domain.from_json(d.to_json()) == d


def test_database_validation_and_json():
    with pytest.raises(ValueError):
        Database(counts=np.array([0, 0]))
    with pytest.raises(ValueError):
        Database(counts=np.array([-1, 2]))
    db = Database(counts=np.array([2, 0, 3]))
    assert db.n == 5
    doc = db.to_json()
    assert doc == {"domain_size": 3, "counts": [2, 0, 3]}
    assert np.array_equal(Database.from_json(doc).counts, db.counts)
    with pytest.raises(DimensionMismatchError):
        Database.from_json({"domain_size": 2, "counts": [1, 1, 1]})


def test_predicate_json_roundtrip():
    f = Predicate(np.array([True, False, True]))
    doc = f.to_json()
    assert doc == {"domain_size": 3, "indicator": [1, 0, 1]}
    assert np.array_equal(Predicate.from_json(doc).indicator, f.indicator)


def test_core_types_immutable():
    db = Database(counts=np.array([1, 2]))
    with pytest.raises(ValueError):
        db.counts[0] = 5
    f = Predicate(np.array([True, False]))
    with pytest.raises(ValueError):
        f.indicator[0] = False
