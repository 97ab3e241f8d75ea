"""Interactive differentially private predicate-query answering.

Implements the independent-Laplace baseline and the consistent-set median
mechanism, in both its enumerated form and its polytope-sampling form, plus
brute-force oracles and a reproducible experiment harness.
"""

__version__ = "0.1.0"

from .core import (
    Database,
    Domain,
    MechanismParams,
    Predicate,
    derive_params,
    evaluate_query,
    query_sensitivity,
)
from .noise import LaplaceScale, NoiseControl, laplace_cdf, laplace_mechanism, sample_laplace
from .basic import (
    BasicMedianSession,
    ConsistentSetBasic,
    Transcript,
    TranscriptEntry,
    compute_r,
    enumerate_c0,
    median_of,
    run_session,
    sample_threshold,
)
from .polytope import ConsistentPolytope, HalfspacePair, interior_point, membership
from .sampler import WalkConfig, backend_name, sample_uniform
from .efficient import (
    EfficientMedianSession,
    EstimatorConfig,
    database_sample,
    estimate_median,
    estimate_r,
    evaluate_query_fractional,
    good_volume_check,
    run_session_efficient,
)
from .harness import ExperimentConfig, compare_report, generate_queries, run_experiment

__all__ = [
    "BasicMedianSession", "ConsistentPolytope", "ConsistentSetBasic",
    "Database", "Domain", "EfficientMedianSession", "EstimatorConfig",
    "ExperimentConfig", "HalfspacePair", "LaplaceScale", "MechanismParams",
    "NoiseControl", "Predicate", "Transcript", "TranscriptEntry", "WalkConfig",
    "backend_name", "compare_report", "compute_r", "database_sample",
    "derive_params", "enumerate_c0", "estimate_median", "estimate_r",
    "evaluate_query", "evaluate_query_fractional", "generate_queries",
    "good_volume_check", "interior_point", "laplace_cdf", "laplace_mechanism",
    "median_of", "membership", "query_sensitivity", "run_experiment",
    "run_session", "run_session_efficient", "sample_laplace",
    "sample_threshold", "sample_uniform",
]
