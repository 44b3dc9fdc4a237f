"""Mass-aware linear unbiased estimation of averages over discrete domains."""

__version__ = "0.1.0"

from .count_table import MassTable, SampleRecord, SampleSummary, insert, merge, summarize  # noqa: E402
from .zsolver import BoundaryCase, ZSolution, classify, good_turing_init, phi, phi_prime, solve_z  # noqa: E402
from .estimator import (  # noqa: E402
    EstimateReport,
    cov_matrix_blue,
    cov_matrix_new,
    estimate_blue,
    estimate_known_z,
    estimate_new,
    inclusion_prob,
    report,
    var_diag_blue,
    var_diag_new,
    weights,
)

__all__ = [
    "MassTable", "SampleRecord", "SampleSummary", "insert", "merge", "summarize",
    "BoundaryCase", "ZSolution", "classify", "good_turing_init", "phi", "phi_prime", "solve_z",
    "EstimateReport", "cov_matrix_blue", "cov_matrix_new", "estimate_blue", "estimate_known_z",
    "estimate_new", "inclusion_prob", "report", "var_diag_blue", "var_diag_new", "weights",
]
