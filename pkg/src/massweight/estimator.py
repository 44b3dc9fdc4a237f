"""Mass-aware linear unbiased estimates of averages and their variances.

Each sampled point ``i`` gets the weight ``w(i) = p(i) / q(i)`` where
``q(i) = 1 - (1 - p(i)/Z)**N`` is its probability of being drawn at least
once. ``w`` is an unbiased estimate of the mass vector, so ``Z**-1 * w.f``
is an unbiased estimate of the average of ``f``. The plain sample average
``N**-1 * c.f`` (BLUE) is computed alongside for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .count_table import MassTable
from .errors import DimensionError, DomainError
from .zsolver import BoundaryCase, ZSolution, classify, inclusion_from_ratio, log_miss

UNDEFINED = math.nan


def inclusion_prob(mass: float, z: float, n: int) -> float:
    """Probability ``1 - (1 - mass/z)**n`` that a point shows up in ``n`` draws."""
    if not mass > 0:
        raise DomainError(f"mass must be positive, got {mass!r}")
    if mass > z:
        raise DomainError(f"mass {mass!r} exceeds z {z!r}")
    return float(inclusion_from_ratio(mass / z, n))


@dataclass
class WeightVector:
    keys: list
    values: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.keys, self.values.tolist()))

    def total(self) -> float:
        return float(np.sum(self.values))


def weights(table: MassTable, z: float, n: int | None = None) -> WeightVector:
    a = table.arrays()
    n = int(a.counts.sum()) if n is None else int(n)
    if n < 1:
        raise DomainError("weights need at least one draw")
    if np.any(a.masses > z):
        raise DomainError(f"z={z!r} is smaller than a stored mass")
    q = inclusion_from_ratio(a.masses / z, n)
    return WeightVector(list(a.keys), a.masses / q)


def _fvalues(table: MassTable, fvalues) -> np.ndarray:
    a = table.arrays()
    if fvalues is None:
        return a.fvalues
    if callable(fvalues):
        return np.array([fvalues(k) for k in a.keys], dtype=float)
    if isinstance(fvalues, dict):
        return np.array([fvalues[k] for k in a.keys], dtype=float)
    f = np.asarray(fvalues, dtype=float)
    if f.shape != a.masses.shape:
        raise DimensionError("fvalues must have one entry per stored key")
    return f


def estimate_blue(table: MassTable, fvalues=None) -> float:
    """Sample average ``N**-1 * sum c(i) f(i)``; undefined on an empty table."""
    a = table.arrays()
    n = int(a.counts.sum())
    if n == 0:
        return UNDEFINED
    f = _fvalues(table, fvalues)
    return float(np.dot(a.counts, f) / n)


def estimate_known_z(table: MassTable, z: float, fvalues=None) -> float:
    """Weighted estimate with a normalization constant fixed before sampling."""
    a = table.arrays()
    if len(a.keys) == 0:
        return UNDEFINED
    w = weights(table, z)
    return float(np.dot(w.values, _fvalues(table, fvalues)) / z)


def estimate_new(table: MassTable, z_solution: ZSolution, fvalues=None) -> float:
    """Weighted estimate using a solved normalization constant.

    Boundary cases follow their closed forms: an all-distinct sample gives
    the sample average, a sample with a single distinct point gives ``f`` at
    that point, and an empty sample is undefined (NaN).
    """
    case = z_solution.case
    if case is BoundaryCase.EMPTY:
        return UNDEFINED
    f = _fvalues(table, fvalues)
    if case in (BoundaryCase.SINGLE_DRAW, BoundaryCase.CONCENTRATED):
        return float(f[0])
    if case is BoundaryCase.ALL_DISTINCT:
        return estimate_blue(table, f)
    z = z_solution.z
    w = weights(table, z)
    return float(np.dot(w.values, f) / z)


# variances

def _check_ratio(mass, z, allow_zero):
    if z <= 0:
        raise DomainError("z must be positive")
    if mass > z or mass < 0 or (mass == 0 and not allow_zero):
        raise DomainError(f"mass {mass!r} outside the allowed range for z={z!r}")


def var_diag_blue(mass: float, z: float, n: int) -> float:
    _check_ratio(mass, z, allow_zero=True)
    if n < 1:
        raise DomainError("n must be >= 1")
    r = mass / z
    return r * (1.0 - r) / n


def var_diag_new(mass: float, z: float, n: int) -> float:
    """Variance of ``w(i)/Z`` at known ``Z``: ``(p/Z)**2 * (1/q - 1)``."""
    _check_ratio(mass, z, allow_zero=False)
    if n < 1:
        raise DomainError("n must be >= 1")
    r = mass / z
    lm = float(log_miss(r, n))
    return r * r * math.exp(lm) / -math.expm1(lm)


def _masses_vector(masses, z):
    p = np.asarray(masses, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise DimensionError("need a non-empty vector of masses")
    if np.any(p < 0) or np.sum(p) > z * (1 + 1e-12):
        raise DomainError("masses must be nonnegative with sum <= z")
    return p / z


def cov_matrix_blue(masses, z: float, n: int) -> np.ndarray:
    """Covariance of the per-point sample frequencies ``c(i)/N``."""
    r = _masses_vector(masses, z)
    return (np.diag(r) - np.outer(r, r)) / n


def _pow_n(base, n):
    """``base**n`` elementwise, through logs where the base is positive."""
    base = np.asarray(base, dtype=float)
    out = np.empty_like(base)
    pos = base > 0
    out[pos] = np.exp(n * np.log(base[pos]))
    out[~pos] = base[~pos] ** n
    return out


def cov_matrix_new(masses, z: float, n: int) -> np.ndarray:
    """Covariance of the per-point weighted estimates ``w(i)/Z`` at known ``Z``."""
    r = _masses_vector(masses, z)
    if np.any(r == 0):
        raise DomainError("masses must be positive")
    lm = log_miss(r, n)
    q = -np.expm1(lm)
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = np.log1p(-np.minimum(r, 1.0))
        both_missed = np.exp(n * (l1[:, None] + l1[None, :]))
    both_missed = np.nan_to_num(both_missed, nan=0.0)
    one_minus_sum = 1.0 - r[:, None] - r[None, :]
    cov = -(np.outer(r, r) / np.outer(q, q)) * (both_missed - _pow_n(one_minus_sum, n))
    np.fill_diagonal(cov, r * r * np.exp(lm) / q)
    return cov


def matrix_record(matrix, index) -> dict:
    """JSON-ready form of a matrix: row-major rows plus the row/column legend."""
    matrix = np.asarray(matrix, dtype=float)
    index = [k.hex() if isinstance(k, bytes) else k for k in index]
    if matrix.shape != (len(index), len(index)):
        raise DimensionError("index legend must match the matrix size")
    return {"index": index, "rows": matrix.tolist()}


@dataclass
class EstimateReport:
    fbar_new: float
    fbar_blue: float
    z_used: float | None
    case: BoundaryCase
    mode: str
    iterations: int = 0
    method: str | None = None
    n_draws: int = 0
    n_distinct: int = 0
    mass_on_sample: float = 0.0
    per_point_var_new: dict = field(default_factory=dict)
    per_point_var_blue: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def num(x):
            if x is None or (isinstance(x, float) and math.isnan(x)):
                return None
            if isinstance(x, float) and math.isinf(x):
                return "inf"
            return x
        return {
            "fbar_new": num(self.fbar_new),
            "fbar_blue": num(self.fbar_blue),
            "z_used": num(self.z_used),
            "case": self.case.value,
            "mode": self.mode,
            "iterations": self.iterations,
            "method": self.method,
            "n_draws": self.n_draws,
            "n_distinct": self.n_distinct,
            "mass_on_sample": self.mass_on_sample,
            "per_point_var_new": {k.hex(): v for k, v in self.per_point_var_new.items()},
            "per_point_var_blue": {k.hex(): v for k, v in self.per_point_var_blue.items()},
        }


def _per_point(table, z, n):
    if z is None or not math.isfinite(z) or z <= 0 or n < 1:
        return {}, {}
    a = table.arrays()
    new = {k: var_diag_new(m, z, n) for k, m in zip(a.keys, a.masses)}
    blue = {k: var_diag_blue(m, z, n) for k, m in zip(a.keys, a.masses)}
    return new, blue


def report(table: MassTable, z_solution: ZSolution | None = None, known_z: float | None = None,
           fvalues=None) -> EstimateReport:
    """Pair the weighted and sample-average estimates with diagonal variances.

    Pass ``known_z`` for a normalization constant fixed in advance (the
    variance diagnostics are exact only in that mode); otherwise
    ``z_solution`` from :func:`massweight.zsolver.solve_z` is used.
    """
    summary = table.summarize()
    blue = estimate_blue(table, fvalues)
    if known_z is not None:
        case = classify(summary)
        fbar = estimate_known_z(table, known_z, fvalues)
        z_used, mode, iters, method = known_z, "known", 0, None
    else:
        if z_solution is None:
            raise ValueError("need either z_solution or known_z")
        case = z_solution.case
        fbar = estimate_new(table, z_solution, fvalues)
        z_used, mode = z_solution.z, "solved"
        iters, method = z_solution.iterations, z_solution.method
    var_new, var_blue = _per_point(table, z_used, summary.n_draws)
    return EstimateReport(
        fbar_new=fbar, fbar_blue=blue, z_used=z_used, case=case, mode=mode,
        iterations=iters, method=method, n_draws=summary.n_draws,
        n_distinct=summary.n_distinct, mass_on_sample=summary.mass_on_sample,
        per_point_var_new=var_new, per_point_var_blue=var_blue,
    )
