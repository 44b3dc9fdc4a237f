"""Solving for the normalization constant from a weighted sample.

Requiring the weighted estimator to be exact on the constant function gives
the fixpoint equation ``z = phi(z)`` with

    phi(z) = sum_{i in S} p(i) / (1 - (1 - p(i)/z)**N)

On ``z >= P(S)`` and away from the boundary cases, ``phi`` is increasing,
convex and a contraction, so Picard, secant and Newton iteration all work.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .count_table import MassTable, SampleSummary
from .errors import DomainError, NoConvergence

TOL = 1e-12
MAX_ITER = 200
METHODS = ("picard", "secant", "newton")
INITS = ("good-turing", "ps")

#: Sentinel for the all-distinct case, where the iteration diverges.
INFINITE_Z = math.inf


class BoundaryCase(str, enum.Enum):
    EMPTY = "Empty"
    SINGLE_DRAW = "SingleDraw"
    CONCENTRATED = "Concentrated"
    ALL_DISTINCT = "AllDistinct"
    REGULAR = "Regular"

    def __str__(self) -> str:
        return self.value


def classify(summary: SampleSummary) -> BoundaryCase:
    n, m = summary.n_draws, summary.n_distinct
    if n == 0:
        return BoundaryCase.EMPTY
    if n == 1:
        return BoundaryCase.SINGLE_DRAW
    if m == 1:
        return BoundaryCase.CONCENTRATED
    if m == n:
        return BoundaryCase.ALL_DISTINCT
    return BoundaryCase.REGULAR


# stable building blocks

def log_miss(ratio, n):
    """``N * log(1 - ratio)``, i.e. the log-probability of never drawing a point."""
    with np.errstate(divide="ignore"):
        return n * np.log1p(-np.asarray(ratio, dtype=float))


def inclusion_from_ratio(ratio, n):
    """``1 - (1 - ratio)**n`` without cancellation for small ratios."""
    return -np.expm1(log_miss(ratio, n))


def _masses_n(table) -> tuple[np.ndarray, int]:
    if isinstance(table, MassTable):
        a = table.arrays()
        return a.masses, int(a.counts.sum())
    masses, n = table
    return np.asarray(masses, dtype=float), int(n)


def phi(z: float, table) -> float:
    """Evaluate the fixpoint map.

    ``table`` is a :class:`MassTable` or a ``(masses, n_draws)`` pair.
    """
    masses, n = _masses_n(table)
    if n < 1:
        raise DomainError("phi needs at least one draw")
    ps = float(np.sum(masses))
    if not z >= ps:
        raise DomainError(f"z={z!r} is below P(S)={ps!r}")
    q = inclusion_from_ratio(masses / z, n)
    return float(np.sum(masses / q))


def phi_prime(z: float, table) -> float:
    """Analytic derivative of :func:`phi` with respect to ``z``."""
    masses, n = _masses_n(table)
    if n < 1:
        raise DomainError("phi_prime needs at least one draw")
    ps = float(np.sum(masses))
    if not z >= ps:
        raise DomainError(f"z={z!r} is below P(S)={ps!r}")
    r = masses / z
    with np.errstate(divide="ignore"):
        miss_nm1 = np.exp((n - 1) * np.log1p(-r))
    q = inclusion_from_ratio(r, n)
    return float(np.sum(n * r * r * miss_nm1 / (q * q)))


def psi(t, n: int):
    """``1 / (1 - (1 - t/n)**n)`` on ``0 < t <= n``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or np.any(t > n):
        raise DomainError("psi is defined on 0 < t <= n")
    out = 1.0 / inclusion_from_ratio(t / n, n)
    return out if out.ndim else float(out)


def psi_prime(t, n: int):
    """Derivative of :func:`psi`; negative on ``0 < t < n``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or np.any(t > n):
        raise DomainError("psi_prime is defined on 0 < t <= n")
    with np.errstate(divide="ignore"):
        miss_nm1 = np.exp((n - 1) * np.log1p(-t / n))
    q = inclusion_from_ratio(t / n, n)
    out = -miss_nm1 / (q * q)
    return out if out.ndim else float(out)


def eta(t):
    """``1 / (1 - exp(-t))``, the large-``n`` limit of :func:`psi`."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("eta is defined on t > 0")
    out = -1.0 / np.expm1(-t)
    return out if out.ndim else float(out)


def pade_gap(t, n: int):
    """Last factor of the second-derivative factorization of ``psi``.

    ``(1 - t/n)**n - (2 - t - t/n) / (2 + t - t/n)``, positive on ``0 < t < n``
    for ``n >= 2`` and zero at ``t = 0``.
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        miss = np.exp(n * np.log1p(-t / n))
    out = miss - (2 - t - t / n) / (2 + t - t / n)
    return out if out.ndim else float(out)


def psi_second_factored(t, n: int):
    """``t**2 * (t**2 * psi'(t))'`` assembled from its positive factors."""
    t = np.asarray(t, dtype=float)
    out = (t ** 3 * (-psi_prime(t, n)) * psi(t, n) / (1 - t / n)
           * (2 + t - t / n) * pade_gap(t, n))
    return out if out.ndim else float(out)


def good_turing_init(summary: SampleSummary) -> float:
    """Starting value ``P(S) / (1 - M'/N)`` from the Good-Turing missing mass.

    Returns :data:`INFINITE_Z` when every draw is a singleton.
    """
    if summary.n_draws < 1:
        raise DomainError("Good-Turing start needs at least one draw")
    if summary.n_singletons == summary.n_draws:
        return INFINITE_Z
    return summary.mass_on_sample / (1.0 - summary.n_singletons / summary.n_draws)


@dataclass
class ZSolution:
    """Result of :func:`solve_z`.

    ``z`` is ``0.0`` for an empty sample, ``None`` for a single draw (any
    ``z >= P(S)`` is consistent), :data:`INFINITE_Z` for an all-distinct
    sample and the solved root otherwise. Consumers branch on ``case``.
    """

    z: float | None
    case: BoundaryCase
    iterations: int = 0
    method: str = "newton"
    residual: float = 0.0
    mass_on_sample: float = 0.0
    n_draws: int = 0
    init: str = "good-turing"
    trace: list = field(default_factory=list, repr=False)

    @property
    def finite(self) -> bool:
        return self.z is not None and math.isfinite(self.z) and self.z > 0


class _Fixpoint:
    """phi and its derivative on fixed masses, for the regular case.

    Every mass is strictly below ``P(S) <= z`` here, so the logs are finite
    and the range checks of the public functions are skipped.
    """

    def __init__(self, masses, n):
        self.masses = masses
        self.n = n
        self.ps = float(masses.sum())

    def phi(self, z):
        lm = self.n * np.log1p(-self.masses / z)
        return float((self.masses / -np.expm1(lm)).sum())

    def dphi(self, z):
        r = self.masses / z
        l1 = np.log1p(-r)
        q = -np.expm1(self.n * l1)
        return float((self.n * r * r * np.exp((self.n - 1) * l1) / (q * q)).sum())

    def upper_bracket(self, z0):
        """Smallest doubling of ``z0`` where ``phi(z) < z``."""
        z = max(z0, self.ps)
        for _ in range(2100):
            if self.phi(z) < z:
                return z
            z *= 2.0
        raise NoConvergence("could not bracket the fixpoint")


def _converged(z_old, z_new, value):
    step = abs(z_new - z_old) / z_new
    resid = abs(value - z_new) / z_new
    return step <= TOL and resid <= TOL


def _picard(fp, z0, trace):
    # Plain z <- phi(z) contracts at rate phi'(z*) < M/N, which approaches 1
    # when nearly every draw is distinct; each cycle takes two Picard steps
    # and applies Aitken's delta-squared extrapolation to them.
    z = z0
    value = fp.phi(z)
    trace.append((0, z, value, abs(value - z) / z))
    for k in range(1, MAX_ITER + 1):
        z1 = value
        z2 = fp.phi(z1)
        denom = z2 - 2.0 * z1 + z
        z_new = z - (z1 - z) ** 2 / denom if denom != 0 else z2
        if not (math.isfinite(z_new) and z_new >= fp.ps):
            z_new = z2
        value = fp.phi(z_new)
        trace.append((k, z_new, value, abs(value - z_new) / z_new))
        if _converged(z, z_new, value) or z_new == z:
            return z_new, k
        z = z_new
    raise NoConvergence(f"picard did not converge in {MAX_ITER} iterations")


def _bracketed(fp, z0, trace, step_fn):
    """Shared safeguarded loop for Newton and secant.

    ``g(z) = phi(z) - z`` is positive at ``P(S)`` and negative beyond the root;
    any step leaving the current bracket is replaced by bisection.
    """
    lo, hi = fp.ps, fp.upper_bracket(z0)
    z = min(max(z0, lo), hi)
    value = fp.phi(z)
    trace.append((0, z, value, abs(value - z) / z))
    state = {}
    for k in range(1, MAX_ITER + 1):
        g = value - z
        if g > 0:
            lo = max(lo, z)
        elif g < 0:
            hi = min(hi, z)
        z_new = step_fn(z, g, state)
        if not (z_new is not None and math.isfinite(z_new) and lo <= z_new <= hi):
            z_new = 0.5 * (lo + hi)
        value_new = fp.phi(z_new)
        trace.append((k, z_new, value_new, abs(value_new - z_new) / z_new))
        if _converged(z, z_new, value_new) or g == 0:
            return z_new, k
        z, value = z_new, value_new
    raise NoConvergence(f"iteration did not converge in {MAX_ITER} iterations")


def _newton(fp, z0, trace):
    def step(z, g, state):
        dg = fp.dphi(z) - 1.0
        return z - g / dg if dg != 0 else None
    return _bracketed(fp, z0, trace, step)


def _secant(fp, z0, trace):
    z_prev = 1.1 * z0
    g_prev = fp.phi(z_prev) - z_prev

    def step(z, g, state):
        zp, gp = state.get("prev", (z_prev, g_prev))
        state["prev"] = (z, g)
        if g == gp:
            return None
        return z - g * (z - zp) / (g - gp)
    return _bracketed(fp, z0, trace, step)


_SOLVERS = {"picard": _picard, "secant": _secant, "newton": _newton}


def solve_z(table: MassTable, method: str = "newton", init: str = "good-turing") -> ZSolution:
    """Classify the sample and solve for the normalization constant.

    Boundary cases return immediately with their closed-form answer and zero
    iterations. In the regular case the iteration starts from the
    Good-Turing estimate (``init="good-turing"``) or from ``P(S)``
    (``init="ps"``) and stops once the relative step and the relative
    residual are both below 1e-12.
    """
    if method not in _SOLVERS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if init not in INITS:
        raise ValueError(f"unknown init {init!r}; expected one of {INITS}")
    summary = table.summarize()
    case = classify(summary)
    ps = summary.mass_on_sample
    common = dict(method=method, init=init, mass_on_sample=ps, n_draws=summary.n_draws)
    if case is BoundaryCase.EMPTY:
        return ZSolution(0.0, case, **common)
    if case is BoundaryCase.SINGLE_DRAW:
        return ZSolution(None, case, **common)
    if case is BoundaryCase.CONCENTRATED:
        return ZSolution(ps, case, **common)
    if case is BoundaryCase.ALL_DISTINCT:
        return ZSolution(INFINITE_Z, case, **common)

    a = table.arrays()
    fp = _Fixpoint(a.masses, summary.n_draws)
    z0 = good_turing_init(summary) if init == "good-turing" else ps
    z0 = max(z0, ps)
    trace: list = []
    z, iters = _SOLVERS[method](fp, z0, trace)
    residual = abs(fp.phi(z) - z) / z
    return ZSolution(z, case, iterations=iters, residual=residual, trace=trace, **common)
