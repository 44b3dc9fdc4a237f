"""Brute-force checks on small explicit domains.

Exact means and covariances of the per-point estimators are obtained by
summing over every multinomial count vector. For larger problems,
:func:`replicate_mc` runs seeded Monte Carlo replicates of the full
procedure (sample, solve for ``z``, estimate).
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .count_table import MassTable
from .errors import DimensionError, TooLarge
from .estimator import estimate_blue, estimate_known_z, estimate_new, weights
from .zsolver import BoundaryCase, solve_z

MAX_COMPOSITIONS = 10 ** 6
MAX_DOMAIN = 12
KINDS = ("blue", "new_known_z", "new_solved_z")


@dataclass
class ExplicitDomain:
    """A whole (small) domain: masses, function values and their keys."""

    masses: np.ndarray
    fvalues: np.ndarray | None = None

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.ndim != 1 or not 1 <= self.masses.size:
            raise DimensionError("domain needs at least one point")
        if np.any(self.masses <= 0):
            raise ValueError("domain masses must be positive")
        if self.fvalues is None:
            self.fvalues = np.zeros_like(self.masses)
        self.fvalues = np.asarray(self.fvalues, dtype=float)
        if self.fvalues.shape != self.masses.shape:
            raise DimensionError("fvalues must match masses")

    @property
    def size(self) -> int:
        return self.masses.size

    @property
    def z(self) -> float:
        return float(np.sum(self.masses))

    @property
    def keys(self) -> list:
        return [i.to_bytes(2, "big") for i in range(self.size)]

    def table(self, counts) -> MassTable:
        """MassTable holding the points with nonzero count."""
        keys = self.keys
        t = MassTable()
        for i in np.flatnonzero(counts):
            t.add(keys[i], self.masses[i], self.fvalues[i], int(counts[i]))
        return t

    def draw(self, rng: np.random.Generator, n: int) -> MassTable:
        counts = rng.multinomial(n, self.masses / self.z)
        return self.table(counts)

    @property
    def total_mass(self) -> float:
        return self.z


def n_compositions(n: int, k: int) -> int:
    return math.comb(n + k - 1, k - 1)


def compositions(n: int, k: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``k`` summing to ``n``."""
    if n_compositions(n, k) > MAX_COMPOSITIONS:
        raise TooLarge(f"{n_compositions(n, k)} compositions exceed the cap {MAX_COMPOSITIONS}")
    rows = []
    for bars in itertools.combinations(range(n + k - 1), k - 1):
        edges = (-1,) + bars + (n + k - 1,)
        rows.append([edges[j + 1] - edges[j] - 1 for j in range(k)])
    return np.array(rows, dtype=np.int64).reshape(-1, k)


def enumerate_counts(domain: ExplicitDomain, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Every count vector with total ``n`` and its multinomial probability.

    Returns ``(counts, probs)`` with one row of ``counts`` per outcome.
    """
    if domain.size > MAX_DOMAIN:
        raise TooLarge(f"domain size {domain.size} exceeds {MAX_DOMAIN}")
    counts = compositions(n, domain.size)
    fact = np.array([float(math.factorial(i)) for i in range(n + 1)])
    coef = fact[n] / np.prod(fact[counts], axis=1)
    r = domain.masses / domain.z
    probs = coef * np.prod(r[None, :] ** counts, axis=1)
    return counts, probs


@dataclass
class ExactMoments:
    mean: np.ndarray
    covariance: np.ndarray
    estimator_kind: str

    def estimate_mean(self, f) -> float:
        return float(np.dot(self.mean, f))

    def estimate_variance(self, f) -> float:
        f = np.asarray(f, dtype=float)
        return float(f @ self.covariance @ f)


def _solved_vector(domain, counts):
    """Per-point estimator ``w(i)/z`` with ``z`` re-solved on this outcome."""
    table = domain.table(counts)
    sol = solve_z(table)
    x = np.zeros(domain.size)
    idx = np.flatnonzero(counts)
    if sol.case is BoundaryCase.REGULAR:
        x[idx] = weights(table, sol.z).values / sol.z
    elif sol.case is BoundaryCase.ALL_DISTINCT:
        x[idx] = counts[idx] / counts.sum()
    else:
        x[idx] = 1.0
    return x


def estimator_vectors(domain: ExplicitDomain, counts: np.ndarray, kind: str) -> np.ndarray:
    """Per-outcome, per-point estimator values (one row per count vector)."""
    n = int(counts[0].sum())
    if kind == "blue":
        return counts / n
    if kind == "new_known_z":
        r = domain.masses / domain.z
        with np.errstate(divide="ignore"):
            q = -np.expm1(n * np.log1p(-np.minimum(r, 1.0)))
        return (counts >= 1) * (r / q)[None, :]
    if kind == "new_solved_z":
        return np.array([_solved_vector(domain, c) for c in counts])
    raise ValueError(f"unknown estimator kind {kind!r}")


def exact_moments(domain: ExplicitDomain, n: int, kind: str) -> ExactMoments:
    counts, probs = enumerate_counts(domain, n)
    x = estimator_vectors(domain, counts, kind)
    mean = probs @ x
    d = x - mean
    cov = (d * probs[:, None]).T @ d
    cov = 0.5 * (cov + cov.T)
    return ExactMoments(mean, cov, kind)


def outcomes_csv(domain: ExplicitDomain, n: int, fh=None) -> str:
    """Audit table: one row per outcome with both final estimates."""
    counts, probs = enumerate_counts(domain, n)
    out = io.StringIO() if fh is None else fh
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["outcome", "probability", "estimate_blue", "estimate_new"])
    for c, pr in zip(counts, probs):
        table = domain.table(c)
        sol = solve_z(table)
        writer.writerow([" ".join(map(str, c)), f"{pr:.17g}",
                         f"{estimate_blue(table):.17g}", f"{estimate_new(table, sol):.17g}"])
    return out.getvalue() if fh is None else ""


# Monte Carlo replication

def replicate_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Stream for replicate ``index``: ``SeedSequence(seed, spawn_key=(index,))``.

    This is the same stream ``SeedSequence(seed).spawn(...)[index]`` yields,
    so results do not depend on how replicates are split across threads.
    """
    return np.random.SeedSequence(seed, spawn_key=(index,))


def default_threads() -> int:
    env = os.environ.get("MASSWEIGHT_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


@dataclass
class MCResult:
    n_draws: int
    replicates: int
    seed: int
    fbar_new: np.ndarray
    fbar_blue: np.ndarray
    fbar_known: np.ndarray | None
    z: np.ndarray
    cases: list
    summary: dict = field(default_factory=dict)

    def rows(self):
        for i in range(self.replicates):
            known = None if self.fbar_known is None else self.fbar_known[i]
            yield i, self.fbar_new[i], self.fbar_blue[i], known, self.z[i], self.cases[i]


def _stats(x: np.ndarray) -> dict:
    mean = float(np.mean(x))
    var = float(np.var(x, ddof=1))
    return {"mean": mean, "variance": var, "stderr": math.sqrt(var / x.size)}


def _one_replicate(source, n, seed, index, method):
    rng = np.random.Generator(np.random.PCG64(replicate_seed(seed, index)))
    table = source.draw(rng, n)
    sol = solve_z(table, method=method)
    new = estimate_new(table, sol)
    blue = estimate_blue(table)
    z_tot = getattr(source, "total_mass", None)
    known = estimate_known_z(table, z_tot) if z_tot is not None else None
    z = sol.z if sol.z is not None else math.nan
    return new, blue, known, z, sol.case.value


def replicate_mc(source, n: int, replicates: int, seed: int, threads: int | None = None,
                 method: str = "newton") -> MCResult:
    """Run ``replicates`` independent repetitions of sample-solve-estimate.

    ``source`` is anything with ``draw(rng, n) -> MassTable``; if it also
    has a ``total_mass`` attribute the known-``Z`` estimate is recorded too.
    Output is a deterministic function of ``(seed, replicates, n)``.
    """
    if replicates < 2:
        raise ValueError("need at least two replicates")
    threads = default_threads() if threads is None else max(1, int(threads))

    def run(i):
        return _one_replicate(source, n, seed, i, method)

    if threads == 1:
        results = [run(i) for i in range(replicates)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(replicates)))

    new = np.array([r[0] for r in results])
    blue = np.array([r[1] for r in results])
    known = None if results[0][2] is None else np.array([r[2] for r in results])
    res = MCResult(n, replicates, seed, new, blue, known,
                   np.array([r[3] for r in results]), [r[4] for r in results])
    res.summary = {"new": _stats(new), "blue": _stats(blue)}
    if known is not None:
        res.summary["known_z"] = _stats(known)
    vb = res.summary["blue"]["variance"]
    res.summary["variance_ratio"] = res.summary["new"]["variance"] / vb if vb > 0 else math.nan
    return res
