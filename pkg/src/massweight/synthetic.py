"""Synthetic heavy-tailed test problems on a 96-bit integer domain.

Key ``i`` stands for the real number ``x = i + 1/2``. Point masses come from
finite differences of the survival function ``S(x) = (1 + x/a)**-b``, so they
sum to one exactly (up to rounding) and decay like ``(b/a)(1 + x/a)**(-b-1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .count_table import MassTable

KEY_BITS = 96
KEY_BYTES = KEY_BITS // 8
_MASK32 = 0xFFFFFFFF


class WideKey:
    """Unsigned 96-bit key stored as three 32-bit limbs (high to low)."""

    __slots__ = ("value",)

    def __init__(self, value: int):
        value = int(value)
        if not 0 <= value < 1 << KEY_BITS:
            raise ValueError(f"key {value} outside [0, 2**{KEY_BITS})")
        self.value = value

    @classmethod
    def from_hex(cls, text: str) -> "WideKey":
        return cls(int(text, 16))

    @classmethod
    def from_limbs(cls, hi: int, mid: int, lo: int) -> "WideKey":
        return cls((hi << 64) | (mid << 32) | lo)

    def hex(self) -> str:
        return f"{self.value:024x}"

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(KEY_BYTES, "big")

    def limbs(self) -> tuple[int, int, int]:
        v = self.value
        return (v >> 64) & _MASK32, (v >> 32) & _MASK32, v & _MASK32

    def x(self) -> float:
        """``i + 1/2`` evaluated in double precision from the limbs."""
        hi, mid, lo = self.limbs()
        return (float(hi) * 2.0 ** 64 + float(mid) * 2.0 ** 32) + (float(lo) + 0.5)

    def __int__(self) -> int:
        return self.value

    def __eq__(self, other) -> bool:
        return isinstance(other, WideKey) and other.value == self.value

    def __hash__(self) -> int:
        return hash(self.value)

    def __repr__(self) -> str:
        return f"WideKey(0x{self.hex()})"


@dataclass(frozen=True)
class TailDistribution:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")

    def survival(self, x):
        """``(1 + x/a)**-b`` for real ``x >= 0``."""
        return np.exp(-self.b * np.log1p(np.asarray(x, dtype=float) / self.a))

    def cdf(self, x):
        """Continuous CDF ``1 - S(x)``."""
        return -np.expm1(-self.b * np.log1p(np.asarray(x, dtype=float) / self.a))

    def pmf(self, i):
        """Mass ``S(i) - S(i+1)`` for integer (or integer-valued float) keys."""
        i = np.asarray(i, dtype=float)
        step = np.log1p(1.0 / (self.a + i))
        out = self.survival(i) * -np.expm1(-self.b * step)
        return out if out.ndim else float(out)

    def quantile_key(self, u):
        """Inverse-CDF key ``floor(a * ((1-u)**(-1/b) - 1))`` as a float."""
        u = np.asarray(u, dtype=float)
        return np.floor(self.a * ((1.0 - u) ** (-1.0 / self.b) - 1.0))

    @property
    def total_mass(self) -> float:
        return 1.0


def _as_index(i) -> float:
    if isinstance(i, WideKey):
        return float(i.value)
    return float(i)


def pmf(i, dist: TailDistribution) -> float:
    """Point mass of key ``i``; exactly zero once it underflows."""
    return float(dist.pmf(_as_index(i)))


def sample_key(u: float, dist: TailDistribution) -> WideKey:
    if not 0.0 <= u < 1.0:
        raise ValueError("u must lie in [0, 1)")
    return WideKey(int(dist.quantile_key(u)))


def test_function(i, dist: TailDistribution, m: int):
    """Oscillatory test function ``cos(2 pi m F(i + 1/2))``.

    Its continuum integral against the density is zero for every ``m >= 1``.
    Accepts a :class:`WideKey`, an integer or an array of integer-valued keys.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    if isinstance(i, WideKey):
        x = i.x()
    else:
        x = np.asarray(i, dtype=float) + 0.5
    out = np.cos(2.0 * math.pi * m * dist.cdf(x))
    return out if np.ndim(out) else float(out)


test_function.__test__ = False  # not a pytest test


def _chunks(start: int, stop: int, size: int):
    for lo in range(start, stop, size):
        yield np.arange(lo, min(lo + size, stop), dtype=float)


def reference_mean(dist: TailDistribution, m: int, tail: float = 1e-15,
                   chunk: int = 10 ** 7) -> float:
    """Brute-force ``sum_i pmf(i) f(i)`` over all keys with ``S(i) >= tail``."""
    stop = int(math.ceil(dist.a * (tail ** (-1.0 / dist.b) - 1.0))) + 1
    total = 0.0
    for i in _chunks(0, stop, chunk):
        total += float(np.sum(dist.pmf(i) * test_function(i, dist, m)))
    return total


def expected_sampled_mass(dist: TailDistribution, n: int, tol: float = 1e-10,
                          chunk: int = 10 ** 6, max_keys: int = 10 ** 9) -> float:
    """``sum_i pmf(i) * q(i)``: expected mass on the points an ``n``-draw sample hits.

    Summation stops once the remainder bound ``n * pmf(K) * S(K)`` drops below
    ``tol``.
    """
    total = 0.0
    for i in _chunks(0, max_keys, chunk):
        p = dist.pmf(i)
        q = -np.expm1(n * np.log1p(-p))
        total += float(np.sum(p * q))
        k = i[-1] + 1
        if n * dist.pmf(k) * dist.survival(k) < tol:
            break
    return total


@dataclass(frozen=True)
class SyntheticConfig:
    a: float
    b: float
    n_draws: int
    m: int = 4
    seed: int = 0
    regime: str | None = None
    expected_sampled_mass: float | None = None

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")
        if self.n_draws < 1:
            raise ValueError("n_draws must be >= 1")
        if self.m < 0:
            raise ValueError("m must be nonnegative")

    @property
    def distribution(self) -> TailDistribution:
        return TailDistribution(self.a, self.b)

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("expected_sampled_mass")
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        keys = {"a", "b", "n_draws", "m", "seed", "regime", "expected_sampled_mass"}
        unknown = set(d) - keys
        if unknown:
            raise ValueError(f"unknown config fields {sorted(unknown)}")
        return cls(**d)


PRESETS = {
    "concentrated": dict(a=2.0, b=3.0, n_draws=10 ** 4),
    "intermediate": dict(a=50.0, b=1.5, n_draws=10 ** 3),
    "tail_dominated": dict(a=1e4, b=0.8, n_draws=10 ** 2),
}


def regime_config(regime: str, m: int = 4, seed: int = 0) -> SyntheticConfig:
    """Named preset, with its expected sampled mass computed on the spot."""
    try:
        params = PRESETS[regime]
    except KeyError:
        raise ValueError(f"unknown regime {regime!r}; choose from {sorted(PRESETS)}") from None
    dist = TailDistribution(params["a"], params["b"])
    esm = expected_sampled_mass(dist, params["n_draws"])
    return SyntheticConfig(m=m, seed=seed, regime=regime, expected_sampled_mass=esm, **params)


class TailSource:
    """Sample source for :func:`massweight.oracle.replicate_mc`."""

    def __init__(self, dist: TailDistribution, m: int):
        self.dist = dist
        self.m = m
        self.total_mass = 1.0

    def draw_keys(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.dist.quantile_key(rng.random(n))

    def draw(self, rng: np.random.Generator, n: int) -> MassTable:
        keys, counts = np.unique(self.draw_keys(rng, n), return_counts=True)
        masses = self.dist.pmf(keys)
        fvals = test_function(keys, self.dist, self.m)
        table = MassTable()
        for k, c, p, f in zip(keys, counts, np.atleast_1d(masses), np.atleast_1d(fvals)):
            table.add(int(k).to_bytes(KEY_BYTES, "big"), p, f, int(c))
        return table
