"""Deduplicated count tables built from a stream of weighted samples.

A :class:`MassTable` maps each distinct sample key to ``(count, mass, fvalue)``.
It is the in-memory form of the count vector together with the point masses
and function values on the sampled set.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import InputFormatError, InvalidRecord, MassMismatch

MAX_KEY_BYTES = 16
REL_TOL = 1e-9


def normalize_key(key) -> bytes:
    """Return the canonical byte form of a key given as bytes, hex str or int.

    Integers are encoded big-endian on 12 bytes (96 bits) so that byte order
    and numeric order agree.
    """
    if isinstance(key, (bytes, bytearray)):
        out = bytes(key)
    elif isinstance(key, str):
        try:
            out = bytes.fromhex(key)
        except ValueError as exc:
            raise InvalidRecord(f"key {key!r} is not valid hex") from exc
    elif isinstance(key, (int, np.integer)):
        if key < 0:
            raise InvalidRecord("integer keys must be nonnegative")
        out = int(key).to_bytes(12, "big")
    else:
        raise InvalidRecord(f"unsupported key type {type(key).__name__}")
    if not out:
        raise InvalidRecord("key must be non-empty")
    if len(out) > MAX_KEY_BYTES:
        raise InvalidRecord(f"key longer than {MAX_KEY_BYTES} bytes")
    return out


def _close(x: float, y: float) -> bool:
    return abs(x - y) <= REL_TOL * max(abs(x), abs(y))


@dataclass(frozen=True)
class SampleRecord:
    key: bytes
    mass: float
    fvalue: float

    def __post_init__(self):
        object.__setattr__(self, "key", normalize_key(self.key))
        mass = float(self.mass)
        if not mass > 0 or not math.isfinite(mass):
            raise InvalidRecord(f"mass must be positive and finite, got {self.mass!r}")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "fvalue", float(self.fvalue))


class Entry(NamedTuple):
    count: int
    mass: float
    fvalue: float


@dataclass(frozen=True)
class SampleSummary:
    """Scalar statistics of a sample: N, M, M' (singletons) and P(S)."""

    n_draws: int
    n_distinct: int
    n_singletons: int
    mass_on_sample: float

    def __post_init__(self):
        if not 0 <= self.n_singletons <= self.n_distinct <= self.n_draws:
            raise ValueError("need 0 <= n_singletons <= n_distinct <= n_draws")
        if (self.n_distinct == 0) != (self.n_draws == 0):
            raise ValueError("n_distinct == 0 iff n_draws == 0")
        if self.mass_on_sample < 0:
            raise ValueError("mass_on_sample must be nonnegative")


class TableArrays(NamedTuple):
    keys: list
    counts: np.ndarray
    masses: np.ndarray
    fvalues: np.ndarray


class MassTable:
    """Map from sample key to ``(count, mass, fvalue)``.

    Every stored count is at least one, so the keys are exactly the sampled
    set. Masses and f-values are fixed at first insertion; later insertions
    of the same key must agree to relative 1e-9.
    """

    def __init__(self, records: Iterable[SampleRecord] = ()):
        self._entries: dict[bytes, list] = {}
        self._arrays: TableArrays | None = None
        for rec in records:
            self.insert(rec)

    # construction

    def add(self, key, mass: float, fvalue: float, count: int = 1) -> "MassTable":
        """Add ``count`` draws of ``key``. Returns ``self``."""
        key = normalize_key(key)
        mass = float(mass)
        fvalue = float(fvalue)
        if not mass > 0 or not math.isfinite(mass):
            raise InvalidRecord(f"mass must be positive and finite, got {mass!r}")
        count = int(count)
        if count < 1:
            raise InvalidRecord(f"count must be >= 1, got {count}")
        entry = self._entries.get(key)
        if entry is None:
            self._entries[key] = [count, mass, fvalue]
        else:
            if not _close(entry[1], mass):
                raise MassMismatch(
                    f"key {key.hex()}: mass {mass!r} disagrees with stored {entry[1]!r}")
            if not _close(entry[2], fvalue):
                raise MassMismatch(
                    f"key {key.hex()}: fvalue {fvalue!r} disagrees with stored {entry[2]!r}")
            entry[0] += count
        self._arrays = None
        return self

    def insert(self, record: SampleRecord) -> "MassTable":
        return self.add(record.key, record.mass, record.fvalue)

    @classmethod
    def from_arrays(cls, keys, counts, masses, fvalues) -> "MassTable":
        table = cls()
        for k, c, m, f in zip(keys, counts, masses, fvalues):
            table.add(k, m, f, c)
        return table

    def copy(self) -> "MassTable":
        out = MassTable()
        out._entries = {k: list(v) for k, v in self._entries.items()}
        return out

    def merge(self, other: "MassTable") -> "MassTable":
        """Return a new table with counts added key by key."""
        out = self.copy()
        for key, (count, mass, fvalue) in other._entries.items():
            out.add(key, mass, fvalue, count)
        return out

    # access

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return normalize_key(key) in self._entries

    def __getitem__(self, key) -> Entry:
        return Entry(*self._entries[normalize_key(key)])

    def __iter__(self) -> Iterator[bytes]:
        return iter(self.keys())

    def __eq__(self, other) -> bool:
        if not isinstance(other, MassTable):
            return NotImplemented
        return self._entries == other._entries

    def __repr__(self) -> str:
        body = ", ".join(f"{k.hex()}:{tuple(v)}" for k, v in sorted(self._entries.items()))
        return f"MassTable({{{body}}})"

    def keys(self) -> list:
        """Keys in ascending byte order (the order used for every summation)."""
        return self.arrays().keys

    def items(self) -> Iterator[tuple[bytes, Entry]]:
        for k in self.keys():
            yield k, Entry(*self._entries[k])

    def arrays(self) -> TableArrays:
        """Column arrays in ascending key order; cached until the next mutation."""
        if self._arrays is None:
            keys = sorted(self._entries)
            rows = [self._entries[k] for k in keys]
            self._arrays = TableArrays(
                keys,
                np.array([r[0] for r in rows], dtype=np.int64),
                np.array([r[1] for r in rows], dtype=float),
                np.array([r[2] for r in rows], dtype=float),
            )
        return self._arrays

    @property
    def n_draws(self) -> int:
        return int(self.arrays().counts.sum())

    @property
    def mass_on_sample(self) -> float:
        return float(np.sum(self.arrays().masses))

    def summarize(self) -> SampleSummary:
        a = self.arrays()
        return SampleSummary(
            n_draws=int(a.counts.sum()),
            n_distinct=len(a.keys),
            n_singletons=int(np.count_nonzero(a.counts == 1)),
            mass_on_sample=float(np.sum(a.masses)),
        )


def insert(table: MassTable, record: SampleRecord) -> MassTable:
    return table.insert(record)


def merge(a: MassTable, b: MassTable) -> MassTable:
    return a.merge(b)


def summarize(table: MassTable) -> SampleSummary:
    return table.summarize()


# CSV I/O

def read_csv(source) -> MassTable:
    """Load a sample file.

    Accepts either one row per draw (``key,mass,fvalue``) or pre-aggregated
    rows (``key,count,mass,fvalue``). Lines starting with ``#`` are skipped.
    ``source`` is a path or an open text file.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="") as fh:
            return _read_rows(fh)
    return _read_rows(source)


def _read_rows(fh) -> MassTable:
    lines = (line for line in fh if line.strip() and not line.lstrip().startswith("#"))
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise InputFormatError("empty sample file") from None
    header = [h.strip() for h in header]
    if header == ["key", "mass", "fvalue"]:
        aggregated = False
    elif header == ["key", "count", "mass", "fvalue"]:
        aggregated = True
    else:
        raise InputFormatError(f"unrecognized header {header!r}")
    table = MassTable()
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise InputFormatError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            if aggregated:
                key, count, mass, fvalue = row
                count = int(count)
            else:
                key, mass, fvalue = row
                count = 1
            mass = float(mass)
            fvalue = float(fvalue)
        except ValueError as exc:
            raise InputFormatError(f"row {lineno}: {exc}") from exc
        try:
            table.add(key.strip(), mass, fvalue, count)
        except InvalidRecord as exc:
            raise InputFormatError(f"row {lineno}: {exc}") from exc
    if len(table) == 0:
        raise InputFormatError("sample file has no data rows")
    return table


def write_csv(table: MassTable, fh=None, aggregated: bool = True) -> str:
    """Write ``table`` as CSV; returns the text when ``fh`` is None."""
    out = io.StringIO() if fh is None else fh
    writer = csv.writer(out, lineterminator="\n")
    if aggregated:
        writer.writerow(["key", "count", "mass", "fvalue"])
        for key, e in table.items():
            writer.writerow([key.hex(), e.count, f"{e.mass:.17g}", f"{e.fvalue:.17g}"])
    else:
        writer.writerow(["key", "mass", "fvalue"])
        for key, e in table.items():
            for _ in range(e.count):
                writer.writerow([key.hex(), f"{e.mass:.17g}", f"{e.fvalue:.17g}"])
    return out.getvalue() if fh is None else ""
