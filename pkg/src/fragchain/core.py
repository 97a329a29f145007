"""Shared primitives for fragmentation simulations.

Provides the ranked mass-partition state type, genealogy labels for the
Ulam-Harris tree, reproducible named random streams, and the exception
taxonomy used across the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

# Tolerance for "total mass <= 1" style checks on ranked partitions.
MASS_TOL = 1e-12

_BLOCK = 4096


class FragmentationError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FragmentationError, ValueError):
    """Malformed value: bad masses, bad labels, bad configuration fields."""


class PreconditionError(FragmentationError, ValueError):
    """A documented precondition of an operation does not hold."""


class ConvergenceError(FragmentationError, ArithmeticError):
    """A series or root search left its validated range."""


class FrontierError(FragmentationError, RuntimeError):
    """A recorded history is too shallow to answer the query exactly."""


class BudgetError(FragmentationError, RuntimeError):
    """Event or population budget exhausted before the run finished."""


class SampleSizeError(FragmentationError, ValueError):
    """Too few samples for a statistical check to be meaningful."""


def _validate_log_sizes(log_sizes: tuple[float, ...]) -> None:
    prev = math.inf
    for ls in log_sizes:
        if math.isnan(ls) or ls == math.inf:
            raise ValidationError(f"log size must be finite or -inf, got {ls!r}")
        if ls == -math.inf:
            raise ValidationError("zero-mass entries must be dropped before construction")
        if ls > prev:
            raise ValidationError("entries must be ranked non-increasing")
        prev = ls
    total = math.fsum(math.exp(ls) for ls in log_sizes)
    if total > 1.0 + MASS_TOL:
        raise ValidationError(f"total mass {total!r} exceeds 1 + {MASS_TOL}")


@dataclass(frozen=True)
class MassPartition:
    """Ranked masses of a fragmented unit object, stored as log sizes.

    Entries are strictly positive, non-increasing, and sum to at most
    1 + MASS_TOL.  The canonical representation is the log size, so products
    of ratios accumulate additively without underflow.
    """

    log_sizes: tuple[float, ...]

    def __post_init__(self) -> None:
        _validate_log_sizes(self.log_sizes)

    @classmethod
    def from_sizes(cls, sizes: Iterable[float]) -> "MassPartition":
        return rank(sizes)

    @classmethod
    def from_log_sizes(cls, log_sizes: Iterable[float]) -> "MassPartition":
        """Rank and validate a collection of log sizes; -inf entries are dropped."""
        kept = sorted((ls for ls in log_sizes if ls != -math.inf), reverse=True)
        return cls(tuple(kept))

    @property
    def sizes(self) -> tuple[float, ...]:
        return tuple(math.exp(ls) for ls in self.log_sizes)

    @property
    def total_mass(self) -> float:
        return math.fsum(math.exp(ls) for ls in self.log_sizes)

    @property
    def largest(self) -> float:
        return math.exp(self.log_sizes[0]) if self.log_sizes else 0.0

    def size(self, i: int) -> float:
        return math.exp(self.log_sizes[i])

    def scaled(self, log_factor: float) -> "MassPartition":
        """Multiply every mass by exp(log_factor) <= 1."""
        if log_factor > 0.0:
            raise ValidationError("scaling factor must not exceed 1")
        return MassPartition(tuple(ls + log_factor for ls in self.log_sizes))

    def __len__(self) -> int:
        return len(self.log_sizes)

    def __iter__(self) -> Iterator[float]:
        return iter(self.sizes)


EMPTY_PARTITION = MassPartition(())
UNIT_PARTITION = MassPartition((0.0,))


def rank(sizes: Iterable[float]) -> MassPartition:
    """Build a ranked partition from raw masses.

    Drops zeros, rejects negative or non-finite entries, sorts the rest in
    non-increasing order.
    """
    kept: list[float] = []
    for s in sizes:
        if not (s >= 0.0) or math.isinf(s):
            raise ValidationError(f"mass must be finite and >= 0, got {s!r}")
        if s > 0.0:
            kept.append(math.log(s))
    kept.sort(reverse=True)
    return MassPartition(tuple(kept))


def merge_families(parts: Iterable[MassPartition]) -> MassPartition:
    """Union of several ranked families, re-ranked into one partition."""
    pooled: list[float] = []
    for part in parts:
        pooled.extend(part.log_sizes)
    pooled.sort(reverse=True)
    return MassPartition(tuple(pooled))


def dust_mass(x: MassPartition) -> float:
    """Mass missing from the ranked entries, clamped to [0, 1]."""
    return min(1.0, max(0.0, 1.0 - x.total_mass))


@dataclass(frozen=True, order=True)
class NodeLabel:
    """Genealogy address: the root is the empty path, child i extends it by i.

    Child indices are 1-based and follow the ranked order of the split that
    created them.  Tuple comparison gives the lexicographic order used to
    break event-time ties.
    """

    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for i in self.path:
            if not isinstance(i, int) or i < 1:
                raise ValidationError(f"child indices must be integers >= 1, got {i!r}")

    @classmethod
    def root(cls) -> "NodeLabel":
        return cls(())

    @property
    def is_root(self) -> bool:
        return not self.path

    @property
    def generation(self) -> int:
        return len(self.path)

    @property
    def parent(self) -> "NodeLabel":
        if self.is_root:
            raise ValidationError("the root has no parent")
        return NodeLabel(self.path[:-1])

    def child(self, i: int) -> "NodeLabel":
        return NodeLabel(self.path + (i,))

    def __str__(self) -> str:
        if self.is_root:
            return "/"
        return "/" + "/".join(str(i) for i in self.path)

    @classmethod
    def parse(cls, text: str) -> "NodeLabel":
        if not text.startswith("/"):
            raise ValidationError(f"labels start with '/', got {text!r}")
        body = text.strip("/")
        if not body:
            return cls(())
        try:
            return cls(tuple(int(tok) for tok in body.split("/")))
        except ValueError as exc:
            raise ValidationError(f"bad label {text!r}") from exc


@dataclass(frozen=True)
class TreeMark:
    """Per-node record: log size at birth, birth time, lifetime until split.

    A lifetime of +inf marks a node censored by the simulation horizon.
    """

    log_size: float
    birth: float
    lifetime: float

    def __post_init__(self) -> None:
        if math.isnan(self.log_size) or self.log_size > 0.0 + 1e-15:
            raise ValidationError(f"log size must be <= 0, got {self.log_size!r}")
        if not (self.birth >= 0.0):
            raise ValidationError(f"birth must be >= 0, got {self.birth!r}")
        if not (self.lifetime >= 0.0):
            raise ValidationError(f"lifetime must be >= 0, got {self.lifetime!r}")

    @property
    def death(self) -> float:
        return self.birth + self.lifetime


class RngStream:
    """Named, reproducible random stream.

    A stream is identified by (seed, stream_index) plus an optional tuple of
    substream indices; identical identities yield identical draw sequences.
    Distinct identities are statistically independent (counter-based seeding).
    Scalar draws are served from fixed-size buffered blocks, which keeps the
    sequence a pure function of the call order.
    """

    __slots__ = (
        "seed",
        "stream_index",
        "key",
        "generator",
        "_u_buf",
        "_u_i",
        "_e_buf",
        "_e_i",
        "_g_bufs",
    )

    def __init__(self, seed: int, stream_index: int = 0, _subkey: tuple[int, ...] = ()):
        if seed < 0 or stream_index < 0:
            raise ValidationError("seed and stream_index must be non-negative")
        self.seed = seed
        self.stream_index = stream_index
        self.key = (stream_index,) + _subkey
        seq = np.random.SeedSequence(seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(seq))
        self._u_buf = np.empty(0)
        self._u_i = 0
        self._e_buf = np.empty(0)
        self._e_i = 0
        self._g_bufs: dict[float, tuple[np.ndarray, int]] = {}

    def substream(self, *indices: int) -> "RngStream":
        """Independent stream derived from this one by extending its identity."""
        return RngStream(self.seed, self.stream_index, self.key[1:] + tuple(indices))

    def uniform(self) -> float:
        if self._u_i >= self._u_buf.shape[0]:
            self._u_buf = self.generator.random(_BLOCK)
            self._u_i = 0
        v = self._u_buf[self._u_i]
        self._u_i += 1
        return float(v)

    def exponential(self) -> float:
        if self._e_i >= self._e_buf.shape[0]:
            self._e_buf = self.generator.standard_exponential(_BLOCK)
            self._e_i = 0
        v = self._e_buf[self._e_i]
        self._e_i += 1
        return float(v)

    def standard_gamma(self, shape: float) -> float:
        buf, i = self._g_bufs.get(shape, (None, 0))
        if buf is None or i >= buf.shape[0]:
            buf = self.generator.standard_gamma(shape, _BLOCK)
            i = 0
        self._g_bufs[shape] = (buf, i + 1)
        return float(buf[i])


def replica_stream(seed: int, replica: int) -> RngStream:
    """Stream for one replica of a batch; replicas are mutually independent."""
    return RngStream(seed, replica)


def sorted_snapshot(log_sizes: Sequence[float]) -> MassPartition:
    """Ranked partition from an unsorted collection of log sizes."""
    return MassPartition(tuple(sorted(log_sizes, reverse=True)))
