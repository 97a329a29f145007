"""Built-in dislocation laws.

A dislocation law is the distribution of the ranked child-to-parent mass
ratios produced by one split.  Each built-in exposes exact closed forms for
the moment function E[sum_i s_i^p] and related integrals, plus fast ranked
samplers (scalar, block, and size-biased variants).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Any

import numpy as np
from scipy import special

from .core import MassPartition, PreconditionError, RngStream, ValidationError

_LN2 = math.log(2.0)

# Sentinel returned by size-biased pickers when the tag falls into dust.
DUST = -math.inf


class DislocationLaw(ABC):
    """Distribution of ranked child ratios at a split."""

    name: str = ""
    #: Largest possible number of children per split; None means unbounded.
    max_children: int | None = None
    #: True when the ratios sum to 1 almost surely.
    conservative: bool = False
    #: True when every ratio is a power of one fixed number (lattice support).
    geometric: bool = False
    #: Infimum of exponents p with E[sum s_i^p] finite; 0.0 for all built-ins.
    underline_p: float = 0.0

    @property
    def params(self) -> dict[str, Any]:
        return {}

    @abstractmethod
    def sample_log_ratios(self, stream: RngStream) -> tuple[float, ...]:
        """One ranked draw, returned as log ratios (largest first)."""

    @abstractmethod
    def sigma_moment(self, p: float) -> float:
        """E[sum_i s_i^p] for p > underline_p."""

    def sample(self, stream: RngStream) -> MassPartition:
        return MassPartition(self.sample_log_ratios(stream))

    def _require_p(self, p: float) -> None:
        if not p > self.underline_p:
            raise PreconditionError(
                f"moment exponent must exceed {self.underline_p}, got {p}"
            )

    # Derivatives of sigma_moment; finite differences unless overridden.
    def sigma_moment_d1(self, p: float) -> float:
        h = 1e-5 * max(1.0, abs(p))
        return (self.sigma_moment(p + h) - self.sigma_moment(p - h)) / (2 * h)

    def sigma_moment_d2(self, p: float) -> float:
        h = 1e-4 * max(1.0, abs(p))
        return (
            self.sigma_moment(p + h) - 2 * self.sigma_moment(p) + self.sigma_moment(p - h)
        ) / (h * h)

    def below_threshold_moment(self, x: float, p: float) -> float:
        """E[sum_i s_i^p 1{s_i < x}] for x in (0, 1]."""
        raise NotImplementedError

    def reproduction_intensity(self, t: float) -> float:
        """Expected number of child ratios >= e^{-t}."""
        raise NotImplementedError

    def size_biased_log_ratio(self, stream: RngStream) -> float:
        """Log ratio of a child picked with probability equal to its mass.

        Returns the DUST sentinel when the pick lands in the mass deficit
        (non-conservative laws only).
        """
        raise NotImplementedError

    def sample_log_ratios_block(self, n: int, generator: np.random.Generator) -> np.ndarray:
        """(n, k) array of ranked log ratios; columns ordered largest first."""
        raise NotImplementedError

    def describe(self) -> dict[str, Any]:
        return {"name": self.name, "params": self.params}

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({inner})"


class UniformBinary(DislocationLaw):
    """Split into (1 - U/2, U/2) with U uniform on (0, 1).

    Conservative binary law; the smaller child is uniform on (0, 1/2) and the
    larger uniform on (1/2, 1).
    """

    name = "uniform_binary"
    max_children = 2
    conservative = True
    geometric = False

    def sample_log_ratios(self, stream: RngStream) -> tuple[float, ...]:
        u = stream.uniform()
        while u <= 0.0:  # degenerate (1, 0) split, zero child dropped by contract
            u = stream.uniform()
        return (math.log1p(-0.5 * u), math.log(0.5 * u))

    def sigma_moment(self, p: float) -> float:
        self._require_p(p)
        return 2.0 / (p + 1.0)

    def sigma_moment_d1(self, p: float) -> float:
        return -2.0 / (p + 1.0) ** 2

    def sigma_moment_d2(self, p: float) -> float:
        return 4.0 / (p + 1.0) ** 3

    def below_threshold_moment(self, x: float, p: float) -> float:
        self._require_p(p)
        if not 0.0 < x <= 1.0:
            raise PreconditionError(f"threshold must lie in (0, 1], got {x}")
        q = p + 1.0
        small = min(x, 0.5)
        out = 2.0 * small**q / q
        if x > 0.5:
            out += 2.0 * (x**q - 0.5**q) / q
        return out

    def reproduction_intensity(self, t: float) -> float:
        if t < 0.0:
            raise PreconditionError("time must be >= 0")
        return 2.0 * -math.expm1(-t)

    def size_biased_log_ratio(self, stream: RngStream) -> float:
        # Mass-biased child ratio has density 2s on (0, 1): CDF s^2.
        u = stream.uniform()
        while u <= 0.0:
            u = stream.uniform()
        return 0.5 * math.log(u)

    def sample_log_ratios_block(self, n: int, generator: np.random.Generator) -> np.ndarray:
        u = generator.random(n)
        bad = u <= 0.0
        while bad.any():
            u[bad] = generator.random(int(bad.sum()))
            bad = u <= 0.0
        out = np.empty((n, 2))
        out[:, 0] = np.log1p(-0.5 * u)
        out[:, 1] = np.log(0.5 * u)
        return out


class DeterministicBinary(DislocationLaw):
    """Split into fixed ratios (r, 1 - r), ranked."""

    name = "deterministic_binary"
    max_children = 2
    conservative = True

    def __init__(self, r: float = 0.5):
        if not 0.0 < r < 1.0:
            raise ValidationError(f"ratio must lie in (0, 1), got {r}")
        self.r = float(r)
        self.geometric = self.r == 0.5
        big = max(self.r, 1.0 - self.r)
        small = min(self.r, 1.0 - self.r)
        self._log_pair = (math.log(big), math.log(small))

    @property
    def params(self) -> dict[str, Any]:
        return {"r": self.r}

    def sample_log_ratios(self, stream: RngStream) -> tuple[float, ...]:
        return self._log_pair

    def sigma_moment(self, p: float) -> float:
        self._require_p(p)
        return self.r**p + (1.0 - self.r) ** p

    def sigma_moment_d1(self, p: float) -> float:
        r = self.r
        return r**p * math.log(r) + (1 - r) ** p * math.log(1 - r)

    def sigma_moment_d2(self, p: float) -> float:
        r = self.r
        return r**p * math.log(r) ** 2 + (1 - r) ** p * math.log(1 - r) ** 2

    def below_threshold_moment(self, x: float, p: float) -> float:
        self._require_p(p)
        r = self.r
        out = 0.0
        if r < x:
            out += r**p
        if 1.0 - r < x:
            out += (1.0 - r) ** p
        return out

    def reproduction_intensity(self, t: float) -> float:
        if t < 0.0:
            raise PreconditionError("time must be >= 0")
        thr = math.exp(-t)
        return float(self.r >= thr) + float(1.0 - self.r >= thr)

    def size_biased_log_ratio(self, stream: RngStream) -> float:
        big, small = self._log_pair
        return big if stream.uniform() < math.exp(big) else small

    def sample_log_ratios_block(self, n: int, generator: np.random.Generator) -> np.ndarray:
        return np.tile(np.asarray(self._log_pair), (n, 1))


class LossyBinary(DislocationLaw):
    """Split into two equal children (U/2, U/2); mass 1 - U turns to dust."""

    name = "lossy_binary"
    max_children = 2
    conservative = False
    geometric = False

    def sample_log_ratios(self, stream: RngStream) -> tuple[float, ...]:
        # 1 - U is uniform too; using it keeps both children strictly positive.
        ls = math.log1p(-stream.uniform()) - _LN2
        return (ls, ls)

    def sigma_moment(self, p: float) -> float:
        self._require_p(p)
        return 2.0 ** (1.0 - p) / (p + 1.0)

    def sigma_moment_d1(self, p: float) -> float:
        s = self.sigma_moment(p)
        return -s * (_LN2 + 1.0 / (p + 1.0))

    def sigma_moment_d2(self, p: float) -> float:
        s = self.sigma_moment(p)
        a = _LN2 + 1.0 / (p + 1.0)
        return s * (a * a + 1.0 / (p + 1.0) ** 2)

    def below_threshold_moment(self, x: float, p: float) -> float:
        self._require_p(p)
        if not 0.0 < x <= 1.0:
            raise PreconditionError(f"threshold must lie in (0, 1], got {x}")
        q = p + 1.0
        return 4.0 * min(x, 0.5) ** q / q

    def reproduction_intensity(self, t: float) -> float:
        if t < 0.0:
            raise PreconditionError("time must be >= 0")
        return 2.0 * max(0.0, 1.0 - 2.0 * math.exp(-t))

    def size_biased_log_ratio(self, stream: RngStream) -> float:
        u = 1.0 - stream.uniform()
        return math.log(u) - _LN2 if stream.uniform() < u else DUST

    def sample_log_ratios_block(self, n: int, generator: np.random.Generator) -> np.ndarray:
        ls = np.log1p(-generator.random(n)) - _LN2
        return np.stack([ls, ls], axis=1)


class DirichletSplit(DislocationLaw):
    """Split into the ranked coordinates of a symmetric Dirichlet(theta) on k parts."""

    name = "dirichlet_k"
    conservative = True
    geometric = False

    def __init__(self, k: int = 3, theta: float = 1.0):
        if not (isinstance(k, int) and k >= 2):
            raise ValidationError(f"part count must be an integer >= 2, got {k!r}")
        if not theta > 0.0:
            raise ValidationError(f"concentration must be positive, got {theta!r}")
        self.k = k
        self.theta = float(theta)
        self.max_children = k

    @property
    def params(self) -> dict[str, Any]:
        return {"k": self.k, "theta": self.theta}

    def sample_log_ratios(self, stream: RngStream) -> tuple[float, ...]:
        while True:
            g = [stream.standard_gamma(self.theta) for _ in range(self.k)]
            tot = math.fsum(g)
            if tot > 0.0 and all(v > 0.0 for v in g):
                g.sort(reverse=True)
                lt = math.log(tot)
                return tuple(math.log(v) - lt for v in g)

    def sigma_moment(self, p: float) -> float:
        self._require_p(p)
        th, k = self.theta, self.k
        return k * math.exp(
            special.gammaln(th + p)
            + special.gammaln(k * th)
            - special.gammaln(th)
            - special.gammaln(k * th + p)
        )

    def sigma_moment_d1(self, p: float) -> float:
        s = self.sigma_moment(p)
        return s * (special.digamma(self.theta + p) - special.digamma(self.k * self.theta + p))

    def sigma_moment_d2(self, p: float) -> float:
        s = self.sigma_moment(p)
        d = special.digamma(self.theta + p) - special.digamma(self.k * self.theta + p)
        d2 = special.polygamma(1, self.theta + p) - special.polygamma(1, self.k * self.theta + p)
        return s * (d * d + d2)

    def below_threshold_moment(self, x: float, p: float) -> float:
        # One coordinate is Beta(theta, (k-1)theta); restrict its p-th moment.
        self._require_p(p)
        if not 0.0 < x <= 1.0:
            raise PreconditionError(f"threshold must lie in (0, 1], got {x}")
        a, b = self.theta, (self.k - 1) * self.theta
        frac = float(special.betainc(a + p, b, x)) if x < 1.0 else 1.0
        return self.sigma_moment(p) * frac

    def reproduction_intensity(self, t: float) -> float:
        if t < 0.0:
            raise PreconditionError("time must be >= 0")
        a, b = self.theta, (self.k - 1) * self.theta
        return self.k * float(1.0 - special.betainc(a, b, math.exp(-t)))

    def size_biased_log_ratio(self, stream: RngStream) -> float:
        # Mass-biased coordinate of a symmetric Dirichlet is Beta(theta+1, (k-1)theta).
        g1 = stream.standard_gamma(self.theta + 1.0)
        g2 = stream.standard_gamma((self.k - 1) * self.theta)
        return math.log(g1) - math.log(g1 + g2)

    def sample_log_ratios_block(self, n: int, generator: np.random.Generator) -> np.ndarray:
        g = generator.standard_gamma(self.theta, (n, self.k))
        bad = (g <= 0.0).any(axis=1)
        while bad.any():
            g[bad] = generator.standard_gamma(self.theta, (int(bad.sum()), self.k))
            bad = (g <= 0.0).any(axis=1)
        w = np.log(g) - np.log(g.sum(axis=1, keepdims=True))
        w.sort(axis=1)
        return w[:, ::-1]


def uniform_binary() -> UniformBinary:
    return UniformBinary()


def deterministic_binary(r: float = 0.5) -> DeterministicBinary:
    return DeterministicBinary(r)


def lossy_binary() -> LossyBinary:
    return LossyBinary()


def dirichlet_k(k: int = 3, theta: float = 1.0) -> DirichletSplit:
    return DirichletSplit(k, theta)


_REGISTRY = {
    "uniform_binary": uniform_binary,
    "deterministic_binary": deterministic_binary,
    "lossy_binary": lossy_binary,
    "dirichlet_k": dirichlet_k,
}


def make_law(name: str, params: dict[str, Any] | None = None) -> DislocationLaw:
    """Instantiate a registered law from its name and parameter dict."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValidationError(
            f"unknown law {name!r}; known: {sorted(_REGISTRY)}"
        ) from None
    return factory(**(params or {}))


def law_names() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))
