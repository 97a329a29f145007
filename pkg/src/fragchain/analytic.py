"""Analytic formulas attached to a dislocation law.

Centers on the characteristic exponent kappa(p) = c p + (1 - E[sum s_i^p])
of a fragmentation with erosion coefficient c, and the quantities derived
from it: Malthusian exponent, largest-fragment exponent, moment series of
E[sum X_i^p(t)], limit-measure moments, exit-measure density, and the
Laplace transform of the tagged fragment.
"""

from __future__ import annotations

import math
from typing import Callable

import mpmath
import numpy as np
from scipy import optimize

from .core import ConvergenceError, PreconditionError
from .laws import DislocationLaw

#: Validity bound for the alternating moment series: |t| * max kappa term.
SERIES_RANGE = 30.0
#: Hard cap on the number of series terms.
SERIES_MAX_TERMS = 200
#: Absolute remainder target for the series.
SERIES_TOL = 1e-10


class KappaFunction:
    """Characteristic exponent of a (law, erosion) pair and its derived roots."""

    def __init__(self, law: DislocationLaw, erosion: float = 0.0):
        if erosion < 0.0:
            raise PreconditionError(f"erosion coefficient must be >= 0, got {erosion}")
        self.law = law
        self.erosion = float(erosion)

    @property
    def underline_p(self) -> float:
        return self.law.underline_p

    def kappa(self, p: float) -> float:
        """c p + (1 - E[sum s_i^p]); strictly increasing and concave."""
        return self.erosion * p + (1.0 - self.law.sigma_moment(p))

    def derivative(self, p: float) -> float:
        return self.erosion - self.law.sigma_moment_d1(p)

    def second_derivative(self, p: float) -> float:
        return -self.law.sigma_moment_d2(p)

    def malthusian(self) -> float:
        """Unique root of kappa on (underline_p, inf)."""
        if self.law.conservative and self.erosion == 0.0:
            return 1.0
        lo = self.underline_p + 1e-9
        while self.kappa(lo) >= 0.0:
            lo = self.underline_p + (lo - self.underline_p) / 8.0
            if lo - self.underline_p < 1e-15:
                raise ConvergenceError("kappa has no sign change near its left endpoint")
        hi = max(lo * 2.0, 1.0)
        while self.kappa(hi) <= 0.0:
            hi *= 2.0
            if hi > 1e8:
                raise ConvergenceError("kappa stays negative; no Malthusian exponent")
        return float(optimize.brentq(self.kappa, lo, hi, xtol=1e-14, rtol=8.9e-16))

    def p_bar(self) -> float:
        """Maximizer of kappa(p)/p on (1, inf): root of p kappa'(p) - kappa(p).

        Defined for conservative laws without erosion, where the Malthusian
        exponent is 1 and the objective decreases from kappa'(1) > 0 to a
        negative limit.
        """
        if not (self.law.conservative and self.erosion == 0.0):
            raise PreconditionError(
                "largest-fragment exponent requires a conservative law and no erosion"
            )

        def g(p: float) -> float:
            return p * self.derivative(p) - self.kappa(p)

        lo = 1.0 + 1e-12
        hi = 2.0
        while g(hi) >= 0.0:
            hi *= 2.0
            if hi > 1e8:
                raise ConvergenceError("largest-fragment exponent not bracketed")
        return float(optimize.brentq(g, lo, hi, xtol=1e-14, rtol=8.9e-16))

    def largest_fragment_rate(self) -> float:
        """kappa'(p_bar) = kappa(p_bar) / p_bar, the a.s. decay rate of ln X_1(t)/t."""
        pb = self.p_bar()
        return self.kappa(pb) / pb

    def gamma_product(self, n: int, p: float, alpha: float) -> float:
        """prod_{k < n} kappa(p + alpha k)."""
        out = 1.0
        for k in range(n):
            out *= self.kappa(p + alpha * k)
        return out


def moment_series(
    kf: KappaFunction, p: float, t: float, alpha: float, tol: float = SERIES_TOL
) -> float:
    """E[sum_i X_i(t)^p] for the index-alpha chain via its alternating series.

    The n-th term is ((-t)^n / n!) prod_{k<n} kappa(p + alpha k).  The series
    is summed until the first-omitted-term bound drops below tol; evaluation
    switches to high precision when float64 cancellation would exceed tol.
    Raises ConvergenceError outside the validated range
    |t| * max_k kappa(p + alpha k) <= SERIES_RANGE.
    """
    if t < 0.0:
        raise PreconditionError(f"time must be >= 0, got {t}")
    if not p > kf.underline_p:
        raise PreconditionError(f"exponent must exceed {kf.underline_p}, got {p}")
    if t == 0.0:
        return 1.0

    kappas: list[float] = []
    max_kappa = 0.0
    for k in range(SERIES_MAX_TERMS):
        q = p + alpha * k
        if not q > kf.underline_p:
            raise ConvergenceError(
                f"series needs kappa at exponent {q}, below the law's domain"
            )
        kv = kf.kappa(q)
        kappas.append(kv)
        max_kappa = max(max_kappa, abs(kv))
    if t * max_kappa > SERIES_RANGE:
        raise ConvergenceError(
            f"|t| * max kappa = {t * max_kappa:.3g} exceeds the validated range {SERIES_RANGE}"
        )

    terms: list[float] = []
    term = 1.0
    max_abs = 1.0
    for n in range(SERIES_MAX_TERMS):
        terms.append(term)
        nxt = term * (-t) * kappas[n] / (n + 1)
        # Once the ratio is below 1/2 the tail is bounded by twice the next term.
        if abs(nxt) * 2.0 < tol * 0.01 and t * max_kappa / (n + 2) < 0.5:
            break
        term = nxt
        max_abs = max(max_abs, abs(term))
    else:
        raise ConvergenceError(
            f"series did not reach tolerance {tol} within {SERIES_MAX_TERMS} terms"
        )

    if max_abs > 1e3:
        # Large alternating terms: redo the summation in high precision.
        with mpmath.workdps(60):
            s = mpmath.mpf(0)
            term_mp = mpmath.mpf(1)
            for n in range(SERIES_MAX_TERMS):
                s += term_mp
                term_mp = term_mp * (-t) * kappas[n] / (n + 1)
                if abs(term_mp) < mpmath.mpf(tol) * mpmath.mpf("1e-6") and n > 2 * t * max_kappa:
                    break
            return float(s)
    return math.fsum(terms)


def rho_moments(kf: KappaFunction, alpha: float, count: int) -> list[float]:
    """Moments integral y^{alpha k} rho(dy), k = 1..count, of the scaling limit
    of the size-weighted empirical measure for a positive-index chain.

    Closed form: (k-1)! / (alpha kappa'(p*) kappa(p*+alpha) ... kappa(p*+(k-1)alpha)).
    """
    if alpha <= 0.0:
        raise PreconditionError("scaling-limit moments require a positive index")
    if count < 1:
        raise PreconditionError("need at least one moment")
    p_star = kf.malthusian()
    out: list[float] = []
    denom = alpha * kf.derivative(p_star)
    for k in range(1, count + 1):
        out.append(math.factorial(k - 1) / denom)
        denom *= kf.kappa(p_star + alpha * k)
    return out


def tagged_laplace(kf: KappaFunction, q: float, t: float) -> float:
    """E[chi(t)^q] for the tagged fragment: exp(-t kappa(q + 1))."""
    if t < 0.0:
        raise PreconditionError(f"time must be >= 0, got {t}")
    if not q + 1.0 > kf.underline_p:
        raise PreconditionError(f"need q + 1 > {kf.underline_p}, got q = {q}")
    return math.exp(-t * kf.kappa(q + 1.0))


def reproduction_intensity(law: DislocationLaw, t: float) -> float:
    """Expected number of child ratios at least e^{-t} in one split."""
    return law.reproduction_intensity(t)


class ExitMeasure:
    """Limit law of the rescaled fragment size at first passage below a screen.

    Atoms are xi / eps weighted by xi^{p*}; as eps -> 0 the weighted law on
    (0, 1) has density E[sum_i 1{s_i < x} s_i^{p*}] / (x kappa'(p*)).
    """

    _GRID = 4097

    def __init__(self, kf: KappaFunction):
        if kf.erosion != 0.0:
            raise PreconditionError("exit-measure limit is defined without erosion")
        self.kf = kf
        self.p_star = kf.malthusian()
        self._norm = kf.derivative(self.p_star)
        self._cdf_grid: tuple[np.ndarray, np.ndarray] | None = None

    def density(self, x: float) -> float:
        if not 0.0 < x < 1.0:
            raise PreconditionError(f"argument must lie in (0, 1), got {x}")
        num = self.kf.law.below_threshold_moment(x, self.p_star)
        return num / (x * self._norm)

    def cdf(self, x: np.ndarray | float) -> np.ndarray | float:
        """Distribution function on [0, 1], by cumulative quadrature of density."""
        if self._cdf_grid is None:
            xs = np.linspace(0.0, 1.0, self._GRID)
            mid = 0.5 * (xs[1:] + xs[:-1])
            dens = np.array([self.density(float(m)) for m in mid])
            cum = np.concatenate([[0.0], np.cumsum(dens * np.diff(xs))])
            cum /= cum[-1]  # unit total; quadrature error pushed into rounding
            self._cdf_grid = (xs, cum)
        xs, cum = self._cdf_grid
        return np.interp(x, xs, cum)


def kappa_root_oracle(
    func: Callable[[float], float], lo: float, hi: float
) -> float:
    """Plain bracketed root solve, exposed for cross-checking exponents."""
    return float(optimize.brentq(func, lo, hi, xtol=1e-14, rtol=8.9e-16))
