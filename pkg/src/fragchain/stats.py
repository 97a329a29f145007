"""Statistical harness: weighted empirical functionals and test utilities.

Estimators for the limit laws (weighted log-size functionals, their
central-limit rescaling, scaled power sums, the largest-fragment decay
rate, and re-normalized power-sum martingales) plus Kolmogorov-Smirnov
and chi-square wrappers that report a uniform TestReport record.

The weighted functionals accept WeightedEmpirical samples from either
route: a population snapshot weighted by size**p_star, or a single
size-biased tagged path (one atom of weight one), which estimates the
same expectation without the truncation bias of a screened population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from .analytic import KappaFunction
from .core import (
    MassPartition,
    PreconditionError,
    RngStream,
    SampleSizeError,
    ValidationError,
)
from .engine import EventLog
from .laws import DislocationLaw
from .partition import TaggedPath


@dataclass(frozen=True)
class TestReport:
    """Outcome of one statistical check.

    ``passed`` reflects the configured criterion: statistic within
    tolerance of expected when a tolerance is given, otherwise p_value
    above the configured level.
    """

    criterion_id: str
    description: str
    statistic: float
    passed: bool
    sample_size: int
    expected: float | None = None
    tolerance: float | None = None
    p_value: float | None = None


@dataclass(frozen=True)
class WeightedEmpirical:
    """Atoms (log size, weight) of one replica at one time stamp."""

    log_sizes: tuple[float, ...]
    weights: tuple[float, ...]
    time: float
    replica: int

    def __post_init__(self) -> None:
        if len(self.log_sizes) != len(self.weights):
            raise ValidationError("log_sizes and weights must align")
        if any(w < 0.0 or not math.isfinite(w) for w in self.weights):
            raise ValidationError("weights must be finite and >= 0")

    @classmethod
    def from_partition(
        cls, part: MassPartition, p_star: float, time: float, replica: int
    ) -> "WeightedEmpirical":
        """Weight each fragment by size**p_star."""
        return cls(
            log_sizes=part.log_sizes,
            weights=tuple(math.exp(p_star * ls) for ls in part.log_sizes),
            time=time,
            replica=replica,
        )

    @classmethod
    def from_tagged_path(
        cls, path: TaggedPath, time: float, replica: int
    ) -> "WeightedEmpirical":
        """One unit-weight atom at the tagged log size; empty if absorbed."""
        ls = path.log_chi(time)
        if ls == -math.inf:
            return cls(log_sizes=(), weights=(), time=time, replica=replica)
        return cls(log_sizes=(ls,), weights=(1.0,), time=time, replica=replica)

    @property
    def total_weight(self) -> float:
        return math.fsum(self.weights)

    def functional(self, f: Callable[[float], float], t: float) -> float:
        """Sum of w * f(log_size / t) over the atoms."""
        return math.fsum(w * f(ls / t) for ls, w in zip(self.log_sizes, self.weights))


def clamped_identity(lo: float = -3.0, hi: float = 0.0) -> Callable[[float], float]:
    """Bounded continuous test function x clamped to [lo, hi]."""
    def f(x: float) -> float:
        return min(hi, max(lo, x))
    return f


def _require_samples(samples: Sequence, minimum: int) -> None:
    if len(samples) < minimum:
        raise SampleSizeError(f"need at least {minimum} replicas, got {len(samples)}")


def lln_functional(
    samples: Sequence[WeightedEmpirical], f: Callable[[float], float], t: float
) -> float:
    """Mean weighted functional sum_i w_i f(t^{-1} log x_i) over replicas.

    For a conservative law at its Malthusian exponent the per-replica
    total weight is 1 and the estimate converges to f(-kappa'(p_star)).

    Parameters
    ----------
    samples : sequence of WeightedEmpirical
        One entry per replica, all at time t.
    f : callable
        Bounded continuous test function of the normalized log size.
    t : float
        Time stamp of the samples.

    Returns
    -------
    float
    """
    _require_samples(samples, 2)
    if t <= 0.0:
        raise PreconditionError("functional estimators need t > 0")
    return float(np.mean([s.functional(f, t) for s in samples]))


def clt_functional(
    samples: Sequence[WeightedEmpirical],
    t: float,
    kappa: KappaFunction,
    p_star: float | None = None,
) -> tuple[float, float]:
    """Weighted mean and variance of (log x_i + kappa'(p_star) t) / sqrt(t).

    The limit is a centered normal with variance -kappa''(p_star); the
    law must be non-geometric for the normal limit to hold.
    """
    _require_samples(samples, 2)
    if t <= 0.0:
        raise PreconditionError("functional estimators need t > 0")
    if kappa.law.geometric:
        raise PreconditionError("central limit rescaling needs a non-geometric law")
    if p_star is None:
        p_star = kappa.malthusian()
    drift = kappa.derivative(p_star)
    root_t = math.sqrt(t)
    zs: list[float] = []
    ws: list[float] = []
    for s in samples:
        for ls, w in zip(s.log_sizes, s.weights):
            zs.append((ls + drift * t) / root_t)
            ws.append(w)
    total = math.fsum(ws)
    if total <= 0.0:
        raise ValidationError("all atoms have zero weight")
    z = np.asarray(zs)
    w = np.asarray(ws) / total
    mean = float(np.dot(w, z))
    var = float(np.dot(w, (z - mean) ** 2))
    return mean, var


def scaled_moment(
    states: Sequence[MassPartition],
    t: float,
    alpha: float,
    p_star: float,
    k: int,
    law: DislocationLaw | None = None,
) -> float:
    """Monte Carlo mean of t^k sum_i x_i^{p_star + alpha k} at time t.

    Converges to the k-th moment of the scaled-size limit measure for
    positive-index chains; compare against ``analytic.rho_moments``.
    """
    _require_samples(states, 2)
    if alpha <= 0.0:
        raise PreconditionError("scaled moments need a positive index")
    if k < 1:
        raise ValidationError("moment order k must be >= 1")
    if law is not None and law.geometric:
        raise PreconditionError("scaled moments need a non-geometric law")
    power = p_star + alpha * k
    vals = [
        math.fsum(math.exp(power * ls) for ls in s.log_sizes) for s in states
    ]
    return float(t**k * np.mean(vals))


def largest_rate(logs: Sequence[EventLog], t: float) -> float:
    """Mean of t^{-1} log x_1(t) over replicas.

    The almost-sure limit is -kappa'(p_bar), the decay rate of the
    largest fragment.  A threshold run is refused unless
    log eps < -kappa'(p_bar) t - 5, which keeps the screen too low to
    touch the largest fragment's ancestry (sizes only decrease along a
    line, so screening cannot alter x_1 while x_1 > eps).
    """
    _require_samples(logs, 2)
    cfg = logs[0].config
    if cfg.alpha != 0.0:
        raise PreconditionError("largest-fragment rate is computed at index 0")
    kf = KappaFunction(cfg.law, cfg.erosion)
    rate = kf.largest_fragment_rate()
    if cfg.mode == "threshold":
        if math.log(cfg.epsilon) >= -rate * t - 5.0:
            raise PreconditionError(
                f"screen size {cfg.epsilon} is too large at t={t}: need "
                f"log eps < {-rate * t - 5.0:.3f}"
            )
    vals = []
    for log in logs:
        part = log.snapshots[t].partition
        if len(part) == 0:
            raise PreconditionError(f"replica {log.replica} has no fragments at t={t}")
        vals.append(part.log_sizes[0] / t)
    return float(np.mean(vals))


def additive_martingale(
    logs: Sequence[EventLog], p: float, times: Sequence[float] | None = None
) -> np.ndarray:
    """Per-replica values of exp(t kappa(p)) sum_i x_i^p(t) on a time grid.

    Requires a conservative law without erosion at index 0; each column
    has unit expectation, and for p between the Malthusian exponent and
    the tangency point the terminal value is strictly positive.

    Returns
    -------
    ndarray of shape (len(logs), len(times))
    """
    _require_samples(logs, 1)
    cfg = logs[0].config
    if cfg.alpha != 0.0 or cfg.erosion != 0.0 or not cfg.law.conservative:
        raise PreconditionError(
            "re-normalized power sums are martingales only for conservative "
            "laws without erosion at index 0"
        )
    if p <= cfg.law.underline_p:
        raise PreconditionError(f"exponent must exceed {cfg.law.underline_p}")
    if times is None:
        times = cfg.snapshot_times
    kf = KappaFunction(cfg.law)
    out = np.empty((len(logs), len(times)))
    for i, log in enumerate(logs):
        for j, t in enumerate(times):
            part = log.snapshots[t].partition
            power_sum = math.fsum(math.exp(p * ls) for ls in part.log_sizes)
            out[i, j] = math.exp(t * kf.kappa(p)) * power_sum
    return out


def _as_clean_array(sample, name: str) -> np.ndarray:
    arr = np.asarray(sample, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if arr.size < 30:
        raise SampleSizeError(f"{name} needs at least 30 points, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    if np.ptp(arr) == 0.0:
        raise ValidationError(f"{name} is degenerate (all values equal)")
    return arr


def ks_test(
    a,
    b,
    level: float = 0.01,
    criterion_id: str = "",
    description: str = "",
) -> TestReport:
    """Kolmogorov-Smirnov test of a against a sample or a CDF.

    Parameters
    ----------
    a : array-like
        First sample, at least 30 points.
    b : array-like or callable
        Second sample for the two-sample test, or a CDF for the
        one-sample test.
    level : float
        Significance level; passed means p_value > level.
    """
    a = _as_clean_array(a, "sample a")
    if callable(b):
        res = sps.kstest(a, b)
        n = a.size
    else:
        b = _as_clean_array(b, "sample b")
        res = sps.ks_2samp(a, b)
        n = min(a.size, b.size)
    return TestReport(
        criterion_id=criterion_id,
        description=description,
        statistic=float(res.statistic),
        p_value=float(res.pvalue),
        passed=bool(res.pvalue > level),
        sample_size=int(n),
    )


def chi2_test(
    counts,
    expected=None,
    level: float = 0.01,
    criterion_id: str = "",
    description: str = "",
) -> TestReport:
    """Pearson chi-square test of observed counts against expectations.

    ``expected`` defaults to the uniform distribution over the cells.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 1 or counts.size < 2:
        raise ValidationError("need a one-dimensional vector of at least 2 counts")
    if np.any(counts < 0) or counts.sum() <= 0:
        raise ValidationError("counts must be >= 0 and not all zero")
    if expected is not None:
        expected = np.asarray(expected, dtype=float)
        if expected.shape != counts.shape or np.any(expected <= 0):
            raise ValidationError("expected counts must be positive and align")
        expected = expected * (counts.sum() / expected.sum())
    res = sps.chisquare(counts, f_exp=expected)
    return TestReport(
        criterion_id=criterion_id,
        description=description,
        statistic=float(res.statistic),
        p_value=float(res.pvalue),
        passed=bool(res.pvalue > level),
        sample_size=int(counts.sum()),
    )


def weighted_ks(
    values,
    weights,
    cdf: Callable[[np.ndarray], np.ndarray],
    tolerance: float,
    method: str = "direct",
    stream: RngStream | None = None,
    criterion_id: str = "",
    description: str = "",
) -> TestReport:
    """Distance between a weighted empirical CDF and a target CDF.

    method "direct" computes the sup-norm between the weight-normalized
    step function and the target, which is deterministic given the data.
    method "resample" draws an unweighted pseudo-sample of the effective
    (Kish) size by weight-proportional resampling and runs the standard
    one-sample test; it adds resampling noise and a small positive bias.
    The reported p-value uses the effective sample size in the asymptotic
    Kolmogorov distribution and is approximate for unequal weights; the
    pass decision compares the distance against ``tolerance``.
    """
    x = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if x.shape != w.shape or x.ndim != 1:
        raise ValidationError("values and weights must be aligned vectors")
    if x.size < 30:
        raise SampleSizeError(f"need at least 30 atoms, got {x.size}")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ValidationError("weights must be finite, >= 0, not all zero")
    ess = float(w.sum() ** 2 / np.square(w).sum())
    if method == "resample":
        if stream is None:
            raise ValidationError("resampling needs a stream")
        n = max(30, int(ess))
        idx = stream.generator.choice(x.size, size=n, p=w / w.sum())
        res = sps.kstest(x[idx], cdf)
        d = float(res.statistic)
        pv = float(res.pvalue)
    elif method == "direct":
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cum = np.cumsum(w[order]) / w.sum()
        target = np.asarray(cdf(xs), dtype=float)
        below = np.concatenate(([0.0], cum[:-1]))
        d = float(max(np.abs(cum - target).max(), np.abs(below - target).max()))
        root = math.sqrt(ess)
        pv = float(sps.kstwobign.sf(d * (root + 0.12 + 0.11 / root)))
    else:
        raise ValidationError(f"unknown method {method!r}")
    return TestReport(
        criterion_id=criterion_id,
        description=description,
        statistic=d,
        tolerance=tolerance,
        p_value=pv,
        passed=bool(d < tolerance),
        sample_size=int(ess),
    )


def tagged_samples(
    cfg, t: float, replicas: int, seed: int
) -> list[WeightedEmpirical]:
    """Simulate independent tagged paths and wrap them as unit-weight atoms."""
    from .core import replica_stream
    from .partition import tagged_path

    out = []
    for r in range(replicas):
        path = tagged_path(cfg, t, replica_stream(seed, r))
        out.append(WeightedEmpirical.from_tagged_path(path, t, r))
    return out


def population_samples(
    logs: Sequence[EventLog], t: float, p_star: float
) -> list[WeightedEmpirical]:
    """Weighted snapshot atoms from engine runs at one time stamp."""
    return [
        WeightedEmpirical.from_partition(
            log.snapshots[t].partition, p_star, t, log.replica
        )
        for log in logs
    ]
