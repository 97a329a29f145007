"""Event-driven simulation of self-similar fragmentation chains.

A fragment of size x splits at rate x^alpha into children given by a
dislocation law; the engine runs the resulting marked branching process with
a priority queue of scheduled splits.  Two modes:

- "exact": every fragment is tracked until the (finite) horizon; requires
  alpha >= 0 and a law with bounded child counts.
- "threshold": children born at or below a screen size epsilon leave the
  simulation immediately as dust, and their rescaled sizes are recorded as
  exit atoms; the run may continue to screened extinction (horizon None).

Erosion acts as a deterministic shrink factor e^{-ct} applied at readout;
split rates are driven by the pure-jump sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Callable, Sequence

import numpy as np

from .core import (
    BudgetError,
    MassPartition,
    NodeLabel,
    PreconditionError,
    RngStream,
    ValidationError,
    sorted_snapshot,
)
from .laws import DislocationLaw

ALIVE, SPLIT, SCREENED = 0, 1, 2

EVENT_BUDGET = 100_000_000
POPULATION_CAP = 10_000_000


@dataclass(frozen=True)
class SimConfig:
    """Immutable description of one simulation setup."""

    law: DislocationLaw
    alpha: float = 0.0
    erosion: float = 0.0
    mode: str = "exact"
    epsilon: float | None = None
    horizon: float | None = None
    snapshot_times: tuple[float, ...] = ()
    replicas: int = 1
    seed: int = 0
    detail: str = "full"

    def validate(self) -> None:
        if self.mode not in ("exact", "threshold"):
            raise ValidationError(f"mode must be 'exact' or 'threshold', got {self.mode!r}")
        if self.erosion < 0.0:
            raise PreconditionError("erosion coefficient must be >= 0")
        if self.detail not in ("full", "light"):
            raise ValidationError(f"detail must be 'full' or 'light', got {self.detail!r}")
        if self.replicas < 1:
            raise ValidationError("replica count must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be >= 0")
        if self.mode == "exact":
            if self.alpha < 0.0:
                raise PreconditionError(
                    "exact mode needs alpha >= 0; negative indices shatter in finite time"
                )
            if self.law.max_children is None:
                raise PreconditionError("exact mode needs a law with bounded child counts")
            if self.epsilon is not None:
                raise ValidationError("exact mode does not take a screen size")
            if self.horizon is None or not math.isfinite(self.horizon) or self.horizon < 0:
                raise PreconditionError("exact mode needs a finite horizon >= 0")
        else:
            if self.epsilon is None or not 0.0 < self.epsilon < 1.0:
                raise PreconditionError("threshold mode needs a screen size in (0, 1)")
            if self.horizon is not None and (not math.isfinite(self.horizon) or self.horizon < 0):
                raise PreconditionError("horizon must be finite and >= 0, or None")
        for t in self.snapshot_times:
            if t < 0.0 or (self.horizon is not None and t > self.horizon):
                raise ValidationError(f"snapshot time {t} outside [0, horizon]")
        if list(self.snapshot_times) != sorted(self.snapshot_times):
            raise ValidationError("snapshot times must be sorted ascending")


@dataclass(frozen=True)
class CostSpec:
    """Energy cost of one split: size^beta * phi(child ratios)."""

    beta: float
    phi: Callable[[MassPartition], float] | None = None


@dataclass(frozen=True)
class Snapshot:
    time: float
    partition: MassPartition
    dust: float

    @property
    def n_fragments(self) -> int:
        return len(self.partition)


@dataclass
class EventLog:
    """Record of one replica.

    In "full" detail the genealogy and every split are stored; in "light"
    detail only snapshots, exit atoms, energy accumulators, dust, and the
    extinction time are kept.
    """

    config: SimConfig
    replica: int
    n_events: int = 0
    extinction_time: float | None = None
    final_dust: float = 0.0
    snapshots: dict[float, Snapshot] = field(default_factory=dict)
    exit_log_sizes: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    # Node tables (full detail only); index 0 is the root.
    parent: list[int] | None = None
    child_rank: list[int] | None = None
    log_size: list[float] | None = None
    birth: list[float] | None = None
    death: list[float] | None = None
    fate: list[int] | None = None
    # Split records (full detail only).
    event_time: list[float] | None = None
    event_node: list[int] | None = None
    event_child_start: list[int] | None = None
    event_child_count: list[int] | None = None
    dust_times: list[float] | None = None
    dust_values: list[float] | None = None

    def _need_full(self) -> None:
        if self.parent is None:
            raise PreconditionError("this query needs a full-detail run")

    def node_label(self, node: int) -> NodeLabel:
        self._need_full()
        path: list[int] = []
        while node != 0:
            path.append(self.child_rank[node])
            node = self.parent[node]
        return NodeLabel(tuple(reversed(path)))

    def dust_at(self, t: float) -> float:
        self._need_full()
        from bisect import bisect_right

        i = bisect_right(self.dust_times, t)
        jump_dust = self.dust_values[i - 1] if i else 0.0
        if self.config.erosion:
            alive = math.fsum(
                math.exp(ls)
                for ls, b, d in zip(self.log_size, self.birth, self.death)
                if b <= t < d
            )
            return 1.0 - math.exp(-self.config.erosion * t) * alive
        return jump_dust

    def state_at(self, t: float) -> Snapshot:
        """Ranked fragment sizes at time t, erosion applied."""
        self._need_full()
        if self.config.horizon is not None and t > self.config.horizon:
            raise PreconditionError(f"time {t} is beyond the horizon")
        shift = -self.config.erosion * t
        alive = [
            ls + shift
            for ls, b, d in zip(self.log_size, self.birth, self.death)
            if b <= t < d
        ]
        part = sorted_snapshot(alive)
        return Snapshot(time=t, partition=part, dust=1.0 - part.total_mass)


def run(
    cfg: SimConfig,
    stream: RngStream,
    replica: int = 0,
    cost_specs: Sequence[tuple[CostSpec, float]] = (),
    event_budget: int = EVENT_BUDGET,
    population_cap: int = POPULATION_CAP,
) -> EventLog:
    """Simulate one replica of cfg, drawing all randomness from stream.

    cost_specs is a sequence of (CostSpec, epsilon) pairs; for each, the sum
    of size^beta * phi(ratios) over splits of fragments larger than epsilon
    is accumulated into EventLog.energy.
    """
    cfg.validate()
    law = cfg.law
    alpha = cfg.alpha
    threshold = cfg.mode == "threshold"
    log_eps = math.log(cfg.epsilon) if threshold else -math.inf
    horizon = cfg.horizon
    full = cfg.detail == "full"
    conservative = law.conservative

    log = EventLog(config=cfg, replica=replica)
    log.energy = [0.0] * len(cost_specs)
    energy = log.energy
    costs = [(spec.beta, spec.phi, math.log(eps)) for spec, eps in cost_specs]

    if full:
        log.parent = [-1]
        log.child_rank = [0]
        log.log_size = [0.0]
        log.birth = [0.0]
        log.death = [math.inf]
        log.fate = [ALIVE]
        log.event_time = []
        log.event_node = []
        log.event_child_start = []
        log.event_child_count = []
        log.dust_times = []
        log.dust_values = []

    sample_log_ratios = law.sample_log_ratios
    exponential = stream.exponential
    exits = log.exit_log_sizes

    # Heap entries: (death time, creation order, log size).  Creation order is
    # the deterministic tie-break; exact float ties are resolved to label
    # order in serialization.
    root_death = exponential()
    heap: list[tuple[float, int, float]] = [(root_death, 0, 0.0)]
    if full:
        log.death[0] = root_death
    n_nodes = 1
    dust = 0.0
    n_events = 0

    snaps = list(cfg.snapshot_times)
    snap_i = 0

    def capture(t: float) -> None:
        shift = -cfg.erosion * t
        part = sorted_snapshot([entry[2] + shift for entry in heap])
        if cfg.erosion:
            d = 1.0 - part.total_mass
        else:
            d = dust
        log.snapshots[t] = Snapshot(time=t, partition=part, dust=d)

    while heap:
        t_next = heap[0][0]
        while snap_i < len(snaps) and snaps[snap_i] < t_next:
            capture(snaps[snap_i])
            snap_i += 1
        if horizon is not None and t_next > horizon:
            break

        t_split, node, pls = heappop(heap)
        n_events += 1
        if n_events > event_budget:
            raise BudgetError(f"event budget {event_budget} exhausted at t={t_split:.6g}")

        ratios = sample_log_ratios(stream)

        if costs:
            for ci, (beta, phi, leps) in enumerate(costs):
                if pls > leps:
                    w = phi(MassPartition(ratios)) if phi is not None else 1.0
                    energy[ci] += math.exp(beta * pls) * w

        if full:
            log.fate[node] = SPLIT
            log.event_time.append(t_split)
            log.event_node.append(node)
            log.event_child_start.append(n_nodes)
            log.event_child_count.append(len(ratios))

        child_total = 0.0
        for i, lr in enumerate(ratios):
            cls = pls + lr
            if not conservative:
                child_total += math.exp(cls)
            if threshold and cls <= log_eps:
                dust += math.exp(cls)
                exits.append(cls)
                if full:
                    log.parent.append(node)
                    log.child_rank.append(i + 1)
                    log.log_size.append(cls)
                    log.birth.append(t_split)
                    log.death.append(t_split)
                    log.fate.append(SCREENED)
                n_nodes += 1
                continue
            e = exponential()
            lifetime = e if alpha == 0.0 else e * math.exp(-alpha * cls)
            cdeath = t_split + lifetime
            heappush(heap, (cdeath, n_nodes, cls))
            if full:
                log.parent.append(node)
                log.child_rank.append(i + 1)
                log.log_size.append(cls)
                log.birth.append(t_split)
                log.death.append(cdeath)
                log.fate.append(ALIVE)
            n_nodes += 1

        if not conservative:
            dust += max(0.0, math.exp(pls) - child_total)
        if full and (threshold or not conservative):
            log.dust_times.append(t_split)
            log.dust_values.append(dust)

        if len(heap) > population_cap:
            raise BudgetError(f"population cap {population_cap} exceeded at t={t_split:.6g}")

        if not heap:
            log.extinction_time = t_split

    while snap_i < len(snaps):
        capture(snaps[snap_i])
        snap_i += 1

    log.n_events = n_events
    log.final_dust = dust
    if full:
        _order_tied_events(log)
    return log


def _order_tied_events(log: EventLog) -> None:
    # Exact float ties in event times are broken by label order.
    times = log.event_time
    for i in range(1, len(times)):
        if times[i] == times[i - 1]:
            a, b = log.event_node[i - 1], log.event_node[i]
            if log.node_label(b) < log.node_label(a):
                for arr in (log.event_node, log.event_child_start, log.event_child_count):
                    arr[i - 1], arr[i] = arr[i], arr[i - 1]


def extinction_time(log: EventLog) -> float:
    """Time at which the last tracked fragment disappeared."""
    if log.extinction_time is None:
        raise PreconditionError("run was censored by its horizon before extinction")
    return log.extinction_time


@dataclass
class ExitSampleSet:
    """Pooled first-passage atoms xi/eps with weights xi^{p_star}."""

    atoms: np.ndarray
    weights: np.ndarray
    replica_totals: np.ndarray
    p_star: float
    epsilon: float


def exit_samples(
    cfg: SimConfig, epsilon: float, p_star: float | None = None
) -> ExitSampleSet:
    """Run cfg.replicas threshold replicas to extinction and pool exit atoms."""
    if p_star is None:
        from .analytic import KappaFunction

        p_star = KappaFunction(cfg.law).malthusian()
    base = SimConfig(
        law=cfg.law,
        alpha=cfg.alpha,
        erosion=0.0,
        mode="threshold",
        epsilon=epsilon,
        horizon=None,
        snapshot_times=(),
        replicas=cfg.replicas,
        seed=cfg.seed,
        detail="light",
    )
    log_eps = math.log(epsilon)
    atoms: list[float] = []
    weights: list[float] = []
    totals: list[float] = []
    for r in range(base.replicas):
        lg = run(base, RngStream(base.seed, r), replica=r)
        w = [math.exp(p_star * ls) for ls in lg.exit_log_sizes]
        atoms.extend(math.exp(ls - log_eps) for ls in lg.exit_log_sizes)
        weights.extend(w)
        totals.append(math.fsum(w))
    return ExitSampleSet(
        atoms=np.asarray(atoms),
        weights=np.asarray(weights),
        replica_totals=np.asarray(totals),
        p_star=p_star,
        epsilon=epsilon,
    )


def energy_cost(cfg: SimConfig, cost: CostSpec, epsilon: float) -> float:
    """Mean over replicas of the total split energy restricted to sizes > epsilon."""
    vals = energy_cost_replicas(cfg, cost, epsilon)
    return float(np.mean(vals))


def energy_cost_replicas(
    cfg: SimConfig, cost: CostSpec, epsilon: float
) -> np.ndarray:
    base = SimConfig(
        law=cfg.law,
        alpha=cfg.alpha,
        erosion=cfg.erosion,
        mode="threshold",
        epsilon=min(epsilon, cfg.epsilon if cfg.epsilon else epsilon),
        horizon=cfg.horizon,
        snapshot_times=(),
        replicas=cfg.replicas,
        seed=cfg.seed,
        detail="light",
    )
    out = np.empty(base.replicas)
    for r in range(base.replicas):
        lg = run(base, RngStream(base.seed, r), replica=r, cost_specs=[(cost, epsilon)])
        out[r] = lg.energy[0]
    return out


@dataclass(frozen=True)
class SizeFunctional:
    """Test function of one fragment size, vanishing on [0, cutoff).

    power is set when fn(s) = s^power exactly, unlocking closed-form
    generator evaluation.
    """

    fn: Callable[[float], float]
    power: float | None = None
    cutoff: float = 0.0


def generator_additive(
    law: DislocationLaw,
    x: MassPartition,
    f: SizeFunctional,
    alpha: float,
    stream: RngStream | None = None,
    n_samples: int = 100_000,
) -> float:
    """Generator of the additive functional sum_i f(X_i) at state x.

    Value: sum_i x_i^alpha * E[ sum_j f(x_i s_j) - f(x_i) ] over one split.
    Exact when f is a pure power; Monte Carlo over the dislocation law
    otherwise.
    """
    if law.max_children is None and f.cutoff <= 0.0:
        raise PreconditionError(
            "laws with unbounded split activity need a test function with a positive cutoff"
        )
    if f.power is not None:
        p = f.power
        factor = law.sigma_moment(p) - 1.0
        return math.fsum(
            math.exp((alpha + p) * ls) * factor for ls in x.log_sizes
        )
    if stream is None:
        raise PreconditionError("Monte Carlo generator evaluation needs a stream")
    block = law.sample_log_ratios_block(n_samples, stream.generator)
    total = 0.0
    for ls in x.log_sizes:
        xi = math.exp(ls)
        if xi < f.cutoff:
            continue
        child_sizes = np.exp(block + ls)
        vals = np.vectorize(f.fn)(child_sizes).sum(axis=1)
        total += math.exp(alpha * ls) * (float(vals.mean()) - f.fn(xi))
    return total


def generator_multiplicative(
    law: DislocationLaw,
    x: MassPartition,
    g: Callable[[float], float],
    alpha: float,
    stream: RngStream,
    n_samples: int = 100_000,
) -> float:
    """Generator of the multiplicative functional prod_i g(X_i) at state x."""
    logs = x.log_sizes
    gx = [g(math.exp(ls)) for ls in logs]
    total = 0.0
    block = law.sample_log_ratios_block(n_samples, stream.generator)
    for i, ls in enumerate(logs):
        rest = 1.0
        for j, v in enumerate(gx):
            if j != i:
                rest *= v
        child_sizes = np.exp(block + ls)
        prods = np.prod(np.vectorize(g)(child_sizes), axis=1)
        total += math.exp(alpha * ls) * (float(prods.mean()) - gx[i]) * rest
    return total
