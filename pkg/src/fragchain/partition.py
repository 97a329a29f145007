"""Exchangeable partitions, interval representations, and tagged fragments.

Three views of the same fragmentation are provided and cross-checked:

- paintbox sampling: a mass partition induces a random partition of
  {1..n} by dropping n i.i.d. uniform tags onto an interval layout;
- interval histories: the chain run as a nested family of open
  subintervals of (0, 1), from which partition-valued processes and the
  index time-change are read off;
- tagged fragments: the size of the fragment containing a single
  uniform tag, simulated directly as a multiplicative jump path.

Interval histories built at index 0 consume random draws in the exact
order of ``engine.run``, so snapshots of ranked lengths agree bitwise
with the event engine when both are driven by the same stream.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from heapq import heappop, heappush

from .core import (
    BudgetError,
    FrontierError,
    MassPartition,
    PreconditionError,
    RngStream,
    ValidationError,
    sorted_snapshot,
)
from .engine import EVENT_BUDGET, POPULATION_CAP, SimConfig
from .laws import DUST, DislocationLaw


@dataclass(frozen=True)
class PartitionOfN:
    """Partition of {1..n} into disjoint blocks, ordered by least element."""

    n: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValidationError("partition ground set must be nonempty")
        seen: set[int] = set()
        count = 0
        prev_least = 0
        for block in self.blocks:
            if not block:
                raise ValidationError("empty block")
            if list(block) != sorted(block):
                raise ValidationError("block members must be sorted ascending")
            if block[0] <= prev_least:
                raise ValidationError("blocks must be ordered by least element")
            prev_least = block[0]
            seen.update(block)
            count += len(block)
        if count != self.n or seen != set(range(1, self.n + 1)):
            raise ValidationError(f"blocks do not partition 1..{self.n}")

    @classmethod
    def from_assignments(cls, keys: list) -> "PartitionOfN":
        """Group indices 1..len(keys) by key; None keys become singletons."""
        groups: dict = {}
        blocks: list[list[int]] = []
        for i, key in enumerate(keys, start=1):
            if key is None:
                blocks.append([i])
            elif key in groups:
                groups[key].append(i)
            else:
                groups[key] = [i]
                blocks.append(groups[key])
        blocks.sort(key=lambda b: b[0])
        return cls(n=len(keys), blocks=tuple(tuple(b) for b in blocks))

    def block_of(self, i: int) -> tuple[int, ...]:
        for block in self.blocks:
            if i in block:
                return block
        raise ValidationError(f"index {i} outside 1..{self.n}")

    def n_blocks(self) -> int:
        return len(self.blocks)

    def refines(self, other: "PartitionOfN") -> bool:
        """True when every block here is contained in a block of other."""
        if self.n != other.n:
            return False
        owner = {}
        for j, block in enumerate(other.blocks):
            for i in block:
                owner[i] = j
        return all(len({owner[i] for i in block}) == 1 for block in self.blocks)

    def as_lines(self) -> list[str]:
        """One line per block, comma-separated member indices."""
        return [",".join(str(i) for i in block) for block in self.blocks]


@dataclass(frozen=True)
class PoissonAtom:
    """One dislocation atom: ratios to apply, ranked index hit, arrival time."""

    ratios: MassPartition
    index: int
    time: float

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValidationError("atom index must be >= 1")


def apply_atom(state: MassPartition, atom: PoissonAtom) -> MassPartition:
    """Replace the index-th largest term of state by its rescaled children.

    An index beyond the number of positive terms splits a zero-size term
    and returns the state unchanged.
    """
    if atom.index > len(state):
        return state
    keep = [ls for i, ls in enumerate(state.log_sizes) if i != atom.index - 1]
    parent = state.log_sizes[atom.index - 1]
    children = [parent + lr for lr in atom.ratios.log_sizes]
    return MassPartition.from_log_sizes(keep + children)


def jump_chain(
    law: DislocationLaw, horizon: float, stream: RngStream
) -> tuple[list[PoissonAtom], MassPartition]:
    """Run the homogeneous chain as a Poissonian jump process to the horizon.

    Atoms arrive at rate (number of positive terms); each carries a fresh
    ratio draw and a uniformly chosen ranked index.  Returns the recorded
    atoms and the final state.  Provided for finite dislocation laws only;
    each positive fragment is hit at unit rate, so the law of the state
    matches the event engine at index 0.
    """
    if not (math.isfinite(horizon) and horizon > 0.0):
        raise PreconditionError("jump chain needs a finite horizon > 0")
    state = MassPartition((0.0,))
    t = 0.0
    atoms: list[PoissonAtom] = []
    while len(state) > 0:
        m = len(state)
        t += stream.exponential() / m
        if t > horizon:
            break
        k = 1 + int(stream.uniform() * m)
        if k > m:  # uniform() returned a value rounding to m
            k = m
        atom = PoissonAtom(ratios=law.sample(stream), index=k, time=t)
        atoms.append(atom)
        state = apply_atom(state, atom)
        if len(atoms) > EVENT_BUDGET:
            raise BudgetError("atom budget exhausted")
    return atoms, state


def paintbox(s: MassPartition, n: int, stream: RngStream) -> PartitionOfN:
    """Sample a partition of {1..n} from a mass partition.

    Parameters
    ----------
    s : MassPartition
        Ranked masses; any mass deficit acts as dust.
    n : int
        Number of tags.
    stream : RngStream
        Source of the i.i.d. uniform tags.

    Returns
    -------
    PartitionOfN
        Tags landing in the same mass interval share a block; tags
        landing in dust become singletons.
    """
    if n < 1:
        raise ValidationError("need at least one tag")
    edges: list[float] = []
    acc = 0.0
    for x in s.sizes:
        acc += x
        edges.append(acc)
    keys: list = []
    for _ in range(n):
        u = stream.uniform()
        k = bisect_right(edges, u)
        keys.append(k if k < len(edges) else None)
    return PartitionOfN.from_assignments(keys)


@dataclass(frozen=True)
class TaggedPath:
    """Piecewise path of the fragment size carrying one uniform tag.

    Between events the log size drifts down at the erosion rate; events
    are multiplicative jumps (or absorption into dust, recorded as -inf).
    ``times`` and ``log_values`` hold the post-event values, starting
    from (0, 0); the path is right-continuous and non-increasing.
    """

    times: tuple[float, ...]
    log_values: tuple[float, ...]
    erosion: float
    horizon: float

    def __post_init__(self) -> None:
        if len(self.times) != len(self.log_values) or not self.times:
            raise ValidationError("times and log_values must align and be nonempty")
        if self.times[0] != 0.0 or self.log_values[0] != 0.0:
            raise ValidationError("tagged path must start at size 1 at time 0")

    def log_chi(self, t: float) -> float:
        """Log size of the tagged fragment at time t."""
        if t < 0.0 or t > self.horizon:
            raise FrontierError(f"time {t} outside the simulated range [0, {self.horizon}]")
        i = bisect_right(self.times, t) - 1
        base = self.log_values[i]
        if base == -math.inf:
            return -math.inf
        return base - self.erosion * (t - self.times[i])

    def chi(self, t: float) -> float:
        return math.exp(self.log_chi(t))

    @property
    def n_events(self) -> int:
        return len(self.times) - 1

    @property
    def absorbed(self) -> bool:
        return self.log_values[-1] == -math.inf


def tagged_path(cfg: SimConfig, horizon: float, stream: RngStream) -> TaggedPath:
    """Simulate the size of the fragment containing a uniform tag.

    The tagged size is a multiplicative jump process: jumps arrive at unit
    rate, each multiplying the size by a size-biased ratio draw; with
    erosion c > 0 the log size additionally drifts at rate -c and the tag
    is absorbed into the eroded dust at hazard c.  A size-biased pick
    landing in the mass deficit of a non-conservative law absorbs the tag
    at the jump time.

    Parameters
    ----------
    cfg : SimConfig
        Supplies law and erosion; index must be 0 (re-time other indices
        through ``time_change``).
    horizon : float
        Path length in time.
    stream : RngStream
        Randomness source.

    Returns
    -------
    TaggedPath
    """
    if cfg.alpha != 0.0:
        raise PreconditionError(
            "tagged paths are simulated at index 0; use time_change for other indices"
        )
    if not (math.isfinite(horizon) and horizon > 0.0):
        raise PreconditionError("tagged path needs a finite horizon > 0")
    c = cfg.erosion
    absorb_at = math.inf
    if c > 0.0:
        absorb_at = stream.exponential() / c
    times = [0.0]
    values = [0.0]
    t = 0.0
    while True:
        t_next = t + stream.exponential()
        if absorb_at <= min(t_next, horizon):
            times.append(absorb_at)
            values.append(-math.inf)
            break
        if t_next > horizon:
            break
        t = t_next
        lr = cfg.law.size_biased_log_ratio(stream)
        if lr == DUST:
            times.append(t)
            values.append(-math.inf)
            break
        log_x = values[-1] - c * (t - times[-1]) + lr
        times.append(t)
        values.append(log_x)
    return TaggedPath(
        times=tuple(times), log_values=tuple(values), erosion=c, horizon=horizon
    )


@dataclass
class IntervalFragmentation:
    """Nested open subintervals of (0, 1) carrying a fragmentation history.

    Nodes are stored flat in creation order; node 0 is the root interval.
    ``child_start`` is -1 for nodes whose split lies beyond the horizon.
    Ranked lengths are read from the exact log-size algebra (sums of log
    ratios), while the geometric endpoints serve tag containment.  Tags
    are fixed uniforms drawn once per history.
    """

    alpha: float
    horizon: float
    law_name: str
    lo: list[float]
    log_size: list[float]
    birth: list[float]
    lifetime: list[float]
    e_draw: list[float]
    parent: list[int]
    child_start: list[int]
    child_count: list[int]
    tags: tuple[float, ...] = ()
    _chains: dict[int, tuple[list[int], float]] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.log_size)

    def death(self, i: int) -> float:
        return self.birth[i] + self.lifetime[i]

    def _check_time(self, t: float) -> None:
        if t < 0.0 or t > self.horizon:
            raise FrontierError(
                f"time {t} outside the guaranteed range [0, {self.horizon}]"
            )

    def alive_nodes(self, t: float) -> list[int]:
        self._check_time(t)
        return [
            i
            for i in range(len(self.log_size))
            if self.birth[i] <= t < self.birth[i] + self.lifetime[i]
        ]

    def state_at(self, t: float) -> MassPartition:
        """Ranked fragment sizes at time t."""
        return sorted_snapshot([self.log_size[i] for i in self.alive_nodes(t)])

    def intervals_at(self, t: float) -> list[tuple[float, float]]:
        """Open intervals alive at time t, sorted by left endpoint."""
        nodes = self.alive_nodes(t)
        out = [(self.lo[i], self.lo[i] + math.exp(self.log_size[i])) for i in nodes]
        out.sort()
        return out

    def _tag_chain(self, j: int) -> tuple[list[int], float]:
        """Descent chain of tag j (node ids root-down) and its dust time."""
        cached = self._chains.get(j)
        if cached is not None:
            return cached
        u = self.tags[j]
        chain = [0]
        node = 0
        dust_time = math.inf
        while self.child_start[node] >= 0:
            found = -1
            for ci in range(
                self.child_start[node], self.child_start[node] + self.child_count[node]
            ):
                if self.lo[ci] <= u < self.lo[ci] + math.exp(self.log_size[ci]):
                    found = ci
                    break
            if found < 0:
                dust_time = self.birth[node] + self.lifetime[node]
                break
            node = found
            chain.append(node)
        self._chains[j] = (chain, dust_time)
        return chain, dust_time

    def partition_at(self, t: float) -> PartitionOfN:
        """Partition of the tags by shared fragment at time t."""
        self._check_time(t)
        if not self.tags:
            raise PreconditionError("history was built without tags")
        keys: list = []
        for j in range(len(self.tags)):
            chain, dust_time = self._tag_chain(j)
            if t >= dust_time:
                keys.append(None)
                continue
            births = [self.birth[i] for i in chain]
            pos = bisect_right(births, t) - 1
            keys.append(chain[pos])
        return PartitionOfN.from_assignments(keys)


def interval_history(
    law: DislocationLaw,
    alpha: float,
    horizon: float,
    stream: RngStream,
    n_tags: int = 0,
    event_budget: int = EVENT_BUDGET,
    population_cap: int = POPULATION_CAP,
) -> IntervalFragmentation:
    """Build an interval fragmentation history up to a time horizon.

    Splits are processed in death order on the index-alpha clock; a node
    whose death falls beyond the horizon is left unsplit, which is exact
    for any state query in [0, horizon].  At alpha = 0 the draw order is
    identical to ``engine.run`` on the same stream, so ranked lengths
    match the event engine bitwise.

    Parameters
    ----------
    law : DislocationLaw
        Dislocation law for the split ratios.
    alpha : float
        Self-similarity index; a fragment of size x splits at rate x**alpha.
    horizon : float
        Guaranteed time range of the history.
    stream : RngStream
        Randomness for lifetimes and ratios; tags use substream(1).
    n_tags : int
        Number of fixed uniform tag points to attach.

    Returns
    -------
    IntervalFragmentation
    """
    if not (math.isfinite(horizon) and horizon >= 0.0):
        raise PreconditionError("interval history needs a finite horizon >= 0")
    if n_tags < 0:
        raise ValidationError("n_tags must be >= 0")

    tag_stream = stream.substream(1)
    tags = tuple(tag_stream.uniform() for _ in range(n_tags))

    root_life = stream.exponential()
    hist = IntervalFragmentation(
        alpha=alpha,
        horizon=horizon,
        law_name=law.name,
        lo=[0.0],
        log_size=[0.0],
        birth=[0.0],
        lifetime=[root_life],
        e_draw=[root_life],
        parent=[-1],
        child_start=[-1],
        child_count=[0],
        tags=tags,
    )
    # Heap entries mirror the event engine: (death, creation order, log size).
    heap: list[tuple[float, int, float]] = [(root_life, 0, 0.0)]
    n_events = 0
    while heap and heap[0][0] <= horizon:
        t_split, node, pls = heappop(heap)
        n_events += 1
        if n_events > event_budget:
            raise BudgetError(f"event budget {event_budget} exhausted at t={t_split:.6g}")
        ratios = law.sample_log_ratios(stream)
        hist.child_start[node] = len(hist.log_size)
        hist.child_count[node] = len(ratios)
        left = hist.lo[node]
        for lr in ratios:
            cls = pls + lr
            e = stream.exponential()
            lifetime = e if alpha == 0.0 else e * math.exp(-alpha * cls)
            idx = len(hist.log_size)
            hist.lo.append(left)
            hist.log_size.append(cls)
            hist.birth.append(t_split)
            hist.lifetime.append(lifetime)
            hist.e_draw.append(e)
            hist.parent.append(node)
            hist.child_start.append(-1)
            hist.child_count.append(0)
            heappush(heap, (t_split + lifetime, idx, cls))
            left += math.exp(cls)
        if len(heap) > population_cap:
            raise BudgetError(f"population cap {population_cap} exceeded at t={t_split:.6g}")
    return hist


def time_change(hist: IntervalFragmentation, alpha: float) -> IntervalFragmentation:
    """Re-time an index-0 interval history to self-similarity index alpha.

    Each node keeps its interval and underlying exponential draw; its
    lifetime becomes size**(-alpha) times the draw and births accumulate
    down the tree, which is the per-interval clock integral since sizes
    are constant between splits.  At alpha = 0 this is the identity on
    every stored real.  The guaranteed horizon of the result is the
    smallest re-timed death among unsplit nodes (infinite if none), since
    beyond it an unsimulated split could intervene.
    """
    if hist.alpha != 0.0:
        raise PreconditionError("time_change expects a history built at index 0")
    n = len(hist.log_size)
    lifetime = [0.0] * n
    birth = [0.0] * n
    for i in range(n):
        e = hist.e_draw[i]
        lifetime[i] = e if alpha == 0.0 else e * math.exp(-alpha * hist.log_size[i])
        p = hist.parent[i]
        birth[i] = 0.0 if p < 0 else birth[p] + lifetime[p]
    guarantee = math.inf
    for i in range(n):
        if hist.child_start[i] < 0:
            guarantee = min(guarantee, birth[i] + lifetime[i])
    return IntervalFragmentation(
        alpha=alpha,
        horizon=guarantee,
        law_name=hist.law_name,
        lo=hist.lo,
        log_size=hist.log_size,
        birth=birth,
        lifetime=lifetime,
        e_draw=hist.e_draw,
        parent=hist.parent,
        child_start=hist.child_start,
        child_count=hist.child_count,
        tags=hist.tags,
    )


def partition_process(
    cfg: SimConfig, n: int, times: list[float], stream: RngStream | None = None
) -> list[PartitionOfN]:
    """Partition-valued snapshots of n tagged points along one history.

    Builds one interval history at the configured law and index, drops n
    uniform tags, and reads off the induced partition at each requested
    time.  Later partitions refine earlier ones because the intervals are
    nested.

    Parameters
    ----------
    cfg : SimConfig
        Law, index, and seed (erosion is not supported here).
    n : int
        Number of tags.
    times : list of float
        Query times, each >= 0.
    stream : RngStream, optional
        Override the cfg-derived stream.

    Returns
    -------
    list of PartitionOfN
    """
    if cfg.erosion != 0.0:
        raise PreconditionError("partition processes are built without erosion")
    if not times or any(t < 0.0 for t in times):
        raise ValidationError("need at least one query time, all >= 0")
    if stream is None:
        stream = RngStream(cfg.seed, 0)
    hist = interval_history(cfg.law, cfg.alpha, max(times), stream, n_tags=n)
    return [hist.partition_at(t) for t in times]


def dump_partition(part: PartitionOfN) -> str:
    """Serialize a partition, one block per line."""
    return "\n".join(part.as_lines()) + "\n"
