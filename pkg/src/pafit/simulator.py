"""Sequential growth of the random multigraph under impact evolutions.

The graph is represented only through the per-vertex fitness and impact
arrays plus a prefix-summable index over the attachment weights
``w_i = fitness_i * impact_i``; the full adjacency is never stored (an
optional edge log can be switched on for debugging). Each growth step
freezes the current weights, draws the edge increments of the chosen
attachment model against them, applies the increments, and appends the new
vertex with impact 1.

Attachment models:

* :class:`PoissonOutdegree` -- independent Poisson(w_i / sum w) edge counts
  per old vertex, realised as one Poisson(lambda) total split categorically
  (exact by Poisson superposition/thinning; this is the single most
  important performance decision, O(lambda log n) instead of O(n) per step).
* :class:`FixedOutdegree` -- multinomial with exactly lambda edges per step,
  realised as lambda iid categorical draws.
* :class:`CustomKernel` -- arbitrary increment law over the frozen state.

Randomness is organised in four documented channels per replica so that a
value's position in a stream never depends on internal batching:
``SeedSequence(entropy=base_seed, spawn_key=(replica, channel))`` feeding a
PCG64 generator, with channel 0 = fitness inverse-CDF uniforms (one per
vertex), channel 1 = edge-target uniforms (one per categorical draw),
channel 2 = outdegree counts, channel 3 = custom-kernel draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import measures
from .measures import FitnessDistribution, MeasureError

_BLOCK = 8192


class AuditError(RuntimeError):
    """A checkpoint bookkeeping audit failed; the run state is suspect."""


class PrefixSumTree:
    """Fenwick tree over nonnegative float weights; 1-based internally.

    ``find`` inverts the prefix sums in O(log n) by accumulating partial
    sums left to right (no subtraction), which keeps its float semantics
    aligned with a naive linear scan.
    """

    __slots__ = ("size", "_tree", "total")

    def __init__(self, values: Sequence[float] = ()):
        self.size = 0
        self._tree = [0.0]
        self.total = 0.0
        for value in values:
            self.append(value)

    def append(self, value: float) -> None:
        i = self.size + 1
        acc = value
        span = 1
        last = i & (-i)
        tree = self._tree
        while span < last:
            acc += tree[i - span]
            span <<= 1
        tree.append(acc)
        self.size = i
        self.total += value

    def add(self, index: int, delta: float) -> None:
        """Add delta to the 0-based element ``index``."""
        i = index + 1
        n = self.size
        tree = self._tree
        while i <= n:
            tree[i] += delta
            i += i & (-i)
        self.total += delta

    def prefix(self, count: int) -> float:
        """Sum of the first ``count`` elements."""
        acc = 0.0
        i = count
        tree = self._tree
        while i > 0:
            acc += tree[i]
            i -= i & (-i)
        return acc

    def find(self, target: float) -> int:
        """Smallest 0-based index whose prefix sum exceeds ``target``."""
        pos = 0
        acc = 0.0
        n = self.size
        tree = self._tree
        bit = 1 << (n.bit_length() - 1) if n else 0
        while bit:
            nxt = pos + bit
            if nxt <= n:
                cand = acc + tree[nxt]
                if cand <= target:
                    acc = cand
                    pos = nxt
            bit >>= 1
        return pos if pos < n else n - 1


class ReplicaStreams:
    """Per-replica random channels with batch-size-independent draws."""

    __slots__ = (
        "base_seed",
        "replica",
        "_fitness_rng",
        "_edge_rng",
        "_count_rng",
        "kernel_rng",
        "_ubuf",
        "_upos",
        "_cbuf",
        "_cpos",
        "_clam",
    )

    def __init__(self, base_seed: int, replica: int = 0):
        self.base_seed = int(base_seed)
        self.replica = int(replica)

        def generator(channel: int) -> np.random.Generator:
            seq = np.random.SeedSequence(
                entropy=self.base_seed, spawn_key=(self.replica, channel)
            )
            return np.random.Generator(np.random.PCG64(seq))

        self._fitness_rng = generator(0)
        self._edge_rng = generator(1)
        self._count_rng = generator(2)
        self.kernel_rng = generator(3)
        self._ubuf: list[float] = []
        self._upos = 0
        self._cbuf: list[int] = []
        self._cpos = 0
        self._clam: float | None = None

    def next_edge_uniform(self) -> float:
        if self._upos == len(self._ubuf):
            self._ubuf = self._edge_rng.random(_BLOCK).tolist()
            self._upos = 0
        u = self._ubuf[self._upos]
        self._upos += 1
        return u

    def next_outdegree(self, lam: float) -> int:
        if self._clam != lam or self._cpos == len(self._cbuf):
            self._cbuf = self._count_rng.poisson(lam, _BLOCK).tolist()
            self._cpos = 0
            self._clam = lam
        count = self._cbuf[self._cpos]
        self._cpos += 1
        return count

    def fitness_uniforms(self, size: int) -> np.ndarray:
        return self._fitness_rng.random(size)


@dataclass(frozen=True)
class KernelView:
    """Read-only view of the frozen state handed to custom kernels."""

    n: int
    lam: float
    fitness: Sequence[float]
    impact: Sequence[int]
    total_weight: float
    fbar: float
    pick: Callable[[float], int]  # uniform -> weight-proportional vertex index


@dataclass(frozen=True)
class PoissonOutdegree:
    label: str = "poisson"

    def draw_increments(self, state: "GraphState", streams: ReplicaStreams) -> dict[int, int]:
        incs: dict[int, int] = {}
        total = state.tree.total
        find = state.tree.find
        for _ in range(streams.next_outdegree(state.lam)):
            i = find(streams.next_edge_uniform() * total)
            incs[i] = incs.get(i, 0) + 1
        return incs


@dataclass(frozen=True)
class FixedOutdegree:
    label: str = "multinomial"

    def draw_increments(self, state: "GraphState", streams: ReplicaStreams) -> dict[int, int]:
        incs: dict[int, int] = {}
        total = state.tree.total
        find = state.tree.find
        for _ in range(int(state.lam)):
            i = find(streams.next_edge_uniform() * total)
            incs[i] = incs.get(i, 0) + 1
        return incs


@dataclass(frozen=True)
class CustomKernel:
    """User attachment law: draw(view, rng) -> {vertex index: edge count}."""

    draw: Callable[[KernelView, np.random.Generator], Mapping[int, int]]
    label: str = "custom"

    def draw_increments(self, state: "GraphState", streams: ReplicaStreams) -> dict[int, int]:
        raw = self.draw(state.view(), streams.kernel_rng)
        incs: dict[int, int] = {}
        for index, count in raw.items():
            index = int(index)
            if not 0 <= index < state.n:
                raise MeasureError(f"kernel emitted edge to nonexistent vertex {index}")
            count = int(count)
            if count < 0:
                raise MeasureError("kernel emitted a negative edge increment")
            if count:
                incs[index] = incs.get(index, 0) + count
        return incs


AttachmentModel = PoissonOutdegree | FixedOutdegree | CustomKernel


class GraphState:
    """The evolving network; confined to a single worker."""

    __slots__ = (
        "dist",
        "lam",
        "model",
        "streams",
        "fitness",
        "impact",
        "tree",
        "total_impact",
        "edge_count",
        "edge_log",
        "_fitness_queue",
        "_fq_pos",
    )

    def __init__(self, dist, lam, model, streams, *, edge_log: bool = False):
        self.dist = dist
        self.lam = float(lam)
        self.model = model
        self.streams = streams
        self.fitness: list[float] = []
        self.impact: list[int] = []
        self.tree = PrefixSumTree()
        self.total_impact = 0
        self.edge_count = 0
        self.edge_log: list[tuple[int, int, int]] | None = [] if edge_log else None
        self._fitness_queue = np.empty(0)
        self._fq_pos = 0

    @property
    def n(self) -> int:
        return len(self.fitness)

    def reserve_fitness(self, target_n: int) -> None:
        """Pre-draw fitness marks up to vertex ``target_n`` (one uniform each)."""
        need = target_n - self.n - (len(self._fitness_queue) - self._fq_pos)
        if need > 0:
            fresh = measures.quantile(self.dist, self.streams.fitness_uniforms(need))
            pending = self._fitness_queue[self._fq_pos:]
            self._fitness_queue = np.concatenate([pending, np.atleast_1d(fresh)])
            self._fq_pos = 0

    def next_fitness(self) -> float:
        if self._fq_pos == len(self._fitness_queue):
            self.reserve_fitness(self.n + 256)
        value = float(self._fitness_queue[self._fq_pos])
        self._fq_pos += 1
        return value

    def append_vertex(self) -> None:
        f = self.next_fitness()
        self.fitness.append(f)
        self.impact.append(1)
        self.tree.append(f)
        self.total_impact += 1

    def apply_increments(self, incs: Mapping[int, int]) -> None:
        impact = self.impact
        fitness = self.fitness
        tree = self.tree
        source = self.n  # index the new vertex will take
        for i, count in incs.items():
            impact[i] += count
            tree.add(i, fitness[i] * count)
            self.total_impact += count
            self.edge_count += count
            if self.edge_log is not None:
                self.edge_log.append((source, i, count))

    def view(self) -> KernelView:
        tree = self.tree
        return KernelView(
            n=self.n,
            lam=self.lam,
            fitness=self.fitness,
            impact=self.impact,
            total_weight=tree.total,
            fbar=fbar(self),
            pick=lambda u: tree.find(u * tree.total),
        )

    @classmethod
    def from_arrays(cls, fitness, impact, lam, model, *, seed: int = 0, replica: int = 0):
        """Build a frozen synthetic state (used by contract checks and tests)."""
        state = cls(None, lam, model, ReplicaStreams(seed, replica))
        for f, z in zip(fitness, impact):
            if not 0.0 < f <= 1.0:
                raise MeasureError(f"fitness {f} outside (0, 1]")
            if z < 1:
                raise MeasureError("impact must be >= 1")
            state.fitness.append(float(f))
            state.impact.append(int(z))
            state.tree.append(float(f) * int(z))
            state.total_impact += int(z)
        state.edge_count = state.total_impact - state.n
        return state


def new_graph(
    dist: FitnessDistribution,
    lam: float,
    model: AttachmentModel,
    seed: int,
    *,
    replica: int = 0,
    edge_log: bool = False,
) -> GraphState:
    """Single-vertex start: one vertex, impact 1, no edges."""
    measures.require_normalized(dist)
    if lam <= 0.0:
        raise MeasureError("lambda must be positive")
    if isinstance(model, FixedOutdegree) and lam != int(lam):
        raise MeasureError(f"fixed-outdegree model needs integer lambda, got {lam}")
    state = GraphState(dist, lam, model, ReplicaStreams(seed, replica), edge_log=edge_log)
    state.append_vertex()
    return state


def sample_categorical(state: GraphState, u: float) -> int:
    """Vertex index drawn proportionally to w_i; consumes exactly one uniform."""
    if state.tree.total <= 0.0:
        raise MeasureError("total weight must be positive")
    return state.tree.find(u * state.tree.total)


def fbar(state: GraphState) -> float:
    """Normalisation: total weight / (lambda * n)."""
    return state.tree.total / (state.lam * state.n)


def step(state: GraphState) -> GraphState:
    """One growth step: draw increments against the frozen weights, apply,
    then append vertex n+1 with impact 1."""
    incs = state.model.draw_increments(state, state.streams)
    state.apply_increments(incs)
    state.append_vertex()
    return state


def default_schedule(start_n: int, n_target: int) -> list[int]:
    """Geometric checkpoints: powers of two in [start_n, n_target], plus the end."""
    points = {n_target}
    p = 1
    while p <= n_target:
        if p >= start_n:
            points.add(p)
        p *= 2
    return sorted(points)


def _audit(state: GraphState, fbar_track: list[tuple[int, float]]) -> None:
    n = state.n
    if state.total_impact != n + state.edge_count:
        raise AuditError(
            f"impact bookkeeping broken at n={n}: total_impact={state.total_impact}, "
            f"vertices+edges={n + state.edge_count}"
        )
    resum = float(np.dot(np.asarray(state.fitness), np.asarray(state.impact, dtype=float)))
    if abs(state.tree.total - resum) > 1e-9 * max(resum, 1.0):
        raise AuditError(
            f"weight index drifted at n={n}: tree total {state.tree.total} vs re-sum {resum}"
        )
    if isinstance(state.model, FixedOutdegree):
        expected = int(state.lam) * (n - 1)
        if state.edge_count != expected:
            raise AuditError(f"fixed outdegree lost edges: {state.edge_count} != {expected}")
    elif isinstance(state.model, PoissonOutdegree) and n > 1:
        mean = state.lam * (n - 1)
        slack = 6.0 * math.sqrt(mean) + 10.0
        if abs(state.edge_count - mean) > slack:
            raise AuditError(
                f"edge count {state.edge_count} implausible for Poisson total "
                f"(mean {mean:.1f} +- {slack:.1f})"
            )
    fbar_track.append((n, fbar(state)))


def _final_corridor_audit(state: GraphState, fbar_track: list[tuple[int, float]]) -> None:
    """A-priori normalisation corridor, applied to the time average of the
    second half of a long run of a built-in model.

    lambda * fbar averages the edge weights, so it is bounded between the
    mean fitness and 1 + lambda in the limit; the corridor below combines
    that with the direct bounds 1 <= theta* and fbar -> theta*.
    """
    if state.dist is None or isinstance(state.model, CustomKernel) or state.n < 10_000:
        return
    mean_fit = measures.mean_fitness(state.dist)
    lam = state.lam
    lo = min(mean_fit, mean_fit / lam) - 0.05
    hi = max(1.0 + lam, (1.0 + lam) / lam) + 0.05
    half = [value for n, value in fbar_track if n >= state.n // 2]
    avg = sum(half) / len(half)
    if not lo <= avg <= hi:
        raise AuditError(
            f"time-averaged normalisation {avg:.4f} escaped the a-priori corridor "
            f"[{lo:.4f}, {hi:.4f}]"
        )


def run(
    state: GraphState,
    n_target: int,
    schedule: Sequence[int] | None = None,
    *,
    bins: int = 100,
    k_max: int = 10,
    bin_edges: Sequence[float] | None = None,
    observers: Sequence[Callable] = (),
):
    """Advance to ``n_target``, snapshotting at each checkpoint.

    Returns the list of snapshots. Bookkeeping audits run at every
    checkpoint and abort with :class:`AuditError` on failure.
    """
    from . import empirics  # local import: empirics feeds on states, not vice versa

    if n_target < state.n:
        raise MeasureError(f"n_target {n_target} below current size {state.n}")
    checkpoints = sorted(set(schedule)) if schedule is not None else default_schedule(
        state.n, n_target
    )
    if any(cp < state.n or cp > n_target for cp in checkpoints):
        raise MeasureError("schedule entries must lie in [current n, n_target]")
    if n_target not in checkpoints:
        checkpoints.append(n_target)

    state.reserve_fitness(n_target)
    snapshots = []
    fbar_track: list[tuple[int, float]] = []
    fast = isinstance(state.model, (PoissonOutdegree, FixedOutdegree))
    for cp in checkpoints:
        if fast:
            _advance_builtin(state, cp)
        else:
            while state.n < cp:
                step(state)
        _audit(state, fbar_track)
        snap = empirics.snapshot(state, bins=bins, k_max=k_max, bin_edges=bin_edges)
        snapshots.append(snap)
        for observer in observers:
            observer(state, snap)
    _final_corridor_audit(state, fbar_track)
    return snapshots


def _advance_builtin(state: GraphState, n_stop: int) -> None:
    """Hot loop for the built-in models; one uniform per categorical draw."""
    streams = state.streams
    tree = state.tree
    fitness = state.fitness
    impact = state.impact
    poisson = isinstance(state.model, PoissonOutdegree)
    lam = state.lam
    lam_int = int(lam) if not poisson else 0
    log = state.edge_log
    queue = state._fitness_queue
    qpos = state._fq_pos
    tree_find = tree.find
    tree_add = tree.add
    tree_append = tree.append
    next_uniform = streams.next_edge_uniform
    next_count = streams.next_outdegree
    n = state.n
    edges = state.edge_count
    impacts = state.total_impact

    while n < n_stop:
        count = next_count(lam) if poisson else lam_int
        if count == 1:  # common fast case: no increment dict needed
            i = tree_find(next_uniform() * tree.total)
            impact[i] += 1
            tree_add(i, fitness[i])
            if log is not None:
                log.append((n, i, 1))
        elif count:
            incs: dict[int, int] = {}
            for _ in range(count):
                i = tree_find(next_uniform() * tree.total)
                incs[i] = incs.get(i, 0) + 1
            for i, c in incs.items():
                impact[i] += c
                tree_add(i, fitness[i] * c)
                if log is not None:
                    log.append((n, i, c))
        edges += count
        impacts += count + 1
        if qpos == len(queue):
            state._fq_pos = qpos
            state.reserve_fitness(n + 256)
            queue = state._fitness_queue
            qpos = state._fq_pos
        f = float(queue[qpos])
        qpos += 1
        fitness.append(f)
        impact.append(1)
        tree_append(f)
        n += 1

    state._fq_pos = qpos
    state.edge_count = edges
    state.total_impact = impacts
