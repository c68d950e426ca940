"""Topologies, Bernoulli policies, channels and the single-slot age recursion.

Nodes are labelled ``1..N`` throughout the public API. Internally ages are
held in an ``(N, N)`` integer matrix indexed from zero, where entry
``[i, j]`` is the age of the information node ``i + 1`` holds about node
``j + 1``. Pairs with no path from ``j`` to ``i`` carry the sentinel
:data:`UNREACHABLE` and are never reported.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping

import numpy as np

UNREACHABLE = np.iinfo(np.int64).max // 4
"""Sentinel age for pairs that can never receive information."""


class TopologyKind(enum.Enum):
    LINE = "line"
    TREE = "tree"
    RING = "ring"
    STAR = "star"
    GENERAL = "general"


@dataclass(frozen=True)
class Topology:
    """Directed communication graph.

    ``edges`` holds ordered pairs ``(k, i)`` meaning a broadcast by ``k`` can
    be received by ``i``.
    """

    node_count: int
    edges: frozenset[tuple[int, int]]
    kind: TopologyKind = TopologyKind.GENERAL

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise ValueError(f"node_count must be positive, got {self.node_count}")
        object.__setattr__(self, "edges", frozenset((int(k), int(i)) for k, i in self.edges))
        for k, i in self.edges:
            if k == i:
                raise ValueError(f"self-loop at node {k}")
            if not (1 <= k <= self.node_count and 1 <= i <= self.node_count):
                raise ValueError(f"edge ({k}, {i}) outside nodes 1..{self.node_count}")
        if self.kind is TopologyKind.RING and self.node_count % 2:
            raise ValueError(f"ring needs an even node count, got {self.node_count}")

    @property
    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def in_neighbours(self, i: int) -> list[int]:
        return sorted(k for k, dst in self.edges if dst == i)

    def out_neighbours(self, k: int) -> list[int]:
        return sorted(i for src, i in self.edges if src == k)


def line_topology(n: int) -> Topology:
    """Directed line ``1 -> 2 -> ... -> n``."""
    return Topology(n, frozenset((k, k + 1) for k in range(1, n)), TopologyKind.LINE)


def ring_topology(n: int) -> Topology:
    """Ring of ``n`` nodes where each node reaches both neighbours."""
    edges = set()
    for k in range(1, n + 1):
        edges.add((k, k % n + 1))
        edges.add((k % n + 1, k))
    return Topology(n, frozenset(edges), TopologyKind.RING)


def star_topology(receivers: int) -> Topology:
    """Hub node 1 broadcasting to leaves ``2..receivers + 1``."""
    return Topology(
        receivers + 1, frozenset((1, leaf) for leaf in range(2, receivers + 2)), TopologyKind.STAR
    )


def tree_topology(parent: Mapping[int, int]) -> Topology:
    """Directed tree from a ``child -> parent`` map; edges point away from the root."""
    nodes = set(parent) | set(parent.values())
    n = max(nodes)
    if nodes != set(range(1, n + 1)):
        raise ValueError("tree nodes must be labelled 1..N without gaps")
    topo = Topology(n, frozenset((p, c) for c, p in parent.items()), TopologyKind.TREE)
    if not is_directed_tree(topo):
        raise ValueError("parent map does not describe a tree")
    return topo


def is_directed_tree(topology: Topology) -> bool:
    """True when every node has in-degree <= 1, exactly one root, and no cycles."""
    indeg = [0] * (topology.node_count + 1)
    for _, i in topology.edges:
        indeg[i] += 1
    if any(d > 1 for d in indeg[1:]):
        return False
    roots = [i for i in range(1, topology.node_count + 1) if indeg[i] == 0]
    if len(roots) != 1:
        return False
    dist = _bfs_from(topology, roots[0])
    return len(dist) == topology.node_count


def _bfs_from(topology: Topology, source: int) -> dict[int, int]:
    adj: dict[int, list[int]] = {}
    for k, i in topology.edges:
        adj.setdefault(k, []).append(i)
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def shortest_path_floor(topology: Topology) -> dict[tuple[int, int], int]:
    """Graph distance from ``j`` to ``i`` keyed by ``(i, j)`` for ``i != j``.

    Unreachable pairs are absent. This is the smallest value ``A[i, j]`` can
    ever take.
    """
    floor = {}
    for j in range(1, topology.node_count + 1):
        for i, d in _bfs_from(topology, j).items():
            if i != j:
                floor[(i, j)] = d
    return floor


def path_between(topology: Topology, source: int, target: int) -> list[int]:
    """Nodes on a shortest directed path ``source -> ... -> target`` (BFS order)."""
    adj: dict[int, list[int]] = {}
    for k, i in topology.edges:
        adj.setdefault(k, []).append(i)
    prev = {source: source}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in sorted(adj.get(u, ())):
            if v not in prev:
                prev[v] = u
                queue.append(v)
    if target not in prev:
        raise ValueError(f"node {target} is unreachable from node {source}")
    path = [target]
    while path[-1] != source:
        path.append(prev[path[-1]])
    return path[::-1]


# ---------------------------------------------------------------------------
# Policies


def theta_of_node(i: int, M: int) -> Fraction:
    """Ring coordinate of node ``i`` in a ring of ``2M`` nodes with source node 1."""
    if M < 1:
        raise ValueError(f"M must be positive, got {M}")
    if not 1 <= i <= 2 * M:
        raise ValueError(f"node index {i} outside 1..{2 * M}")
    return Fraction(i - 1 - M, M)


def node_of_theta(theta: Fraction, M: int) -> int:
    theta = Fraction(theta)
    i = theta * M + M + 1
    if i.denominator != 1 or not 1 <= i <= 2 * M:
        raise ValueError(f"theta {theta} is not on the grid for M={M}")
    return int(i)


def relative_theta(i: int, j: int, M: int) -> Fraction:
    """Angle of node ``j`` as seen from node ``i`` (``-1`` means ``j == i``)."""
    return Fraction((j - i) % (2 * M) - M, M)


@dataclass(frozen=True)
class RingParameters:
    alpha: float
    beta: float
    M: int
    C: float

    def q(self, theta: Fraction) -> float:
        """Probability that a node broadcasts the item at relative angle ``theta``."""
        theta = Fraction(theta)
        if theta == -1:
            return self.beta
        if not -1 < theta < 1:
            raise ValueError(f"theta {theta} outside (-1, 1)")
        exponent = self.M * (1 - abs(theta))
        return self.C * self.alpha ** float(exponent)

    def grid(self) -> list[Fraction]:
        return [Fraction(d, self.M) for d in range(-self.M, self.M)]

    def table(self) -> dict[Fraction, float]:
        return {t: self.q(t) for t in self.grid()}


def ring_constant(alpha: float, beta: float, M: int) -> float:
    """Normaliser ``C`` of the ring policy.

    Equals ``(1 - beta) / (2M - 1)`` at ``alpha = 1`` and
    ``(1 - beta)(1 - alpha) / (2 alpha - alpha^M (alpha + 1))`` otherwise. The
    geometric sum is evaluated term by term because the closed form cancels
    catastrophically as ``alpha`` approaches 1.
    """
    if alpha == 1:
        return (1 - beta) / (2 * M - 1)
    profile = math.fsum([alpha**M] + [2 * alpha**k for k in range(1, M)])
    return (1 - beta) / profile


@dataclass(frozen=True)
class PolicyTable:
    """Per-node probability distribution over which item to broadcast.

    ``weights[i - 1, j - 1]`` is the probability that node ``i`` broadcasts
    what it knows about node ``j`` in a slot.
    """

    weights: np.ndarray
    ring: RingParameters | None = None
    relay: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got shape {w.shape}")
        if np.any(w < 0):
            raise ValueError("negative broadcast probability")
        sums = w.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1) > 1e-12)
        if bad.size:
            raise ValueError(f"node {bad[0] + 1} distribution sums to {sums[bad[0]]!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def node_count(self) -> int:
        return self.weights.shape[0]

    def prob(self, i: int, j: int) -> float:
        return float(self.weights[i - 1, j - 1])

    def distribution(self, i: int) -> dict[int, float]:
        return {j + 1: float(p) for j, p in enumerate(self.weights[i - 1]) if p > 0}


def build_ring_policy(alpha: float, beta: float, M: int) -> PolicyTable:
    """Ring policy with geometric decay ``alpha`` and own-item mass ``beta``."""
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M}")
    M = int(M)
    params = RingParameters(alpha, beta, M, ring_constant(alpha, beta, M))
    n = 2 * M
    w = np.empty((n, n))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            w[i - 1, j - 1] = params.q(relative_theta(i, j, M))
    return PolicyTable(w, ring=params)


def line_policy(n: int, relay: tuple[float, ...] | list[float]) -> PolicyTable:
    """Line policy: node ``k`` broadcasts the item of node ``k - d`` w.p. ``relay[d]``.

    Mass that falls off the left end of the finite line, or that ``relay``
    leaves unassigned, goes to the item of the last node ``n``, which no
    upstream node ever hears about, so it never changes an age.
    """
    relay = tuple(float(p) for p in relay)
    if not relay or any(p < 0 for p in relay) or sum(relay) > 1 + 1e-12:
        raise ValueError(f"relay probabilities must be nonnegative and sum to <= 1: {relay}")
    w = np.zeros((n, n))
    for k in range(1, n + 1):
        for d, p in enumerate(relay):
            if k - d >= 1:
                w[k - 1, k - d - 1] += p
        w[k - 1, n - 1] += 1 - w[k - 1].sum()
    return PolicyTable(w, relay=relay)


def source_policy(n: int, source: int, probs: Mapping[int, float]) -> PolicyTable:
    """Each node ``k`` broadcasts the source's item with probability ``probs[k]``.

    The remaining mass goes to the node's own item (or, for the source, to
    the first other node's item).
    """
    w = np.zeros((n, n))
    for k in range(1, n + 1):
        p = float(probs.get(k, 0.0))
        if not 0 <= p <= 1:
            raise ValueError(f"probability for node {k} outside [0, 1]: {p}")
        w[k - 1, source - 1] += p
        other = k if k != source else (source % n) + 1
        w[k - 1, other - 1] += 1 - p
    return PolicyTable(w)


def uniform_policy(n: int) -> PolicyTable:
    return PolicyTable(np.full((n, n), 1.0 / n))


# ---------------------------------------------------------------------------
# Channels


class ChannelKind(enum.Enum):
    IDEAL = "ideal"
    INDEPENDENT_LOSS = "independent_loss"


@dataclass(frozen=True)
class ChannelModel:
    """Memoryless channel; each edge succeeds independently with ``success[edge]``."""

    kind: ChannelKind = ChannelKind.IDEAL
    success: Mapping[tuple[int, int], float] = field(default_factory=dict)
    default: float = 1.0

    def __post_init__(self) -> None:
        for edge, p in self.success.items():
            if not 0 < p <= 1:
                raise ValueError(f"edge {edge} success probability {p} outside (0, 1]")
        if not 0 < self.default <= 1:
            raise ValueError(f"default success probability {self.default} outside (0, 1]")
        if self.kind is ChannelKind.IDEAL and (
            self.default != 1 or any(p != 1 for p in self.success.values())
        ):
            raise ValueError("an ideal channel has all success probabilities equal to 1")

    @classmethod
    def ideal(cls) -> ChannelModel:
        return cls()

    @classmethod
    def lossy(cls, success: Mapping[tuple[int, int], float] | None = None, default: float = 1.0):
        return cls(ChannelKind.INDEPENDENT_LOSS, dict(success or {}), default)

    def edge_success(self, edge: tuple[int, int]) -> float:
        if self.kind is ChannelKind.IDEAL:
            return 1.0
        return float(self.success.get(edge, self.default))


# ---------------------------------------------------------------------------
# State and dynamics


@dataclass(frozen=True)
class SlotOutcome:
    transmissions: dict[int, int]
    receptions: frozenset[tuple[int, int]]


@dataclass(frozen=True)
class AgeState:
    """Ages at slot ``slot``; unreachable pairs hold :data:`UNREACHABLE`."""

    matrix: np.ndarray
    slot: int = 0

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=np.int64)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def initial(cls, topology: Topology) -> AgeState:
        """The minimal attainable state: every age at its shortest-path floor."""
        n = topology.node_count
        m = np.full((n, n), UNREACHABLE, dtype=np.int64)
        np.fill_diagonal(m, 0)
        for (i, j), d in shortest_path_floor(topology).items():
            m[i - 1, j - 1] = d
        return cls(m, 0)

    @classmethod
    def from_ages(cls, topology: Topology, ages: Mapping[tuple[int, int], int], slot: int = 0):
        state = cls.initial(topology)
        m = state.matrix.copy()
        floor = shortest_path_floor(topology)
        for (i, j), a in ages.items():
            if (i, j) not in floor:
                raise ValueError(f"pair ({i}, {j}) has no path and cannot carry an age")
            if a < floor[(i, j)]:
                raise ValueError(f"age {a} for ({i}, {j}) below the path floor {floor[(i, j)]}")
            m[i - 1, j - 1] = a
        return cls(m, slot)

    def __getitem__(self, pair: tuple[int, int]) -> int:
        i, j = pair
        if i == j:
            raise KeyError(pair)
        v = int(self.matrix[i - 1, j - 1])
        if v >= UNREACHABLE:
            raise KeyError(pair)
        return v

    def pairs(self) -> Iterator[tuple[int, int]]:
        n = self.matrix.shape[0]
        for i in range(n):
            for j in range(n):
                if i != j and self.matrix[i, j] < UNREACHABLE:
                    yield (i + 1, j + 1)

    def as_dict(self) -> dict[tuple[int, int], int]:
        return {p: self[p] for p in self.pairs()}


class Dynamics:
    """Precomputed arrays for applying the age recursion to batches of states.

    The same uniforms drive both the full-matrix update and the single-column
    update, so a column simulated alone follows exactly the trajectory it
    would have inside the full matrix.
    """

    def __init__(self, topology: Topology, policy: PolicyTable, channel: ChannelModel):
        if policy.node_count != topology.node_count:
            raise ValueError(
                f"policy covers {policy.node_count} nodes, topology has {topology.node_count}"
            )
        self.topology = topology
        self.n = topology.node_count
        self.edges = topology.sorted_edges
        self.edge_index = {e: k for k, e in enumerate(self.edges)}
        self.cum = np.cumsum(policy.weights, axis=1)
        self.cum[:, -1] = 1.0
        self.lower = np.hstack([np.zeros((self.n, 1)), self.cum[:, :-1]])
        self.edge_success = np.array([channel.edge_success(e) for e in self.edges])
        self.ideal = bool(np.all(self.edge_success == 1.0))
        # in-neighbour table padded with a dummy edge slot that never succeeds
        max_in = max((len(topology.in_neighbours(i)) for i in range(1, self.n + 1)), default=0)
        self.max_in = max_in
        self.nbr = np.zeros((self.n, max(max_in, 1)), dtype=np.int64)
        self.nbr_edge = np.full((self.n, max(max_in, 1)), len(self.edges), dtype=np.int64)
        for i in range(1, self.n + 1):
            for d, k in enumerate(topology.in_neighbours(i)):
                self.nbr[i - 1, d] = k - 1
                self.nbr_edge[i - 1, d] = self.edge_index[(k, i)]

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def items(self, u_items: np.ndarray) -> np.ndarray:
        """Broadcast item (0-based) per node from uniforms of shape ``(..., N)``."""
        idx = (u_items[..., None] >= self.cum).sum(axis=-1)
        return np.minimum(idx, self.n - 1)

    def successes(self, u_edges: np.ndarray | None, batch: int) -> np.ndarray:
        """Boolean ``(batch, E + 1)``; the trailing column is the dummy edge."""
        if self.ideal or u_edges is None:
            ok = np.ones((batch, self.edge_count + 1), dtype=bool)
        else:
            ok = np.empty((batch, self.edge_count + 1), dtype=bool)
            ok[:, :-1] = u_edges < self.edge_success
        ok[:, -1] = False
        return ok

    def advance_full(self, ages: np.ndarray, u_items: np.ndarray, u_edges) -> np.ndarray:
        """One slot for a batch of full age matrices of shape ``(R, N, N)``."""
        R, n = ages.shape[0], self.n
        items = self.items(u_items)
        ok = self.successes(u_edges, R)
        new = ages.copy()
        rows = np.arange(R)[:, None]
        cols = np.arange(n)[None, :]
        for d in range(self.nbr.shape[1]):
            k = self.nbr[:, d]
            item_k = items[:, k]
            heard = ok[:, self.nbr_edge[:, d]]
            offered = ages[rows, k[None, :], item_k]
            offered = np.where(heard, offered, UNREACHABLE)
            cur = new[rows, cols, item_k]
            new[rows, cols, item_k] = np.minimum(cur, offered)
        new += 1
        np.minimum(new, UNREACHABLE, out=new)
        diag = np.arange(n)
        new[:, diag, diag] = 0
        return new

    def advance_column(self, col: np.ndarray, j: int, u_items: np.ndarray, u_edges) -> np.ndarray:
        """One slot for a batch of age columns ``(R, N)`` about 0-based source ``j``."""
        R = col.shape[0]
        sends = (u_items >= self.lower[:, j]) & (u_items < self.cum[:, j])
        ok = self.successes(u_edges, R)
        heard = ok[:, self.nbr_edge] & sends[:, self.nbr]
        offered = np.where(heard, col[:, self.nbr], UNREACHABLE)
        new = np.minimum(col, offered.min(axis=2)) + 1
        np.minimum(new, UNREACHABLE, out=new)
        new[:, j] = 0
        return new

    def draw(self, rng: np.random.Generator, slots: int) -> tuple[np.ndarray, np.ndarray | None]:
        """Uniforms for ``slots`` consecutive slots of one replication."""
        u_items = rng.random((slots, self.n))
        u_edges = None if self.ideal else rng.random((slots, self.edge_count))
        return u_items, u_edges


def step(
    state: AgeState,
    topology: Topology,
    policy: PolicyTable,
    channel: ChannelModel,
    rng: np.random.Generator,
) -> tuple[AgeState, SlotOutcome]:
    """Advance the age process by one slot.

    Every node picks one item from its policy distribution; each edge then
    delivers independently according to the channel. Node ``i`` keeps the
    freshest of its own copy and every copy it received, and all ages
    grow by one.
    """
    dyn = Dynamics(topology, policy, channel)
    u_items, u_edges = dyn.draw(rng, 1)
    new = dyn.advance_full(state.matrix[None], u_items, u_edges)[0]
    items = dyn.items(u_items)[0]
    ok = dyn.successes(u_edges, 1)[0]
    outcome = SlotOutcome(
        transmissions={k + 1: int(items[k]) + 1 for k in range(dyn.n)},
        receptions=frozenset(e for e, s in zip(dyn.edges, ok[:-1]) if s),
    )
    return AgeState(new, state.slot + 1), outcome


def apply_outcome(state: AgeState, outcome: SlotOutcome) -> AgeState:
    """Deterministic part of :func:`step` for a given slot outcome (pure Python)."""
    old = state.matrix
    new = old.copy()
    for k, i in outcome.receptions:
        j = outcome.transmissions[k]
        if j == i:
            continue
        new[i - 1, j - 1] = min(new[i - 1, j - 1], old[k - 1, j - 1])
    new = np.minimum(new + 1, UNREACHABLE)
    np.fill_diagonal(new, 0)
    return AgeState(new, state.slot + 1)
