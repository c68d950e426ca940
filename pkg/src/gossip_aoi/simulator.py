"""Monte Carlo estimation of stationary ages by iterating the slot recursion.

Replications are independent streams: replication ``r`` draws from
``numpy.random.SeedSequence(seed, spawn_key=(r,))``, i.e. the ``r``-th child
of ``SeedSequence(seed).spawn``. Several replications are advanced together
as one numpy batch, but every replication consumes only its own stream, so
results do not depend on how replications are grouped.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    UNREACHABLE,
    AgeState,
    ChannelModel,
    Dynamics,
    PolicyTable,
    Topology,
    shortest_path_floor,
)
from .joint import JointPmf

log = logging.getLogger(__name__)

Pair = tuple[int, int]

SEED_RULE = "replication r uses numpy SeedSequence(seed, spawn_key=(r,)) with PCG64"


class ResourceLimitError(RuntimeError):
    """Raised when requested histograms would exceed their configured caps."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``sample_slots`` counts recorded slots per replication, so a run records
    ``sample_slots * replications`` values for each tracked pair.
    ``joint_pairs`` lists pairs whose ages are histogrammed jointly.
    """

    topology: Topology
    policy: PolicyTable
    channel: ChannelModel = field(default_factory=ChannelModel.ideal)
    burn_in_slots: int | None = None
    sample_slots: int = 10_000
    seed: int = 0
    replications: int = 1
    tracked_pairs: Sequence[Pair] | str = "all"
    joint_pairs: Sequence[Pair] | None = None
    histogram_cap: int = 10_000
    max_histogram_cells: int = 50_000_000
    max_joint_states: int = 1_000_000
    batch_size: int = 64
    chunk_slots: int = 1024

    def __post_init__(self) -> None:
        if self.sample_slots < 1:
            raise ValueError("sample_slots must be at least 1")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.burn_in_slots is not None and self.burn_in_slots < 0:
            raise ValueError("burn_in_slots must be nonnegative")
        if self.histogram_cap < 1:
            raise ValueError("histogram_cap must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def burn_in(self) -> int:
        if self.burn_in_slots is None:
            return 100 * self.topology.node_count
        return self.burn_in_slots

    def resolved_pairs(self) -> list[Pair]:
        floor = shortest_path_floor(self.topology)
        if isinstance(self.tracked_pairs, str):
            if self.tracked_pairs != "all":
                raise ValueError(f"tracked_pairs must be 'all' or a list, got {self.tracked_pairs!r}")
            pairs = sorted(floor)
        else:
            pairs = [tuple(map(int, p)) for p in self.tracked_pairs]
        for extra in self.joint_pairs or ():
            extra = tuple(map(int, extra))
            if extra not in pairs:
                pairs.append(extra)
        if not pairs:
            raise ValueError("no pairs to track")
        for p in pairs:
            if p not in floor:
                raise ValueError(f"pair {p} is not part of the age state (no path)")
        return pairs


@dataclass
class AgeSamples:
    """Histograms and per-replication partial sums for every tracked pair.

    ``histogram[p, a]`` counts slots in which pair ``p`` had age ``a`` for
    ``1 <= a <= cap``; column ``cap + 1`` collects larger ages.
    """

    pairs: list[Pair]
    histogram: np.ndarray
    rep_count: np.ndarray
    rep_sum: np.ndarray
    rep_sumsq: np.ndarray
    min_age: np.ndarray
    joint_pairs: tuple[Pair, ...] | None = None
    joint: Counter = field(default_factory=Counter)

    @property
    def cap(self) -> int:
        return self.histogram.shape[1] - 2

    @property
    def sample_count(self) -> int:
        return int(self.rep_count[:, 0].sum())

    def index(self, pair: Pair) -> int:
        try:
            return self.pairs.index(tuple(pair))
        except ValueError:
            raise KeyError(f"pair {pair} was not tracked") from None

    def counts(self, pair: Pair) -> np.ndarray:
        """Age counts for ``pair``; entry ``a`` is the count of age ``a``."""
        return self.histogram[self.index(pair), : self.cap + 1]

    def pmf(self, pair: Pair) -> np.ndarray:
        return self.counts(pair) / self.sample_count

    def overflow(self, pair: Pair) -> int:
        return int(self.histogram[self.index(pair), -1])

    def merge(self, other: AgeSamples) -> AgeSamples:
        """Combine two runs over the same pairs (replications are appended)."""
        if self.pairs != other.pairs or self.joint_pairs != other.joint_pairs:
            raise ValueError("cannot merge samples over different pairs")
        if self.cap != other.cap:
            raise ValueError("cannot merge histograms with different caps")
        return AgeSamples(
            pairs=list(self.pairs),
            histogram=self.histogram + other.histogram,
            rep_count=np.vstack([self.rep_count, other.rep_count]),
            rep_sum=np.vstack([self.rep_sum, other.rep_sum]),
            rep_sumsq=np.vstack([self.rep_sumsq, other.rep_sumsq]),
            min_age=np.minimum(self.min_age, other.min_age),
            joint_pairs=self.joint_pairs,
            joint=self.joint + other.joint,
        )


def replication_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r,))))


def run_simulation(config: SimConfig) -> AgeSamples:
    """Simulate ``config.replications`` independent runs and collect age samples.

    When every tracked pair concerns the same source item, only that column
    of the age matrix is simulated; the column recursion consumes the same
    uniforms as the full matrix, so it reproduces the full trajectory of
    that column exactly.
    """
    pairs = config.resolved_pairs()
    P = len(pairs)
    cap = config.histogram_cap
    if P * (cap + 2) > config.max_histogram_cells:
        raise ResourceLimitError(
            f"{P} pairs x {cap + 2} bins exceeds max_histogram_cells={config.max_histogram_cells}"
        )
    dyn = Dynamics(config.topology, config.policy, config.channel)
    sources = {j for _, j in pairs}
    column = len(sources) == 1
    j0 = next(iter(sources)) - 1
    recv_idx = np.array([i - 1 for i, _ in pairs])
    src_idx = np.array([j - 1 for _, j in pairs])
    joint_pairs = tuple(tuple(map(int, p)) for p in config.joint_pairs) if config.joint_pairs else None
    joint_cols = [pairs.index(p) for p in joint_pairs] if joint_pairs else []
    log.debug("simulating %d pairs, column mode=%s", P, column)

    R = config.replications
    samples = AgeSamples(
        pairs=pairs,
        histogram=np.zeros((P, cap + 2), dtype=np.int64),
        rep_count=np.zeros((R, P), dtype=np.int64),
        rep_sum=np.zeros((R, P), dtype=np.int64),
        rep_sumsq=np.zeros((R, P), dtype=np.int64),
        min_age=np.full(P, UNREACHABLE, dtype=np.int64),
        joint_pairs=joint_pairs,
    )
    init = AgeState.initial(config.topology).matrix
    burn, total = config.burn_in, config.burn_in + config.sample_slots
    offsets = np.arange(P) * (cap + 2)

    for start in range(0, R, config.batch_size):
        reps = list(range(start, min(R, start + config.batch_size)))
        B = len(reps)
        rngs = [replication_rng(config.seed, r) for r in reps]
        state = np.repeat(init[None, :, j0] if column else init[None], B, axis=0)
        t = 0
        while t < total:
            n = min(config.chunk_slots, total - t)
            draws = [dyn.draw(g, n) for g in rngs]
            u_items = np.stack([d[0] for d in draws], axis=1)
            u_edges = None if dyn.ideal else np.stack([d[1] for d in draws], axis=1)
            rec_from = max(burn - t, 0)
            buf = np.empty((max(n - rec_from, 0), B, P), dtype=np.int64)
            for s in range(n):
                ue = None if u_edges is None else u_edges[s]
                if column:
                    state = dyn.advance_column(state, j0, u_items[s], ue)
                else:
                    state = dyn.advance_full(state, u_items[s], ue)
                if s >= rec_from:
                    buf[s - rec_from] = state[:, recv_idx] if column else state[:, recv_idx, src_idx]
            t += n
            if buf.shape[0]:
                _record(samples, buf, reps, offsets, cap, joint_cols, config.max_joint_states)
    return samples


def _record(samples, buf, reps, offsets, cap, joint_cols, max_joint_states) -> None:
    rows = np.asarray(reps)
    samples.rep_count[rows] += buf.shape[0]
    samples.rep_sum[rows] += buf.sum(axis=0)
    samples.rep_sumsq[rows] += (buf * buf).sum(axis=0)
    np.minimum(samples.min_age, buf.min(axis=(0, 1)), out=samples.min_age)
    binned = np.minimum(buf, cap + 1) + offsets
    samples.histogram += np.bincount(binned.ravel(), minlength=samples.histogram.size).reshape(
        samples.histogram.shape
    )
    if joint_cols:
        tuples = buf[:, :, joint_cols].reshape(-1, len(joint_cols))
        keys, counts = np.unique(tuples, axis=0, return_counts=True)
        for key, c in zip(map(tuple, keys.tolist()), counts.tolist()):
            samples.joint[key] += c
        if len(samples.joint) > max_joint_states:
            raise ResourceLimitError(
                f"joint histogram exceeds max_joint_states={max_joint_states}"
            )


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    stderr_of_mean: float
    stderr_of_variance: float
    samples: int


def estimate_moments(samples: AgeSamples) -> dict[Pair, Moments]:
    """Pooled mean and variance per pair with batch-means standard errors.

    Standard errors treat each replication as one batch, which respects the
    strong autocorrelation within a run; they are NaN with one replication.
    """
    n = samples.rep_count.sum(axis=0).astype(float)
    if np.any(n < 2):
        raise ValueError("need at least two samples per pair")
    s1 = samples.rep_sum.sum(axis=0).astype(float)
    s2 = samples.rep_sumsq.sum(axis=0).astype(float)
    mean = s1 / n
    var = (s2 - n * mean**2) / (n - 1)
    R = samples.rep_count.shape[0]
    rn = samples.rep_count.astype(float)
    rep_mean = samples.rep_sum / rn
    rep_var = (samples.rep_sumsq - rn * rep_mean**2) / np.maximum(rn - 1, 1)
    if R >= 2:
        se_mean = rep_mean.std(axis=0, ddof=1) / np.sqrt(R)
        se_var = rep_var.std(axis=0, ddof=1) / np.sqrt(R)
    else:
        se_mean = se_var = np.full(len(samples.pairs), np.nan)
    return {
        p: Moments(float(mean[k]), float(var[k]), float(se_mean[k]), float(se_var[k]), int(n[k]))
        for k, p in enumerate(samples.pairs)
    }


def empirical_joint_pmf(samples: AgeSamples, pairs: Sequence[Pair]) -> JointPmf:
    """Normalised joint histogram of the jointly tracked ``pairs``."""
    pairs = tuple(tuple(map(int, p)) for p in pairs)
    if samples.joint_pairs is None or not set(pairs) <= set(samples.joint_pairs):
        raise KeyError(f"pairs {pairs} were not tracked jointly")
    cols = [samples.joint_pairs.index(p) for p in pairs]
    total = sum(samples.joint.values())
    if total == 0:
        raise ValueError("no joint samples recorded")
    counts: Counter = Counter()
    for key, c in samples.joint.items():
        counts[tuple(key[k] for k in cols)] += c
    K = max(max(k) for k in counts)
    arr = np.zeros((K,) * len(cols))
    for key, c in counts.items():
        arr[tuple(a - 1 for a in key)] = c
    arr /= arr.sum()
    return JointPmf(arr, labels=pairs, tail_mass_bound=0.0)


def ks_distance_geometric(counts: np.ndarray, r: float) -> float:
    """Kolmogorov-Smirnov distance between an age histogram and Geometric(r) on {1, 2, ...}."""
    counts = np.asarray(counts, dtype=float)
    ecdf = np.cumsum(counts) / counts.sum()
    ages = np.arange(len(counts))
    cdf = np.where(ages >= 1, 1 - (1 - r) ** ages, 0.0)
    return float(np.max(np.abs(ecdf - cdf)))
