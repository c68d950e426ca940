"""Ages on directed lines and trees as sums of independent geometric delays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import ChannelModel, PolicyTable, Topology, is_directed_tree, path_between


@dataclass(frozen=True)
class GeomSumSpec:
    """Per-hop success probabilities along a path; one geometric delay per hop."""

    parameters: tuple[float, ...]

    def __post_init__(self) -> None:
        params = tuple(float(p) for p in self.parameters)
        if not params:
            raise ValueError("a path needs at least one hop")
        for p in params:
            if not 0 < p <= 1:
                raise ValueError(f"hop probability {p} outside (0, 1]")
        object.__setattr__(self, "parameters", params)

    @property
    def hops(self) -> int:
        return len(self.parameters)


@dataclass(frozen=True)
class GeomSumPmf:
    """Truncated pmf; ``probs[k]`` is ``P(A = k)`` for ``0 <= k <= k_max``."""

    probs: np.ndarray
    tail_mass: float
    tail_bound: float

    @property
    def k_max(self) -> int:
        return len(self.probs) - 1

    def __call__(self, k: int) -> float:
        return float(self.probs[k]) if 0 <= k <= self.k_max else 0.0

    def mean(self) -> float:
        return float(np.arange(len(self.probs)) @ self.probs)


def line_age_moments(spec: GeomSumSpec) -> dict[str, float]:
    p = np.asarray(spec.parameters)
    return {"mean": float(np.sum(1 / p)), "variance": float(np.sum((1 - p) / p**2))}


def geom_sum_pmf(spec: GeomSumSpec, k_max: int) -> GeomSumPmf:
    """Exact pmf of the sum of the hop delays up to ``k_max`` by repeated convolution.

    ``tail_bound`` uses stochastic dominance by the sum of ``hops`` geometric
    delays with the smallest hop probability, whose tail is a binomial CDF.
    """
    h = spec.hops
    if k_max < h:
        raise ValueError(f"k_max={k_max} is below the minimum age {h}")
    pmf = np.zeros(k_max + 1)
    pmf[0] = 1.0
    ks = np.arange(k_max + 1)
    for p in spec.parameters:
        geom = np.where(ks >= 1, p * (1 - p) ** np.maximum(ks - 1, 0), 0.0)
        pmf = np.convolve(pmf, geom)[: k_max + 1]
    p_min = min(spec.parameters)
    # P(NegBin(h, p_min) > k_max) = P(Binomial(k_max, p_min) < h)
    bound = 0.0 if p_min == 1 else float(stats.binom.cdf(h - 1, k_max, p_min))
    return GeomSumPmf(pmf, tail_mass=max(0.0, 1.0 - float(pmf.sum())), tail_bound=bound)


def tree_path_spec(
    topology: Topology,
    policy: PolicyTable,
    channel: ChannelModel,
    source: int,
    target: int,
) -> GeomSumSpec:
    """Hop probabilities on the unique path from ``source`` to ``target``.

    A hop ``u -> v`` succeeds in a slot when ``u`` broadcasts the source's
    item and the channel delivers it.
    """
    if not is_directed_tree(topology):
        raise ValueError("topology is not a directed tree")
    path = path_between(topology, source, target)
    if len(path) < 2:
        raise ValueError("source and target coincide")
    return GeomSumSpec(
        tuple(policy.prob(u, source) * channel.edge_success((u, v)) for u, v in zip(path, path[1:]))
    )
