"""Exact stationary ages for a source broadcasting to a set of receivers.

A :class:`LambdaTable` gives, for every subset ``B`` of receivers, the
probability that exactly ``B`` receives the source's packet in a slot.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .joint import JointPmf


def _subsets(nodes: Sequence) -> Iterable[frozenset]:
    for r in range(len(nodes) + 1):
        for combo in itertools.combinations(nodes, r):
            yield frozenset(combo)


@dataclass(frozen=True)
class LambdaTable:
    nodes: tuple
    mass: Mapping[frozenset, float]

    def __post_init__(self) -> None:
        nodes = tuple(sorted(self.nodes))
        mass = {}
        for B, p in self.mass.items():
            B = frozenset(B)
            if not B <= set(nodes):
                raise ValueError(f"subset {set(B)} not contained in {set(nodes)}")
            if p < 0:
                raise ValueError(f"negative mass {p} for subset {set(B)}")
            mass[B] = mass.get(B, 0.0) + float(p)
        total = sum(mass.values())
        if abs(total - 1) > 1e-12:
            raise ValueError(f"reception masses sum to {total!r}, not 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "mass", mass)

    def __getitem__(self, B: Iterable) -> float:
        return self.mass.get(frozenset(B), 0.0)

    def subsets(self) -> list[frozenset]:
        return list(_subsets(self.nodes))


def lambda_from_independent_links(per_node_success: Mapping) -> LambdaTable:
    """Table for receivers that each succeed independently with their own probability."""
    for k, s in per_node_success.items():
        if not 0 <= s <= 1:
            raise ValueError(f"success probability {s} for node {k} outside [0, 1]")
    nodes = tuple(sorted(per_node_success))
    mass = {}
    for B in _subsets(nodes):
        p = 1.0
        for k in nodes:
            s = per_node_success[k]
            p *= s if k in B else 1 - s
        mass[B] = p
    return LambdaTable(nodes, mass)


def restrict_lambda(table: LambdaTable, D: Iterable) -> LambdaTable:
    """Reception masses seen by the nodes in ``D`` only (receptions outside ``D`` ignored)."""
    D = frozenset(D)
    if not D <= set(table.nodes):
        raise ValueError(f"{set(D)} is not a subset of {set(table.nodes)}")
    mass: dict[frozenset, float] = {B: 0.0 for B in _subsets(sorted(D))}
    for B, p in table.mass.items():
        mass[B & D] += p
    return LambdaTable(tuple(D), mass)


@dataclass(frozen=True)
class GeometricMarginal:
    """Age law ``P(A = i) = r (1 - r)^(i - 1)`` on ``{1, 2, ...}``."""

    parameter: float

    def pmf(self, i: int) -> float:
        if i < 1:
            return 0.0
        return self.parameter * (1 - self.parameter) ** (i - 1)

    def pmf_array(self, K: int) -> np.ndarray:
        """``P(A = i)`` for ``i = 1..K``."""
        return self.parameter * (1 - self.parameter) ** np.arange(K)

    def tail(self, K: int) -> float:
        """``P(A > K)``."""
        return (1 - self.parameter) ** K

    @property
    def mean(self) -> float:
        return 1 / self.parameter

    @property
    def variance(self) -> float:
        return (1 - self.parameter) / self.parameter**2


def marginal_geometric(table: LambdaTable, k) -> GeometricMarginal:
    """Stationary age of receiver ``k``: a GI/M/1-type chain with geometric law."""
    if k not in table.nodes:
        raise KeyError(f"node {k} not in table")
    r = restrict_lambda(table, [k])[{k}]
    if r <= 0:
        raise ValueError(f"node {k} never receives; no stationary distribution")
    return GeometricMarginal(r)


def _pair(table: LambdaTable):
    if len(table.nodes) != 2:
        raise ValueError("expected a table over exactly two receivers")
    a, b = table.nodes
    return table[()], table[{a}], table[{b}], table[{a, b}]


def star2_joint_closed_form(table: LambdaTable, i: int, j: int) -> float:
    """``P(A_1 = i, A_2 = j)`` for two receivers, ``A_1`` being the smaller label."""
    if i < 1 or j < 1:
        raise ValueError(f"ages must be at least 1, got ({i}, {j})")
    l0, l1, l2, l12 = _pair(table)
    c1 = 1 - (l2 + l12)
    c2 = 1 - (l1 + l12)
    if i == j:
        return l0 ** (i - 1) * l12
    if i > j:
        return l0 ** (j - 1) * l2 * c2 ** (i - j - 1) * (1 - c2)
    return l0 ** (i - 1) * l1 * c1 ** (j - i - 1) * (1 - c1)


def star2_covariance(table: LambdaTable) -> float:
    l0, l1, l2, l12 = _pair(table)
    if l0 >= 1:
        raise ValueError("no reception ever happens; ages are not stationary")
    r1, r2 = l1 + l12, l2 + l12
    if r1 <= 0 or r2 <= 0:
        raise ValueError("a receiver never receives; ages are not stationary")
    return (l0 * l12 - l1 * l2) / (r1 * r2 * (1 - l0))


def product_form_holds(table: LambdaTable, tol: float = 1e-12) -> bool:
    """True when the two receivers' reception events are independent."""
    _, l1, l2, l12 = _pair(table)
    return abs((l1 + l12) * (l2 + l12) - l12) <= tol


class _Algorithm1:
    """Recursive joint pmf; the memo lives and dies with one instance."""

    def __init__(self, table: LambdaTable):
        self.table = table
        self._restricted: dict[frozenset, LambdaTable] = {}
        self.joint = lru_cache(maxsize=None)(self._joint)

    def lam(self, B: frozenset, D: frozenset) -> float:
        if D not in self._restricted:
            self._restricted[D] = restrict_lambda(self.table, D)
        return self._restricted[D][B]

    def _joint(self, state: tuple[tuple[object, int], ...]) -> float:
        # state: (node, age) pairs sorted by node label
        D = frozenset(node for node, _ in state)
        low = min(a for _, a in state)
        if max(a for _, a in state) == 1:
            return self.lam(D, D)
        if low > 1:
            shifted = tuple((node, a - low + 1) for node, a in state)
            return self.lam(frozenset(), D) ** (low - 1) * self.joint(shifted)
        received = frozenset(node for node, a in state if a == 1)
        rest = tuple((node, a - 1) for node, a in state if a > 1)
        return self.lam(received, D) * self.joint(rest)


def star_joint_algorithm1(table: LambdaTable, D: Sequence, ages: Sequence[int]) -> float:
    """``P(A_k = ages[n] for the n-th node k of D)`` by the recursive marginal peel.

    With all ages equal to 1 the answer is the chance that all of ``D``
    receives. If every age exceeds 1, the state is walked back along the
    diagonal, each step costing a slot in which nobody in ``D`` received.
    Otherwise the nodes at age 1 received in the last slot while the others
    did not, and the rest reduces to the joint law of the others one slot
    earlier.
    """
    D = list(D)
    if not D:
        raise ValueError("D must be non-empty")
    if len(D) != len(ages):
        raise ValueError("need one age per node of D")
    if len(set(D)) != len(D) or not set(D) <= set(table.nodes):
        raise ValueError(f"D={D} must be distinct nodes of the table")
    if any(a < 1 for a in ages):
        raise ValueError(f"ages must be at least 1, got {tuple(ages)}")
    state = tuple(sorted(zip(D, (int(a) for a in ages)), key=lambda t: t[0]))
    return _Algorithm1(table).joint(state)


def star_joint_box(table: LambdaTable, D: Sequence, K: int) -> JointPmf:
    """Recursive joint pmf of the nodes in ``D`` on the box ``[1, K]^|D|``.

    The tail bound is the union bound ``sum_k P(A_k > K)``.
    """
    D = list(D)
    if K < 1:
        raise ValueError("K must be at least 1")
    solver = _Algorithm1(table)
    order = sorted(range(len(D)), key=lambda n: D[n])
    probs = np.zeros((K,) * len(D))
    for idx in itertools.product(range(K), repeat=len(D)):
        state = tuple((D[n], idx[n] + 1) for n in order)
        probs[idx] = solver.joint(state)
    tail = min(1.0, sum(marginal_geometric(table, k).tail(K) for k in D))
    return JointPmf(probs, labels=tuple(D), tail_mass_bound=tail)


def star2_box(table: LambdaTable, K: int) -> JointPmf:
    """Closed-form joint pmf for two receivers on ``[1, K]^2``."""
    probs = np.array(
        [[star2_joint_closed_form(table, i, j) for j in range(1, K + 1)] for i in range(1, K + 1)]
    )
    tail = min(1.0, sum(marginal_geometric(table, k).tail(K) for k in table.nodes))
    return JointPmf(probs, labels=table.nodes, tail_mass_bound=tail)


def random_lambda_table(rng: np.random.Generator, nodes: Sequence, floor: float = 0.0) -> LambdaTable:
    """Dirichlet-distributed reception masses, each subset given at least ``floor``."""
    subsets = list(_subsets(sorted(nodes)))
    w = rng.dirichlet(np.ones(len(subsets)))
    w = floor + (1 - floor * len(subsets)) * w
    w /= w.sum()
    mass = dict(zip(subsets, w.tolist()))
    # absorb rounding so the masses sum to 1 to machine precision
    mass[subsets[0]] += 1 - math.fsum(mass.values())
    return LambdaTable(tuple(nodes), mass)
