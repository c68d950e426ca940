"""Truncated joint probability mass functions over age tuples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


@dataclass
class JointPmf:
    """Joint pmf stored densely on the box ``[1, K]^d``.

    ``probs[a_1 - 1, ..., a_d - 1]`` is the probability of the age tuple
    ``(a_1, ..., a_d)``. ``tail_mass_bound`` bounds the mass outside the box.
    """

    probs: np.ndarray
    labels: Sequence = ()
    tail_mass_bound: float = 0.0

    @property
    def K(self) -> int:
        return self.probs.shape[0]

    @property
    def dim(self) -> int:
        return self.probs.ndim

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    @property
    def missing_mass(self) -> float:
        return max(0.0, 1.0 - self.total)

    def __getitem__(self, ages: Sequence[int]) -> float:
        ages = tuple(ages)
        if any(a < 1 for a in ages):
            return 0.0
        if any(a > s for a, s in zip(ages, self.probs.shape)):
            return 0.0
        return float(self.probs[tuple(a - 1 for a in ages)])

    def items(self) -> Iterator[tuple[tuple[int, ...], float]]:
        """Nonzero entries as ``(ages, prob)`` in lexicographic order."""
        for idx in zip(*np.nonzero(self.probs)):
            yield tuple(int(i) + 1 for i in idx), float(self.probs[idx])

    def marginal(self, axis: int) -> np.ndarray:
        other = tuple(k for k in range(self.dim) if k != axis)
        return self.probs.sum(axis=other) if other else self.probs.copy()

    def padded(self, shape: Sequence[int]) -> np.ndarray:
        out = np.zeros(tuple(shape))
        out[tuple(slice(0, s) for s in self.probs.shape)] = self.probs
        return out

    def total_variation(self, other: JointPmf) -> float:
        """Half the L1 distance; mass outside the boxes enters only through its total."""
        if self.dim != other.dim:
            raise ValueError("pmfs have different dimensions")
        shape = [max(a, b) for a, b in zip(self.probs.shape, other.probs.shape)]
        diff = np.abs(self.padded(shape) - other.padded(shape)).sum()
        diff += abs(self.missing_mass - other.missing_mass)
        return 0.5 * float(diff)
