"""Brute-force stationary solves of age chains truncated to a finite box.

Each chain is built directly from the slot dynamics (who received what),
never from the balance equations, so it serves as an independent check of
the recursive solvers. Ages are capped at ``K``: an increment that would
leave the box stays at ``K``.
"""

from __future__ import annotations

import itertools

import numpy as np
import scipy.sparse as sp

from .joint import JointPmf
from .ring import Ring4Channels, ring4_lambda
from .star import LambdaTable


def stationary_power_iteration(
    P: sp.spmatrix, tol: float = 1e-14, max_iter: int = 100_000, x0: np.ndarray | None = None
) -> np.ndarray:
    """Stationary vector of a row-stochastic sparse matrix by power iteration.

    Iterates ``x <- x P`` until the L1 change falls below ``tol``.
    """
    n = P.shape[0]
    PT = sp.csr_matrix(P.T)
    x = np.full(n, 1.0 / n) if x0 is None else np.asarray(x0, dtype=float) / np.sum(x0)
    for _ in range(max_iter):
        nxt = PT @ x
        nxt /= nxt.sum()
        if np.abs(nxt - x).sum() < tol:
            return nxt
        x = nxt
    raise RuntimeError(f"power iteration did not converge in {max_iter} iterations")


def star_truncated_chain(table: LambdaTable, D, K: int, tol: float = 1e-14) -> JointPmf:
    """Stationary joint law of the receivers in ``D`` on the capped box ``[1, K]^|D|``."""
    D = list(D)
    d = len(D)
    grids = np.indices((K,) * d).reshape(d, -1).T + 1  # every age tuple
    index = np.ravel_multi_index((grids - 1).T, (K,) * d)
    rows, cols, vals = [], [], []
    for B, p in table.mass.items():
        if p == 0:
            continue
        got = np.array([k in B for k in D])
        nxt = np.where(got, 1, np.minimum(grids + 1, K))
        rows.append(index)
        cols.append(np.ravel_multi_index((nxt - 1).T, (K,) * d))
        vals.append(np.full(len(index), p))
    P = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(K**d, K**d)
    ).tocsr()
    pi = stationary_power_iteration(P, tol)
    return JointPmf(pi.reshape((K,) * d), labels=tuple(D))


def ring4_truncated_chain(channels: Ring4Channels, K: int, tol: float = 1e-14) -> JointPmf:
    """Stationary law of ``(A24, A3)`` for the four-node ring, capped at ``K``.

    In a slot the source broadcast (channel 1) resets ``A24`` to 1; a relay
    on channel 2 or 3 hands node 3 the neighbours' current age.
    """
    lam = ring4_lambda(channels)
    a, b = (g.ravel() + 1 for g in np.indices((K, K)))
    index = (a - 1) * K + (b - 1)
    rows, cols, vals = [], [], []
    for B in itertools.chain.from_iterable(
        itertools.combinations((1, 2, 3), r) for r in range(4)
    ):
        p = lam[B]
        if p == 0:
            continue
        B = set(B)
        new_a = np.ones_like(a) if 1 in B else np.minimum(a + 1, K)
        relayed = np.minimum(b, a) if B & {2, 3} else b
        new_b = np.minimum(relayed + 1, K)
        rows.append(index)
        cols.append((new_a - 1) * K + (new_b - 1))
        vals.append(np.full(len(index), p))
    P = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(K * K, K * K)
    ).tocsr()
    pi = stationary_power_iteration(P, tol)
    return JointPmf(pi.reshape(K, K), labels=("A24", "A3"))
