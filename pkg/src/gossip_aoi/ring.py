"""Ring networks: the exact four-node solver and the large-ring Gaussian approximation.

Ages are those of node 1's information. In the four-node ring both
neighbours of the source always hold the same age, written ``A24``; the
opposite node's age is ``A3`` with ``A24 <= A3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import PolicyTable, build_ring_policy, node_of_theta
from .joint import JointPmf
from .star import LambdaTable, lambda_from_independent_links

SQRT2PI = math.sqrt(2 * math.pi)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2))


def norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / SQRT2PI


# ---------------------------------------------------------------------------
# Four-node ring


@dataclass(frozen=True)
class Ring4Channels:
    """Source broadcast (``ch1``) and the two relays toward node 3 (``ch2``, ``ch3``)."""

    ch1: float
    ch2: float
    ch3: float

    def __post_init__(self) -> None:
        for name in ("ch1", "ch2", "ch3"):
            p = getattr(self, name)
            if not 0 < p <= 1:
                raise ValueError(f"{name}={p} outside (0, 1]")

    @classmethod
    def from_policy(cls, policy: PolicyTable) -> Ring4Channels:
        if policy.ring is None or policy.ring.M != 2:
            raise ValueError("expected a ring policy on four nodes")
        q = policy.ring.q
        return cls(q(Fraction(-1)), q(Fraction(-1, 2)), q(Fraction(1, 2)))

    @classmethod
    def from_parameters(cls, alpha: float, beta: float) -> Ring4Channels:
        return cls.from_policy(build_ring_policy(alpha, beta, 2))


def ring4_lambda(channels: Ring4Channels) -> LambdaTable:
    """Masses ``lambda_B`` over channel subsets ``B`` of ``{1, 2, 3}``."""
    return lambda_from_independent_links({1: channels.ch1, 2: channels.ch2, 3: channels.ch3})


def ring4_joint_algorithm2(channels: Ring4Channels, K: int) -> JointPmf:
    """Exact ``P(A24 = i, A3 = j)`` for ``i, j <= K``, sweeping column by column.

    Column ``j`` only needs column ``j - 1`` and the geometric law of ``A24``
    (parameter ``ch1``). The tail bound uses the fact that a source broadcast
    followed by a relay in the next slot caps ``A3``; disjoint slot pairs
    give ``(1 - ch1 * rho)^floor(K / 2)`` with ``rho`` the relay probability.
    """
    if K < 3:
        raise ValueError(f"K must be at least 3, got {K}")
    lam = ring4_lambda(channels)
    l0, l1 = lam[()], lam[{1}]
    fresh_relay = lam[{1, 2}] + lam[{1, 3}] + lam[{1, 2, 3}]
    stale_relay = lam[{2}] + lam[{3}] + lam[{2, 3}]
    beta = channels.ch1
    geo = beta * (1 - beta) ** np.arange(K)  # geo[i - 1] = P(A24 = i)

    pi = np.zeros((K, K))  # pi[i - 1, j - 1]
    pi[0, 1] = fresh_relay * geo[0]
    pi[1, 1] = stale_relay * geo[0]
    for j in range(3, K + 1):
        prev = pi[: j - 1, j - 2]
        pi[0, j - 1] = l1 * prev.sum() + fresh_relay * geo[j - 2]
        pi[1 : j - 1, j - 1] = l0 * pi[0 : j - 2, j - 2]
        pi[j - 1, j - 1] = stale_relay * geo[j - 2] + l0 * pi[j - 2, j - 2]
    rho = 1 - (1 - channels.ch2) * (1 - channels.ch3)
    tail = (1 - beta * rho) ** (K // 2)
    return JointPmf(pi, labels=("A24", "A3"), tail_mass_bound=tail)


# ---------------------------------------------------------------------------
# Directed ages


def directed_age_moments(policy: PolicyTable, theta, direction: int = +1) -> dict[str, float]:
    """Mean and variance of the directed age at ``theta`` about node 1.

    ``direction=+1`` follows information clockwise (increasing node labels);
    ``-1`` anticlockwise. Each hop ``u -> v`` is a geometric delay whose
    parameter is the chance that ``u`` broadcasts node 1's item.
    """
    if policy.ring is None:
        raise ValueError("expected a ring policy")
    M = policy.ring.M
    i = node_of_theta(Fraction(theta), M)
    if direction == +1:
        senders = list(range(1, i))
    elif direction == -1:
        senders = [1] + list(range(2 * M, i, -1)) if i != 1 else []
    else:
        raise ValueError("direction must be +1 or -1")
    q = np.array([policy.prob(u, 1) for u in senders])
    if np.any(q <= 0):
        raise ValueError("a relay on the path never forwards the source's item")
    return {"mean": float(np.sum(1 / q)), "variance": float(np.sum((1 - q) / q**2))}


def directed_age_moments_by_angle(policy: PolicyTable, theta, direction: int = +1) -> dict:
    """The same moments written as a sum over relay angles ``q(d / M)``.

    Uses the symmetry ``q(theta) = q(-theta)``: anticlockwise moments at
    ``theta`` equal clockwise moments at ``-theta``.
    """
    ring = policy.ring
    if ring is None:
        raise ValueError("expected a ring policy")
    theta = Fraction(theta) if direction == +1 else -Fraction(theta)
    M = ring.M
    last = theta * M - 1
    if last.denominator != 1:
        raise ValueError(f"theta {theta} is not on the grid for M={M}")
    q = np.array([ring.q(Fraction(d, M)) for d in range(-M, int(last) + 1)])
    return {"mean": float(np.sum(1 / q)), "variance": float(np.sum((1 - q) / q**2))}


# ---------------------------------------------------------------------------
# Gaussian approximation (alpha = 1)


@dataclass(frozen=True)
class ApproxMoments:
    """Moments of the Gaussian approximation at one ring position.

    ``zhat_second_moment`` follows the closed-form expression with a
    ``-1/beta`` leading term and a ``mu_bar * delta`` density term. That
    expression leaves out the geometric term's own second moment and its
    cross term, so ``zhat_second_moment_exact`` and ``zhat_variance`` are
    computed from the exact moments of the approximating variable instead.
    ``printed_discrepancy`` is their difference.
    """

    M: int
    beta: float
    theta: float
    C: float
    mu_plus: float
    mu_minus: float
    sigma_plus: float
    sigma_minus: float
    mu_bar: float
    delta: float
    omega_plus: float
    omega_minus: float
    min_mean: float
    min_second_moment: float
    zhat_mean: float
    zhat_second_moment: float
    zhat_second_moment_exact: float
    zhat_variance: float
    zhat_printed_variance: float
    degenerate: bool

    @property
    def printed_discrepancy(self) -> float:
        return self.zhat_second_moment - self.zhat_second_moment_exact


def _check_theta(M: int, theta) -> float:
    t = float(theta)
    if not -1 < t < 1:
        raise ValueError(f"theta={theta} must lie strictly between -1 and 1 (the source)")
    if (1 - abs(t)) * M < 1 - 1e-12:
        raise ValueError(f"theta={theta} lies between the source and its neighbour")
    return t


def _relay_hops(M: int, t: float, sign: int) -> float:
    hops = (1 + sign * t) * M - 1
    nearest = round(hops)
    return float(nearest) if abs(hops - nearest) < 1e-9 else max(hops, 0.0)


def approx_moments(M: int, beta: float, theta, alpha: float = 1.0) -> ApproxMoments:
    """All moments of ``Zhat = G + min(N+, N-)`` at ring position ``theta``.

    ``G`` is the geometric age of the source's neighbours and ``N+``, ``N-``
    are independent normals matched to the clockwise and anticlockwise
    relay delays beyond them. A branch without relay hops (a neighbour of
    the source) contributes exactly zero, so the minimum is zero there.
    """
    if alpha != 1:
        raise ValueError("the Gaussian approximation is only available for alpha = 1")
    if M < 1 or int(M) != M:
        raise ValueError(f"M must be a positive integer, got {M}")
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    M = int(M)
    t = _check_theta(M, theta)
    C = (1 - beta) / (2 * M - 1)
    mu_p = _relay_hops(M, t, +1) / C
    mu_m = _relay_hops(M, t, -1) / C
    sig_p = math.sqrt(mu_p * (1 / C - 1))
    sig_m = math.sqrt(mu_m * (1 / C - 1))
    mu_bar = mu_p - mu_m
    delta = math.hypot(sig_p, sig_m)
    om_p = mu_p**2 + sig_p**2
    om_m = mu_m**2 + sig_m**2
    degenerate = mu_p == 0 or mu_m == 0
    if degenerate:
        m1 = m2 = 0.0
    else:
        z = mu_bar / delta
        Pp, Pm, dens = norm_cdf(-z), norm_cdf(z), norm_pdf(z)
        m1 = mu_p * Pp + mu_m * Pm - delta * dens
        m2 = om_p * Pp + om_m * Pm - (mu_p + mu_m) * delta * dens
    if delta > 0:
        z = mu_bar / delta
        printed = -1 / beta + om_p * norm_cdf(-z) + om_m * norm_cdf(z) - mu_bar * delta * norm_pdf(-z)
    else:
        printed = -1 / beta + om_p
    mean = 1 / beta + m1
    second_exact = (2 - beta) / beta**2 + 2 * m1 / beta + m2
    variance = (1 - beta) / beta**2 + (m2 - m1 * m1)
    return ApproxMoments(
        M=M, beta=beta, theta=t, C=C,
        mu_plus=mu_p, mu_minus=mu_m, sigma_plus=sig_p, sigma_minus=sig_m,
        mu_bar=mu_bar, delta=delta, omega_plus=om_p, omega_minus=om_m,
        min_mean=m1, min_second_moment=m2,
        zhat_mean=mean, zhat_second_moment=printed, zhat_second_moment_exact=second_exact,
        zhat_variance=variance, zhat_printed_variance=printed - mean * mean,
        degenerate=degenerate,
    )  # fmt: skip


def zhat_mean(M: int, beta: float, theta) -> float:
    return approx_moments(M, beta, theta).zhat_mean


def zhat_second_moment(M: int, beta: float, theta) -> float:
    """Closed-form second moment exactly as the expression reads (see :class:`ApproxMoments`)."""
    return approx_moments(M, beta, theta).zhat_second_moment


def zhat_variance(M: int, beta: float, theta, printed: bool = False) -> float:
    """Variance of the approximation; ``printed=True`` derives it from :func:`zhat_second_moment`."""
    m = approx_moments(M, beta, theta)
    return m.zhat_printed_variance if printed else m.zhat_variance


def zhat_monte_carlo(
    M: int, beta: float, theta, n: int, rng: np.random.Generator
) -> dict[str, float]:
    """Sample ``G + min(N+, N-)`` directly; an oracle independent of the normal-minimum formulas."""
    m = approx_moments(M, beta, theta)
    g = rng.geometric(beta, size=n).astype(float)
    if m.degenerate:
        mins = np.zeros(n)
    else:
        mins = np.minimum(
            rng.normal(m.mu_plus, m.sigma_plus, size=n), rng.normal(m.mu_minus, m.sigma_minus, size=n)
        )
    z = g + mins
    return {
        "mean": float(z.mean()),
        "second_moment": float(np.mean(z * z)),
        "variance": float(z.var(ddof=1)),
        "stderr_of_mean": float(z.std(ddof=1) / math.sqrt(n)),
    }


# ---------------------------------------------------------------------------
# Optimal own-transmission probability

INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class OptimalBeta:
    beta: float
    value: float
    method: str
    unimodal: bool


def golden_section(f, lo: float, hi: float, tol: float = 1e-6) -> float:
    """Minimiser of a unimodal ``f`` on ``[lo, hi]`` to absolute tolerance ``tol``."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimal_beta_search(M: int, theta, tol: float = 1e-6, scan_points: int = 400) -> OptimalBeta:
    """Minimise the approximate mean age over ``beta`` in ``(0, 1)``.

    A log-spaced scan checks unimodality and brackets the minimum before
    golden-section refinement. A non-unimodal scan falls back to a dense
    grid around the best scan point.
    """
    if M < 2:
        raise ValueError(f"M must be at least 2, got {M}")
    _check_theta(M, theta)

    def f(b: float) -> float:
        return zhat_mean(M, b, theta)

    grid = np.geomspace(1e-6, 1 - 1e-6, scan_points)
    vals = np.array([f(b) for b in grid])
    k = int(np.argmin(vals))
    steps = np.sign(np.diff(vals))
    unimodal = bool(np.all(steps[:k] <= 0) and np.all(steps[k:] >= 0))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if unimodal:
        beta = golden_section(f, lo, hi, tol)
        method = "golden-section"
    else:
        dense = np.arange(lo, hi + tol, tol)
        dense_vals = np.array([f(b) for b in dense])
        beta = float(dense[int(np.argmin(dense_vals))])
        method = "dense-grid"
    return OptimalBeta(beta, f(beta), method, unimodal)


def optimal_beta_numeric(M: int, theta, tol: float = 1e-6) -> float:
    return optimal_beta_search(M, theta, tol).beta


def optimal_beta_closed_form(M: int, theta) -> float:
    """Large-ring optimum ``sqrt(2 / (1 - |theta|)) / (2M)``."""
    t = float(theta)
    if abs(t) >= 1:
        raise ValueError(f"|theta| must be below 1, got {theta}")
    return math.sqrt(2 / (1 - abs(t))) / (2 * M)


def ring_theta_grid(M: int) -> list[Fraction]:
    """Positions of the non-source nodes: ``(-M + 1) / M, ..., (M - 1) / M``."""
    return [Fraction(d, M) for d in range(-M + 1, M)]


def relay_to_own_ratio(M: int, beta: float) -> float:
    """Own-item probability over the per-item relay probability ``C`` (alpha = 1)."""
    return beta / ((1 - beta) / (2 * M - 1))

