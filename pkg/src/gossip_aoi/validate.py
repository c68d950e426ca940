"""Cross-oracle checks: every solver against an independent route to the same answer.

Each check returns a :class:`CheckResult`; the default sizes are the full
acceptance sizes, and ``quick_suite`` runs reduced versions for the CLI.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (
    Topology,
    build_ring_policy,
    line_policy,
    line_topology,
    ring_topology,
    source_policy,
    theta_of_node,
)
from .line_tree import GeomSumSpec, line_age_moments
from .ring import (
    Ring4Channels,
    approx_moments,
    optimal_beta_closed_form,
    optimal_beta_numeric,
    ring4_joint_algorithm2,
)
from .simulator import SimConfig, empirical_joint_pmf, estimate_moments, ks_distance_geometric, run_simulation
from .star import (
    lambda_from_independent_links,
    random_lambda_table,
    star2_box,
    star_joint_box,
)
from .truncated import ring4_truncated_chain, star_truncated_chain


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: value={self.value:.6g} threshold={self.threshold:.6g} ({self.seconds:.2f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def ring4_reference_policies() -> dict[str, Ring4Channels]:
    """The uniform and the source-concentrated four-node policies."""
    return {
        "uniform": Ring4Channels.from_parameters(1.0, 1 / 4),
        "concentrated": Ring4Channels.from_parameters(0.1, 2 / 4),
    }


@_timed
def check_gim1_marginal(samples: int = 1_000_000, lam: float = 0.5, seed: int = 1) -> CheckResult:
    """Single link: simulated age law against Geometric(lam), by KS distance."""
    topo = Topology(2, frozenset({(1, 2)}))
    policy = source_policy(2, 1, {1: lam})
    reps = 10
    cfg = SimConfig(
        topo, policy, sample_slots=samples // reps, replications=reps, seed=seed, tracked_pairs=[(2, 1)]
    )
    s = run_simulation(cfg)
    ks = ks_distance_geometric(s.counts((2, 1)), lam)
    return CheckResult("gim1-geometric-ks", ks < 0.005, ks, 0.005, detail={"samples": s.sample_count})


@_timed
def check_star2_closed_form(tables: int = 20, K: int = 20, seed: int = 2) -> CheckResult:
    """Two-receiver closed form against the recursive algorithm on ``[1, K]^2``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(tables):
        table = random_lambda_table(rng, (1, 2))
        worst = max(worst, float(np.abs(star2_box(table, K).probs - star_joint_box(table, (1, 2), K).probs).max()))
    return CheckResult("star2-closed-form-vs-algorithm1", worst <= 1e-12, worst, 1e-12)


@_timed
def check_algorithm1_oracle(K: int = 60, seed: int = 3) -> CheckResult:
    """Three receivers: recursive joint law against the truncated chain."""
    rng = np.random.default_rng(seed)
    tables = {
        "independent": lambda_from_independent_links({1: 0.5, 2: 0.5, 3: 0.5}),
        "correlated": random_lambda_table(rng, (1, 2, 3), floor=0.1),
    }
    tvs = {}
    for name, table in tables.items():
        exact = star_joint_box(table, (1, 2, 3), K)
        brute = star_truncated_chain(table, (1, 2, 3), K)
        tvs[name] = exact.total_variation(brute)
    worst = max(tvs.values())
    return CheckResult("algorithm1-vs-truncated-chain", worst <= 1e-6, worst, 1e-6, detail=tvs)


@_timed
def check_algorithm2_oracle(K: int = 60) -> CheckResult:
    """Four-node ring: column sweep against the truncated chain for both policies."""
    tvs = {}
    for name, ch in ring4_reference_policies().items():
        tvs[name] = ring4_joint_algorithm2(ch, K).total_variation(ring4_truncated_chain(ch, K))
    worst = max(tvs.values())
    return CheckResult("algorithm2-vs-truncated-chain", worst <= 1e-6, worst, 1e-6, detail=tvs)


@_timed
def check_ring4_simulation(samples: int = 1_000_000, seed: int = 4, threshold: float = 0.01) -> CheckResult:
    """Four-node ring, uniform policy: empirical joint law against the column sweep."""
    policy = build_ring_policy(1.0, 0.25, 2)
    reps = 50
    cfg = SimConfig(
        ring_topology(4),
        policy,
        sample_slots=samples // reps,
        replications=reps,
        seed=seed,
        tracked_pairs=[(2, 1), (3, 1)],
        joint_pairs=[(2, 1), (3, 1)],
    )
    emp = empirical_joint_pmf(run_simulation(cfg), [(2, 1), (3, 1)])
    exact = ring4_joint_algorithm2(Ring4Channels.from_policy(policy), 200)
    tv = emp.total_variation(exact)
    return CheckResult("ring4-simulation-vs-algorithm2", tv < threshold, tv, threshold)


@_timed
def check_line_moments(samples: int = 1_000_000, relay=(0.5, 0.25), seed: int = 5) -> CheckResult:
    """Directed line: simulated age at the end of the line against the geometric-sum moments."""
    n = len(relay) + 1
    reps = 50
    cfg = SimConfig(
        line_topology(n),
        line_policy(n, relay),
        sample_slots=samples // reps,
        replications=reps,
        seed=seed,
        tracked_pairs=[(n, 1)],
    )
    m = estimate_moments(run_simulation(cfg))[(n, 1)]
    exact = line_age_moments(GeomSumSpec(tuple(relay)))
    z_mean = abs(m.mean - exact["mean"]) / m.stderr_of_mean
    z_var = abs(m.variance - exact["variance"]) / m.stderr_of_variance
    worst = max(z_mean, z_var)
    return CheckResult(
        "line-moments-within-3-stderr",
        worst <= 3,
        worst,
        3.0,
        detail={"mean": m.mean, "variance": m.variance, **{f"exact_{k}": v for k, v in exact.items()}},
    )


@_timed
def check_ring_asymptotics(
    M: int = 15, samples: int = 1_000_000, seed: int = 6, burn_in: int = 10_000
) -> CheckResult:
    """Uniform ring: simulated mean and variance at every position against the approximation.

    Per position: mean within 5% of the approximate mean, mean at least the
    approximate mean minus 3 standard errors, and variance at most the
    approximate variance plus 3 standard errors. ``value`` is the number of
    positions failing any of the three.
    """
    beta = 1 / (2 * M)
    reps = 50
    cfg = SimConfig(
        ring_topology(2 * M),
        build_ring_policy(1.0, beta, M),
        burn_in_slots=burn_in,
        sample_slots=samples // reps,
        replications=reps,
        seed=seed,
        tracked_pairs=[(i, 1) for i in range(2, 2 * M + 1)],
    )
    mom = estimate_moments(run_simulation(cfg))
    rows = []
    failures = 0
    for i in range(2, 2 * M + 1):
        th = theta_of_node(i, M)
        a = approx_moments(M, beta, th)
        m = mom[(i, 1)]
        ok_rel = abs(m.mean - a.zhat_mean) <= 0.05 * a.zhat_mean
        ok_lower = m.mean >= a.zhat_mean - 3 * m.stderr_of_mean
        ok_var = m.variance <= a.zhat_variance + 3 * m.stderr_of_variance
        failures += not (ok_rel and ok_lower and ok_var)
        rows.append(
            {
                "theta": str(th),
                "sim_mean": m.mean,
                "se_mean": m.stderr_of_mean,
                "zhat_mean": a.zhat_mean,
                "sim_var": m.variance,
                "se_var": m.stderr_of_variance,
                "zhat_var": a.zhat_variance,
                "ok": ok_rel and ok_lower and ok_var,
            }
        )
    return CheckResult("ring-asymptotics", failures == 0, failures, 0, detail={"rows": rows})


@_timed
def check_optimal_beta(Ms=(10, 25, 50, 100), thetas=(0, Fraction(1, 4), Fraction(1, 2))) -> CheckResult:
    """Numeric optimum of the approximate mean against the large-ring formula."""
    errors = {}
    ok = True
    for th in thetas:
        rel = []
        for M in Ms:
            closed = optimal_beta_closed_form(M, th)
            rel.append(abs(optimal_beta_numeric(M, th) - closed) / closed)
        errors[str(th)] = rel
        ok &= all(b < a for a, b in zip(rel, rel[1:])) and rel[-1] < 0.05
        if th == 0:
            ok &= all(optimal_beta_closed_form(M, 0) == math.sqrt(2) / (2 * M) for M in Ms)
    worst = max(r[-1] for r in errors.values())
    return CheckResult("optimal-beta-convergence", ok, worst, 0.05, detail=errors)


def full_suite() -> list[CheckResult]:
    return [
        check_gim1_marginal(),
        check_star2_closed_form(),
        check_algorithm1_oracle(),
        check_algorithm2_oracle(),
        check_ring4_simulation(),
        check_line_moments(),
        check_ring_asymptotics(),
        check_optimal_beta(),
    ]


def quick_suite(seed: int = 0) -> list[CheckResult]:
    """Reduced sizes; finishes in a few seconds."""
    return [
        check_gim1_marginal(samples=200_000, seed=seed + 1),
        check_star2_closed_form(tables=5, seed=seed + 2),
        check_algorithm1_oracle(K=30, seed=seed + 3),
        check_algorithm2_oracle(K=60),
        check_ring4_simulation(samples=200_000, seed=seed + 4, threshold=0.02),
        check_line_moments(samples=200_000, seed=seed + 5),
        check_optimal_beta(Ms=(10, 25, 50), thetas=(0, Fraction(1, 2))),
    ]
