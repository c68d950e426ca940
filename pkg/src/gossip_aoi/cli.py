"""Command-line experiment runner writing CSV tables and a run manifest.

Usage::

    gossip-aoi simulate --nodes 30 --beta 1/30 --slots 1000000 --seed 42 --out runs/ring30
    gossip-aoi --config experiment.cfg --seed 7

Exit codes: 0 success, 1 usage or parameter error, 2 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .config import COMMANDS, KEYS, ConfigError, ExperimentSpec, coerce, read_config
from .core import (
    ChannelModel,
    Topology,
    build_ring_policy,
    line_policy,
    line_topology,
    relative_theta,
    ring_topology,
    shortest_path_floor,
    source_policy,
    star_topology,
    tree_topology,
)
from .ring import Ring4Channels, approx_moments, optimal_beta_closed_form, optimal_beta_search, ring4_joint_algorithm2
from .simulator import SEED_RULE, SimConfig, estimate_moments, run_simulation
from .star import (
    lambda_from_independent_links,
    marginal_geometric,
    restrict_lambda,
    star2_covariance,
    star_joint_box,
)
from .validate import full_suite, quick_suite

log = logging.getLogger("gossip_aoi")


def fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, str)):
        return str(x)
    return format(float(x), ".12g")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _jsonable(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


# ---------------------------------------------------------------------------
# Commands; each returns (extra manifest entries, exit status)


def _simulation_setup(p: dict):
    n, src = p["nodes"], p["source"]
    channel = ChannelModel.ideal() if p["link_success"] == 1 else ChannelModel.lossy(default=p["link_success"])
    kind = p["topology"]
    if kind == "ring":
        topo, policy = ring_topology(n), build_ring_policy(p["alpha"], p["beta"], n // 2)
    elif kind == "line":
        topo, policy = line_topology(n), line_policy(n, p["relay"])
    elif kind == "star":
        topo = star_topology(n - 1)
        policy = source_policy(n, 1, {1: p.get("broadcast", 1.0)})
    elif kind == "tree":
        topo = tree_topology(p["parents"])
        if topo.node_count != n:
            raise ConfigError(f"parents: describe {topo.node_count} nodes but nodes={n}")
        policy = source_policy(n, src, {k: p.get("broadcast", 1.0) for k in range(1, n + 1)})
    else:
        if n != 2:
            raise ConfigError("nodes: a pair topology has exactly 2 nodes")
        topo = Topology(2, frozenset({(1, 2)}))
        policy = source_policy(2, 1, {1: p.get("broadcast", 1.0)})
    return topo, policy, channel


def cmd_simulate(spec: ExperimentSpec) -> tuple[dict, int]:
    p = spec.params
    topo, policy, channel = _simulation_setup(p)
    src = p["source"]
    reps = p["replications"]
    per_rep = -(-p["slots"] // reps)
    floor = shortest_path_floor(topo)
    pairs = [(i, src) for i in range(1, topo.node_count + 1) if (i, src) in floor]
    if not pairs:
        raise ConfigError("source: no node can hear this source")
    cfg = SimConfig(
        topo,
        policy,
        channel,
        burn_in_slots=p.get("burn_in"),
        sample_slots=per_rep,
        seed=p["seed"],
        replications=reps,
        tracked_pairs=pairs,
    )
    samples = run_simulation(cfg)
    moments = estimate_moments(samples)
    rows = []
    for (i, _), m in moments.items():
        if p["topology"] == "ring":
            th = relative_theta(src, i, topo.node_count // 2)
            num, den = th.numerator, th.denominator
        else:
            num = den = None
        rows.append((i, num, den, m.mean, m.variance, m.stderr_of_mean))
    write_csv(spec.out / "moments.csv", ["node", "theta_num", "theta_den", "mean", "variance", "stderr"], rows)
    outputs = ["moments.csv"]
    if "pmf_node" in p:
        counts = samples.counts((p["pmf_node"], src))
        total = samples.sample_count
        write_csv(
            spec.out / "pmf.csv",
            ["age", "prob"],
            ((a, c / total) for a, c in enumerate(counts) if c),
        )
        outputs.append("pmf.csv")
    extra = {
        "outputs": outputs,
        "burn_in_per_replication": cfg.burn_in,
        "slots_per_replication": per_rep,
        "samples_per_pair": samples.sample_count,
    }
    return extra, 0


def cmd_exact_star(spec: ExperimentSpec) -> tuple[dict, int]:
    p = spec.params
    table = lambda_from_independent_links({k + 1: s for k, s in enumerate(p["success"])})
    receivers = p.get("receivers", list(table.nodes))
    K = p["K"]
    extra: dict = {}
    if len(receivers) == 1:
        g = marginal_geometric(table, receivers[0])
        write_csv(spec.out / "pmf.csv", ["age", "prob"], ((a, g.pmf(a)) for a in range(1, K + 1)))
        extra["outputs"] = ["pmf.csv"]
        extra["tail_mass_bound"] = g.tail(K)
    else:
        joint = star_joint_box(table, receivers, K)
        write_csv(spec.out / "joint.csv", ["i", "j", "prob"], ((a, b, v) for (a, b), v in joint.items()))
        extra["outputs"] = ["joint.csv"]
        extra["tail_mass_bound"] = joint.tail_mass_bound
        extra["covariance"] = star2_covariance(restrict_lambda(table, receivers))
    return extra, 0


def cmd_exact_ring4(spec: ExperimentSpec) -> tuple[dict, int]:
    p = spec.params
    ch = Ring4Channels.from_parameters(p["alpha"], p["beta"])
    joint = ring4_joint_algorithm2(ch, p["K"])
    write_csv(spec.out / "joint.csv", ["i", "j", "prob"], ((a, b, v) for (a, b), v in joint.items()))
    extra = {
        "outputs": ["joint.csv"],
        "channels": [ch.ch1, ch.ch2, ch.ch3],
        "stored_mass": joint.total,
        "tail_mass_bound": joint.tail_mass_bound,
    }
    return extra, 0


def cmd_approx_ring(spec: ExperimentSpec) -> tuple[dict, int]:
    p = spec.params
    if p.get("alpha", 1) != 1:
        raise ConfigError("alpha: the Gaussian approximation needs alpha = 1")
    if "nodes" in p:
        Ms = [p["nodes"] // 2]
        if p["nodes"] % 2:
            raise ConfigError("nodes: a ring needs an even count")
    elif "M" in p:
        Ms = p["M"]
    else:
        raise ConfigError("nodes: required for approx-ring (or give M)")
    moments_rows, approx_rows = [], []
    for M in Ms:
        for d in range(-M + 1, M):
            th = Fraction(d, M)
            a = approx_moments(M, p["beta"], th)
            node = d + M + 1
            moments_rows.append((node, th.numerator, th.denominator, a.zhat_mean, a.zhat_variance, None))
            approx_rows.append(
                (M, node, th.numerator, th.denominator, a.mu_plus, a.mu_minus, a.sigma_plus,
                 a.sigma_minus, a.zhat_mean, a.zhat_second_moment, a.zhat_second_moment_exact,
                 a.zhat_variance, a.zhat_printed_variance)
            )  # fmt: skip
    write_csv(
        spec.out / "moments.csv", ["node", "theta_num", "theta_den", "mean", "variance", "stderr"], moments_rows
    )
    write_csv(
        spec.out / "approx.csv",
        ["M", "node", "theta_num", "theta_den", "mu_plus", "mu_minus", "sigma_plus", "sigma_minus",
         "zhat_mean", "zhat_second_moment_closed_form", "zhat_second_moment_exact", "zhat_variance",
         "zhat_variance_closed_form"],
        approx_rows,
    )  # fmt: skip
    return {"outputs": ["moments.csv", "approx.csv"]}, 0


def cmd_optimal_beta(spec: ExperimentSpec) -> tuple[dict, int]:
    p = spec.params
    rows, methods = [], {}
    for M in p["M"]:
        for th in p["theta"]:
            res = optimal_beta_search(M, th)
            rows.append((M, th.numerator, th.denominator, res.beta, optimal_beta_closed_form(M, th)))
            methods[f"M={M},theta={th}"] = res.method
    write_csv(spec.out / "betas.csv", ["M", "theta_num", "theta_den", "beta_numeric", "beta_closed_form"], rows)
    return {"outputs": ["betas.csv"], "search_method": methods}, 0


def cmd_validate(spec: ExperimentSpec) -> tuple[dict, int]:
    results = full_suite() if spec.params["suite"] == "full" else quick_suite(spec.params["seed"])
    for r in results:
        print(r.line())
    write_csv(
        spec.out / "validate.csv",
        ["check", "passed", "value", "threshold"],
        ((r.name, "true" if r.passed else "false", r.value, r.threshold) for r in results),
    )
    failed = [r.name for r in results if not r.passed]
    return {"outputs": ["validate.csv"], "failed": failed}, (2 if failed else 0)


DISPATCH = {
    "simulate": cmd_simulate,
    "exact-star": cmd_exact_star,
    "exact-ring4": cmd_exact_ring4,
    "approx-ring": cmd_approx_ring,
    "optimal-beta": cmd_optimal_beta,
    "validate": cmd_validate,
}


def run(spec: ExperimentSpec) -> int:
    """Execute ``spec``, writing CSV outputs and ``manifest.json`` into ``spec.out``."""
    try:
        spec.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"out: cannot create output directory {spec.out} ({exc.strerror})") from None
    extra, status = DISPATCH[spec.command](spec)
    manifest = {
        "tool": "gossip_aoi",
        "version": __version__,
        "command": spec.command,
        "seed": spec.seed,
        "seed_rule": SEED_RULE,
        "params": _jsonable(spec.params),
        **_jsonable(extra),
    }
    (spec.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return status


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit with status 1
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gossip-aoi", description="Age-of-information experiments for gossip networks.")
    parser.add_argument("cmd", nargs="?", choices=COMMANDS, help="command (or set command= in the config)")
    parser.add_argument("--config", help="key = value experiment file")
    parser.add_argument("-v", "--verbose", action="store_true")
    for key, (_, help_text) in KEYS.items():
        flag = "--" + key.replace("_", "-")
        names = [flag] if flag == "--" + key else [flag, "--" + key]
        parser.add_argument(*names, dest=f"opt_{key}", default=None, help=help_text)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        raw = read_config(args.config) if args.config else {}
        if args.cmd:
            raw["command"] = args.cmd
        for key in KEYS:
            v = getattr(args, f"opt_{key}")
            if v is not None:
                raw[key] = v
        spec = coerce(raw)
        return run(spec)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: out: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
