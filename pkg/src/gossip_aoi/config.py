"""Flat ``key = value`` experiment files.

One pair per line, ``#`` starts a comment. Command-line flags override file
values. Values stay strings here; :func:`coerce` converts and range-checks
them per command before anything runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

COMMANDS = ("simulate", "exact-star", "exact-ring4", "approx-ring", "optimal-beta", "validate")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


def _int(v: str) -> int:
    return int(v)


def _float(v: str) -> float:
    return float(Fraction(v.strip()))


def _floats(v: str) -> list[float]:
    return [_float(x) for x in v.split(",") if x.strip()]


def _ints(v: str) -> list[int]:
    return [int(x) for x in v.split(",") if x.strip()]


def _fractions(v: str) -> list[Fraction]:
    return [Fraction(x.strip()) for x in v.split(",") if x.strip()]


def _parents(v: str) -> dict[int, int]:
    out = {}
    for item in v.split(","):
        if item.strip():
            child, parent = item.split(":")
            out[int(child)] = int(parent)
    return out


def _str(v: str) -> str:
    return v.strip()


# key -> (converter, help)
KEYS: dict[str, tuple] = {
    "command": (_str, "one of " + ", ".join(COMMANDS)),
    "out": (_str, "output directory"),
    "seed": (_int, "64-bit seed"),
    "topology": (_str, "simulate: ring, line, star, tree or pair"),
    "nodes": (_int, "number of nodes (ring: 2M)"),
    "alpha": (_float, "ring decay in (0, 1]"),
    "beta": (_float, "ring own-item probability in (0, 1)"),
    "relay": (_floats, "line relay distribution p_0,p_1,..."),
    "parents": (_parents, "tree edges child:parent,..."),
    "broadcast": (_float, "tree/star/pair: probability a node forwards the source item"),
    "link_success": (_float, "per-edge channel success probability"),
    "success": (_floats, "exact-star: per-receiver success probabilities"),
    "receivers": (_ints, "exact-star: receivers whose joint law is written (1 or 2)"),
    "slots": (_int, "simulate: recorded slots summed over replications"),
    "burn_in": (_int, "simulate: burn-in slots per replication"),
    "replications": (_int, "simulate: independent replications"),
    "source": (_int, "simulate: source node"),
    "pmf_node": (_int, "simulate: write the age pmf of this node"),
    "K": (_int, "truncation box size"),
    "M": (_ints, "optimal-beta/approx-ring: half ring sizes"),
    "theta": (_fractions, "optimal-beta: ring positions"),
    "suite": (_str, "validate: quick or full"),
}

REQUIRED = {
    "simulate": ("nodes",),
    "exact-star": ("success",),
    "exact-ring4": ("beta",),
    "approx-ring": ("beta",),
    "optimal-beta": ("M", "theta"),
    "validate": (),
}

DEFAULTS = {
    "seed": "0",
    "out": "results",
    "topology": "ring",
    "alpha": "1",
    "slots": "1000000",
    "replications": "50",
    "source": "1",
    "K": "100",
    "link_success": "1",
    "suite": "quick",
}


@dataclass
class ExperimentSpec:
    command: str
    params: dict = field(default_factory=dict)
    out: Path = Path("results")

    @property
    def seed(self) -> int:
        return self.params["seed"]


def read_config(path: str | Path) -> dict[str, str]:
    """Raw key/value strings from a config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: file not found: {path}")
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    for n, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"config line {n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"config: duplicate key {key!r} on lines {lines[key]} and {n}")
        values[key] = value
        lines[key] = n
    return values


def coerce(raw: dict[str, str]) -> ExperimentSpec:
    """Convert raw strings into a validated :class:`ExperimentSpec`."""
    if "command" not in raw:
        raise ConfigError("command: missing required key")
    command = raw["command"].strip()
    if command not in COMMANDS:
        raise ConfigError(f"command: unknown command {command!r}")
    for key in REQUIRED[command]:
        if key not in raw:
            raise ConfigError(f"{key}: required for command {command!r}")
    merged = {**DEFAULTS, **raw}
    params = {}
    for key, value in merged.items():
        if key not in KEYS:
            raise ConfigError(f"{key}: unknown key")
        try:
            params[key] = KEYS[key][0](value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} ({exc})") from None
    _check_ranges(command, params)
    return ExperimentSpec(command, params, Path(params["out"]))


def _check_ranges(command: str, p: dict) -> None:
    def need(key: str, ok: bool, what: str) -> None:
        if key in p and not ok:
            raise ConfigError(f"{key}: {what}, got {p[key]!r}")

    need("seed", 0 <= p["seed"] < 2**64, "must be a 64-bit unsigned integer")
    need("alpha", 0 < p.get("alpha", 1) <= 1, "must lie in (0, 1]")
    need("beta", 0 < p.get("beta", 0.5) < 1, "must lie in (0, 1)")
    need("nodes", p.get("nodes", 2) >= 2, "must be at least 2")
    need("slots", p.get("slots", 1) >= 1, "must be positive")
    need("replications", p.get("replications", 1) >= 1, "must be positive")
    need("burn_in", p.get("burn_in", 0) >= 0, "must be nonnegative")
    need("K", p.get("K", 3) >= 3, "must be at least 3")
    need("link_success", 0 < p.get("link_success", 1) <= 1, "must lie in (0, 1]")
    need("broadcast", 0 < p.get("broadcast", 1) <= 1, "must lie in (0, 1]")
    need("success", all(0 <= s <= 1 for s in p.get("success", [])), "entries must lie in [0, 1]")
    need("M", all(m >= 2 for m in p.get("M", [2])), "entries must be at least 2")
    need("theta", all(-1 < t < 1 for t in p.get("theta", [])), "entries must lie in (-1, 1)")
    need("topology", p["topology"] in ("ring", "line", "star", "tree", "pair"), "unknown topology")
    need("suite", p["suite"] in ("quick", "full"), "must be quick or full")
    if command == "simulate":
        need("nodes", p["topology"] != "ring" or p["nodes"] % 2 == 0, "a ring needs an even count")
        if p["topology"] == "ring" and "beta" not in p:
            raise ConfigError("beta: required for a ring simulation")
        if p["topology"] == "line" and "relay" not in p:
            raise ConfigError("relay: required for a line simulation")
        if p["topology"] == "tree" and "parents" not in p:
            raise ConfigError("parents: required for a tree simulation")
        need("source", 1 <= p["source"] <= p["nodes"], "must be a node label")
        if "pmf_node" in p:
            need("pmf_node", 1 <= p["pmf_node"] <= p["nodes"], "must be a node label")
    if command == "exact-star" and "receivers" in p:
        n = len(p["success"])
        need("receivers", 1 <= len(p["receivers"]) <= 2, "must list one or two receivers")
        need("receivers", all(1 <= r <= n for r in p["receivers"]), "must be receiver labels")
        need("receivers", len(set(p["receivers"])) == len(p["receivers"]), "must be distinct")
    if command == "exact-star" and "receivers" not in p:
        need("success", len(p["success"]) <= 2, "pass receivers= to pick one or two receivers")


def parse_config(path: str | Path, overrides: dict[str, str] | None = None) -> ExperimentSpec:
    """Read ``path`` and apply ``overrides`` (flag values) on top."""
    raw = read_config(path)
    raw.update(overrides or {})
    return coerce(raw)
