"""Versioned YAML scenario files.

A scenario names the channel models, the simulation parameters, the total
load and an optional sweep. Unknown keys are rejected so that a scenario
file fully determines a run. Example::

    version: 1
    name: exponential
    channels:
      - {kind: exponential, mean: 2.5}
      - {kind: exponential, mean: 5.0}
    sim: {n_users: 20, T: 40, seed: 1}
    load: 0.3
    replications: 10
    sweep: {axis: G, grid: [0.1, 0.2, 0.3]}
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .channels import (DiscreteDistribution, MarkovChannel, ModelError, birth_death, discretize_awgn,
                       discretize_exponential)
from .simulator import MODES, POLICY_KINDS, SENSING_ORDERS, SimConfig

VERSION = 1
AXES = ("G", "T", "N")

_TOP = {"version", "name", "channels", "sim", "load", "replications", "sweep", "policies", "discretization",
        "policy"}
_SIM = {"n_users", "T", "inv_zeta", "packet_payload", "horizon", "warmup", "seed", "mode", "sensing_order",
        "window"}
_SWEEP = {"axis", "grid", "orders"}
_DISC = {"n_points"}
_POLICY = {"exact", "channel_loads"}
_CHANNEL = {
    "exponential": ({"mean"}, {"x_max"}),
    "awgn": ({"snr"}, {"r_max"}),
    "point": ({"rate"}, set()),
    "discrete": ({"support", "probs"}, set()),
    "two-point": ({"support", "probs"}, set()),
    "markov": ({"rewards"}, {"p_up", "transition"}),
}


class ScenarioError(ValueError):
    """Invalid scenario file; the message carries the file, line and field."""


@dataclass(frozen=True)
class Scenario:
    name: str
    channel_specs: tuple
    config: SimConfig
    load: float
    replications: int = 1
    axis: str = None
    grid: tuple = ()
    orders: tuple = ()
    policy_kinds: tuple = ("nested", "baseline")
    n_points: int = 1000
    exact: bool = False
    channel_loads: tuple = None
    source: str = "<string>"
    channels: tuple = field(default=(), compare=False, repr=False)

    @property
    def markov(self):
        return self.channel_specs[0]["kind"] == "markov"

    def to_dict(self):
        """Canonical plain-data form, used for hashing."""
        cfg = self.config
        return {
            "version": VERSION, "name": self.name, "channels": [dict(s) for s in self.channel_specs],
            "sim": {k: getattr(cfg, k) for k in sorted(_SIM - {"n_users"})} | {"n_users": cfg.n_users},
            "load": self.load, "replications": self.replications,
            "sweep": {"axis": self.axis, "grid": list(self.grid), "orders": list(self.orders)},
            "policies": list(self.policy_kinds), "discretization": {"n_points": self.n_points},
            "policy": {"exact": self.exact,
                       "channel_loads": None if self.channel_loads is None else list(self.channel_loads)},
        }

    def digest(self, **extra):
        blob = json.dumps(self.to_dict() | extra, sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def build_channel(spec, n_points=1000):
    kind = spec["kind"]
    if kind == "exponential":
        return discretize_exponential(spec["mean"], spec.get("x_max"), n_points)
    if kind == "awgn":
        return discretize_awgn(spec["snr"], spec.get("r_max"), n_points)
    if kind == "point":
        return DiscreteDistribution.point(spec["rate"])
    if kind in ("discrete", "two-point"):
        if kind == "two-point" and len(spec["support"]) != 2:
            raise ModelError("two-point channel needs exactly two support values")
        return DiscreteDistribution(spec["support"], spec["probs"])
    if "transition" in spec:
        return MarkovChannel(spec["transition"], spec["rewards"])
    return birth_death(spec["rewards"], spec.get("p_up", 0.8))


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario(text, str(path))


def parse_scenario(text, source="<string>"):
    """Parse and validate scenario text.

    Raises
    ------
    ScenarioError
        With ``source:line: field: reason`` for the first problem found.
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ScenarioError(f"{source}:{line}: syntax error: {getattr(exc, 'problem', exc)}") from None
    if root is None:
        raise ScenarioError(f"{source}:1: empty scenario")
    return _Parser(source).scenario(root)


class _Parser:
    def __init__(self, source):
        self.source = source

    def fail(self, node, where, msg):
        raise ScenarioError(f"{self.source}:{node.start_mark.line + 1}: {where}: {msg}")

    def mapping(self, node, where, allowed, required=()):
        if not isinstance(node, yaml.MappingNode):
            self.fail(node, where, "expected a mapping")
        out = {}
        for k, v in node.value:
            key = k.value
            if key not in allowed:
                self.fail(k, f"{where}.{key}" if where else key, "unknown key")
            if key in out:
                self.fail(k, f"{where}.{key}" if where else key, "duplicate key")
            out[key] = v
        for key in required:
            if key not in out:
                self.fail(node, f"{where}.{key}" if where else key, "missing required key")
        return out

    def value(self, node, where):
        try:
            return yaml.safe_load(yaml.serialize(node))
        except yaml.YAMLError as exc:
            self.fail(node, where, str(exc))

    def number(self, node, where, lo=None, integer=False, strict=False):
        v = self.value(node, where)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(node, where, f"expected a number, got {v!r}")
        if integer and (isinstance(v, float) and not v.is_integer()):
            self.fail(node, where, f"expected an integer, got {v!r}")
        if not math.isfinite(v):
            self.fail(node, where, "must be finite")
        if lo is not None and (v <= lo if strict else v < lo):
            self.fail(node, where, f"must be {'>' if strict else '>='} {lo}")
        return int(v) if integer else float(v)

    def choice(self, node, where, options):
        v = self.value(node, where)
        if v not in options:
            self.fail(node, where, f"must be one of {list(options)}, got {v!r}")
        return v

    def seq(self, node, where, min_len=1):
        if not isinstance(node, yaml.SequenceNode):
            self.fail(node, where, "expected a list")
        if len(node.value) < min_len:
            self.fail(node, where, f"needs at least {min_len} entr{'y' if min_len == 1 else 'ies'}")
        return node.value

    def scenario(self, root):
        top = self.mapping(root, "", _TOP, ("version", "name", "channels", "load"))
        version = self.number(top["version"], "version", integer=True)
        if version != VERSION:
            self.fail(top["version"], "version", f"unsupported version {version} (expected {VERSION})")
        name = str(self.value(top["name"], "name"))
        n_points = 1000
        if "discretization" in top:
            disc = self.mapping(top["discretization"], "discretization", _DISC)
            if "n_points" in disc:
                n_points = self.number(disc["n_points"], "discretization.n_points", lo=2, integer=True)
        specs, models = self.channels(top["channels"], n_points)
        sim = {}
        if "sim" in top:
            raw = self.mapping(top["sim"], "sim", _SIM)
            for key, node in raw.items():
                where = f"sim.{key}"
                if key == "mode":
                    sim[key] = self.choice(node, where, MODES)
                elif key == "sensing_order":
                    sim[key] = self.choice(node, where, SENSING_ORDERS)
                elif key in ("n_users", "T", "seed"):
                    sim[key] = self.number(node, where, lo=1 if key != "seed" else 0, integer=True)
                else:
                    sim[key] = self.number(node, where, lo=0, strict=key != "warmup")
        sim.setdefault("n_users", 20)
        try:
            config = SimConfig(n_channels=len(models), **sim)
        except ValueError as exc:
            self.fail(top.get("sim", root), "sim", str(exc))
        load = self.number(top["load"], "load", lo=0, strict=True)
        reps = 1
        if "replications" in top:
            reps = self.number(top["replications"], "replications", lo=1, integer=True)
        kinds = ("nested", "baseline")
        if "policies" in top:
            nodes = self.seq(top["policies"], "policies")
            kinds = tuple(self.choice(n, "policies", POLICY_KINDS) for n in nodes)
        axis, grid, orders = None, (), ()
        if "sweep" in top:
            sw = self.mapping(top["sweep"], "sweep", _SWEEP, ("axis",))
            axis = self.choice(sw["axis"], "sweep.axis", AXES)
            if "grid" in sw:
                grid = self.grid(sw["grid"], axis)
            if "orders" in sw:
                orders = tuple(self.choice(n, "sweep.orders", SENSING_ORDERS)
                               for n in self.seq(sw["orders"], "sweep.orders"))
        exact, channel_loads = False, None
        if "policy" in top:
            pol = self.mapping(top["policy"], "policy", _POLICY)
            if "exact" in pol:
                exact = self.value(pol["exact"], "policy.exact")
                if not isinstance(exact, bool):
                    self.fail(pol["exact"], "policy.exact", "expected true or false")
            if "channel_loads" in pol:
                nodes = self.seq(pol["channel_loads"], "policy.channel_loads", len(models))
                if len(nodes) != len(models):
                    self.fail(pol["channel_loads"], "policy.channel_loads", "one load per channel required")
                channel_loads = tuple(self.number(n, "policy.channel_loads", lo=0) for n in nodes)
        return Scenario(name, tuple(specs), config, load, reps, axis, grid, orders, kinds, n_points, exact,
                        channel_loads, self.source, tuple(models))

    def grid(self, node, axis):
        where = "sweep.grid"
        nodes = self.seq(node, where)
        if axis == "G":
            return tuple(self.number(n, where, lo=0, strict=True) for n in nodes)
        return tuple(self.number(n, where, lo=1, integer=True) for n in nodes)

    def channels(self, node, n_points):
        specs, models = [], []
        for i, item in enumerate(self.seq(node, "channels")):
            where = f"channels[{i}]"
            if not isinstance(item, yaml.MappingNode):
                self.fail(item, where, "expected a mapping")
            keys = {k.value: v for k, v in item.value}
            if "kind" not in keys:
                self.fail(item, f"{where}.kind", "missing required key")
            kind = self.choice(keys["kind"], f"{where}.kind", tuple(_CHANNEL))
            required, optional = _CHANNEL[kind]
            raw = self.mapping(item, where, {"kind"} | required | optional, ("kind",) + tuple(sorted(required)))
            spec = {"kind": kind}
            for key, v in raw.items():
                if key == "kind":
                    continue
                if key in ("support", "probs", "rewards"):
                    spec[key] = [self.number(n, f"{where}.{key}") for n in self.seq(v, f"{where}.{key}")]
                elif key == "transition":
                    spec[key] = [[self.number(n, f"{where}.{key}") for n in self.seq(row, f"{where}.{key}")]
                                 for row in self.seq(v, f"{where}.{key}")]
                else:
                    spec[key] = self.number(v, f"{where}.{key}", lo=0, strict=key != "p_up")
            try:
                models.append(build_channel(spec, n_points))
            except (ModelError, ValueError) as exc:
                self.fail(item, where, str(exc))
            specs.append(spec)
        kinds = {s["kind"] == "markov" for s in specs}
        if len(kinds) > 1:
            self.fail(node, "channels", "cannot mix Markov and IID channels")
        return specs, models


def clone_channels(scenario, n):
    """Channel specs and models for ``n`` channels, cycling the base list."""
    base = len(scenario.channel_specs)
    idx = [j % base for j in range(n)]
    return [scenario.channel_specs[j] for j in idx], [scenario.channels[j] for j in idx]


def default_sequence(scenario, channels):
    """Visiting order used for printed policy tables."""
    if scenario.config.sensing_order == "greedy":
        from .simulator import channel_mean
        return tuple(int(j) for j in np.argsort([-channel_mean(m) for m in channels], kind="stable"))
    return tuple(range(len(channels)))
