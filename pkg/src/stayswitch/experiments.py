"""Replications, sweeps and CSV output.

Every simulated run becomes one CSV row. Within a replication, nested and
baseline runs share the seed and the per-user packet arrival rate, so the
comparison is paired. The arrival rate is the one that puts the nested
policy's mean-field equilibrium at the requested total load.
"""

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .congestion import CongestionProfile
from .equilibrium import equilibrium_loads, load_map
from .policy_iid import backward_induction
from .policy_markov import backward_induction_markov
from .scenario import clone_channels, default_sequence
from .simulator import baseline_policy, run

log = logging.getLogger(__name__)

COLUMNS = (
    "config_hash", "scenario", "axis", "value", "seed", "rep", "policy_kind", "mode", "sensing_order", "load",
    "T", "N", "m", "arrival_rate", "converged", "throughput", "data_rate", "generated", "delivered", "queued",
    "cycles", "stop", "stay", "switch", "G_model", "G_hat",
)


def replication_seed(base_seed, rep):
    """Seed of replication ``rep``: ``base_seed * 10**6 + rep``."""
    return int(base_seed) * 10**6 + int(rep)


@dataclass(frozen=True)
class Point:
    """One sweep point of a scenario."""

    axis: str
    value: float
    load: float
    T: int
    N: int
    sensing_order: str


def sweep_points(scenario, axis=None, grid=None):
    """Expand a scenario into sweep points; no axis gives a single point.

    Without ``grid`` the scenario's ``sweep.grid`` is used when its axis matches.
    """
    cfg = scenario.config
    orders = scenario.orders or (cfg.sensing_order,)
    if axis is None:
        values = [None]
    else:
        if grid is None:
            grid = scenario.grid if scenario.axis == axis else ()
        values = list(grid)
        if not values:
            raise ValueError(f"empty grid for sweep axis {axis}")
    pts = []
    for v in values:
        load, T, N = scenario.load, cfg.T, cfg.n_channels
        if axis == "G":
            load = float(v)
        elif axis == "T":
            T = int(v)
        elif axis == "N":
            N = int(v)
        for order in orders:
            pts.append(Point(axis or "none", float("nan") if v is None else float(v), load, T, N, order))
    return pts


def _fmt(v):
    if isinstance(v, float) and v.is_integer() and abs(v) < 1e6:
        return str(int(v))
    if isinstance(v, float):
        return repr(round(v, 12)) if np.isfinite(v) else str(v)
    return str(v)


def _join(a):
    return ";".join(f"{x:.6g}" for x in np.asarray(a, dtype=float))


def run_point(scenario, point, rep, mode=None, base_seed=None):
    """Simulate one replication of one sweep point; returns CSV row dicts."""
    _, channels = clone_channels(scenario, point.N)
    base_seed = scenario.config.seed if base_seed is None else base_seed
    seed = replication_seed(base_seed, rep)
    cfg = scenario.config.replace(n_channels=point.N, T=point.T, seed=seed, sensing_order=point.sensing_order,
                                  mode=mode or scenario.config.mode, loads=None)
    digest = scenario.digest(point=[point.axis, _fmt(point.value), point.load, point.T, point.N,
                                    point.sensing_order], mode=cfg.mode, base_seed=base_seed)
    eq = equilibrium_loads(cfg, channels, point.load)
    rows = []
    for kind in scenario.policy_kinds:
        if kind == "baseline" and point.sensing_order != (scenario.orders or (point.sensing_order,))[0]:
            continue  # baseline ignores the sensing order
        kcfg = cfg.replace(policy_kind=kind, arrival_rate=eq.arrival_rate)
        if kind == "nested":
            policies, model = eq.policies, eq.loads
        else:
            policies = baseline_policy(kcfg)
            lm = load_map(policies, channels, cfg.T, cfg.packet_payload)
            model = lm.loads(min(eq.arrival_rate * cfg.n_users, lm.max_arrival() * (1 - 1e-12)))
        if cfg.mode == "mean-delay":
            kcfg = kcfg.replace(loads=tuple(model))
        st = run(kcfg, channels, policies)
        d = st.summary()
        rows.append({
            "config_hash": digest, "scenario": scenario.name, "axis": point.axis, "value": _fmt(point.value),
            "seed": seed, "rep": rep, "policy_kind": kind, "mode": cfg.mode, "sensing_order": point.sensing_order,
            "load": _fmt(point.load), "T": point.T, "N": point.N, "m": cfg.n_users,
            "arrival_rate": f"{eq.arrival_rate:.9g}", "converged": int(eq.converged),
            "throughput": f"{st.throughput:.9g}", "data_rate": f"{st.data_rate:.9g}",
            "generated": st.generated, "delivered": st.delivered, "queued": st.queued, "cycles": st.cycles,
            "stop": d["stop"], "stay": d["stay"], "switch": d["switch"],
            "G_model": _join(model), "G_hat": _join(st.attempt_rate),
        })
    return rows


def _task(args):
    return run_point(*args)


def run_experiment(scenario, axis=None, grid=None, mode=None, base_seed=None, replications=None, workers=1):
    """All points x replications, in task order so that output is byte-stable."""
    reps = replications or scenario.replications
    tasks = [(scenario, p, r, mode, base_seed) for p in sweep_points(scenario, axis, grid) for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    return [r for chunk in chunks for r in chunk]


def write_csv(rows, path=None):
    """Write rows with the fixed header; returns the CSV text."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return text


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def mean_ci(values, level=0.95):
    """Sample mean and half-width of the Student-t confidence interval."""
    a = np.asarray(values, dtype=float)
    if a.size < 2:
        return float(a.mean()) if a.size else float("nan"), float("nan")
    half = stats.t.ppf(0.5 + level / 2, a.size - 1) * a.std(ddof=1) / np.sqrt(a.size)
    return float(a.mean()), float(half)


def summarize(rows, metric="data_rate"):
    """Group rows by point and policy kind: ``{key: (mean, half_width, n)}``."""
    groups = {}
    for r in rows:
        key = (r["axis"], r["value"], r["sensing_order"], r["policy_kind"])
        groups.setdefault(key, []).append(float(r[metric]))
    return {k: (*mean_ci(v), len(v)) for k, v in groups.items()}


def format_summary(rows):
    lines = []
    tp, dr = summarize(rows, "throughput"), summarize(rows, "data_rate")
    for key in tp:
        axis, value, order, kind = key
        m1, h1, n = tp[key]
        m2, h2, _ = dr[key]
        where = "" if axis == "none" else f"{axis}={value} "
        lines.append(f"{where}{order} {kind}: throughput {m1:.4g} ± {h1:.2g}, data rate {m2:.4g} ± {h2:.2g}"
                     f" (n={n})")
    return "\n".join(lines) + "\n"


def policy_table(scenario, loads=None):
    """Policy table of the visiting order ``1..N`` (greedy order if configured).

    ``loads`` defaults to ``policy.channel_loads`` from the scenario, else
    the total load split evenly.
    """
    channels = list(scenario.channels)
    n = len(channels)
    if loads is None:
        loads = scenario.channel_loads if scenario.channel_loads is not None else [scenario.load / n] * n
    prof = CongestionProfile(np.asarray(loads, dtype=float), scenario.config.T, scenario.config.inv_zeta)
    seq = default_sequence(scenario, channels)
    if scenario.markov:
        return backward_induction_markov(channels, prof.t_c, prof.t_s, scenario.config.T, seq, exact=scenario.exact)
    return backward_induction(channels, prof.t_c, prof.t_s, scenario.config.T, seq)
