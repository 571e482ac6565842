"""Mean-field load equilibrium between policies and the loads they induce.

Policies are built from per-channel attempt rates ``G``; users following
them generate reservations whose rates, through the ALOHA-with-reservation
relation ``S = g / (1 + b g)`` with ``g = G e^{-2G}``, imply new attempt
rates. The damped iteration ``G <- (1 - a) G + a G_hat`` searches for the
fixed point at a fixed total load ``sum(G)``.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import lambertw

from .channels import MarkovChannel, k_step
from .policy_iid import Branch
from .simulator import build_policies, make_sequences, run

log = logging.getLogger(__name__)

G_MAX = 0.5  # attempt rate maximizing G e^{-2G}


def cycle_flows(table, channels, payload=None):
    """Expected per-decision-process traffic generated by one policy table.

    Returns
    -------
    reservations : ndarray
        Expected reservations won on each channel per process.
    stops : ndarray
        Probability that the process ends with a transmission on each channel.
    bytes_sent : float
        Expected bytes carried by the final transmission, capped at ``payload``.
    """
    n = len(channels)
    res = np.zeros(n)
    stops = np.zeros(n)
    sent = 0.0
    T = table.T
    cap = np.inf if payload is None else payload
    if table.random_entry:
        for j, model in enumerate(channels):
            res[j] = stops[j] = 1.0 / n
            rewards, probs = _reward_law(model)
            sent += np.minimum(rewards * T, cap) @ probs / n
        return res, stops, sent
    reach = 1.0
    for stage in table.stages:
        j = stage.channel
        model = channels[j]
        if isinstance(model, MarkovChannel):
            visits, p_stop, stop_bytes = _markov_stage(stage, model, T, cap)
        else:
            visits, p_stop, stop_bytes = _iid_stage(stage, model, T, cap)
        res[j] += reach * visits
        stops[j] += reach * p_stop
        sent += reach * stop_bytes
        reach *= 1.0 - p_stop
        if reach <= 0.0:
            break
    return res, stops, sent


def _reward_law(model):
    if isinstance(model, MarkovChannel):
        return model.rewards, model.stationary()
    return model.support, model.probs


def _iid_stage(stage, dist, T, cap):
    level = stage.switch_value if stage.branch is Branch.SWITCH else stage.threshold
    mask = dist.support >= level
    p = float(dist.probs[mask].sum())
    b = float(np.minimum(dist.support[mask] * T, cap) @ dist.probs[mask])
    if stage.branch is Branch.SWITCH:
        return 1.0, p, b
    return 1.0 / p, 1.0, b / p


def _markov_stage(stage, chain, T, cap):
    # reservation epochs start from the stationary law; a STAY lets the chain run t_c steps
    pi = chain.stationary()
    stay = np.array([not s for s in stage.stop], dtype=float)
    M = k_step(chain, stage.t_c)
    occupancy = np.linalg.solve((np.eye(chain.n_states) - stay[:, None] * M).T, pi)
    stop_states = np.array([a.value == "STOP" for a in stage.actions])
    p_stop = float(occupancy[stop_states].sum())
    b = float(np.minimum(chain.rewards[stop_states] * T, cap) @ occupancy[stop_states])
    return float(occupancy.sum()), p_stop, b


def attempt_rate_from_success(g):
    """Stable-branch inverse of ``G e^{-2G}``."""
    g = np.asarray(g, dtype=float)
    top = g >= 0.5 / np.e  # scipy returns nan at the branch point itself
    G = -lambertw(np.where(top, 0.0, -2.0 * g), 0).real / 2.0
    return np.where(top, G_MAX, G)


@dataclass
class LoadMap:
    """Linear traffic model: per unit of total packet arrival rate."""

    reservations: np.ndarray
    busy: np.ndarray

    def loads(self, arrival):
        r = arrival * self.reservations
        g = r / (1.0 - self.busy * r)
        return attempt_rate_from_success(g)

    def max_arrival(self):
        # both b*r < 1 and g <= 1/(2e) must hold on every channel
        with np.errstate(divide="ignore"):
            lim = np.where(self.reservations > 0,
                           1.0 / (self.reservations * (self.busy + 2.0 * np.e)), np.inf)
        return float(lim.min())


def load_map(policies, channels, T, payload):
    n = len(channels)
    res = np.zeros(n)
    stops = np.zeros(n)
    for table in policies:
        r, s, sent = cycle_flows(table, channels, payload)
        cycles = payload / sent
        res += cycles * r
        stops += cycles * s
    res /= len(policies)
    stops /= len(policies)
    frac = np.divide(stops, res, out=np.zeros(n), where=res > 0)
    return LoadMap(res, 1.0 + T * frac)


def propagate(policies, channels, total_load, T, payload):
    """Loads induced by ``policies`` at a total attempt rate ``total_load``.

    Returns ``(loads, arrival, feasible)`` where ``arrival`` is the total
    packet arrival rate producing those loads.
    """
    lm = load_map(policies, channels, T, payload)
    hi = lm.max_arrival() * (1.0 - 1e-12)
    if lm.loads(hi).sum() < total_load:
        return lm.loads(hi), hi, False
    arrival = brentq(lambda a: lm.loads(a).sum() - total_load, 0.0, hi, xtol=1e-15, rtol=1e-13)
    return lm.loads(arrival), arrival, True


@dataclass
class EquilibriumResult:
    loads: np.ndarray
    policies: list
    arrival_rate: float
    converged: bool
    rounds: int
    history: list
    residual: float = float("nan")


def equilibrium_loads(config, channels, total_load, initial=None, method="analytic", damping=0.5, tol=1e-3,
                      max_rounds=50, sequences=None):
    """Damped fixed point between per-channel loads and the policies built on them.

    Parameters
    ----------
    config : SimConfig
        ``policy_kind``, ``sensing_order``, ``T`` and ``inv_zeta`` are used;
        ``arrival_rate`` is ignored and returned instead.
    total_load : float
        Sum of per-channel attempt rates.
    method : {"analytic", "simulate"}
        How the induced loads are measured. ``"simulate"`` runs the contention
        simulator with common random numbers and rescales the measured rates
        to ``total_load``.

    Returns
    -------
    EquilibriumResult
        ``arrival_rate`` is per user. ``converged`` is False when the last
        change exceeded ``tol`` or the load is beyond capacity.
        ``residual`` is ``max|G_hat - G|`` at the returned loads.

    Notes
    -----
    Branch flips make the induced-load map discontinuous, and a fixed
    damping can then cycle. The damping is halved whenever the largest
    step fails to shrink, which turns the iteration into a running
    average around the discontinuity.
    """
    if method not in ("analytic", "simulate"):
        raise ValueError("method must be 'analytic' or 'simulate'")
    n = len(channels)
    if sequences is None:
        sequences = make_sequences(config, channels)
    G = np.full(n, total_load / n) if initial is None else np.asarray(initial, dtype=float).copy()
    history = [G.copy()]
    converged = False
    alpha = damping
    last = np.inf
    for rounds in range(1, max_rounds + 1):
        policies = build_policies(config, channels, G, sequences)
        target, arrival, feasible = propagate(policies, channels, total_load, config.T, config.packet_payload)
        if method == "simulate":
            stats = run(config.replace(arrival_rate=arrival / config.n_users, mode="contention"), channels, policies)
            measured = stats.attempt_rate
            target = total_load * measured / measured.sum() if measured.sum() > 0 else target
        gap = np.max(np.abs(target - G))
        if alpha * gap >= last:
            alpha *= 0.5
        step = alpha * (target - G)
        G = np.clip(G + step, 0.0, None)
        history.append(G.copy())
        last = np.max(np.abs(step))
        if last < tol:
            converged = feasible
            break
    else:
        log.warning("load iteration did not settle at total load %g", total_load)
    policies = build_policies(config, channels, G, sequences)
    final, arrival, feasible = propagate(policies, channels, total_load, config.T, config.packet_payload)
    return EquilibriumResult(G, policies, arrival / config.n_users, converged and feasible, rounds, history,
                             float(np.max(np.abs(final - G))))


def long_run_variance(x, lags):
    """Newey-West (Bartlett kernel) long-run variance of each column of ``x``."""
    x = x - x.mean(axis=0)
    n = x.shape[0]
    v = np.einsum("ij,ij->j", x, x) / n
    for k in range(1, lags + 1):
        v += 2.0 * (1.0 - k / (lags + 1.0)) * np.einsum("ij,ij->j", x[k:], x[:-k]) / n
    return np.maximum(v, 0.0)


def split_half_stationary(series, n_se=3.0, lags=None):
    """Compare first- and second-half window means of a load time series.

    Parameters
    ----------
    series : ndarray, shape (n_windows, n_channels)
        Per-window attempt-rate estimates, e.g. ``SimStats.load_series``.
    n_se : float
        Allowed difference in standard errors.
    lags : int, optional
        Bartlett-kernel bandwidth for the standard errors. Defaults to
        ``floor(4 (h / 100) ** (2/9))`` for ``h`` windows per half; ``0``
        treats windows as independent.

    Returns
    -------
    passed : ndarray of bool
        One flag per channel; channels with no variation pass.
    z : ndarray
        Standardized half-mean differences.

    Notes
    -----
    Windows are positively correlated because one packet spans several
    reservation cycles, so the independent-window standard error is too
    small and the test rejects stationary series far too often.
    """
    series = np.asarray(series, dtype=float)
    half = series.shape[0] // 2
    if half < 2:
        raise ValueError("need at least four windows")
    if lags is None:
        lags = int(np.floor(4.0 * (half / 100.0) ** (2.0 / 9.0)))
    lags = min(int(lags), half - 1)
    a, b = series[:half], series[half:2 * half]
    se = np.sqrt((long_run_variance(a, lags) + long_run_variance(b, lags)) / half)
    diff = np.abs(a.mean(axis=0) - b.mean(axis=0))
    z = np.divide(diff, se, out=np.zeros_like(diff), where=se > 0)
    return z < n_se, z
