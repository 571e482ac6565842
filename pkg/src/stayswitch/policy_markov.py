"""Nested stopping policy for Markovian channels.

Within a stage the STAY decision is a discounted optimal-stopping problem on
the channel's state: after a STAY the chain advances ``t_c`` steps before
the user observes it again, and the reward of the bundled stop action is
``max(reward(x), c)``. The map is a contraction with modulus
``beta ** t_c``, so value iteration converges from any start.
"""

from dataclasses import dataclass

import numpy as np

from .channels import k_step
from .policy_iid import Action, ConvergenceError, format_rows


def discount_factor(T, t_c, exact=False):
    """Per-continuation discount: ``(1 + 1/T) ** -t_c``, or ``T / (T + t_c)`` when ``exact``."""
    if exact:
        return T / (T + t_c)
    return (1.0 / (1.0 + 1.0 / T)) ** t_c


def round_delay(t):
    """Nearest integer, at least one time unit."""
    return np.maximum(np.rint(np.asarray(t, dtype=float)), 1).astype(int)


@dataclass(frozen=True)
class ValueIterationResult:
    values: np.ndarray
    stop: np.ndarray
    continuation: np.ndarray
    discount: float
    iterations: int
    residuals: tuple


def bellman(values, stop_reward, M, discount):
    """One application of ``V -> max(stop_reward, discount * M V)``."""
    return np.maximum(stop_reward, discount * (M @ values))


def value_iteration(chain, c, t_c, T, exact=False, initial=None, tol=1e-10, max_iter=1_000_000):
    """Solve one stage by iterating the Bellman map to a fixed point.

    Parameters
    ----------
    chain : MarkovChannel
    c : float
        Value of switching to the next channel.
    t_c : int
        Contention delay in whole time units (>= 1).
    T : float
        Transmission time.
    exact : bool
        Discount by ``T / (T + t_c)`` instead of ``beta ** t_c``.
    initial : array_like, optional
        Starting values; zeros by default.
    """
    t_c = int(t_c)
    if t_c < 1:
        raise ValueError("contention delay must be at least one time unit")
    M = k_step(chain, t_c)
    discount = discount_factor(T, t_c, exact)
    stop_reward = np.maximum(chain.rewards, c)
    V = np.zeros(chain.n_states) if initial is None else np.array(initial, dtype=float)
    residuals = []
    for it in range(1, max_iter + 1):
        nxt = bellman(V, stop_reward, M, discount)
        res = float(np.max(np.abs(nxt - V)))
        residuals.append(res)
        V = nxt
        if res < tol:
            break
    else:
        raise ConvergenceError(f"value iteration residual {res:.3g} after {max_iter} sweeps")
    cont = discount * (M @ V)
    return ValueIterationResult(V, stop_reward >= cont, cont, discount, it, tuple(residuals))


@dataclass(frozen=True)
class MarkovStagePolicy:
    stage: int
    channel: int
    switch_value: float
    rewards: np.ndarray
    values: np.ndarray
    stop: np.ndarray
    continuation: np.ndarray
    discount: float
    t_c: int

    def decide(self, state):
        if not self.stop[state]:
            return Action.STAY
        return Action.STOP if self.rewards[state] >= self.switch_value else Action.SWITCH

    @property
    def actions(self):
        return tuple(self.decide(x) for x in range(len(self.rewards)))

    def expected_value(self, pi):
        return float(pi @ self.values)


@dataclass(frozen=True)
class MarkovPolicyTable:
    stages: tuple
    T: float
    t_c: tuple = ()
    t_s: tuple = ()
    random_entry: bool = False

    def __len__(self):
        return len(self.stages)

    def __getitem__(self, k):
        return self.stages[k]

    @property
    def sequence(self):
        return tuple(s.channel for s in self.stages)

    def decide(self, stage, state):
        return self.stages[stage].decide(state)

    def to_text(self):
        rows = [("stage", "channel", "state", "reward", "c", "V", "action")]
        for s in self.stages:
            for x in range(len(s.rewards)):
                rows.append((str(s.stage + 1), str(s.channel + 1), str(x + 1), f"{s.rewards[x]:g}",
                             f"{s.switch_value:.6f}", f"{s.values[x]:.6f}", str(s.decide(x))))
        return format_rows(rows)


def backward_induction_markov(chains, t_c, t_s, T, sequence=None, exact=False):
    """Per-stage Markov policies along a channel sequence.

    Delays are rounded to whole time units. The value of entering a channel
    averages its value function over the chain's stationary law.
    """
    if sequence is None:
        sequence = range(len(chains))
    sequence = [int(j) for j in sequence]
    if not sequence:
        raise ValueError("empty channel sequence")
    t_c = np.broadcast_to(round_delay(t_c), (len(chains),))
    t_s = np.broadcast_to(round_delay(t_s), (len(chains),))
    stages = [None] * len(sequence)
    c = 0.0
    for k in range(len(sequence) - 1, -1, -1):
        j = sequence[k]
        if k < len(sequence) - 1:
            nxt = stages[k + 1]
            ev = nxt.expected_value(chains[nxt.channel].stationary())
            c = T / (T + t_s[nxt.channel]) * ev
        res = value_iteration(chains[j], c, t_c[j], T, exact=exact)
        stages[k] = MarkovStagePolicy(k, j, c, chains[j].rewards, res.values, res.stop, res.continuation,
                                      res.discount, int(t_c[j]))
    return MarkovPolicyTable(tuple(stages), T, tuple(int(v) for v in t_c), tuple(int(v) for v in t_s))
