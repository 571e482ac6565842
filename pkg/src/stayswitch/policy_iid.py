"""Nested stopping policy for IID channels.

At each stage a user compares the observed rate ``x`` against two numbers:
the value of switching to the next channel ``c`` and the rate-of-return
threshold ``lam``. If ``lam < c`` the user never stays (STOP when
``x >= c``, else SWITCH); otherwise it never switches (STOP when
``x >= lam``, else STAY).
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect


class Action(enum.Enum):
    STOP = "STOP"
    STAY = "STAY"
    SWITCH = "SWITCH"

    def __str__(self):
        return self.value


class Branch(enum.Enum):
    """Action taken on continuation, fixed per stage."""

    STAY = "STAY"
    SWITCH = "SWITCH"

    def __str__(self):
        return self.value


class ConvergenceError(ArithmeticError):
    pass


def threshold_gap(dist, lam, c, t_c, T):
    """``E[max(X, c) - lam]^+ - lam * t_c / T``; its unique root is the threshold."""
    xhat = np.maximum(dist.support, c)
    return float(np.maximum(xhat - lam, 0.0) @ dist.probs) - lam * t_c / T


def _fixed_point(dist, c, ratio, tol, max_iter):
    lam = dist.expect_max(c)
    for _ in range(max_iter):
        prob, partial = dist.tail(lam)
        nxt = partial / (prob + ratio)
        if abs(nxt - lam) < tol:
            return nxt
        lam = nxt
    raise ConvergenceError(f"threshold iteration did not settle in {max_iter} steps")


def _bisect_threshold(dist, c, t_c, T, xtol=1e-13):
    hi = dist.expect_max(c)
    while threshold_gap(dist, hi, c, t_c, T) > 0:
        hi *= 2.0
    return bisect(lambda lam: threshold_gap(dist, lam, c, t_c, T), 0.0, hi, xtol=xtol,
                  rtol=4 * np.finfo(float).eps, maxiter=500)


def solve_threshold(dist, c, t_c, T, tol=1e-10, max_iter=10_000, check=True):
    """Rate-of-return threshold for one stage.

    Parameters
    ----------
    dist : DiscreteDistribution
        Reward law of the current channel.
    c : float
        Value of switching to the next channel (0 at the last stage).
    t_c : float
        Contention delay of the current channel; must be positive.
    T : float
        Transmission time.

    Returns
    -------
    float
        The unique ``lam`` with ``E[max(X, c) - lam]^+ = lam * t_c / T``.
    """
    if not t_c > 0:
        raise ValueError(f"contention delay must be > 0 (got {t_c}); the threshold is not unique otherwise")
    if not T > 0 or c < 0:
        raise ValueError("need T > 0 and c >= 0")
    ratio = t_c / T
    lam = dist.expect_max(c) / (1.0 + ratio)
    if not lam < c:
        lam = _fixed_point(dist, c, ratio, tol, max_iter)
    if check:
        ref = _bisect_threshold(dist, c, t_c, T)
        if abs(ref - lam) > 1e-8 * max(1.0, abs(ref)):
            lam = ref
    return lam


@dataclass(frozen=True)
class StagePolicy:
    """Decision rule at one stage of a user's channel sequence."""

    stage: int
    channel: int
    switch_value: float
    threshold: float
    stage_value: float

    @property
    def branch(self):
        return Branch.SWITCH if self.threshold < self.switch_value else Branch.STAY

    def decide(self, x):
        if self.branch is Branch.SWITCH:
            return Action.STOP if x >= self.switch_value else Action.SWITCH
        return Action.STOP if x >= self.threshold else Action.STAY

    def stop_probability(self, dist):
        level = self.switch_value if self.branch is Branch.SWITCH else self.threshold
        return dist.tail(level)[0]


@dataclass(frozen=True)
class PolicyTable:
    """Per-stage policies for one user's channel sequence.

    ``stages[k]`` governs the ``k``-th channel visited (0-based), which is
    channel ``stages[k].channel`` of the system.
    """

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

    def decide(self, stage, x):
        act = self.stages[stage].decide(x)
        assert not (act is Action.SWITCH and stage == len(self.stages) - 1)
        return act

    def to_text(self):
        rows = [("stage", "channel", "c", "lambda", "EV", "continuation")]
        for s in self.stages:
            rows.append((str(s.stage + 1), str(s.channel + 1), f"{s.switch_value:.6f}", f"{s.threshold:.6f}",
                         f"{s.stage_value:.6f}", str(s.branch)))
        return format_rows(rows)


def format_rows(rows):
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def backward_induction(dists, t_c, t_s, T, sequence=None):
    """Build the nested stopping policy along a channel sequence.

    Parameters
    ----------
    dists : sequence of DiscreteDistribution
        Reward law of every channel in the system, indexed by channel.
    t_c, t_s : array_like
        Per-channel contention and switching delays, indexed by channel.
    T : float
        Transmission time.
    sequence : sequence of int, optional
        Order in which the user visits channels; defaults to ``0..N-1``.
    """
    if sequence is None:
        sequence = range(len(dists))
    sequence = [int(j) for j in sequence]
    if not sequence:
        raise ValueError("empty channel sequence")
    t_c = np.broadcast_to(np.asarray(t_c, dtype=float), (len(dists),))
    t_s = np.broadcast_to(np.asarray(t_s, dtype=float), (len(dists),))
    stages = [None] * len(sequence)
    c = 0.0
    for k in range(len(sequence) - 1, -1, -1):
        j = sequence[k]
        if k < len(sequence) - 1:
            c = T / (T + t_s[sequence[k + 1]]) * stages[k + 1].stage_value
        lam = solve_threshold(dists[j], c, t_c[j], T)
        ev = dists[j].expect_max(max(lam, c))
        stages[k] = StagePolicy(k, j, c, lam, ev)
    return PolicyTable(tuple(stages), T, tuple(t_c), tuple(t_s))


def baseline_table(T):
    """Single-stage table that transmits at any observed condition.

    The simulator picks a uniformly random channel for every packet served
    under such a table.
    """
    return PolicyTable((StagePolicy(0, 0, 0.0, 0.0, 0.0),), T, random_entry=True)
