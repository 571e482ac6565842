"""Channel reward models: finite-support IID distributions and Markov chains.

Rewards are instantaneous transmission rates in bytes per time unit.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse.csgraph import connected_components

PROB_ATOL = 1e-12


class ModelError(ValueError):
    """Raised for a channel model that violates its structural invariants."""


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite-support reward distribution of one IID channel.

    Parameters
    ----------
    support : array_like
        Strictly increasing, positive reward values.
    probs : array_like
        Probability of each support point; must sum to one.
    """

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        x = np.array(self.support, dtype=float).ravel()
        p = np.array(self.probs, dtype=float).ravel()
        if x.size == 0 or x.shape != p.shape:
            raise ModelError("support and probs must be non-empty and of equal length")
        if np.any(np.diff(x) <= 0):
            raise ModelError("support must be strictly increasing")
        if x[0] <= 0:
            raise ModelError("rewards must be positive")
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_ATOL:
            raise ModelError(f"probs must be non-negative and sum to 1 (sum={p.sum()!r})")
        x.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "support", x)
        object.__setattr__(self, "probs", p)
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        cdf.setflags(write=False)
        object.__setattr__(self, "_cdf", cdf)

    @classmethod
    def from_weights(cls, support, weights):
        w = np.asarray(weights, dtype=float)
        return cls(support, w / w.sum())

    @classmethod
    def point(cls, x0):
        return cls([x0], [1.0])

    def __len__(self):
        return self.support.size

    @property
    def mean(self):
        return float(self.support @ self.probs)

    @property
    def max(self):
        return float(self.support[-1])

    def cdf(self, x):
        """P(X <= x)."""
        idx = np.searchsorted(self.support, x, side="right")
        return np.where(idx > 0, self._cdf[np.maximum(idx - 1, 0)], 0.0)

    def expect_max(self, level):
        """E[max(X, level)], exact over the atoms."""
        return float(np.maximum(self.support, level) @ self.probs)

    def tail(self, level):
        """Return ``(P(X >= level), E[X; X >= level])``."""
        mask = self.support >= level
        return float(self.probs[mask].sum()), float(self.support[mask] @ self.probs[mask])

    def scaled(self, k):
        return DiscreteDistribution(self.support * k, self.probs)

    def sample(self, rng, size=None):
        u = rng.random(size)
        idx = np.minimum(np.searchsorted(self._cdf, u, side="right"), len(self) - 1)
        return self.support[idx]

    def as_markov(self):
        """Embed as a chain whose every row equals ``probs``."""
        rows = np.tile(self.probs, (len(self), 1))
        return MarkovChannel(rows, self.support)


def _grid_midpoints(x_max, n_points):
    edges = np.linspace(0.0, x_max, n_points + 1)
    return edges, 0.5 * (edges[:-1] + edges[1:])


def discretize_exponential(mean, x_max=None, n_points=1000):
    """Exponential rewards truncated to ``(0, x_max]`` on ``n_points`` midpoints.

    ``x_max`` defaults to five times the mean. Weights follow the
    exponential density at the midpoints and are renormalized.
    """
    if x_max is None:
        x_max = 5.0 * mean
    if not (mean > 0 and x_max > 0 and n_points >= 2):
        raise ValueError("need mean > 0, x_max > 0, n_points >= 2")
    _, mids = _grid_midpoints(x_max, n_points)
    return DiscreteDistribution.from_weights(mids, np.exp(-mids / mean))


def awgn_cdf(r, rho):
    """CDF of the Shannon rate ``log(1 + rho |h|^2)`` under Rayleigh fading."""
    r = np.maximum(np.asarray(r, dtype=float), 0.0)
    return -np.expm1(-np.expm1(r) / rho)


def awgn_rate_max(rho, tail=1e-4):
    """Rate above which the AWGN law carries mass ``tail``."""
    return float(np.log1p(rho * np.log(1.0 / tail)))


def discretize_awgn(rho, r_max=None, n_points=1000):
    """AWGN Shannon-rate distribution binned by CDF differences on ``(0, r_max]``."""
    if r_max is None:
        r_max = awgn_rate_max(rho)
    if not (rho > 0 and r_max > 0 and n_points >= 2):
        raise ValueError("need rho > 0, r_max > 0, n_points >= 2")
    edges, mids = _grid_midpoints(r_max, n_points)
    mass = np.diff(awgn_cdf(edges, rho))
    keep = mass > 0
    return DiscreteDistribution.from_weights(mids[keep], mass[keep])


@dataclass(frozen=True, eq=False)
class MarkovChannel:
    """Finite-state channel whose condition moves one step per time unit.

    Parameters
    ----------
    transition : array_like
        Row-stochastic one-step matrix; must be irreducible.
    rewards : array_like
        Reward in each state, non-negative and strictly increasing.
    """

    transition: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        r = np.array(self.rewards, dtype=float).ravel()
        n = r.size
        if P.shape != (n, n) or n == 0:
            raise ModelError(f"transition must be {n}x{n}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > PROB_ATOL):
            raise ModelError("transition rows must be non-negative and sum to 1")
        if np.any(r < 0) or np.any(np.diff(r) <= 0):
            raise ModelError("rewards must be non-negative and strictly increasing")
        ncomp, _ = connected_components(P > 0, directed=True, connection="strong")
        if ncomp != 1:
            raise ModelError("chain is reducible")
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "rewards", r)

    @property
    def n_states(self):
        return self.rewards.size

    def k_step(self, k):
        return k_step(self, k)

    def stationary(self):
        return stationary(self)

    def step(self, rng, state, k=1):
        """Sample the state ``k`` time units after ``state``."""
        if k == 0:
            return state
        row = self.k_step(k)[state]
        return int(min(np.searchsorted(np.cumsum(row), rng.random(), side="right"), self.n_states - 1))

    def sample_path(self, rng, state, n_steps):
        cum = np.cumsum(self.transition, axis=1)
        path = np.empty(n_steps + 1, dtype=int)
        path[0] = state
        u = rng.random(n_steps)
        for t in range(n_steps):
            state = int(min(np.searchsorted(cum[state], u[t], side="right"), self.n_states - 1))
            path[t + 1] = state
        return path


def birth_death(rewards, p_up=0.8):
    """Birth-death chain with reflecting ends: up w.p. ``p_up``, else down."""
    n = len(rewards)
    P = np.zeros((n, n))
    for i in range(n):
        P[i, min(i + 1, n - 1)] += p_up
        P[i, max(i - 1, 0)] += 1.0 - p_up
    return MarkovChannel(P, rewards)


def _renormalize(M):
    if np.any(M < 0) or np.any(M > 1) or np.max(np.abs(M.sum(axis=1) - 1.0)) > PROB_ATOL:
        M = np.clip(M, 0.0, 1.0)
        M /= M.sum(axis=1, keepdims=True)
    return M


@lru_cache(maxsize=512)
def _power(chain, k):
    if k == 0:
        return np.eye(chain.n_states)
    if k == 1:
        return chain.transition
    half = _power(chain, k // 2)
    M = _renormalize(half @ half)
    if k % 2:
        M = _renormalize(M @ chain.transition)
    M.setflags(write=False)
    return M


def k_step(chain, k):
    """``k``-step transition matrix by repeated squaring."""
    k = int(k)
    if k < 0:
        raise ValueError("k must be >= 0")
    return _power(chain, k)


def stationary(chain, tol=1e-12, max_iter=1_000_000):
    """Stationary distribution by power iteration on the lazy chain ``(I+P)/2``.

    The lazy chain shares the stationary law and is aperiodic, so the
    iteration converges for every irreducible chain.
    """
    return _stationary(chain, tol, max_iter).copy()


@lru_cache(maxsize=256)
def _stationary(chain, tol, max_iter):
    P = chain.transition
    lazy = 0.5 * (P + np.eye(chain.n_states))
    pi = np.full(chain.n_states, 1.0 / chain.n_states)
    for _ in range(max_iter):
        nxt = pi @ lazy
        nxt /= nxt.sum()
        if np.max(np.abs(nxt @ P - nxt)) < tol:
            return nxt
        pi = nxt
    raise ArithmeticError("power iteration did not converge")
