"""Closed-form congestion model for a random-access channel.

Maps a channel's Poisson attempt rate ``G`` to the contention delay ``t_c``
and the switching delay ``t_s = t_w + t_c`` seen by a user entering it.
All functions accept scalars or numpy arrays.
"""

from dataclasses import dataclass, field

import numpy as np

DEFAULT_INV_ZETA = 2.0  # mean backoff 1/zeta; arbitrary, never stated for the reference scenarios


def _check_load(G):
    G = np.asarray(G, dtype=float)
    if np.any(G < 0) or np.any(~np.isfinite(G)):
        raise ValueError(f"attempt rate must be finite and >= 0, got {G}")
    return G


def _check_T(T):
    if not T >= 1:
        raise ValueError(f"transmission time must be >= 1, got {T}")


def _check_backoff(inv_zeta):
    if not inv_zeta > 0:
        raise ValueError(f"mean backoff must be > 0, got {inv_zeta}")


def _unwrap(x):
    return float(x) if np.ndim(x) == 0 else x


def success_rate(G, T):
    """Rate of successful channel reservations at attempt rate ``G``.

    ``S = G e^{-2G} / (1 + (1+T) G e^{-2G})``; zero iff ``G == 0``.
    """
    G = _check_load(G)
    _check_T(T)
    g = G * np.exp(-2.0 * G)
    return _unwrap(g / (1.0 + (1.0 + T) * g))


def residual_wait(G, T, inv_zeta=DEFAULT_INV_ZETA):
    """Expected wait for an arrival that may land in an active transmission.

    Uses the analytic limit 0 at ``G == 0``. For small ``S(T+1)`` the
    closed form cancels catastrophically, so a series expansion is used there.
    """
    G = _check_load(G)
    _check_T(T)
    _check_backoff(inv_zeta)
    S = np.atleast_1d(np.asarray(success_rate(G, T), dtype=float))
    a = T + 1.0
    out = np.zeros_like(S)
    small = (S * a < 1e-4) & (S > 0)
    big = S * a >= 1e-4
    # (1/S + b)(1 - e^{-aS}) - a e^{-aS}, expanded to O(S^2)
    s = S[small]
    out[small] = a * s * (inv_zeta + 0.5 * a) - a * a * s * s * (0.5 * inv_zeta + a / 3.0)
    s = S[big]
    e = np.exp(-a * s)
    out[big] = 1.0 / s + inv_zeta - (a + 1.0 / s + inv_zeta) * e
    return _unwrap(out.reshape(np.shape(G)))


def contention_delay(G, inv_zeta=DEFAULT_INV_ZETA):
    """Mean time from carrier sense to winning the channel.

    Each failed competition costs a backoff plus a 2-unit handshake; the
    number of failures before success is geometric with success ``e^{-2G}``.
    """
    G = _check_load(G)
    _check_backoff(inv_zeta)
    return _unwrap(np.expm1(2.0 * G) * (inv_zeta + 2.0) + 2.0)


def switching_delay(G, T, inv_zeta=DEFAULT_INV_ZETA):
    """Residual wait plus contention delay for a user switching in."""
    return _unwrap(residual_wait(G, T, inv_zeta) + contention_delay(G, inv_zeta))


@dataclass(frozen=True)
class CongestionProfile:
    """Per-channel attempt rates together with the delays they induce."""

    attempt_rate: np.ndarray
    T: float
    inv_zeta: float = DEFAULT_INV_ZETA
    success: np.ndarray = field(init=False, repr=False)
    t_w: np.ndarray = field(init=False, repr=False)
    t_c: np.ndarray = field(init=False, repr=False)
    t_s: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        G = np.atleast_1d(_check_load(self.attempt_rate)).astype(float)
        object.__setattr__(self, "attempt_rate", G)
        object.__setattr__(self, "success", np.atleast_1d(success_rate(G, self.T)))
        object.__setattr__(self, "t_w", np.atleast_1d(residual_wait(G, self.T, self.inv_zeta)))
        object.__setattr__(self, "t_c", np.atleast_1d(contention_delay(G, self.inv_zeta)))
        object.__setattr__(self, "t_s", self.t_w + self.t_c)

    @classmethod
    def uniform(cls, G, n_channels, T, inv_zeta=DEFAULT_INV_ZETA):
        return cls(np.full(n_channels, float(G)), T, inv_zeta)

    def __len__(self):
        return len(self.attempt_rate)

    def rounded(self):
        """``(t_c, t_s)`` rounded to the nearest integer, at least 1."""
        t_c = np.maximum(np.rint(self.t_c), 1).astype(int)
        t_s = np.maximum(np.rint(self.t_s), 1).astype(int)
        return t_c, t_s
