"""Event-driven simulation of multiuser multichannel opportunistic access.

Each user holds a FIFO byte queue fed by Poisson packet arrivals. With a
non-empty queue it runs a decision process along its channel sequence:
contend on the current channel, observe the channel condition once the
reservation handshake completes, then STOP (transmit for ``T`` units),
STAY (release and contend again) or SWITCH (move to the next channel).

Two fidelity modes are available:

``contention``
    explicit random access. An attempt occupies one unit; two attempts whose
    starts are less than one unit apart collide, so the vulnerable window is
    two units. Losers wait out the two-unit handshake and back off for an
    exponential time of mean ``2**k / zeta`` after their ``k``-th consecutive
    collision (``k`` capped at ``MAX_BACKOFF_STAGE``), as in 802.11. A user
    arriving on a reserved channel waits for the release and then backs off
    with mean ``1/zeta``.
``mean-delay``
    access delays are drawn exponentially with the analytic means from
    :mod:`stayswitch.congestion` (switching delay on entry, contention delay
    after a STAY); reservations are then granted first come first served.
"""

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .channels import MarkovChannel
from .congestion import CongestionProfile
from .policy_iid import Action, backward_induction, baseline_table
from .policy_markov import MarkovPolicyTable, backward_induction_markov

MODES = ("contention", "mean-delay")
SENSING_ORDERS = ("random", "greedy")
POLICY_KINDS = ("nested", "baseline")
HANDSHAKE = 2.0
ATTEMPT = 1.0
MAX_BACKOFF_STAGE = 6


@dataclass(frozen=True)
class SimConfig:
    """Static parameters of one simulation run.

    ``arrival_rate`` is the packet rate of each user; ``math.inf`` keeps
    every user permanently backlogged. ``loads`` are the per-channel
    attempt rates that set the delays in mean-delay mode.
    """

    n_channels: int
    n_users: int
    T: int = 40
    inv_zeta: float = 2.0
    arrival_rate: float = 0.0
    packet_payload: float = 1024.0
    horizon: float = 20_000.0
    warmup: float = 2_000.0
    seed: int = 0
    mode: str = "contention"
    sensing_order: str = "random"
    policy_kind: str = "nested"
    loads: tuple = None
    window: float = 1_000.0

    def __post_init__(self):
        if self.n_channels < 1 or self.n_users < 1:
            raise ValueError("need at least one channel and one user")
        if not self.horizon > self.warmup >= 0:
            raise ValueError("need horizon > warmup >= 0")
        if self.arrival_rate < 0 or self.inv_zeta <= 0 or self.T < 1 or self.packet_payload <= 0:
            raise ValueError("rates must be >= 0, backoff and T positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.sensing_order not in SENSING_ORDERS:
            raise ValueError(f"sensing_order must be one of {SENSING_ORDERS}")
        if self.policy_kind not in POLICY_KINDS:
            raise ValueError(f"policy_kind must be one of {POLICY_KINDS}")
        if self.loads is not None:
            object.__setattr__(self, "loads", tuple(float(g) for g in self.loads))
            if len(self.loads) != self.n_channels:
                raise ValueError("loads must give one attempt rate per channel")

    def replace(self, **kw):
        from dataclasses import replace
        return replace(self, **kw)


@dataclass
class SimStats:
    """Outcome of one run; rates are measured over ``(warmup, horizon]``."""

    delivered_bytes: float
    elapsed: float
    throughput: float
    data_rate: float
    attempt_rate: np.ndarray
    success_fraction: np.ndarray
    t_c_hat: np.ndarray
    t_s_hat: np.ndarray
    decisions: dict
    generated: int
    delivered: int
    queued: int
    cycles: int
    load_series: np.ndarray
    transmissions: list = field(default_factory=list, repr=False)
    trajectories: list = field(default_factory=list, repr=False)

    def same_as(self, other):
        a, b = self.summary(), other.summary()
        return a.keys() == b.keys() and all(_same(a[k], b[k]) for k in a)

    def summary(self):
        return {
            "delivered_bytes": self.delivered_bytes, "throughput": self.throughput, "data_rate": self.data_rate,
            "attempt_rate": self.attempt_rate, "success_fraction": self.success_fraction,
            "t_c_hat": self.t_c_hat, "t_s_hat": self.t_s_hat, "generated": self.generated,
            "delivered": self.delivered, "queued": self.queued, "cycles": self.cycles,
            "stop": self.decisions[Action.STOP], "stay": self.decisions[Action.STAY],
            "switch": self.decisions[Action.SWITCH], "load_series": self.load_series,
        }


def _same(x, y):
    x, y = np.asarray(x), np.asarray(y)
    return np.array_equal(x, y, equal_nan=x.dtype.kind == "f" and y.dtype.kind == "f")


def channel_mean(model):
    if isinstance(model, MarkovChannel):
        return float(model.stationary() @ model.rewards)
    return model.mean


def make_sequences(config, channels):
    """Per-user channel visiting orders."""
    if config.sensing_order == "greedy":
        order = tuple(int(j) for j in np.argsort([-channel_mean(m) for m in channels], kind="stable"))
        return [order] * config.n_users
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(7,)))
    return [tuple(int(j) for j in rng.permutation(config.n_channels)) for _ in range(config.n_users)]


def build_policies(config, channels, loads, sequences=None, exact=False):
    """Nested policy tables for every user, built from per-channel attempt rates."""
    if config.policy_kind == "baseline":
        return baseline_policy(config)
    if sequences is None:
        sequences = make_sequences(config, channels)
    prof = CongestionProfile(np.asarray(loads, dtype=float), config.T, config.inv_zeta)
    markov = isinstance(channels[0], MarkovChannel)
    cache = {}
    out = []
    for seq in sequences:
        if seq not in cache:
            if markov:
                cache[seq] = backward_induction_markov(channels, prof.t_c, prof.t_s, config.T, seq, exact=exact)
            else:
                cache[seq] = backward_induction(channels, prof.t_c, prof.t_s, config.T, seq)
        out.append(cache[seq])
    return out


def baseline_policy(config):
    """Per-user tables that transmit immediately on a random channel."""
    table = baseline_table(config.T)
    return [table] * config.n_users


class _Channel:
    __slots__ = ("index", "model", "rng", "busy", "holder", "busy_since", "waiters", "ongoing", "state",
                 "state_time", "markov", "busy_log", "attempt_log", "attempts", "successes")

    def __init__(self, index, model, rng):
        self.index = index
        self.model = model
        self.rng = rng
        self.markov = isinstance(model, MarkovChannel)
        self.busy = False
        self.holder = None
        self.busy_since = 0.0
        self.waiters = []
        self.ongoing = []
        self.busy_log = []
        self.attempt_log = []
        self.attempts = 0
        self.successes = 0
        if self.markov:
            self.state = int(np.searchsorted(np.cumsum(model.stationary()), rng.random(), side="right"))
            self.state = min(self.state, model.n_states - 1)
            self.state_time = 0

    def observe(self, now):
        """Return ``(reward, state)``; IID channels redraw at every observation."""
        if self.markov:
            t = int(math.floor(now))
            if t > self.state_time:
                self.state = self.model.step(self.rng, self.state, t - self.state_time)
                self.state_time = t
            return float(self.model.rewards[self.state]), self.state
        return float(self.model.sample(self.rng)), None


class _User:
    __slots__ = ("index", "policy", "arrivals", "mac", "queue", "backlog", "active", "stage", "sequence",
                 "cycle_start", "contention_start", "entry", "path", "collisions")

    def __init__(self, index, policy, arrivals, mac):
        self.index = index
        self.policy = policy
        self.arrivals = arrivals
        self.mac = mac
        self.queue = deque()
        self.backlog = 0.0
        self.active = False
        self.stage = 0
        self.sequence = ()
        self.cycle_start = 0.0
        self.contention_start = 0.0
        self.entry = "fresh"
        self.path = []
        self.collisions = 0


class Simulation:
    """One run of the event loop. Use :func:`run` for the common case."""

    def __init__(self, config, channels, policies, trace=False):
        if len(channels) != config.n_channels:
            raise ValueError("one channel model per channel required")
        if len(policies) != config.n_users:
            raise ValueError("one policy per user required")
        self.cfg = config
        self.trace = trace
        user_ss = [np.random.SeedSequence(config.seed, spawn_key=(1, u)) for u in range(config.n_users)]
        chan_ss = [np.random.SeedSequence(config.seed, spawn_key=(2, j)) for j in range(config.n_channels)]
        self.channels = [_Channel(j, m, np.random.default_rng(s)) for j, (m, s) in enumerate(zip(channels, chan_ss))]
        self.users = []
        for u, (pol, ss) in enumerate(zip(policies, user_ss)):
            a, b = ss.spawn(2)
            self.users.append(_User(u, pol, np.random.default_rng(a), np.random.default_rng(b)))
        if config.mode == "mean-delay":
            loads = config.loads if config.loads is not None else (0.0,) * config.n_channels
            prof = CongestionProfile(np.asarray(loads), config.T, config.inv_zeta)
            self.t_c, self.t_s = prof.t_c, prof.t_s
        self.queue = []
        self.seq = 0
        self.now = 0.0
        self.saturated = math.isinf(config.arrival_rate)
        self.generated = 0
        self.delivered = 0
        self.in_flight = 0
        self.delivered_bytes = 0.0
        self.cycle_bytes = 0.0
        self.cycle_time = 0.0
        self.cycles = 0
        self.decisions = {a: 0 for a in Action}
        self.delay_c = [[] for _ in channels]
        self.delay_s = [[] for _ in channels]
        self.transmissions = []
        self.trajectories = []

    # -- event plumbing -------------------------------------------------
    def schedule(self, t, fn, *args):
        heapq.heappush(self.queue, (t, self.seq, fn, args))
        self.seq += 1

    def backoff(self, user):
        return user.mac.exponential(self.cfg.inv_zeta * 2.0 ** min(user.collisions, MAX_BACKOFF_STAGE))

    def measuring(self):
        return self.now > self.cfg.warmup

    # -- traffic ----------------------------------------------------------
    def arrival(self, user):
        self.add_packet(user)
        self.schedule(self.now + user.arrivals.exponential(1.0 / self.cfg.arrival_rate), self.arrival, user)
        if not user.active:
            self.start_process(user)

    def add_packet(self, user):
        user.queue.append(self.cfg.packet_payload)
        user.backlog += self.cfg.packet_payload
        self.generated += 1

    def start_process(self, user):
        if self.saturated and not user.queue:
            self.add_packet(user)
        if not user.queue:
            user.active = False
            return
        user.active = True
        user.stage = 0
        if user.policy.random_entry:
            user.sequence = (int(user.mac.integers(self.cfg.n_channels)),)
        else:
            user.sequence = user.policy.sequence
        user.cycle_start = self.now
        user.path = []
        self.enter(user, "fresh")

    # -- access -----------------------------------------------------------
    def enter(self, user, kind):
        ch = self.channels[user.sequence[user.stage]]
        user.entry = kind
        user.contention_start = self.now
        if not user.path or user.path[-1] != ch.index:
            user.path.append(ch.index)
        if self.cfg.mode == "mean-delay":
            mean = self.t_c[ch.index] if kind == "stay" else self.t_s[ch.index]
            self.schedule(self.now + user.mac.exponential(mean), self.request, user, ch)
        elif kind == "stay":
            self.schedule(self.now + self.backoff(user), self.try_attempt, user, ch)
        else:
            self.try_attempt(user, ch)

    def request(self, user, ch):
        # mean-delay mode: reservation granted first come first served
        self.count_attempt(ch)
        if ch.busy:
            ch.waiters.append(user)
        else:
            self.reserve(user, ch)
            self.decide(user, ch)

    def try_attempt(self, user, ch):
        if ch.busy:
            ch.waiters.append(user)
            return
        self.count_attempt(ch)
        attempt = [self.now, user, False]
        if ch.ongoing:
            attempt[2] = True
            for other in ch.ongoing:
                other[2] = True
        ch.ongoing.append(attempt)
        self.schedule(self.now + ATTEMPT, self.attempt_end, ch, attempt)

    def count_attempt(self, ch):
        if self.measuring():
            ch.attempts += 1
            ch.attempt_log.append(self.now)

    def attempt_end(self, ch, attempt):
        ch.ongoing.remove(attempt)
        start, user, collided = attempt
        if collided:
            user.collisions += 1
            self.schedule(start + HANDSHAKE + self.backoff(user), self.try_attempt, user, ch)
            return
        user.collisions = 0
        if self.measuring():
            ch.successes += 1
        self.reserve(user, ch)
        self.schedule(start + HANDSHAKE, self.decide, user, ch)

    def reserve(self, user, ch):
        assert not ch.busy
        ch.busy = True
        ch.holder = user
        ch.busy_since = self.now

    def release(self, ch):
        self.log_busy(ch.busy_since, self.now, ch)
        ch.busy = False
        ch.holder = None
        waiters, ch.waiters = ch.waiters, []
        if self.cfg.mode == "mean-delay":
            if waiters:
                nxt = waiters.pop(0)
                ch.waiters = waiters
                self.reserve(nxt, ch)
                self.decide(nxt, ch)
            return
        for w in waiters:
            self.schedule(self.now + self.backoff(w), self.try_attempt, w, ch)

    def log_busy(self, start, end, ch):
        ch.busy_log.append((start, end))

    # -- decisions --------------------------------------------------------
    def decide(self, user, ch):
        reward, state = ch.observe(self.now)
        if self.measuring():
            delay = self.now - user.contention_start
            (self.delay_c if user.entry == "stay" else self.delay_s)[ch.index].append(delay)
        pol = user.policy
        if pol.random_entry:
            action = Action.STOP
        elif isinstance(pol, MarkovPolicyTable):
            action = pol.decide(user.stage, state)
        else:
            action = pol.decide(user.stage, reward)
        if self.measuring():
            self.decisions[action] += 1
        if action is Action.STOP:
            self.transmit(user, ch, reward)
        elif action is Action.STAY:
            self.release(ch)
            self.enter(user, "stay")
        else:
            self.release(ch)
            user.stage += 1
            self.enter(user, "switch")

    def transmit(self, user, ch, reward):
        if self.saturated:
            while user.backlog < reward * self.cfg.T:
                self.add_packet(user)
        budget = min(reward * self.cfg.T, user.backlog)
        sent, done = budget, 0
        while user.queue and budget > 0:
            take = min(user.queue[0], budget)
            budget -= take
            user.queue[0] -= take
            if user.queue[0] <= 1e-9:
                user.queue.popleft()
                done += 1
        user.backlog = max(user.backlog - sent, 0.0)
        self.in_flight += done
        end = self.now + self.cfg.T
        if self.trace:
            self.transmissions.append((ch.index, self.now, end, user.index))
            self.trajectories.append(tuple(user.path))
        self.schedule(end, self.finish, user, ch, sent, done)

    def finish(self, user, ch, sent, done):
        self.release(ch)
        self.in_flight -= done
        self.delivered += done
        if self.measuring():
            self.delivered_bytes += sent
            self.cycle_bytes += sent
            self.cycle_time += self.now - user.cycle_start
            self.cycles += 1
        self.start_process(user)

    # -- driver -----------------------------------------------------------
    def run(self):
        cfg = self.cfg
        if cfg.arrival_rate > 0:
            for user in self.users:
                if self.saturated:
                    self.schedule(0.0, self.start_process, user)
                else:
                    self.schedule(user.arrivals.exponential(1.0 / cfg.arrival_rate), self.arrival, user)
        while self.queue and self.queue[0][0] <= cfg.horizon:
            t, _, fn, args = heapq.heappop(self.queue)
            self.now = t
            fn(*args)
        self.now = cfg.horizon
        for ch in self.channels:
            if ch.busy:
                self.log_busy(ch.busy_since, cfg.horizon, ch)
        return self.collect()

    def collect(self):
        cfg = self.cfg
        span = cfg.horizon - cfg.warmup
        n = cfg.n_channels
        idle = np.empty(n)
        n_win = max(int(span // cfg.window), 1)
        edges = cfg.warmup + cfg.window * np.arange(n_win + 1)
        series = np.zeros((n_win, n))
        for j, ch in enumerate(self.channels):
            busy = _busy_until(ch.busy_log, np.array([cfg.warmup, cfg.horizon]))
            idle[j] = span - (busy[1] - busy[0])
            att = np.histogram(ch.attempt_log, bins=edges)[0]
            idle_w = cfg.window - np.diff(_busy_until(ch.busy_log, edges))
            series[:, j] = np.divide(att, idle_w, out=np.zeros(n_win), where=idle_w > 0)
        attempts = np.array([ch.attempts for ch in self.channels], dtype=float)
        successes = np.array([ch.successes for ch in self.channels], dtype=float)
        # packets already drained into an unfinished transmission still count as queued
        queued = sum(len(u.queue) for u in self.users) + self.in_flight
        return SimStats(
            delivered_bytes=self.delivered_bytes,
            elapsed=span,
            throughput=self.delivered_bytes / span,
            data_rate=self.cycle_bytes / self.cycle_time if self.cycle_time > 0 else 0.0,
            attempt_rate=np.divide(attempts, idle, out=np.zeros(n), where=idle > 0),
            success_fraction=np.divide(successes, attempts, out=np.full(n, np.nan), where=attempts > 0),
            t_c_hat=np.array([np.mean(d) if d else np.nan for d in self.delay_c]),
            t_s_hat=np.array([np.mean(d) if d else np.nan for d in self.delay_s]),
            decisions=dict(self.decisions),
            generated=self.generated,
            delivered=self.delivered,
            queued=queued,
            cycles=self.cycles,
            load_series=series,
            transmissions=self.transmissions,
            trajectories=self.trajectories,
        )


def _busy_until(intervals, t):
    """Total length of the disjoint, time-ordered ``intervals`` lying before each time in ``t``."""
    if not intervals:
        return np.zeros(len(t))
    iv = np.asarray(intervals, dtype=float)
    starts, ends = iv[:, 0], iv[:, 1]
    done = np.concatenate([[0.0], np.cumsum(ends - starts)])
    k = np.searchsorted(ends, t, side="right")  # intervals finished by t
    partial = np.zeros(len(t))
    open_ = k < len(starts)
    partial[open_] = np.maximum(t[open_] - starts[k[open_]], 0.0)
    return done[k] + partial


def run(config, channels, policies, trace=False):
    """Simulate ``config`` with one policy table per user.

    Deterministic given ``config.seed``.
    """
    return Simulation(config, channels, policies, trace=trace).run()
