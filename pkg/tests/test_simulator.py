import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stayswitch.channels import DiscreteDistribution, birth_death
from stayswitch.congestion import contention_delay
from stayswitch.policy_iid import Action, backward_induction
from stayswitch.simulator import SimConfig, _busy_until, baseline_policy, build_policies, run

from .models import exponential_channels


def saturated(n_channels=1, **kw):
    kw.setdefault("horizon", 100_000)
    kw.setdefault("warmup", 1_000)
    return SimConfig(n_channels, 1, arrival_rate=math.inf, **kw)


@pytest.mark.parametrize("x0", [1.0, 10.0, 37.5])
def test_single_user_point_channel_renewal(x0):
    cfg = saturated()
    ch = [DiscreteDistribution.point(x0)]
    st = run(cfg, ch, build_policies(cfg, ch, [0.0]))
    assert st.throughput == pytest.approx(x0 * 40 / 42, rel=0.01)
    assert st.decisions[Action.STAY] == st.decisions[Action.SWITCH] == 0


def test_single_user_point_channel_mean_delay_mode():
    cfg = saturated(mode="mean-delay", loads=(0.0,), horizon=400_000)
    ch = [DiscreteDistribution.point(10.0)]
    st = run(cfg, ch, build_policies(cfg, ch, [0.0]))
    assert st.throughput == pytest.approx(400 / 42, rel=0.01)


def test_single_user_two_point_renewal(two_point):
    # STOP on 15, else STAY: one STAY per cycle on average, each costing backoff (mean 2) + handshake (2)
    cfg = saturated(horizon=400_000)
    pol = build_policies(cfg, [two_point], [0.0])
    assert 5.0 < pol[0][0].threshold < 15.0
    st = run(cfg, [two_point], pol)
    assert st.throughput == pytest.approx(15 * 40 / (2 + 4 + 40), rel=0.02)
    assert st.decisions[Action.STAY] == pytest.approx(st.decisions[Action.STOP], rel=0.05)


def test_baseline_single_user_limit():
    chs = [DiscreteDistribution([1.0, 3.0], [0.5, 0.5]), DiscreteDistribution.point(4.0),
           DiscreteDistribution([2.0, 10.0], [0.75, 0.25])]
    cfg = saturated(3, policy_kind="baseline", horizon=300_000)
    st = run(cfg, chs, baseline_policy(cfg))
    mean_x = np.mean([d.mean for d in chs])
    assert st.throughput == pytest.approx(mean_x * 40 / 42, rel=0.02)
    assert st.decisions[Action.STAY] == 0 and st.decisions[Action.SWITCH] == 0


def test_zero_arrivals():
    chs = exponential_channels(50)
    cfg = SimConfig(5, 4, arrival_rate=0.0, horizon=5_000, warmup=100)
    st = run(cfg, chs, build_policies(cfg, chs, [0.1] * 5))
    assert st.throughput == 0 and st.generated == 0 and sum(st.decisions.values()) == 0


CONFIGS = [
    dict(mode="contention", policy_kind="nested", arrival_rate=3e-4),
    dict(mode="contention", policy_kind="baseline", arrival_rate=3e-4),
    dict(mode="mean-delay", policy_kind="nested", arrival_rate=3e-4, loads=(0.02, 0.01, 0.01, 0.05, 0.2)),
    dict(mode="contention", policy_kind="nested", arrival_rate=math.inf, sensing_order="greedy"),
    dict(mode="contention", policy_kind="nested", arrival_rate=5e-3),
]


@pytest.fixture(scope="module", params=range(len(CONFIGS)))
def traced(request):
    chs = exponential_channels(100)
    cfg = SimConfig(5, 12, horizon=15_000, warmup=1_000, seed=request.param, **CONFIGS[request.param])
    pol = build_policies(cfg, chs, [0.05] * 5)
    return cfg, chs, pol, run(cfg, chs, pol, trace=True)


def test_conservation(traced):
    _, _, _, st = traced
    assert st.generated == st.delivered + st.queued
    assert st.delivered > 0


def test_determinism(traced):
    cfg, chs, pol, st = traced
    assert run(cfg, chs, pol).same_as(st)
    other = run(cfg.replace(seed=cfg.seed + 100), chs, pol)
    assert not other.same_as(st)


def test_channel_exclusivity(traced):
    _, _, _, st = traced
    by_channel = {}
    for ch, start, end, _ in st.transmissions:
        by_channel.setdefault(ch, []).append((start, end))
    for spans in by_channel.values():
        spans.sort()
        for (_, e0), (s1, _) in zip(spans, spans[1:]):
            assert s1 >= e0 - 1e-9


def test_no_revisit(traced):
    cfg, _, pol, st = traced
    for (_, _, _, user), path in zip(st.transmissions, st.trajectories):
        assert len(set(path)) == len(path)
        if cfg.policy_kind == "nested":
            assert tuple(path) == pol[user].sequence[:len(path)]
        else:
            assert len(path) == 1


def test_stats_shapes(traced):
    cfg, _, _, st = traced
    assert st.attempt_rate.shape == (5,) and st.load_series.shape[1] == 5
    assert st.throughput == pytest.approx(st.delivered_bytes / (cfg.horizon - cfg.warmup))
    assert np.all(st.attempt_rate >= 0)


@pytest.mark.parametrize("total", [0.04, 0.08, 0.09])
def test_success_fraction_tracks_collision_model(total):
    # many light users, one transmission per packet: attempts are close to Poisson
    ch = [DiscreteDistribution.point(1.0)]
    cfg = SimConfig(1, 200, T=1, arrival_rate=total / 200, packet_payload=1.0, horizon=100_000, warmup=5_000,
                    seed=3, policy_kind="baseline")
    st = run(cfg, ch, baseline_policy(cfg))
    G = st.attempt_rate[0]
    assert 0.04 < G < 0.5
    assert st.success_fraction[0] == pytest.approx(np.exp(-2 * G), rel=0.10)


def test_mean_delay_mode_contention_delay():
    # one user that stays until it sees the rare high rate
    d = DiscreteDistribution([1.0, 100.0], [0.99, 0.01])
    G = 0.3
    cfg = SimConfig(1, 1, arrival_rate=math.inf, mode="mean-delay", loads=(G,), horizon=700_000, warmup=1_000)
    pol = build_policies(cfg, [d], [G])
    st = run(cfg, [d], pol)
    assert st.decisions[Action.STAY] > 100_000
    assert st.t_c_hat[0] == pytest.approx(contention_delay(G, 2), rel=0.02)


def test_markov_channels_run():
    chs = [birth_death([1, 2, 3], 0.8), birth_death([2, 3, 5], 0.5)]
    cfg = SimConfig(2, 5, arrival_rate=1e-3, horizon=20_000, warmup=1_000)
    st = run(cfg, chs, build_policies(cfg, chs, [0.05, 0.05]))
    assert st.generated == st.delivered + st.queued and st.delivered > 0


def test_policy_count_checked():
    chs = exponential_channels(20)
    cfg = SimConfig(5, 3, arrival_rate=1e-3)
    with pytest.raises(ValueError):
        run(cfg, chs, build_policies(cfg, chs, [0.1] * 5)[:2])
    with pytest.raises(ValueError):
        run(cfg, chs[:4], build_policies(cfg, chs, [0.1] * 5))


@pytest.mark.parametrize("kw", [
    dict(n_channels=0), dict(horizon=10, warmup=10), dict(arrival_rate=-1), dict(mode="fast"),
    dict(sensing_order="best"), dict(policy_kind="oracle"), dict(inv_zeta=0), dict(loads=(0.1,)),
])
def test_config_validation(kw):
    base = dict(n_channels=2, n_users=2)
    with pytest.raises(ValueError):
        SimConfig(**(base | kw))


def test_sequences_random_and_greedy():
    chs = exponential_channels(20)
    cfg = SimConfig(5, 30, seed=4)
    seqs = {t.sequence for t in build_policies(cfg, chs, [0.1] * 5)}
    assert len(seqs) > 5 and all(sorted(s) == list(range(5)) for s in seqs)
    greedy = build_policies(cfg.replace(sensing_order="greedy"), chs, [0.1] * 5)
    assert {t.sequence for t in greedy} == {(4, 3, 0, 2, 1)}
    assert isinstance(greedy[0], type(backward_induction(chs, [2] * 5, [2] * 5, 40)))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 10), st.floats(0.01, 10)), max_size=20),
       st.lists(st.floats(0, 250), min_size=1, max_size=10))
def test_busy_time_accounting(gaps, times):
    t, intervals = 0.0, []
    for gap, length in gaps:
        intervals.append((t + gap, t + gap + length))
        t += gap + length
    times = np.array(sorted(times))
    brute = [sum(max(0.0, min(b, x) - a) for a, b in intervals) for x in times]
    np.testing.assert_allclose(_busy_until(intervals, times), brute, atol=1e-9)
