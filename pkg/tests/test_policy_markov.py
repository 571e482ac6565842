import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stayswitch.channels import DiscreteDistribution, MarkovChannel, birth_death, k_step
from stayswitch.congestion import CongestionProfile
from stayswitch.policy_iid import Action, StagePolicy, solve_threshold
from stayswitch.policy_markov import (MarkovStagePolicy, backward_induction_markov, bellman, discount_factor,
                                      round_delay, value_iteration)


def random_chain(rng, n=None):
    n = n or int(rng.integers(2, 8))
    P = rng.dirichlet(np.ones(n), size=n)
    P = 0.9 * P + 0.1 / n  # strictly positive, hence irreducible
    rewards = np.cumsum(rng.uniform(0.5, 5, n))
    return MarkovChannel(P, rewards)


def upclosed(flags):
    flags = list(flags)
    return all(b for b in flags[flags.index(True):]) if True in flags else True


def test_single_state_stops():
    ch = MarkovChannel([[1.0]], [10.0])
    for t_c in (1, 5, 30):
        res = value_iteration(ch, 0.0, t_c, 40)
        assert res.values[0] == pytest.approx(10.0)
        assert res.stop[0]


def test_two_state_hand_example():
    ch = MarkovChannel([[0.2, 0.8], [0.2, 0.8]], [0.0, 10.0])
    beta = 40 / 41
    res = value_iteration(ch, 0.0, 1, 40)
    assert res.discount == pytest.approx(beta)
    # V(1) = beta (0.2 V(1) + 0.8 * 10) gives 8 beta / (1 - 0.2 beta) = 320/33
    np.testing.assert_allclose(res.values, [320 / 33, 10.0], atol=1e-9)
    assert list(res.stop) == [False, True]
    pol = MarkovStagePolicy(0, 0, 0.0, ch.rewards, res.values, res.stop, res.continuation, res.discount, 1)
    assert pol.actions == (Action.STAY, Action.STOP)


def test_residuals_shrink_by_contraction_modulus():
    rng = np.random.default_rng(3)
    for _ in range(20):
        ch = random_chain(rng)
        t_c = int(rng.integers(1, 20))
        res = value_iteration(ch, float(rng.uniform(0, ch.rewards[-1])), t_c, 40)
        r = np.array(res.residuals)
        r = r[r > 1e-13]
        assert np.all(r[1:] <= res.discount * r[:-1] * (1 + 1e-9) + 1e-15)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t_c=st.integers(1, 30), T=st.integers(1, 200))
def test_bellman_is_contraction(seed, t_c, T):
    rng = np.random.default_rng(seed)
    ch = random_chain(rng)
    d = discount_factor(T, t_c)
    M = k_step(ch, t_c)
    stop = np.maximum(ch.rewards, rng.uniform(0, 3))
    u, v = rng.normal(0, 50, (2, ch.n_states))
    lhs = np.max(np.abs(bellman(u, stop, M, d) - bellman(v, stop, M, d)))
    assert lhs <= d * np.max(np.abs(u - v)) + 1e-12


def test_unique_fixed_point_from_two_starts():
    rng = np.random.default_rng(8)
    for _ in range(50):
        ch = random_chain(rng)
        c = float(rng.uniform(0, ch.rewards[-1]))
        t_c = int(rng.integers(1, 16))
        a = value_iteration(ch, c, t_c, 40)
        b = value_iteration(ch, c, t_c, 40, initial=np.full(ch.n_states, ch.rewards[-1]))
        np.testing.assert_allclose(a.values, b.values, atol=1e-8)


def test_tie_at_switch_value_stops():
    ch = MarkovChannel([[0.5, 0.5], [0.5, 0.5]], [4.0, 8.0])
    res = value_iteration(ch, 8.0, 5, 40)
    pol = MarkovStagePolicy(0, 0, 8.0, ch.rewards, res.values, res.stop, res.continuation, res.discount, 5)
    assert res.stop[1] and pol.decide(1) is Action.STOP
    assert pol.decide(0) is Action.SWITCH


def test_delay_rounding():
    np.testing.assert_array_equal(round_delay([0.2, 1.49, 1.5, 2.5, 13.58]), [1, 1, 2, 2, 14])
    with pytest.raises(ValueError):
        value_iteration(MarkovChannel([[1.0]], [1.0]), 0.0, 0, 40)


@pytest.mark.parametrize("G", [0.01, 0.1, 0.3, 0.5])
def test_stop_sets_up_closed(mk_channels, G):
    prof = CongestionProfile.uniform(G, 5, 40)
    table = backward_induction_markov(mk_channels, prof.t_c, prof.t_s, 40)
    for s in table.stages:
        assert upclosed(s.stop)
        assert upclosed([a is Action.STOP for a in s.actions])
        assert s.stop[-1]
    assert Action.SWITCH not in table.stages[-1].actions


def test_identical_channels_share_last_stage():
    ch = birth_death([1, 2, 4, 8], 0.6)
    table = backward_induction_markov([ch] * 3, 3, 6, 40)
    last = value_iteration(ch, 0.0, 3, 40)
    np.testing.assert_allclose(table.stages[-1].values, last.values)
    evs = [s.expected_value(ch.stationary()) for s in table.stages]
    assert evs[0] >= evs[1] - 1e-9 and evs[1] >= evs[2] - 1e-9


def test_entry_values_non_increasing_in_load(mk_channels):
    prev = None
    for G in (0.02, 0.05, 0.1, 0.3, 0.5):
        prof = CongestionProfile.uniform(G, 5, 40)
        table = backward_induction_markov(mk_channels, prof.t_c, prof.t_s, 40)
        ev = np.array([s.expected_value(mk_channels[s.channel].stationary()) for s in table.stages])
        if prev is not None:
            assert np.all(ev <= prev + 1e-9)
        prev = ev


@pytest.mark.parametrize("exact", [False, True])
def test_entry_values_non_decreasing_in_T(mk_channels, exact):
    prev = None
    for T in (10, 20, 40, 80, 160):
        prof = CongestionProfile.uniform(0.1, 5, T)
        table = backward_induction_markov(mk_channels, prof.t_c, prof.t_s, T, exact=exact)
        ev = np.array([s.expected_value(mk_channels[s.channel].stationary()) for s in table.stages])
        if prev is not None:
            assert np.all(ev >= prev - 1e-9)
        prev = ev


def iid_gap(dist, c, t_c, T, exact):
    """Threshold implied by the Markov solution of an identical-row chain."""
    res = value_iteration(dist.as_markov(), c, t_c, T, exact=exact)
    assert np.ptp(res.continuation) < 1e-9  # rows are identical, so continuation is constant
    return res


@pytest.mark.parametrize("t_c", [1, 2, 4, 8, 12, 16])
@pytest.mark.parametrize("c", [0.0, 6.0, 12.0])
def test_identical_rows_reproduce_iid_policy(two_point, t_c, c):
    lam = solve_threshold(two_point, c, t_c, 40)
    exact = iid_gap(two_point, c, t_c, 40, exact=True)
    assert exact.continuation[0] == pytest.approx(lam, rel=1e-9)
    iid = StagePolicy(0, 0, c, lam, two_point.expect_max(max(lam, c)))
    mk = MarkovStagePolicy(0, 0, c, two_point.support, exact.values, exact.stop, exact.continuation,
                           exact.discount, t_c)
    for state, x in enumerate(two_point.support):
        assert mk.decide(state) is iid.decide(x)
    # lam = d E[max(X^, lam)] moves with d at rate (lam / d) / (1 - d P(X^ < lam)) <= (lam / d) / (1 - d)
    approx = iid_gap(two_point, c, t_c, 40, exact=False)
    d_exact, d_beta = 40 / (40 + t_c), discount_factor(40, t_c)
    bound = abs(d_exact - d_beta) / min(d_exact, d_beta) / (1 - max(d_exact, d_beta))
    assert abs(approx.continuation[0] - lam) / lam <= bound + 1e-9
