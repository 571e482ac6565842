"""Per-state decisions on Markov channels, and what the discount shortcut costs.

Run with ``python demos/markov_policy.py``.
"""

import numpy as np

from stayswitch import CongestionProfile, DiscreteDistribution, backward_induction_markov, value_iteration
from stayswitch.experiments import policy_table
from stayswitch.policy_iid import solve_threshold
from stayswitch.scenario import load_scenario

sc = load_scenario("scenarios/markov.yaml")
table = policy_table(sc)
print("birth-death channels, 5 states each, uniform load", sc.load)
print(table.to_text())

# Actions by state. STOP sets are up-closed: once a state is good enough,
# every better state is too. Channels worth less than the switch value never stop.
for s in table.stages:
    print(f"channel {s.channel + 1}:", " ".join(a.value for a in s.actions))

# A chain whose rows are all equal is an IID channel. The exact discount
# T / (T + t_c) reproduces the IID threshold; beta ** t_c drifts as t_c grows.
dist = DiscreteDistribution(sc.channels[0].rewards, sc.channels[0].stationary())
chain = dist.as_markov()
print("\n t_c   IID lambda   exact   beta")
for t_c in (1, 4, 8, 16):
    lam = solve_threshold(dist, 0.0, t_c, 40)
    exact = value_iteration(chain, 0.0, t_c, 40, exact=True).continuation[0]
    approx = value_iteration(chain, 0.0, t_c, 40).continuation[0]
    print(f"{t_c:4d} {lam:12.4f} {exact:7.4f} {approx:6.4f}")

# Raising the load lowers every stage's entry value.
for G in (0.1, 0.5):
    prof = CongestionProfile.uniform(G / 5, 5, 40)
    t = backward_induction_markov(sc.channels, prof.t_c, prof.t_s, 40)
    ev = [s.expected_value(sc.channels[s.channel].stationary()) for s in t.stages]
    print(f"total load {G}: entry values {np.round(ev, 3)}")
