"""Thresholds and branches of the nested stopping policy on IID channels.

Run with ``python demos/thresholds.py``.
"""

import numpy as np

from stayswitch import CongestionProfile, DiscreteDistribution, backward_induction, solve_threshold
from stayswitch.scenario import load_scenario

# A single channel paying 5 or 15 bytes per time unit with equal odds.
# Winning contention costs t_c = 10 on average and a transmission lasts T = 40.
two = DiscreteDistribution([5.0, 15.0], [0.5, 0.5])
lam = solve_threshold(two, 0.0, 10, 40)
print(f"lambda* with nothing to switch to: {lam:.4f}")
print("  transmit on 15, release and re-contend on 5\n")

# With a next channel worth c = 12, stopping on a bad draw now means switching.
lam = solve_threshold(two, 12.0, 10, 40)
print(f"lambda* when switching is worth 12: {lam:.4f} < 12, so 5 triggers SWITCH\n")

# The five exponential channels from the bundled scenario, visited in order.
sc = load_scenario("scenarios/exponential.yaml")
for G in (0.01, 0.05, 0.3):
    prof = CongestionProfile.uniform(G, len(sc.channels), sc.config.T)
    table = backward_induction(sc.channels, prof.t_c, prof.t_s, sc.config.T)
    print(f"per-channel load {G}: t_c = {np.round(prof.t_c, 2)}")
    print(table.to_text())

# At very light load channel 1 switches. From a per-channel load of 0.02 up
# it stays, because entering the next channel costs the busy wait there on
# top of contention.
