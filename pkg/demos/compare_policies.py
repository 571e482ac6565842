"""Nested stopping against always-transmit, simulated over a load sweep.

A shortened version of the acceptance sweep: 3 replications and a 10000
time-unit horizon, so it finishes in well under a minute.
Run with ``python demos/compare_policies.py``.
"""

import dataclasses

from stayswitch.experiments import format_summary, mean_ci, run_experiment
from stayswitch.scenario import load_scenario

sc = load_scenario("scenarios/exponential.yaml")
sc = dataclasses.replace(sc, config=sc.config.replace(horizon=10_000.0, warmup=1_000.0))

# Each replication first finds the load equilibrium of the nested policy,
# then runs both policies with the same seed and packet arrival rate.
rows = run_experiment(sc, axis="G", grid=[0.1, 0.3, 0.5], replications=3)
print(format_summary(rows))

# Data rate is bytes per unit of time a user spends in the access cycle.
# Runs are paired, so the gap is averaged per replication.
for G in ("0.1", "0.3", "0.5"):
    rate = {(r["rep"], r["policy_kind"]): float(r["data_rate"]) for r in rows if r["value"] == G}
    m, h = mean_ci([rate[k, "nested"] - rate[k, "baseline"] for k in range(3)])
    print(f"G={G}: nested - baseline data rate = {m:.2f} ± {h:.2f}")
