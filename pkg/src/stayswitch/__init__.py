"""Stay-or-switch opportunistic channel access.

Optimal stopping policies for users that sense channels one at a time and
decide whether to transmit, stay and re-contend, or switch to the next
channel, together with an event-driven simulator of the resulting
multiuser system.
"""

from .channels import DiscreteDistribution, MarkovChannel, ModelError, birth_death, discretize_awgn, \
    discretize_exponential
from .congestion import CongestionProfile, contention_delay, residual_wait, success_rate, switching_delay
from .equilibrium import EquilibriumResult, equilibrium_loads, split_half_stationary
from .policy_iid import Action, Branch, PolicyTable, backward_induction, baseline_table, solve_threshold
from .policy_markov import MarkovPolicyTable, backward_induction_markov, value_iteration
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .simulator import SimConfig, SimStats, baseline_policy, build_policies, run

__version__ = "0.1.0"

__all__ = [
    "Action", "Branch", "CongestionProfile", "DiscreteDistribution", "EquilibriumResult", "MarkovChannel",
    "MarkovPolicyTable", "ModelError", "PolicyTable", "Scenario", "ScenarioError", "SimConfig", "SimStats",
    "backward_induction", "backward_induction_markov", "baseline_policy", "baseline_table", "birth_death",
    "build_policies", "contention_delay", "discretize_awgn", "discretize_exponential", "equilibrium_loads",
    "load_scenario", "parse_scenario", "residual_wait", "run", "solve_threshold", "split_half_stationary",
    "success_rate", "switching_delay", "value_iteration",
]
