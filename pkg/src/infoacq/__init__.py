"""Optimal dynamic information acquisition about a two-state changing world."""

__version__ = "0.1.0"

from .grid import GridFunction, make_grid
from .model import (CostSpec, Problem, discounted_path_integral, drift, experiment_cost,
                    value_bounds, virtual_flow, wait_time)
from .envelope import EnvelopeResult, chord_support, concave_envelope
from .solver import ValueBracket, bellman_step, info_value_G, solve, stopping_S
from .policy import PolicyMap, extract_policy, optimal_experiment, optimal_wait_time, residual_value
from .dynamics import (BeliefCycle, CycleOccupation, LongRunReport, Trace, classify_prior,
                       detect_cycle, ergodic_density, simulate, simulate_ensemble)
from .stationary import (CyclePayoffs, compare_cycles, cycle_payoffs, optimize_cycle, sweep_lambda,
                         symmetric_cycle_value, trap_test)
from .limit import (WaitOrConfirmPolicy, build_woc, convergence_study, longrun_interval,
                    simulate_woc, w0_closed_form)
from .portfolio import MarketSpec, belief_moments, indirect_utility, make_problem
