"""Simulator and exact optimizer for a sensing/communication service and an
edge-inference upload service sharing one multi-carrier TDD frame."""

__version__ = "0.1.0"

from .scenario import (ComputeDelayModel, InferenceModelProfile, Positions,
                       Requirements, Scenario, ScenarioError, ScenarioParseError,
                       ScenarioValidationError, derived_constants, load_scenario,
                       save_scenario, scenario_from_dict, scenario_to_dict)
from .channel import (ChannelSet, build_channels, dl_snr_per_sc, pathloss_amplitude,
                      steering_derivative, steering_vector, two_way_amplitude,
                      ul_snr_per_sc)
from .sensing import (SensingGains, crb_theta, equivalent_fim_theta, fim_3x3,
                      gain_ratio, general_gains, point_target_gains, sensing_gains)
from .ei_service import (DelayBudget, Representation, goal_effectiveness, n_bits,
                         representation, rho_dl_star, ul_rate, upload_delay)
from .solver import (Allocation, CandidateSolve, ConvexSubproblem, SolverTolerances,
                     SubproblemSolution, build_subproblem, select_allocation,
                     solve_candidates, solve_compute_unaware, solve_problem_p,
                     solve_subproblem)
from .framesim import BatchRecord, FrameRecord, FrameTrace, simulate, trace_to_csv
from .evaluator import (DiagnosticsRow, SweepResult, TradeoffPoint, pareto_filter,
                        run_sweep, write_diagnostics_csv, write_tradeoff_csv)

__all__ = [name for name in dir() if not name.startswith("_")]
