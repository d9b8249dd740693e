"""Joint UAV trajectory and bandwidth/power planning for multi-mode service.

Plans a repeating flight (periodic operation, average-rate demands) or a
single mission (one-time operation, throughput demands with relay
information causality), minimizing the horizon by bisection over an
alternating convex-subproblem descent, with visiting-order initializers.
"""
from .audit import AuditReport, audit_plan
from .channel import channel_to_noise, rate, sca_coefficients, sca_lower_bound
from .optimizer import (BcdConfig, BisectionConfig, InfeasibleTrajectoryError,
                        MinimizeResult, StructurallyInfeasibleError, bcd_fixed_T,
                        minimize_completion_time, minimize_period, structural_load)
from .routing import (PrecedencePair, Tour, Waypoints, build_initial_trajectory,
                      circle_trajectory, hover_allocation,
                      optimize_waypoints_fixed_order, plan_route,
                      radius_bisection, solve_pdp, solve_tsp, tour_length)
from .scenario import (GroundUser, RadioParams, Role, Scenario, ScenarioError,
                       ScenarioParseError, load_scenario)
from .subproblems import (DiscretePlan, PlanEvaluation, SolveReport,
                          SubproblemError, evaluate_plan, greedy_causal,
                          solve_alloc_onetime, solve_alloc_periodic,
                          solve_traj_onetime, solve_traj_periodic)

__all__ = [name for name in dir() if not name.startswith("_")]
