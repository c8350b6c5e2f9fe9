"""Homogenization of heterogeneous N-player dynamic games.

Partition the players into near-homogeneous groups, average each group's
parameters, solve the resulting multi-population mean-field game by
fictitious play, copy the group policies back to the players, and certify
the expanded profile as an approximate Nash equilibrium with explicit,
non-asymptotic error bounds:

    NashConv  <=  eps_solver + eps_mf + eps_heter

where ``eps_solver`` is the solver's residual exploitability, ``eps_mf``
the finite-population mean-field error, and ``eps_heter`` the cost of
within-group parameter dispersion.  :mod:`mfghom.partition` optimizes the
grouping against exactly this total, and :mod:`mfghom.pricing_scenario`
instantiates everything for an inventory-pricing market whose constants
are available in closed form.
"""

__version__ = "0.1.0"

from ._util import CapExceeded
from .game_model import (GroupPartition, MeanFieldFlow, MeanFieldTypeGame,
                         MPMFG, NPlayerGame, ParametricFamily, Spaces,
                         StrategyProfile, build_mpmfg,
                         build_mptype_from_partition, empirical_flows,
                         expand_profile, family_to_nplayer, to_nplayer,
                         uniform_profile, vectorize_group_oracle)
from .mfg_solver import (BestResponseResult, SolveReport, agent_flow,
                         best_response, exploitability, forward_flow,
                         report_to_dict, solve_fictitious_play,
                         write_exploitability_csv)
from .nplayer_eval import (EmpiricalFlowSample, JointEvaluation,
                           SimulationResult, exact_best_response, exact_value,
                           joint_state_cap, nashconv, simulate,
                           write_flow_deviation_csv)
from .bounds import (BoundReport, ConstantTable, EpsMFBound, HeterEstimate,
                     LipschitzProfile, assemble, c_theorem_scalar,
                     constant_table, eps_heter_generic, eps_heter_parametric,
                     eps_mf_partition_corollary, eps_mf_partition_micp,
                     eps_mf_partition_vanishing, eps_mf_theorem,
                     estimate_lipschitz, flow_deviation_bound,
                     pricing_constants, representative_threshold,
                     write_bound_curves_csv)
from .partition import (PartitionSolution, kmeans, micp_objective,
                        solve_exact, solve_local, suggest_k)
from .pricing_scenario import (PricingParams, Scenario, build_n_player,
                               build_pricing_mpmfg, clearing_price,
                               heter_two_type_closed_form, load_scenario,
                               pricing_spaces, theta_lipschitz,
                               two_type_coefficients, two_type_study,
                               write_two_type_csv)

__all__ = [
    "__version__",
    "CapExceeded",
    # game_model
    "Spaces", "GroupPartition", "StrategyProfile", "MeanFieldFlow",
    "NPlayerGame", "MeanFieldTypeGame", "MPMFG", "ParametricFamily",
    "uniform_profile", "expand_profile", "empirical_flows", "to_nplayer",
    "build_mpmfg", "build_mptype_from_partition", "family_to_nplayer",
    "vectorize_group_oracle",
    # mfg_solver
    "BestResponseResult", "SolveReport", "forward_flow", "agent_flow",
    "best_response", "exploitability", "solve_fictitious_play",
    "report_to_dict", "write_exploitability_csv",
    # nplayer_eval
    "JointEvaluation", "EmpiricalFlowSample", "SimulationResult",
    "joint_state_cap", "exact_value", "exact_best_response", "nashconv",
    "simulate", "write_flow_deviation_csv",
    # bounds
    "LipschitzProfile", "ConstantTable", "HeterEstimate", "EpsMFBound",
    "BoundReport", "constant_table", "flow_deviation_bound",
    "eps_mf_theorem", "c_theorem_scalar", "eps_heter_generic",
    "eps_heter_parametric", "assemble", "pricing_constants",
    "representative_threshold", "eps_mf_partition_corollary",
    "eps_mf_partition_micp", "eps_mf_partition_vanishing",
    "estimate_lipschitz", "write_bound_curves_csv",
    # partition
    "PartitionSolution", "kmeans", "micp_objective", "solve_exact",
    "solve_local", "suggest_k",
    # pricing_scenario
    "PricingParams", "Scenario", "clearing_price", "pricing_spaces",
    "build_n_player", "build_pricing_mpmfg", "two_type_study",
    "two_type_coefficients", "theta_lipschitz",
    "heter_two_type_closed_form", "load_scenario", "write_two_type_csv",
]
