"""picomesh: frame-level simulator and scheduling library for multi-hop
MU-MIMO mmWave picocell networks.

Layers, bottom up: `channel` (link states, pathloss, fading, beamforming,
rates), `topology` (cell drops and the frozen network graph), `binprog`
(exact 0/1 linear program solver), `scheduler` (back-pressure weights and
per-frame link activation under three spatial-reuse models), `queues`
(per-node per-flow backlog recursion), `congestion` (utility-driven source
admission), `harness` (frame loop, campaigns, CSV emission), `cli`.
"""

from .binprog import (BinaryProgram, Solution, dumps_program, loads_program,
                      solve_branch_and_bound, solve_exhaustive)
from .channel import (DEFAULT_CHANNEL, DEFAULT_RADIOS, ChannelParams,
                      LinkChannel, LinkState, NodeClass, RadioProfile,
                      beamform_gain, link_rate_bits, sample_fading_matrix,
                      sample_link_channel, sample_link_state,
                      sample_pathloss_db, state_probabilities)
from .congestion import (AdmissionState, Linear, ProportionalFair, ScaledLog,
                         Utility, make_admission, make_utility, update_rates,
                         utility_of_rates)
from .harness import (CampaignSummary, ConfigError, MetricsLog, RunRecord,
                      SimConfig, config_from_dict, config_to_dict,
                      desk_profile, load_config, paper_profile, run_campaign,
                      run_single)
from .queues import (ContractViolation, apply_frame, conservation_audit,
                     destination_mask, make_queues, sample_arrivals)
from .scheduler import (ConstraintModel, LinkWeight, Schedule, WeightTable,
                        build_mwdbsg_program, schedule_frame, schedule_oracle,
                        select_flows_and_xi)
from .topology import (DropConfig, DropGenerationError, FlowSpec, Link,
                       NetworkGraph, Node, generate_drop, load_graph,
                       save_graph, validate_graph)

__version__ = "0.1.0"

__all__ = [
    "BinaryProgram", "Solution", "dumps_program", "loads_program",
    "solve_branch_and_bound", "solve_exhaustive",
    "DEFAULT_CHANNEL", "DEFAULT_RADIOS", "ChannelParams", "LinkChannel",
    "LinkState", "NodeClass", "RadioProfile", "beamform_gain",
    "link_rate_bits", "sample_fading_matrix", "sample_link_channel",
    "sample_link_state", "sample_pathloss_db", "state_probabilities",
    "AdmissionState", "Linear", "ProportionalFair", "ScaledLog", "Utility",
    "make_admission", "make_utility", "update_rates", "utility_of_rates",
    "CampaignSummary", "ConfigError", "MetricsLog", "RunRecord", "SimConfig",
    "config_from_dict", "config_to_dict", "desk_profile", "load_config",
    "paper_profile", "run_campaign", "run_single",
    "ContractViolation", "apply_frame", "conservation_audit",
    "destination_mask", "make_queues", "sample_arrivals",
    "ConstraintModel", "LinkWeight", "Schedule", "WeightTable",
    "build_mwdbsg_program", "schedule_frame", "schedule_oracle",
    "select_flows_and_xi",
    "DropConfig", "DropGenerationError", "FlowSpec", "Link", "NetworkGraph",
    "Node", "generate_drop", "load_graph", "save_graph", "validate_graph",
    "__version__",
]
