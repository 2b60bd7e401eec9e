"""Scheduling-aware link rating, MAC simulation and routing for wireless mesh networks."""

from .scenario import (ActiveLink, Connection, RadioParams, Scenario, ScenarioFormatError, SignalField,
                       Topology, compute_signal_field, feasible_links, generate_random_topology,
                       grid_topology, link_feasible, load_scenario, make_scenario, random_single_hop_links,
                       save_scenario)
from .contention import (ContentionGraph, EmicsFamily, MicsCapExceeded, MicsFamily, build_contention_graph,
                         can_coexist, enumerate_emics, enumerate_mics, enumerate_mics_exact,
                         enumerate_mics_heuristic)
from .iblr import LinkRatings, ack_rating, cim, p_at_least_one, rate_links, rts_rating
from .macsim import CollisionRecord, MacParams, Route, SimResult, SimStats, attribute_mics, simulate
from .routing import (FlowProblem, RoutingConfig, RoutingError, SearchResult, iar_baseline, sar_search,
                      shortest_path_baseline, solve_mcf)
from .analysis import (CorrelationReport, ExperimentResult, baseline_predictors, normalized_throughput,
                       pearson, run_routing_comparison, run_validation_batch, spearman)

__version__ = "0.1.0"
