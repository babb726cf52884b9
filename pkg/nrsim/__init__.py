from .admission_control import (
    AdmissionDecision,
    AdmissionPolicy,
    AdmissionRequest,
    CellState,
    admit_request,
    process_queue,
    release_connection,
)
from .core_model import AccessAttempt, ArpProfile, PlmnId, QosFlowRequest, Snssai, UeProfile, derive_access_info
from .metrics import EventLog, MetricsReport, MetricsSink
from .preventive_access import (
    apply_wait_time,
    cell_selection_check,
    paging_control_filter,
    route_paging,
    selected_plmn,
    uac_check,
)
from .random_access import RaFailure, contention_resolution, next_attempt_params, rach_round
from .scenario import ScenarioConfig, ScenarioError, apply_override, emit, load_scenario, parse_and_validate
from .sim_engine import Engine, RandomStreams, generate_traffic
from .simulation import Simulation, SimulationResult, run

__all__ = [
    "AccessAttempt",
    "AdmissionDecision",
    "AdmissionPolicy",
    "AdmissionRequest",
    "ArpProfile",
    "CellState",
    "Engine",
    "EventLog",
    "MetricsReport",
    "MetricsSink",
    "PlmnId",
    "QosFlowRequest",
    "RaFailure",
    "RandomStreams",
    "ScenarioConfig",
    "ScenarioError",
    "Simulation",
    "SimulationResult",
    "Snssai",
    "UeProfile",
    "admit_request",
    "apply_override",
    "apply_wait_time",
    "cell_selection_check",
    "contention_resolution",
    "derive_access_info",
    "emit",
    "generate_traffic",
    "load_scenario",
    "next_attempt_params",
    "paging_control_filter",
    "parse_and_validate",
    "process_queue",
    "rach_round",
    "release_connection",
    "route_paging",
    "run",
    "selected_plmn",
    "uac_check",
]
