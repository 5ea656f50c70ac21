"""Deterministic discrete-event simulator for dynamic pickup-and-delivery
dispatching with pluggable routing policies."""

from .engine import (FeasibilityError, Simulation, SimulationResult,
                     run_simulation, transition)
from .events import Event, EventQueue, Priority, ScheduleInPastError
from .model import (Action, Location, Order, OriginVisit, Order, RouteUpdate,
                    SimulationError, State, Vehicle, VehicleStatus, Visit,
                    initial_state, validate_state)
from .policy import (PROTOCOL_VERSION, InProcessPolicy, PolicyBinding,
                     ProtocolError, SubprocessPolicy, FileExchangePolicy,
                     decode_action, decode_state, encode_action, encode_state,
                     greedy_policy, make_policy, reject_all_policy,
                     scripted_policy)
from .reporting import (RunHistory, compute_metrics, read_trace, replay_trace,
                        trace_lines, write_trace)
from .routing import apply_action, validate_action
from .scenario import (Config, Hooks, Scenario, ScenarioError, TravelMetric,
                       load_scenario, parse_scenario, with_seed)

__all__ = [
    "Action", "Config", "Event", "EventQueue", "FeasibilityError",
    "FileExchangePolicy", "Hooks", "InProcessPolicy", "Location", "Order",
    "OriginVisit", "PolicyBinding", "Priority", "PROTOCOL_VERSION",
    "ProtocolError", "RouteUpdate", "RunHistory", "Scenario", "ScenarioError",
    "ScheduleInPastError", "Simulation", "SimulationError", "SimulationResult",
    "State", "SubprocessPolicy", "TravelMetric", "Vehicle", "VehicleStatus",
    "Visit", "apply_action", "compute_metrics", "decode_action",
    "decode_state", "encode_action", "encode_state", "greedy_policy",
    "initial_state", "load_scenario", "make_policy", "parse_scenario",
    "read_trace", "reject_all_policy", "replay_trace", "run_simulation",
    "scripted_policy", "trace_lines", "transition", "validate_action",
    "validate_state", "with_seed", "write_trace",
]
