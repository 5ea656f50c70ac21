"""Run history, trace serialization/replay, and summary metrics."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .events import Event
from .model import State, initial_state, validate_state
from .policy import PROTOCOL_VERSION, decode_action, encode_state
from .scenario import Scenario

TRACE_FORMAT_VERSION = 1


def state_digest(state_doc: dict) -> str:
    """Stable fingerprint of an encoded state document."""
    blob = json.dumps(state_doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class EventRecord:
    time: float
    seq: int
    kind: str
    payload: dict
    digest: str


@dataclass
class RunHistory:
    records: List[EventRecord] = field(default_factory=list)
    decisions: List[dict] = field(default_factory=list)
    violations: List[dict] = field(default_factory=list)
    final_state: Optional[State] = None

    def add(self, event: Event, digest: str) -> None:
        self.records.append(EventRecord(time=event.time, seq=event.seq,
                                        kind=event.kind, payload=event.payload,
                                        digest=digest))

    def kinds(self) -> List[str]:
        return [r.kind for r in self.records]


# ---------------------------------------------------------------------------
# Trace files (newline-delimited JSON)
# ---------------------------------------------------------------------------

def write_trace(history: RunHistory, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in trace_lines(history):
            fh.write(line + "\n")


def trace_lines(history: RunHistory) -> List[str]:
    lines = [json.dumps({"type": "meta",
                         "trace_format_version": TRACE_FORMAT_VERSION,
                         "protocol_version": PROTOCOL_VERSION},
                        sort_keys=True, separators=(",", ":"))]
    for rec in history.records:
        lines.append(json.dumps({"type": "event", "t": rec.time,
                                 "seq": rec.seq, "kind": rec.kind,
                                 "payload": rec.payload, "digest": rec.digest},
                                sort_keys=True, separators=(",", ":")))
    return lines


def read_trace(path: str) -> List[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records or records[0].get("type") != "meta":
        raise ValueError(f"{path}: missing trace meta line")
    return records[1:]


def replay_trace(records: List[dict], scenario: Scenario) -> List[str]:
    """Re-run a recorded trace from the initial state and validate it.

    Every transition is recomputed, every state and action is revalidated,
    and the recorded state digests are compared.  Returns a list of problems
    (empty means the trace is a valid execution of the scenario).
    """
    from .engine import transition
    from .routing import validate_action

    problems: List[str] = []
    state = initial_state(scenario)
    for rec in records:
        event = Event(time=rec["t"], kind=rec["kind"], payload=rec["payload"],
                      seq=rec["seq"])
        if event.kind == "decision_enforcement":
            action = decode_action(event.payload["action"])
            for v in validate_action(state, action, scenario):
                problems.append(f"t={event.time} action: {v}")
        try:
            state = transition(state, event)
        except Exception as exc:  # noqa: BLE001 - report, don't crash
            problems.append(f"t={event.time} {event.kind}: {exc}")
            continue
        for v in validate_state(state, scenario):
            problems.append(f"t={event.time} after {event.kind}: {v}")
        digest = state_digest(encode_state(state, scenario))
        if digest != rec["digest"]:
            problems.append(
                f"t={event.time} after {event.kind}: state digest mismatch "
                f"(recorded {rec['digest']}, recomputed {digest})")
    return problems


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def compute_metrics(history: RunHistory, scenario: Scenario) -> dict:
    """Summary statistics derived purely from the recorded event history."""
    delivered: Dict[str, float] = {}
    picked_up: Dict[str, float] = {}
    requested: Dict[str, float] = {}
    canceled: Dict[str, float] = {}
    distance: Dict[str, float] = {vid: 0.0 for vid in scenario.vehicles}
    phase_time: Dict[str, Dict[str, float]] = {
        vid: {"idle": 0.0, "en_route": 0.0, "waiting_for_service": 0.0,
              "under_service": 0.0}
        for vid in scenario.vehicles
    }
    # phase tracking: (phase, since)
    cursor = {vid: ("idle", 0.0) for vid in scenario.vehicles}
    end_time = history.records[-1].time if history.records else 0.0

    def advance(vid: str, new_phase: str, t: float) -> None:
        phase, since = cursor[vid]
        phase_time[vid][phase] += t - since
        cursor[vid] = (new_phase, t)

    rng = None  # metrics must not consume randomness
    for rec in history.records:
        p = rec.payload
        if rec.kind == "order_request":
            requested[p["order"]] = rec.time
        elif rec.kind == "order_pickup":
            picked_up[p["order"]] = rec.time
        elif rec.kind == "order_delivery":
            delivered[p["order"]] = rec.time
        elif rec.kind == "order_cancellation":
            canceled[p["order"]] = rec.time
        elif rec.kind == "vehicle_departure":
            vid = p["vehicle"]
            advance(vid, "en_route", rec.time)
            vehicle = scenario.vehicles[vid]
            distance[vid] += scenario.travel_time(vehicle, p["from"], p["to"],
                                                  rec.time, rng)
        elif rec.kind == "vehicle_arrival":
            advance(p["vehicle"], "waiting_for_service", rec.time)
        elif rec.kind == "service_start":
            advance(p["vehicle"], "under_service", rec.time)
        elif rec.kind == "service_finish":
            advance(p["vehicle"], "idle", rec.time)
    for vid in scenario.vehicles:
        advance(vid, "idle", end_time)

    accepted: set = set()
    rejected: set = set()
    postponements = 0
    for decision in history.decisions:
        accepted.update(decision["action"]["accepted"])
        rejected.update(decision["action"]["rejected"])
        postponements += len(decision["action"]["postponed"])

    tardiness = {}
    for oid, t in delivered.items():
        deadline = scenario.orders[oid].deadline
        if deadline is not None:
            tardiness[oid] = max(0.0, t - deadline)

    return {
        "orders": {
            "requested": len(requested),
            "accepted_ever": len(accepted),
            "rejected": sorted(rejected),
            "canceled": sorted(canceled),
            "delivered": len(delivered),
            "postponements": postponements,
        },
        "delivery_times": dict(sorted(delivered.items())),
        "tardiness": dict(sorted(tardiness.items())),
        "total_tardiness": sum(tardiness.values()),
        "vehicle_travel": dict(sorted(distance.items())),
        "fleet_travel": sum(distance.values()),
        "vehicle_phase_time": {vid: phase_time[vid]
                               for vid in sorted(phase_time)},
        "makespan": end_time,
    }
