"""State/action serialization, the policy wire protocol, and a greedy baseline.

The wire protocol is line-delimited JSON over the child's standard streams:
the engine sends ``{"type": "state", "protocol_version": 1, "data": ...}``,
the policy replies with one ``{"type": "action", ...}`` line, and the engine
sends ``{"type": "end", ...}`` at simulation end.  Absent optionals serialize
as ``null``, never omitted.  The engine resends the full state every decision
point; policies are stateless as far as the protocol is concerned.
"""
from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import time as _time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional, Union

from .model import (Action, OriginVisit, RouteUpdate, State, Vehicle,
                    VehicleStatus, Visit)

if TYPE_CHECKING:
    from .scenario import Scenario

PROTOCOL_VERSION = 1


class ProtocolError(Exception):
    """Malformed policy reply, version mismatch, timeout, or policy failure."""


# ---------------------------------------------------------------------------
# State document
# ---------------------------------------------------------------------------

def _visit_doc(visit: Visit) -> dict:
    return {
        "location": visit.location,
        "pickups": list(visit.pickups),
        "deliveries": list(visit.deliveries),
        "earliest_start": visit.earliest_start,
    }


def _order_doc(order) -> dict:
    return {
        "id": order.id,
        "release_time": order.release_time,
        "pickup_location": order.pickup_location,
        "delivery_location": order.delivery_location,
        "quantity": order.quantity,
        "earliest_pickup_start": order.earliest_pickup_start,
        "earliest_delivery_start": order.earliest_delivery_start,
        "pickup_duration": order.pickup_duration,
        "delivery_duration": order.delivery_duration,
        "deadline": order.deadline,
    }


def encode_state(state: State, scenario: "Scenario") -> dict:
    """Lossless JSON rendering of a state; vehicles and orders sorted by id."""
    vehicles = []
    for vid in sorted(state.vehicles):
        status = state.vehicles[vid]
        origin = status.origin
        vehicles.append({
            "id": vid,
            "load": list(status.load),
            "origin": {
                "location": origin.location,
                "pickups": list(origin.pickups),
                "deliveries": list(origin.deliveries),
                "arrival_time": origin.arrival_time,
                "service_start": origin.service_start,
                "service_finish": origin.service_finish,
                "departure_time": origin.departure_time,
            },
            "next_visits": [_visit_doc(v) for v in status.next_visits],
        })
    return {
        "protocol_version": PROTOCOL_VERSION,
        "time": state.time,
        "vehicles": vehicles,
        "open_orders": [_order_doc(scenario.orders[oid])
                        for oid in sorted(state.orders.open)
                        if oid in scenario.orders],
        "canceled_orders": sorted(state.orders.canceled),
    }


def decode_state(doc: dict) -> State:
    """Inverse of :func:`encode_state` (order attributes live in the scenario)."""
    vehicles = {}
    for vdoc in doc["vehicles"]:
        odoc = vdoc["origin"]
        vehicles[vdoc["id"]] = VehicleStatus(
            load=tuple(vdoc["load"]),
            origin=OriginVisit(
                location=odoc["location"],
                pickups=tuple(odoc["pickups"]),
                deliveries=tuple(odoc["deliveries"]),
                arrival_time=odoc["arrival_time"],
                service_start=odoc["service_start"],
                service_finish=odoc["service_finish"],
                departure_time=odoc["departure_time"],
            ),
            next_visits=tuple(
                Visit(location=v["location"], pickups=tuple(v["pickups"]),
                      deliveries=tuple(v["deliveries"]),
                      earliest_start=v["earliest_start"])
                for v in vdoc["next_visits"]),
        )
    from .model import OrderStatus
    return State(
        time=doc["time"],
        vehicles=vehicles,
        orders=OrderStatus(
            open=frozenset(o["id"] for o in doc["open_orders"]),
            canceled=frozenset(doc["canceled_orders"])),
    )


# ---------------------------------------------------------------------------
# Action document
# ---------------------------------------------------------------------------

def encode_action(action: Action) -> dict:
    return {
        "accepted": sorted(action.accepted),
        "rejected": sorted(action.rejected),
        "postponed": [{"order": oid, "until": action.postponed[oid]}
                      for oid in sorted(action.postponed)],
        "route_updates": [
            {
                "vehicle": vid,
                "origin": (None if action.route_updates[vid].origin is None
                           else _visit_doc(action.route_updates[vid].origin)),
                "next_visits": [_visit_doc(v)
                                for v in action.route_updates[vid].next_visits],
            }
            for vid in sorted(action.route_updates)
        ],
    }


def _decode_visit(doc, path: str, allow_est: bool = True) -> Visit:
    if not isinstance(doc, dict) or "location" not in doc:
        raise ProtocolError(f"{path}: malformed visit, missing 'location'")
    pickups = doc.get("pickups", [])
    deliveries = doc.get("deliveries", [])
    if not isinstance(pickups, list) or not isinstance(deliveries, list):
        raise ProtocolError(f"{path}: 'pickups' and 'deliveries' must be lists")
    est = doc.get("earliest_start")
    if est is not None and not allow_est:
        raise ProtocolError(f"{path}: origin visit cannot carry 'earliest_start'")
    return Visit(location=doc["location"], pickups=tuple(pickups),
                 deliveries=tuple(deliveries), earliest_start=est)


def decode_action(doc: dict) -> Action:
    """Parse an action document; raises ProtocolError naming the bad field."""
    if not isinstance(doc, dict):
        raise ProtocolError("action: expected an object")
    postponed = {}
    for i, entry in enumerate(doc.get("postponed", [])):
        path = f"action.postponed[{i}]"
        if not isinstance(entry, dict) or "order" not in entry:
            raise ProtocolError(f"{path}: missing 'order'")
        if entry.get("until") is None:
            raise ProtocolError(f"{path}: postponed order {entry['order']!r} "
                                f"has no 'until' time")
        postponed[entry["order"]] = entry["until"]
    updates = {}
    for i, entry in enumerate(doc.get("route_updates", [])):
        path = f"action.route_updates[{i}]"
        if not isinstance(entry, dict) or "vehicle" not in entry:
            raise ProtocolError(f"{path}: missing 'vehicle'")
        origin_doc = entry.get("origin")
        origin = (None if origin_doc is None
                  else _decode_visit(origin_doc, f"{path}.origin", allow_est=False))
        visits = tuple(_decode_visit(v, f"{path}.next_visits[{j}]")
                       for j, v in enumerate(entry.get("next_visits", [])))
        updates[entry["vehicle"]] = RouteUpdate(origin=origin, next_visits=visits)
    return Action(
        accepted=frozenset(doc.get("accepted", [])),
        rejected=frozenset(doc.get("rejected", [])),
        postponed=postponed,
        route_updates=updates,
    )


# ---------------------------------------------------------------------------
# Policy bindings
# ---------------------------------------------------------------------------

PolicyFn = Callable[[State, "Scenario"], Action]


@dataclass
class PolicyBinding:
    mode: str  # "in_process" | "subprocess" | "file_exchange"
    fn: Optional[PolicyFn] = None
    command: Optional[Union[str, list]] = None
    directory: Optional[str] = None
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.mode == "in_process":
            if self.fn is None:
                raise ValueError("in_process binding requires a policy function")
        elif self.mode in ("subprocess", "file_exchange"):
            if self.command is None:
                raise ValueError(f"{self.mode} binding requires a command")
            if self.timeout <= 0:
                raise ValueError("external bindings require a positive timeout")
            if self.mode == "file_exchange" and self.directory is None:
                raise ValueError("file_exchange binding requires a directory")
        else:
            raise ValueError(f"unknown policy mode {self.mode!r}")


def _message(kind: str, data=None) -> str:
    msg = {"type": kind, "protocol_version": PROTOCOL_VERSION}
    if data is not None:
        msg["data"] = data
    return json.dumps(msg, sort_keys=True)


class SubprocessPolicy:
    """Keeps the policy child alive for the run; one request/reply per decision."""

    def __init__(self, command: Union[str, list], timeout: float = 30.0) -> None:
        self.command = shlex.split(command) if isinstance(command, str) else command
        self.timeout = timeout
        self._proc: Optional[subprocess.Popen] = None
        self._buffer = b""

    def _ensure_started(self) -> None:
        if self._proc is None:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

    def _read_line(self) -> str:
        assert self._proc is not None and self._proc.stdout is not None
        fd = self._proc.stdout.fileno()
        deadline = _time.monotonic() + self.timeout
        while b"\n" not in self._buffer:
            remaining = deadline - _time.monotonic()
            if remaining <= 0:
                raise ProtocolError(
                    f"policy {self.command} timed out after {self.timeout}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                code = self._proc.poll()
                raise ProtocolError(
                    f"policy {self.command} closed its output (exit code {code})")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("utf-8")

    def decide_doc(self, state_doc: dict) -> dict:
        self._ensure_started()
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write((_message("state", state_doc) + "\n").encode())
            self._proc.stdin.flush()
        except BrokenPipeError:
            raise ProtocolError(f"policy {self.command} terminated early") from None
        line = self._read_line()
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"policy reply is not valid JSON: {line!r}") from None
        if reply.get("type") != "action":
            raise ProtocolError(f"expected an 'action' message, got: {line!r}")
        if reply.get("protocol_version") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: {reply.get('protocol_version')!r}")
        return reply.get("data", {})

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            if self._proc.stdin is not None:
                self._proc.stdin.write((_message("end") + "\n").encode())
                self._proc.stdin.flush()
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except (BrokenPipeError, subprocess.TimeoutExpired, OSError):
            self._proc.kill()
        finally:
            self._proc = None


class FileExchangePolicy:
    """Writes state.json, invokes the command, reads action.json."""

    def __init__(self, command: Union[str, list], directory: str,
                 timeout: float = 30.0) -> None:
        self.command = shlex.split(command) if isinstance(command, str) else command
        self.directory = directory
        self.timeout = timeout

    def decide_doc(self, state_doc: dict) -> dict:
        state_path = os.path.join(self.directory, "state.json")
        action_path = os.path.join(self.directory, "action.json")
        if os.path.exists(action_path):
            os.remove(action_path)
        with open(state_path, "w", encoding="utf-8") as fh:
            fh.write(_message("state", state_doc))
        try:
            result = subprocess.run(self.command, timeout=self.timeout)
        except subprocess.TimeoutExpired:
            raise ProtocolError(
                f"policy {self.command} timed out after {self.timeout}s") from None
        if result.returncode != 0:
            raise ProtocolError(
                f"policy {self.command} exited with code {result.returncode}")
        try:
            with open(action_path, encoding="utf-8") as fh:
                reply = json.load(fh)
        except FileNotFoundError:
            raise ProtocolError(f"policy produced no {action_path}") from None
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"{action_path}: invalid JSON: {exc}") from None
        if reply.get("type") != "action":
            raise ProtocolError(f"{action_path}: expected an 'action' message")
        if reply.get("protocol_version") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: {reply.get('protocol_version')!r}")
        return reply.get("data", {})

    def close(self) -> None:
        pass


class InProcessPolicy:
    def __init__(self, fn: PolicyFn) -> None:
        self.fn = fn

    def close(self) -> None:
        pass


def make_policy(binding: PolicyBinding):
    if binding.mode == "in_process":
        return InProcessPolicy(binding.fn)
    if binding.mode == "subprocess":
        return SubprocessPolicy(binding.command, binding.timeout)
    return FileExchangePolicy(binding.command, binding.directory, binding.timeout)


def invoke_policy(policy, state: State, scenario: "Scenario") -> Action:
    """Run one decision through any policy adapter or plain callable."""
    if callable(policy):
        return policy(state, scenario)
    if isinstance(policy, InProcessPolicy):
        return policy.fn(state, scenario)
    doc = encode_state(state, scenario)
    return decode_action(policy.decide_doc(doc))


def scripted_policy(actions: list) -> PolicyFn:
    """Replays a fixed list of actions, one per decision point, in order."""
    queue = list(actions)

    def policy(state: State, scenario: "Scenario") -> Action:
        if not queue:
            raise ProtocolError("scripted policy ran out of actions")
        return queue.pop(0)

    return policy


def reject_all_policy(state: State, scenario: "Scenario") -> Action:
    """Rejects every undecided order and leaves all plans untouched."""
    assigned = _assigned_orders(state)
    open_orders = state.orders.open
    return Action(accepted=frozenset(open_orders & assigned),
                  rejected=frozenset(open_orders - assigned))


# ---------------------------------------------------------------------------
# Greedy insertion baseline
# ---------------------------------------------------------------------------

def _assigned_orders(state: State) -> frozenset[str]:
    assigned: set[str] = set()
    for status in state.vehicles.values():
        assigned.update(status.load)
        for visit in (status.origin, *status.next_visits):
            assigned.update(visit.pickups)
            assigned.update(visit.deliveries)
    return frozenset(assigned)


def _pending_origin_ops(status: VehicleStatus) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Deliveries/pickups of the origin visit not yet performed."""
    origin = status.origin
    started = origin.service_start is not None
    deliveries = tuple(o for o in origin.deliveries
                       if not started or o in status.load)
    pickups = tuple(o for o in origin.pickups
                    if not (started and o in status.load))
    return deliveries, pickups


def _plan_loads_ok(vehicle: Vehicle, status: VehicleStatus,
                   visits: tuple[Visit, ...], scenario: "Scenario") -> bool:
    """Capacity and LIFO feasibility of ``visits`` given the current status."""
    odeliv, opick = _pending_origin_ops(status)
    steps = [(odeliv, opick)] + [(v.deliveries, v.pickups) for v in visits]
    if vehicle.capacity is not None:
        running = sum(scenario.orders[o].quantity for o in status.load)
        if running > vehicle.capacity + 1e-9:
            return False
        for deliveries, pickups in steps:
            running -= sum(scenario.orders[o].quantity for o in deliveries)
            running += sum(scenario.orders[o].quantity for o in pickups)
            if running > vehicle.capacity + 1e-9:
                return False
    if vehicle.loading_rule == "lifo":
        stack = list(status.load)
        for deliveries, pickups in steps:
            for oid in deliveries:
                if not stack or stack[-1] != oid:
                    return False
                stack.pop()
            stack.extend(pickups)
    return True


def _plan_travel(scenario: "Scenario", vehicle: Vehicle, origin_loc: str,
                 visits: tuple[Visit, ...], now: float) -> float:
    total = 0.0
    prev = origin_loc
    for visit in visits:
        total += scenario.travel_time(vehicle, prev, visit.location, now)
        prev = visit.location
    return total


def greedy_policy(state: State, scenario: "Scenario") -> Action:
    """Accepts every insertable open order at its cheapest feasible position.

    Orders are processed in id order; candidate positions create fresh visits
    (one pickup stop, one later delivery stop) and are ranked by added travel
    time with ties broken by (vehicle id, pickup index, delivery index).
    Orders with no feasible insertion are rejected.  Canceled orders are
    stripped from every plan.
    """
    now = state.time
    open_orders = state.orders.open
    plans: dict[str, tuple[Visit, ...]] = {}
    origin_updates: dict[str, Visit] = {}
    changed: set[str] = set()

    for vid in sorted(state.vehicles):
        status = state.vehicles[vid]
        visits = []
        for visit in status.next_visits:
            pickups = tuple(o for o in visit.pickups if o in open_orders)
            deliveries = tuple(o for o in visit.deliveries if o in open_orders)
            if (pickups, deliveries) != (visit.pickups, visit.deliveries):
                changed.add(vid)
            visits.append(Visit(location=visit.location, pickups=pickups,
                                deliveries=deliveries,
                                earliest_start=visit.earliest_start))
        plans[vid] = tuple(visits)
        origin = status.origin
        if origin.service_start is None:
            pickups = tuple(o for o in origin.pickups if o in open_orders)
            deliveries = tuple(o for o in origin.deliveries if o in open_orders)
            if (pickups, deliveries) != (origin.pickups, origin.deliveries):
                origin_updates[vid] = Visit(location=origin.location,
                                            pickups=pickups, deliveries=deliveries)
                changed.add(vid)

    assigned = _assigned_orders(state)
    accepted = set(open_orders & assigned)
    rejected: set[str] = set()

    for oid in sorted(open_orders - assigned):
        order = scenario.orders[oid]
        best = None  # (cost, vehicle id, i, j, plan)
        for vid in sorted(state.vehicles):
            vehicle = scenario.vehicles[vid]
            status = state.vehicles[vid]
            base = plans[vid]
            base_cost = _plan_travel(scenario, vehicle, status.origin.location,
                                     base, now)
            min_i = 1 if status.origin.departure_time is not None else 0
            for i in range(min_i, len(base) + 1):
                with_pickup = (base[:i]
                               + (Visit(location=order.pickup_location,
                                        pickups=(oid,)),)
                               + base[i:])
                for j in range(i + 1, len(with_pickup) + 1):
                    candidate = (with_pickup[:j]
                                 + (Visit(location=order.delivery_location,
                                          deliveries=(oid,)),)
                                 + with_pickup[j:])
                    if not _plan_loads_ok(vehicle, status, candidate, scenario):
                        continue
                    cost = _plan_travel(scenario, vehicle,
                                        status.origin.location, candidate,
                                        now) - base_cost
                    key = (cost, vid, i, j)
                    if best is None or key < best[:4]:
                        best = (cost, vid, i, j, candidate)
        if best is None:
            rejected.add(oid)
        else:
            _, vid, _, _, candidate = best
            plans[vid] = candidate
            changed.add(vid)
            accepted.add(oid)

    updates = {
        vid: RouteUpdate(origin=origin_updates.get(vid), next_visits=plans[vid])
        for vid in sorted(changed)
    }
    return Action(accepted=frozenset(accepted), rejected=frozenset(rejected),
                  postponed={}, route_updates=updates)


BUILTIN_POLICIES: dict[str, PolicyFn] = {
    "greedy": greedy_policy,
    "reject-all": reject_all_policy,
}
