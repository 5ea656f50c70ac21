"""The discrete-event decision process: transition function and main loop.

The loop pops the next event, applies the pure transition to the state,
records the event, and then adjusts the queue (event induction): vehicle
lifecycle steps, decision points, enforcement side effects.  The engine is a
single logical thread; identical (scenario, seed, policy responses) produce
identical traces.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

from .events import Event, EventQueue
from .execution import DockResource, VehicleRuntime
from .model import (Action, OriginVisit, SimulationError, State, Visit,
                    initial_state, validate_state)
from .policy import decode_action, encode_action, encode_state, invoke_policy
from .reporting import RunHistory, state_digest
from .routing import apply_action, validate_action
from .scenario import Scenario


class FeasibilityError(SimulationError):
    """A state or action failed validation in strict mode."""

    def __init__(self, message: str, violations: Iterable[str] = ()):
        self.violations = list(violations)
        if self.violations:
            message = f"{message}: " + "; ".join(self.violations)
        super().__init__(message)


# ---------------------------------------------------------------------------
# Transition function
# ---------------------------------------------------------------------------

def transition(state: State, event: Event) -> State:
    """Apply one event to a state; pure, raises on inapplicable events.

    Only the fields named for the event kind change; everything else is
    carried over untouched.
    """
    t = event.time
    kind = event.kind
    payload = event.payload
    state = replace(state, time=t)

    if kind in ("decision_point", "order_postponement_expiration",
                "departure_postponement_expiration", "process_wakeup"):
        return state

    if kind == "order_request":
        oid = payload["order"]
        if oid in state.orders.open:
            raise SimulationError(f"order {oid} requested twice")
        return replace(state, orders=replace(
            state.orders, open=state.orders.open | {oid}))

    if kind == "order_cancellation":
        oid = payload["order"]
        if oid not in state.orders.open:
            raise SimulationError(f"cannot cancel non-open order {oid}")
        return replace(state, orders=replace(
            state.orders,
            open=state.orders.open - {oid},
            canceled=state.orders.canceled | {oid}))

    if kind == "order_pickup":
        oid, vid = payload["order"], payload["vehicle"]
        status = state.vehicles[vid]
        if status.origin.service_start is None or status.origin.service_finish is not None:
            raise SimulationError(f"vehicle {vid} is not under service")
        if oid in status.load:
            raise SimulationError(f"order {oid} already loaded on vehicle {vid}")
        return state.with_vehicle(vid, replace(status, load=status.load + (oid,)))

    if kind == "order_delivery":
        oid, vid = payload["order"], payload["vehicle"]
        status = state.vehicles[vid]
        if oid not in status.load:
            raise SimulationError(f"order {oid} is not carried by vehicle {vid}")
        new_state = state.with_vehicle(
            vid, replace(status, load=tuple(o for o in status.load if o != oid)))
        return replace(new_state, orders=replace(
            new_state.orders, open=new_state.orders.open - {oid}))

    if kind == "vehicle_arrival":
        vid = payload["vehicle"]
        status = state.vehicles[vid]
        if status.origin.departure_time is None:
            raise SimulationError(f"vehicle {vid} arrival while not en route")
        if not status.next_visits:
            raise SimulationError(f"vehicle {vid} arrival without a next visit")
        nxt = status.next_visits[0]
        origin = OriginVisit(location=nxt.location, pickups=nxt.pickups,
                             deliveries=nxt.deliveries, arrival_time=t,
                             service_start=None, service_finish=None,
                             departure_time=None)
        return state.with_vehicle(vid, replace(
            status, origin=origin, next_visits=status.next_visits[1:]))

    if kind == "service_start":
        vid = payload["vehicle"]
        status = state.vehicles[vid]
        if status.origin.departure_time is not None:
            raise SimulationError(f"vehicle {vid} service start while en route")
        if status.origin.service_start is not None:
            raise SimulationError(f"vehicle {vid} service already started")
        return state.with_vehicle(vid, replace(
            status, origin=replace(status.origin, service_start=t)))

    if kind == "service_finish":
        vid = payload["vehicle"]
        status = state.vehicles[vid]
        if status.origin.service_start is None:
            raise SimulationError(f"vehicle {vid} service finish before start")
        if status.origin.service_finish is not None:
            raise SimulationError(f"vehicle {vid} service already finished")
        return state.with_vehicle(vid, replace(
            status, origin=replace(status.origin, service_finish=t)))

    if kind == "vehicle_departure":
        vid = payload["vehicle"]
        status = state.vehicles[vid]
        if status.origin.phase() != "idle":
            raise SimulationError(f"vehicle {vid} departure while "
                                  f"{status.origin.phase()}")
        if not status.next_visits:
            raise SimulationError(f"vehicle {vid} departure without a next visit")
        return state.with_vehicle(vid, replace(
            status, origin=replace(status.origin, departure_time=t)))

    if kind == "decision_enforcement":
        action = decode_action(payload["action"])
        state = replace(state, orders=replace(state.orders, canceled=frozenset()))
        return apply_action(state, action)

    raise SimulationError(f"unknown event kind {kind!r}")


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

@dataclass
class SimulationResult:
    final_state: State
    history: RunHistory


def periodic_decision_points(interval: float):
    """Built-in process imposing decision points every ``interval`` time units."""

    def make(sim: "Simulation"):
        def proc():
            while sim.has_unfinished_orders():
                sim.request_routing()
                yield sim.now + interval
        return proc()

    return make


class Simulation:
    def __init__(self, scenario: Scenario, policy, strict: Optional[bool] = None):
        self.scenario = scenario
        self.policy = policy
        self.strict = scenario.config.strict if strict is None else strict
        self.state = initial_state(scenario)
        self.queue = EventQueue()
        self.rng = random.Random(scenario.config.seed)
        self.history = RunHistory()
        self.runtimes = {vid: VehicleRuntime(vid) for vid in scenario.vehicles}
        self.docks = {
            lid: DockResource(lid, loc.port_capacity)
            for lid, loc in scenario.locations.items()
            if loc.port_capacity is not None
        }
        self._dp_times: set[float] = set()  # decision points scheduled or popped
        self._delivered: set[str] = set()
        self._rejected: set[str] = set()
        self._canceled: set[str] = set()
        self._processes: dict[int, object] = {}
        self._next_pid = 0

        for order in sorted(scenario.orders.values(),
                            key=lambda o: (o.release_time, o.id)):
            self.queue.schedule(order.release_time, "order_request",
                                {"order": order.id})
            if order.cancel_time is not None:
                self.queue.schedule(order.cancel_time, "order_cancellation",
                                    {"order": order.id})
        if scenario.config.periodic_interval is not None:
            self.add_process(periodic_decision_points(
                scenario.config.periodic_interval))

    # -- public API --------------------------------------------------------

    @property
    def now(self) -> float:
        return self.state.time

    def has_unfinished_orders(self) -> bool:
        terminal = self._delivered | self._rejected | self._canceled
        return any(oid not in terminal for oid in self.scenario.orders)

    def add_process(self, make_generator: Callable[["Simulation"], object]) -> None:
        """Register a user process; it is resumed via queued wakeup events.

        ``make_generator(sim)`` must return a generator that yields absolute
        wakeup times; the body runs synchronously inside the engine loop.
        """
        pid = self._next_pid
        self._next_pid += 1
        self._processes[pid] = make_generator(self)
        self.queue.schedule(self.now, "process_wakeup", {"process": pid})

    def request_routing(self, time: Optional[float] = None) -> bool:
        """Impose a decision point (deduplicated per timestamp)."""
        t = self.now if time is None else time
        if t in self._dp_times:
            return False
        self._dp_times.add(t)
        self.queue.schedule(t, "decision_point", {})
        return True

    def interrupt_vehicle(self, vid: str) -> None:
        """Abort a pre-departure wait; other phases are not interruptible."""
        rt = self.runtimes[vid]
        if rt.phase == "pre_departure":
            if rt.pending_seq is not None:
                seq = rt.pending_seq
                self.queue.cancel(lambda e: e.seq == seq)
            rt.reset()
        elif rt.phase in ("en_route", "pre_service", "in_service"):
            raise SimulationError(
                f"vehicle {vid} cannot be interrupted while {rt.phase}")
        # idle_no_plan: nothing to interrupt

    def run(self, max_events: int = 1_000_000) -> SimulationResult:
        processed = 0
        while True:
            if self._end_condition():
                break
            if not self.queue:
                break
            if processed >= max_events:
                raise SimulationError(f"exceeded {max_events} events")
            event = self.queue.pop()
            processed += 1
            if self._skip(event):
                continue
            if event.kind == "decision_enforcement":
                violations = self._validate_enforcement(event)
                if violations:
                    if self.strict:
                        raise FeasibilityError(
                            f"invalid action at t={event.time}", violations)
                    self.history.violations.append(
                        {"t": event.time, "violations": violations})
                    self.request_routing()
                    continue
            self._pre_checks(event)
            self.state = transition(self.state, event)
            self._record(event)
            self._induce(event)
            if self.strict:
                violations = validate_state(self.state, self.scenario)
                if violations:
                    raise FeasibilityError(
                        f"infeasible state after {event.kind} at t={event.time}",
                        violations)
        self.history.final_state = self.state
        return SimulationResult(final_state=self.state, history=self.history)

    # -- loop internals ----------------------------------------------------

    def _end_condition(self) -> bool:
        if self.scenario.hooks.end_condition is not None:
            return self.scenario.hooks.end_condition(self.state, self)
        return not self.has_unfinished_orders()

    def _skip(self, event: Event) -> bool:
        # A scheduled cancellation can go stale if the order terminates first.
        if event.kind == "order_cancellation":
            return event.payload["order"] not in self.state.orders.open
        return False

    def _pre_checks(self, event: Event) -> None:
        if event.kind == "order_delivery":
            vid = event.payload["vehicle"]
            vehicle = self.scenario.vehicles[vid]
            if vehicle.loading_rule == "lifo" and self.strict:
                load = self.state.vehicles[vid].load
                oid = event.payload["order"]
                if not load or load[-1] != oid:
                    raise FeasibilityError(
                        f"LIFO violation: vehicle {vid} delivering {oid} which is "
                        f"not at the top of the stack {list(load)}")

    def _record(self, event: Event) -> None:
        digest = state_digest(encode_state(self.state, self.scenario))
        self.history.add(event, digest)
        if self.scenario.hooks.on_event is not None:
            self.scenario.hooks.on_event(self, event)

    def _induce(self, event: Event) -> None:
        handler = getattr(self, f"_on_{event.kind}")
        handler(event)

    # -- event handlers ----------------------------------------------------

    def _on_process_wakeup(self, event: Event) -> None:
        pid = event.payload["process"]
        gen = self._processes.get(pid)
        if gen is None:
            return
        try:
            wake_at = next(gen)
        except StopIteration:
            del self._processes[pid]
            return
        self.queue.schedule(wake_at, "process_wakeup", {"process": pid})

    def _on_order_request(self, event: Event) -> None:
        oid = event.payload["order"]
        hooks = self.scenario.hooks
        if hooks.order_request_trigger is not None:
            if hooks.order_request_trigger(self.state, self.scenario, oid):
                self.request_routing()
        elif "on_order_request" in self.scenario.config.triggers:
            self.request_routing()

    def _on_order_cancellation(self, event: Event) -> None:
        oid = event.payload["order"]
        self._canceled.add(oid)
        self.queue.cancel(lambda e: e.kind == "order_postponement_expiration"
                          and e.payload.get("order") == oid)
        if self.scenario.config.cancellation_imposes_decision_point:
            self.request_routing()

    def _on_order_postponement_expiration(self, event: Event) -> None:
        self.request_routing()

    def _on_departure_postponement_expiration(self, event: Event) -> None:
        vid = event.payload["vehicle"]
        rt = self.runtimes[vid]
        rt.pending_seq = None
        if self.scenario.config.dpe_imposes_decision_point:
            self.request_routing()
        self._schedule_departure(vid)

    def _on_vehicle_departure(self, event: Event) -> None:
        vid = event.payload["vehicle"]
        rt = self.runtimes[vid]
        rt.phase = "en_route"
        rt.pending_seq = None
        if self.scenario.config.port_release == "departure" and rt.holds_dock:
            self._release_dock(event.payload["from"], vid)
        vehicle = self.scenario.vehicles[vid]
        status = self.state.vehicles[vid]
        frm = status.origin.location
        to = status.next_visits[0].location
        delay = self.scenario.travel_time(vehicle, frm, to, self.now, self.rng)
        if self.scenario.hooks.travel_delay is not None:
            delay += self.scenario.hooks.travel_delay(vehicle, frm, to, self.now,
                                                      self.rng)
        ev = self.queue.schedule(self.now + delay, "vehicle_arrival",
                                 {"vehicle": vid, "location": to})
        rt.pending_seq = ev.seq

    def _default_gate(self, vid: str) -> float:
        origin = self.state.vehicles[vid].origin
        gate = self.now
        for oid in origin.pickups:
            order = self.scenario.orders.get(oid)
            if order is not None and order.earliest_pickup_start is not None:
                gate = max(gate, order.earliest_pickup_start)
        for oid in origin.deliveries:
            order = self.scenario.orders.get(oid)
            if order is not None and order.earliest_delivery_start is not None:
                gate = max(gate, order.earliest_delivery_start)
        return gate

    def _compute_gate(self, vid: str) -> float:
        hooks = self.scenario.hooks
        if hooks.pre_service_gate is not None:
            vehicle = self.scenario.vehicles[vid]
            origin = self.state.vehicles[vid].origin
            return max(self.now, hooks.pre_service_gate(vehicle, origin, self.now,
                                                        self.rng))
        return self._default_gate(vid)

    def _schedule_service_start(self, vid: str) -> None:
        rt = self.runtimes[vid]
        start = max(rt.ready_time, rt.gate_time)
        ev = self.queue.schedule(start, "service_start",
                                 {"vehicle": vid,
                                  "location": self.state.vehicles[vid].origin.location})
        rt.pending_seq = ev.seq

    def _on_vehicle_arrival(self, event: Event) -> None:
        vid = event.payload["vehicle"]
        rt = self.runtimes[vid]
        rt.phase = "pre_service"
        rt.pending_seq = None
        rt.gate_time = self._compute_gate(vid)
        vehicle = self.scenario.vehicles[vid]
        location = self.state.vehicles[vid].origin.location
        dock = self.docks.get(location)
        if dock is None:
            rt.ready_time = self.now + vehicle.dock_approach_time
            self._schedule_service_start(vid)
        elif dock.acquire(vid):
            rt.holds_dock = True
            rt.ready_time = self.now + vehicle.dock_approach_time
            self._schedule_service_start(vid)
        else:
            rt.waiting_dock = True
        hooks = self.scenario.hooks
        if hooks.arrival_trigger is not None:
            if hooks.arrival_trigger(self.state, self.scenario, vid):
                self.request_routing()
        elif "on_vehicle_arrival" in self.scenario.config.triggers:
            self.request_routing()

    def _release_dock(self, location: str, vid: str) -> None:
        rt = self.runtimes[vid]
        rt.holds_dock = False
        nxt = self.docks[location].release(vid)
        if nxt is not None:
            nrt = self.runtimes[nxt]
            nrt.waiting_dock = False
            nrt.holds_dock = True
            approach = self.scenario.vehicles[nxt].dock_approach_time
            nrt.ready_time = self.now + approach
            self._schedule_service_start(nxt)

    def _on_service_start(self, event: Event) -> None:
        vid = event.payload["vehicle"]
        rt = self.runtimes[vid]
        rt.phase = "in_service"
        rt.pending_seq = None
        origin = self.state.vehicles[vid].origin
        rt.service_steps.clear()
        for oid in origin.deliveries:
            rt.service_steps.append(("delivery", oid))
        for oid in origin.pickups:
            rt.service_steps.append(("pickup", oid))
        self._schedule_next_service_step(vid)

    def _schedule_next_service_step(self, vid: str) -> None:
        rt = self.runtimes[vid]
        location = self.state.vehicles[vid].origin.location
        if not rt.service_steps:
            ev = self.queue.schedule(self.now, "service_finish",
                                     {"vehicle": vid, "location": location})
            rt.pending_seq = ev.seq
            return
        step, oid = rt.service_steps.popleft()
        order = self.scenario.orders[oid]
        if step == "delivery":
            ev = self.queue.schedule(self.now + order.delivery_duration,
                                     "order_delivery",
                                     {"order": oid, "vehicle": vid})
        else:
            ev = self.queue.schedule(self.now + order.pickup_duration,
                                     "order_pickup",
                                     {"order": oid, "vehicle": vid})
        rt.pending_seq = ev.seq

    def _on_order_delivery(self, event: Event) -> None:
        self._delivered.add(event.payload["order"])
        self._schedule_next_service_step(event.payload["vehicle"])

    def _on_order_pickup(self, event: Event) -> None:
        self._schedule_next_service_step(event.payload["vehicle"])

    def _on_service_finish(self, event: Event) -> None:
        vid = event.payload["vehicle"]
        rt = self.runtimes[vid]
        rt.pending_seq = None
        if self.scenario.config.port_release == "service_finish" and rt.holds_dock:
            self._release_dock(event.payload["location"], vid)
        if "on_service_finish" in self.scenario.config.triggers:
            self.request_routing()
        self.start_execution(vid)

    def start_execution(self, vid: str) -> None:
        """Begin executing the remaining plan of an idle vehicle, if any."""
        status = self.state.vehicles[vid]
        rt = self.runtimes[vid]
        if status.origin.phase() != "idle":
            raise SimulationError(
                f"cannot start execution of vehicle {vid} while "
                f"{status.origin.phase()}")
        if not status.next_visits:
            rt.reset()
            return
        rt.phase = "pre_departure"
        est = status.next_visits[0].earliest_start
        if est is None or est <= self.now:
            self._schedule_departure(vid)
        else:
            ev = self.queue.schedule(est, "departure_postponement_expiration",
                                     {"vehicle": vid})
            rt.pending_seq = ev.seq

    def _schedule_departure(self, vid: str) -> None:
        rt = self.runtimes[vid]
        status = self.state.vehicles[vid]
        ev = self.queue.schedule(self.now, "vehicle_departure",
                                 {"vehicle": vid,
                                  "from": status.origin.location,
                                  "to": status.next_visits[0].location})
        rt.phase = "pre_departure"
        rt.pending_seq = ev.seq

    # -- routing -----------------------------------------------------------

    def _on_decision_point(self, event: Event) -> None:
        # Routing-start callback: drop every pending postponement and
        # interrupt pre-departure waits.
        self.queue.cancel(lambda e: e.kind in (
            "order_postponement_expiration", "departure_postponement_expiration"))
        for vid in sorted(self.runtimes):
            if self.runtimes[vid].phase == "pre_departure":
                self.interrupt_vehicle(vid)
        action = invoke_policy(self.policy, self.state, self.scenario)
        self.history.decisions.append(
            {"t": self.now, "action": encode_action(action)})
        self.queue.schedule(self.now + self.scenario.config.decision_latency,
                            "decision_enforcement",
                            {"action": encode_action(action)})

    def _on_decision_enforcement(self, event: Event) -> None:
        # Transition already applied the action; re-derive it for side effects.
        action = decode_action(event.payload["action"])
        for oid in sorted(action.postponed):
            until = action.postponed[oid]
            if until > self.now:
                self.queue.schedule(until, "order_postponement_expiration",
                                    {"order": oid})
        self._rejected.update(action.rejected)
        for vid in sorted(action.route_updates):
            update = action.route_updates[vid]
            rt = self.runtimes[vid]
            if update.origin is not None and rt.phase == "pre_service":
                rt.gate_time = self._compute_gate(vid)
                if rt.pending_seq is not None:
                    seq = rt.pending_seq
                    self.queue.cancel(lambda e: e.seq == seq)
                    rt.pending_seq = None
                    self._schedule_service_start(vid)
        for vid in sorted(self.state.vehicles):
            status = self.state.vehicles[vid]
            rt = self.runtimes[vid]
            if status.origin.phase() != "idle":
                continue
            if rt.phase == "pre_departure":
                if vid not in action.route_updates:
                    continue  # plan untouched: keep the current wait
                self.interrupt_vehicle(vid)
            self.start_execution(vid)

    def _validate_enforcement(self, event: Event) -> list[str]:
        action = decode_action(event.payload["action"])
        return validate_action(self.state, action, self.scenario)


def run_simulation(scenario: Scenario, policy,
                   strict: Optional[bool] = None) -> SimulationResult:
    """Convenience wrapper: build, run, and close external policy adapters."""
    sim = Simulation(scenario, policy, strict=strict)
    try:
        return sim.run()
    finally:
        close = getattr(policy, "close", None)
        if close is not None:
            close()
