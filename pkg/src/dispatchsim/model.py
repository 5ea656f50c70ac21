"""Domain types for dynamic vehicle routing simulations.

States are immutable snapshots: every transition produces a new ``State``
value, so histories can be diffed and serialized without defensive copies.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Mapping, Optional

if TYPE_CHECKING:
    from .scenario import Scenario


class SimulationError(Exception):
    """Engine-level error: an event was applied to a state it cannot apply to."""


@dataclass(frozen=True)
class Location:
    id: str
    coords: Optional[tuple[float, float]] = None
    port_capacity: Optional[int] = None  # simultaneous services; None = unlimited


@dataclass(frozen=True)
class Order:
    id: str
    release_time: float
    pickup_location: str
    delivery_location: str
    quantity: float = 0.0
    earliest_pickup_start: Optional[float] = None
    earliest_delivery_start: Optional[float] = None
    pickup_duration: float = 0.0
    delivery_duration: float = 0.0
    cancel_time: Optional[float] = None
    deadline: Optional[float] = None  # soft; consumed by metrics/policies only


@dataclass(frozen=True)
class Visit:
    """A planned stop: location plus ordered pickup/delivery lists.

    ``earliest_start`` constrains the departure *toward* this visit, not the
    arrival at it.
    """
    location: str
    pickups: tuple[str, ...] = ()
    deliveries: tuple[str, ...] = ()
    earliest_start: Optional[float] = None


@dataclass(frozen=True)
class OriginVisit:
    """The vehicle's current visit (at location) or previous one (en route).

    Carries the four lifecycle timestamps.  ``arrival_time`` is always set;
    the others stay ``None`` until the corresponding event occurs.
    """
    location: str
    pickups: tuple[str, ...] = ()
    deliveries: tuple[str, ...] = ()
    arrival_time: float = 0.0
    service_start: Optional[float] = None
    service_finish: Optional[float] = None
    departure_time: Optional[float] = None

    def phase(self) -> str:
        """One of en_route / waiting_for_service / under_service / idle."""
        if self.departure_time is not None:
            return "en_route"
        if self.service_start is None:
            return "waiting_for_service"
        if self.service_finish is None:
            return "under_service"
        return "idle"


@dataclass(frozen=True)
class Vehicle:
    id: str
    initial_location: str
    capacity: Optional[float] = None
    loading_rule: str = "none"  # "none" | "lifo"
    dock_approach_time: float = 0.0  # order-independent delay before service


@dataclass(frozen=True)
class VehicleStatus:
    load: tuple[str, ...] = ()  # carried orders, oldest first (LIFO stack bottom first)
    origin: OriginVisit = OriginVisit(location="")
    next_visits: tuple[Visit, ...] = ()


@dataclass(frozen=True)
class OrderStatus:
    open: frozenset[str] = frozenset()
    canceled: frozenset[str] = frozenset()  # canceled since the last decision point


@dataclass(frozen=True)
class State:
    time: float = 0.0
    vehicles: Mapping[str, VehicleStatus] = field(default_factory=dict)
    orders: OrderStatus = OrderStatus()

    def with_vehicle(self, vehicle_id: str, status: VehicleStatus) -> "State":
        vehicles = dict(self.vehicles)
        vehicles[vehicle_id] = status
        return replace(self, vehicles=vehicles)


@dataclass(frozen=True)
class RouteUpdate:
    """Updated plan for one vehicle; ``origin=None`` keeps the current origin visit."""
    origin: Optional[Visit] = None
    next_visits: tuple[Visit, ...] = ()


@dataclass(frozen=True)
class Action:
    accepted: frozenset[str] = frozenset()
    rejected: frozenset[str] = frozenset()
    postponed: Mapping[str, float] = field(default_factory=dict)  # order id -> resume time
    route_updates: Mapping[str, RouteUpdate] = field(default_factory=dict)


def initial_state(scenario: "Scenario") -> State:
    """All vehicles empty and idle at their initial locations, no orders released."""
    vehicles = {
        v.id: VehicleStatus(
            load=(),
            origin=OriginVisit(
                location=v.initial_location,
                arrival_time=0.0,
                service_start=0.0,
                service_finish=0.0,
                departure_time=None,
            ),
            next_visits=(),
        )
        for v in scenario.vehicles.values()
    }
    return State(time=0.0, vehicles=vehicles, orders=OrderStatus())


def _vehicle_violations(vehicle: Vehicle, status: VehicleStatus,
                        scenario: "Scenario", assignable: frozenset[str]) -> list[str]:
    out: list[str] = []
    origin = status.origin
    load = status.load
    service_started = origin.service_start is not None
    all_visits: list = [origin, *status.next_visits]

    for j, visit in enumerate(all_visits):
        if visit.location not in scenario.locations:
            out.append(f"vehicle {vehicle.id}: visit {j} references unknown location "
                       f"{visit.location!r}")
            continue
        for oid in visit.pickups:
            order = scenario.orders.get(oid)
            if order is None:
                out.append(f"vehicle {vehicle.id}: visit {j} pickup references unknown "
                           f"order {oid!r}")
            elif order.pickup_location != visit.location:
                out.append(f"vehicle {vehicle.id}: order {oid} picked up at "
                           f"{visit.location}, expected {order.pickup_location}")
        for oid in visit.deliveries:
            order = scenario.orders.get(oid)
            if order is None:
                out.append(f"vehicle {vehicle.id}: visit {j} delivery references unknown "
                           f"order {oid!r}")
            elif order.delivery_location != visit.location:
                out.append(f"vehicle {vehicle.id}: order {oid} delivered at "
                           f"{visit.location}, expected {order.delivery_location}")

    # Assigned orders must be open (or canceled-since-last-decision, transiently).
    # During the current service, orders already picked up sit both in the load and
    # in the origin pickup list, and delivered ones have left the open set.
    for oid in load:
        if oid not in assignable:
            out.append(f"vehicle {vehicle.id}: load carries non-open order {oid}")
    for j, visit in enumerate(all_visits):
        for oid in visit.pickups:
            if oid in scenario.orders and oid not in assignable:
                out.append(f"vehicle {vehicle.id}: visit {j} pickup of non-open "
                           f"order {oid}")
        for oid in visit.deliveries:
            if oid in scenario.orders and oid not in assignable:
                delivered_here = j == 0 and service_started and oid not in load
                if not delivered_here:
                    out.append(f"vehicle {vehicle.id}: visit {j} delivery of non-open "
                               f"order {oid}")

    # Once-only: pickup lists and the load are pairwise disjoint; the origin pickup
    # list may overlap the load once its service has started (already loaded).
    seen_pickups: dict[str, int] = {}
    for j, visit in enumerate(all_visits):
        for oid in visit.pickups:
            if oid in seen_pickups:
                out.append(f"vehicle {vehicle.id}: order {oid} picked up at visits "
                           f"{seen_pickups[oid]} and {j}")
            seen_pickups[oid] = j
            if oid in load and not (j == 0 and service_started):
                out.append(f"vehicle {vehicle.id}: order {oid} both in load and in "
                           f"pickup list of visit {j}")
    seen_deliveries: dict[str, int] = {}
    for j, visit in enumerate(all_visits):
        for oid in visit.deliveries:
            if oid in seen_deliveries:
                out.append(f"vehicle {vehicle.id}: order {oid} delivered at visits "
                           f"{seen_deliveries[oid]} and {j}")
            seen_deliveries[oid] = j

    # Same-vehicle: deliveries must come from the load or an earlier pickup list.
    available = set(load)
    for j, visit in enumerate(all_visits):
        for oid in visit.deliveries:
            delivered_here = j == 0 and service_started and oid not in available
            if oid not in available and not delivered_here:
                out.append(f"vehicle {vehicle.id}: order {oid} delivered at visit {j} "
                           f"without a prior pickup by this vehicle")
        available.update(visit.pickups)

    # Capacity: deliveries are unloaded before pickups are loaded at each visit,
    # so the running load peaks at end-of-visit.
    if vehicle.capacity is not None:
        running = sum(scenario.orders[oid].quantity for oid in load
                      if oid in scenario.orders)
        if running > vehicle.capacity + 1e-9:
            out.append(f"vehicle {vehicle.id}: current load {running} exceeds "
                       f"capacity {vehicle.capacity}")
        carried = set(load)
        for j, visit in enumerate(all_visits):
            for oid in visit.deliveries:
                if oid in carried and oid in scenario.orders:
                    running -= scenario.orders[oid].quantity
                    carried.discard(oid)
            for oid in visit.pickups:
                if oid not in carried and oid in scenario.orders:
                    running += scenario.orders[oid].quantity
                    carried.add(oid)
            if running > vehicle.capacity + 1e-9:
                out.append(f"vehicle {vehicle.id}: projected load {running} exceeds "
                           f"capacity {vehicle.capacity} after visit {j}")

    if vehicle.loading_rule == "lifo":
        out.extend(_lifo_violations(vehicle, status, service_started))
    return out


def _lifo_violations(vehicle: Vehicle, status: VehicleStatus,
                     service_started: bool) -> list[str]:
    """Deliveries must pop from the top of the carrying stack in list order."""
    out: list[str] = []
    stack = list(status.load)
    all_visits: list = [status.origin, *status.next_visits]
    for j, visit in enumerate(all_visits):
        deliveries = visit.deliveries
        if j == 0:
            # Orders already unloaded during the current service are skipped,
            # already loaded pickups are already on the stack.
            deliveries = tuple(o for o in deliveries if o in stack)
        for oid in deliveries:
            if not stack or stack[-1] != oid:
                out.append(f"vehicle {vehicle.id}: LIFO violation at visit {j}: "
                           f"order {oid} is not at the top of the stack")
                if oid in stack:
                    stack.remove(oid)
            else:
                stack.pop()
        pickups = visit.pickups
        if j == 0 and service_started:
            pickups = tuple(o for o in pickups if o not in status.load)
        stack.extend(pickups)
    return out


def validate_state(state: State, scenario: "Scenario") -> list[str]:
    """Return all feasibility violations of ``state``; empty list means feasible.

    Orders canceled since the last decision point may transiently remain in
    plans (the next enforcement must remove them), so the assignable universe
    is ``open`` plus ``canceled``.
    """
    out: list[str] = []
    overlap = state.orders.open & state.orders.canceled
    if overlap:
        out.append(f"orders both open and canceled: {sorted(overlap)}")
    assignable = state.orders.open | state.orders.canceled
    assigned_to: dict[str, str] = {}
    for vid in sorted(state.vehicles):
        vehicle = scenario.vehicles.get(vid)
        if vehicle is None:
            out.append(f"state references unknown vehicle {vid!r}")
            continue
        status = state.vehicles[vid]
        out.extend(_vehicle_violations(vehicle, status, scenario, assignable))
        for oid in set(status.load) | {
                o for visit in (status.origin, *status.next_visits)
                for o in (*visit.pickups, *visit.deliveries)}:
            if oid in assigned_to:
                out.append(f"order {oid} assigned to both vehicle "
                           f"{assigned_to[oid]} and vehicle {vid}")
            else:
                assigned_to[oid] = vid
    return out
