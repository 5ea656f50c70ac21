"""Ready-made scenario builders exercising the customization points.

Three domains are modeled:

* a warehouse robot fleet with LIFO loading, docking ports, and purely
  periodic decision points;
* same-day delivery from a single depot, where vehicles may wait at the
  depot for future orders and a trip is fixed once the vehicle leaves;
* meal-style courier dispatch with Euclidean travel, stochastic pickup
  readiness, and irrevocable order-to-courier assignment.
"""
from __future__ import annotations

from dataclasses import replace

from .model import Action, Location, Order, RouteUpdate, State, Vehicle, Visit
from .scenario import Config, Hooks, Scenario, TravelMetric
from .policy import greedy_policy, scripted_policy


# ---------------------------------------------------------------------------
# Worked single-vehicle example
# ---------------------------------------------------------------------------

def worked_example():
    """One vehicle, three orders arriving over time; returns (scenario, policy).

    The policy is scripted: each decision extends the same plan with the
    newest order, keeping an earliest-departure time of 10 on the first stop.
    """
    locations = {
        "l1": Location("l1", coords=(0, 0)),
        "l2": Location("l2", coords=(10, 0)),
        "l3": Location("l3", coords=(10, 5)),
        "l6": Location("l6", coords=(14, 5)),
        "l5": Location("l5", coords=(14, 11)),
        "l4": Location("l4", coords=(17, 11)),
    }
    vehicles = {"v1": Vehicle("v1", initial_location="l1", dock_approach_time=1)}
    orders = {
        "o1": Order("o1", release_time=0, pickup_location="l2",
                    delivery_location="l5", pickup_duration=2),
        "o2": Order("o2", release_time=5, pickup_location="l3",
                    delivery_location="l5"),
        "o3": Order("o3", release_time=12, pickup_location="l6",
                    delivery_location="l4"),
    }
    scenario = Scenario(locations=locations, vehicles=vehicles, orders=orders,
                        metric=TravelMetric(mode="manhattan"),
                        config=Config(triggers=frozenset({"on_order_request"})))

    stop1 = Visit("l2", pickups=("o1",), earliest_start=10)
    x1 = Action(accepted=frozenset({"o1"}), route_updates={
        "v1": RouteUpdate(next_visits=(
            stop1, Visit("l5", deliveries=("o1",))))})
    x2 = Action(accepted=frozenset({"o1", "o2"}), route_updates={
        "v1": RouteUpdate(next_visits=(
            stop1, Visit("l3", pickups=("o2",)),
            Visit("l5", deliveries=("o1", "o2"))))})
    x3 = Action(accepted=frozenset({"o1", "o2", "o3"}), route_updates={
        "v1": RouteUpdate(next_visits=(
            stop1, Visit("l3", pickups=("o2",)),
            Visit("l6", pickups=("o3",)),
            Visit("l5", deliveries=("o1", "o2")),
            Visit("l4", deliveries=("o3",))))})
    return scenario, scripted_policy([x1, x2, x3])


# ---------------------------------------------------------------------------
# Warehouse robots: LIFO stacks, docking ports, periodic decisions
# ---------------------------------------------------------------------------

def split_order(order: Order, capacity: float) -> tuple[Order, ...]:
    """Split an oversized order into transportable sub-orders.

    Sub-order ids get a ``.k`` suffix; quantities are capacity-sized chunks
    with the remainder on the last one.
    """
    if order.quantity <= capacity:
        return (order,)
    parts = []
    remaining = order.quantity
    k = 1
    while remaining > 0:
        chunk = min(capacity, remaining)
        parts.append(replace(order, id=f"{order.id}.{k}", quantity=chunk))
        remaining -= chunk
        k += 1
    return tuple(parts)


def build_warehouse_scenario(seed: int = 0) -> Scenario:
    """Two capacity-2 robots shuttling pallets between docked stations.

    Every station has a single dock port, robots stack pallets LIFO, docking
    takes one minute, and decisions are made on a fixed 10-minute cycle (no
    event-driven decision points at all).
    """
    locations = {
        "depot": Location("depot", coords=(0, 0), port_capacity=2),
        "s1": Location("s1", coords=(8, 0), port_capacity=1),
        "s2": Location("s2", coords=(0, 6), port_capacity=1),
        "s3": Location("s3", coords=(8, 6), port_capacity=1),
    }
    vehicles = {
        "r1": Vehicle("r1", initial_location="depot", capacity=2,
                      loading_rule="lifo", dock_approach_time=1),
        "r2": Vehicle("r2", initial_location="depot", capacity=2,
                      loading_rule="lifo", dock_approach_time=1),
    }
    raw_orders = [
        Order("p1", release_time=0, pickup_location="s1",
              delivery_location="s3", quantity=1, pickup_duration=2,
              delivery_duration=2),
        Order("p2", release_time=0, pickup_location="s2",
              delivery_location="s1", quantity=2, pickup_duration=2,
              delivery_duration=2),
        # quantity 5 > capacity 2: must move as three sub-orders
        Order("p3", release_time=15, pickup_location="s1",
              delivery_location="s2", quantity=5, pickup_duration=1,
              delivery_duration=1),
        Order("p4", release_time=25, pickup_location="s3",
              delivery_location="depot", quantity=1, pickup_duration=2,
              delivery_duration=2, deadline=90),
    ]
    orders = {}
    for raw in raw_orders:
        for part in split_order(raw, 2):
            orders[part.id] = part
    return Scenario(
        locations=locations, vehicles=vehicles, orders=orders,
        metric=TravelMetric(mode="manhattan"),
        config=Config(triggers=frozenset(), periodic_interval=10, seed=seed,
                      port_release="service_finish"))


# ---------------------------------------------------------------------------
# Same-day depot delivery: waiting at the depot, fixed trips
# ---------------------------------------------------------------------------

def _trip_fixing_validator(state: State, action: Action,
                           scenario: Scenario) -> list:
    """Vehicles away from the depot keep their current plan unchanged."""
    out = []
    for vid, update in action.route_updates.items():
        status = state.vehicles[vid]
        at_depot_idle = (status.origin.location == "depot"
                         and status.origin.phase() == "idle")
        if at_depot_idle:
            continue
        if update.origin is not None or update.next_visits != status.next_visits:
            out.append(f"vehicle {vid} is out on a trip; its plan is fixed "
                       f"until it returns to the depot")
    return out


def depot_policy(state: State, scenario: Scenario) -> Action:
    """Assign new orders only to vehicles idle at the depot.

    Accepted orders are appended as (depot pickup, customer delivery) to the
    idle depot vehicle with the shortest plan; if no vehicle is at the depot
    the orders are postponed for five minutes.  A freshly loaded vehicle waits
    three minutes at the depot before leaving, so late-breaking orders can
    still join the trip (the expiration of that wait imposes a new decision
    point via ``dpe_imposes_decision_point``).
    """
    WAIT = 3
    assigned = set()
    for status in state.vehicles.values():
        assigned.update(status.load)
        for visit in (status.origin, *status.next_visits):
            assigned.update(visit.pickups)
            assigned.update(visit.deliveries)
    unassigned = sorted(o for o in state.orders.open if o not in assigned)

    plans = {vid: list(status.next_visits)
             for vid, status in state.vehicles.items()}
    idle_at_depot = sorted(
        vid for vid, status in state.vehicles.items()
        if status.origin.location == "depot" and status.origin.phase() == "idle")
    postponed = {}
    changed = set()
    for oid in unassigned:
        if not idle_at_depot:
            postponed[oid] = state.time + 5
            continue
        vid = min(idle_at_depot, key=lambda v: (len(plans[v]), v))
        order = scenario.orders[oid]
        plan = plans[vid]
        # vehicles always head home after a trip so they become assignable again
        if plan and plan[-1].location == "depot" and not plan[-1].pickups:
            plan.pop()
        plan.append(Visit("depot", pickups=(oid,)))
        plan.append(Visit(order.delivery_location, deliveries=(oid,)))
        plan.append(Visit("depot"))
        changed.add(vid)
    accepted = (state.orders.open - set(postponed))
    updates = {}
    for vid in sorted(state.vehicles):
        kept = []
        for visit in plans[vid]:
            pickups = tuple(o for o in visit.pickups if o in accepted)
            deliveries = tuple(o for o in visit.deliveries if o in accepted)
            kept.append(Visit(visit.location, pickups=pickups,
                              deliveries=deliveries,
                              earliest_start=visit.earliest_start))
            if (pickups, deliveries) != (visit.pickups, visit.deliveries):
                changed.add(vid)
        plans[vid] = kept
        status = state.vehicles[vid]
        if vid in changed or tuple(kept) != status.next_visits:
            if (status.origin.location == "depot"
                    and status.origin.phase() == "idle"):
                if kept:
                    kept[0] = Visit(kept[0].location, pickups=kept[0].pickups,
                                    deliveries=kept[0].deliveries,
                                    earliest_start=state.time + WAIT)
                updates[vid] = RouteUpdate(next_visits=tuple(kept))
    return Action(accepted=frozenset(accepted), rejected=frozenset(),
                  postponed=postponed, route_updates=updates)


def build_depot_scenario(seed: int = 0) -> Scenario:
    """Same-day delivery from one depot over a street grid.

    All pickups happen at the depot.  Decisions are triggered by new orders,
    by returns to the depot, and whenever a planned waiting period at the
    depot runs out (so the dispatcher can reconsider before the vehicle
    leaves).  Plans of vehicles already out on a trip may not be modified.
    """
    locations = {"depot": Location("depot", coords=(0, 0))}
    customers = {
        "c1": (4, 3), "c2": (-2, 5), "c3": (6, -1), "c4": (-3, -4),
        "c5": (1, 7),
    }
    for cid, xy in customers.items():
        locations[cid] = Location(cid, coords=xy)
    vehicles = {
        "v1": Vehicle("v1", initial_location="depot", capacity=3),
        "v2": Vehicle("v2", initial_location="depot", capacity=3),
    }
    orders = {
        "o1": Order("o1", release_time=0, pickup_location="depot",
                    delivery_location="c1", quantity=1, deadline=60),
        "o2": Order("o2", release_time=3, pickup_location="depot",
                    delivery_location="c2", quantity=1, deadline=60),
        "o3": Order("o3", release_time=9, pickup_location="depot",
                    delivery_location="c3", quantity=1, deadline=80),
        "o4": Order("o4", release_time=14, pickup_location="depot",
                    delivery_location="c4", quantity=1, deadline=90),
        "o5": Order("o5", release_time=22, pickup_location="depot",
                    delivery_location="c5", quantity=1, deadline=100),
    }

    def arrival_trigger(state, scenario, vid):
        return state.vehicles[vid].origin.location == "depot"

    return Scenario(
        locations=locations, vehicles=vehicles, orders=orders,
        metric=TravelMetric(mode="manhattan"),
        config=Config(triggers=frozenset({"on_order_request"}),
                      dpe_imposes_decision_point=True, seed=seed),
        hooks=Hooks(arrival_trigger=arrival_trigger,
                    action_validators=(_trip_fixing_validator,)))


# ---------------------------------------------------------------------------
# Courier dispatch: Euclidean travel, stochastic pickup readiness
# ---------------------------------------------------------------------------

def _irrevocable_assignment_validator(state: State, action: Action,
                                      scenario: Scenario) -> list:
    """An order already assigned to a courier stays on that courier."""
    current = {}
    for vid, status in state.vehicles.items():
        for oid in status.load:
            current[oid] = vid
        for visit in (status.origin, *status.next_visits):
            for oid in (*visit.pickups, *visit.deliveries):
                current[oid] = vid
    planned = {}
    for vid, update in action.route_updates.items():
        visits = list(update.next_visits)
        if update.origin is not None:
            visits.append(update.origin)
        for visit in visits:
            for oid in (*visit.pickups, *visit.deliveries):
                planned[oid] = vid
    out = []
    for oid, vid in current.items():
        if oid not in state.orders.open:
            continue
        if oid in action.rejected:
            out.append(f"order {oid} was already assigned and cannot be rejected")
        target = vid if vid not in action.route_updates else planned.get(oid)
        carried = oid in state.vehicles[vid].load
        if vid in action.route_updates and not carried and planned.get(oid) is None:
            # dropped from the plan entirely
            out.append(f"order {oid} was already assigned to {vid} and cannot "
                       f"be unassigned")
        elif planned.get(oid) not in (None, vid):
            out.append(f"order {oid} cannot move from courier {vid} to "
                       f"{planned[oid]}")
    return out


def build_courier_scenario(seed: int = 7) -> Scenario:
    """Couriers collecting prepared goods with uncertain readiness.

    Travel times are Euclidean distances.  A courier arriving at a pickup
    point may have to wait: the goods become ready at the announced earliest
    pickup time plus a random delay of up to four minutes (drawn from the
    simulation's seeded generator).  Once an order has been assigned to a
    courier it may not be reassigned or rejected.
    """
    locations = {
        "hub": Location("hub", coords=(0, 0)),
        "k1": Location("k1", coords=(3, 4)),     # pickup points
        "k2": Location("k2", coords=(-5, 2)),
        "a1": Location("a1", coords=(6, 6)),     # drop-off points
        "a2": Location("a2", coords=(-7, 7)),
        "a3": Location("a3", coords=(2, -6)),
    }
    vehicles = {
        "c1": Vehicle("c1", initial_location="hub", capacity=4),
        "c2": Vehicle("c2", initial_location="hub", capacity=4),
    }
    orders = {
        "m1": Order("m1", release_time=0, pickup_location="k1",
                    delivery_location="a1", quantity=1,
                    earliest_pickup_start=6, deadline=45),
        "m2": Order("m2", release_time=2, pickup_location="k2",
                    delivery_location="a2", quantity=1,
                    earliest_pickup_start=10, deadline=50),
        "m3": Order("m3", release_time=8, pickup_location="k1",
                    delivery_location="a3", quantity=1,
                    earliest_pickup_start=15, deadline=60),
    }

    def ready_time_gate(vehicle, origin, now, rng):
        gate = now
        for oid in origin.pickups:
            announced = orders[oid].earliest_pickup_start or 0.0
            gate = max(gate, announced + rng.uniform(0.0, 4.0))
        return gate

    return Scenario(
        locations=locations, vehicles=vehicles, orders=orders,
        metric=TravelMetric(mode="euclidean"),
        config=Config(triggers=frozenset({"on_order_request"}), seed=seed),
        hooks=Hooks(pre_service_gate=ready_time_gate,
                    action_validators=(_irrevocable_assignment_validator,)))


def courier_policy(state: State, scenario: Scenario) -> Action:
    return greedy_policy(state, scenario)
