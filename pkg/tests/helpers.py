"""Shared scenario builders for the test suite."""
from __future__ import annotations

from dispatchsim.model import Action, Location, Order, RouteUpdate, Vehicle, Visit
from dispatchsim.scenario import Config, Hooks, Scenario, TravelMetric


def grid_scenario(orders=(), n_locations=4, vehicles=None, config=None,
                  hooks=None):
    """Locations g0..g(n-1) on a line 5 apart, Manhattan travel."""
    locations = {f"g{i}": Location(f"g{i}", coords=(5 * i, 0))
                 for i in range(n_locations)}
    if vehicles is None:
        vehicles = {"v1": Vehicle("v1", initial_location="g0")}
    return Scenario(
        locations=locations,
        vehicles=vehicles,
        orders={o.id: o for o in orders},
        metric=TravelMetric(mode="manhattan"),
        config=config or Config(),
        hooks=hooks or Hooks(),
    )


def simple_order(oid="o1", release=0.0, pickup="g1", delivery="g2", **kw):
    return Order(oid, release_time=release, pickup_location=pickup,
                 delivery_location=delivery, **kw)


def assign_all_policy(state, scenario):
    """Append each unassigned open order to vehicle v1's plan, in id order."""
    status = state.vehicles["v1"]
    assigned = set(status.load)
    for visit in (status.origin, *status.next_visits):
        assigned.update(visit.pickups)
        assigned.update(visit.deliveries)
    plan = list(status.next_visits)
    changed = False
    for oid in sorted(state.orders.open):
        if oid in assigned:
            continue
        order = scenario.orders[oid]
        plan.append(Visit(order.pickup_location, pickups=(oid,)))
        plan.append(Visit(order.delivery_location, deliveries=(oid,)))
        changed = True
    # purge canceled orders (they may still appear in the previous plan)
    open_orders = state.orders.open
    purged = []
    for visit in plan:
        pickups = tuple(o for o in visit.pickups if o in open_orders)
        deliveries = tuple(o for o in visit.deliveries if o in open_orders)
        if (pickups, deliveries) != (visit.pickups, visit.deliveries):
            changed = True
        purged.append(Visit(visit.location, pickups=pickups,
                            deliveries=deliveries,
                            earliest_start=visit.earliest_start))
    updates = {}
    if changed:
        updates["v1"] = RouteUpdate(next_visits=tuple(purged))
    return Action(accepted=frozenset(state.orders.open), route_updates=updates)
