"""Action feasibility and decision enforcement.

The engine validates each action before enforcing it; violations abort the
run in strict mode.  Enforcement itself is a pure state transformation; the
scheduling side effects (postponement expirations, restarting idle vehicles)
live in the engine.
"""
from __future__ import annotations

from dataclasses import replace
from typing import TYPE_CHECKING

from .model import Action, OriginVisit, State, validate_state

if TYPE_CHECKING:
    from .scenario import Scenario


def validate_action(state: State, action: Action, scenario: "Scenario") -> list[str]:
    """Return violations of ``action`` against ``state``; empty means feasible.

    Checks the decision partition, origin-visit immutability, the no-diversion
    rule, postponement times, and feasibility of the post-decision state.
    Scenario hooks may add problem-specific validators.
    """
    out: list[str] = []
    acc, rej = action.accepted, action.rejected
    post = frozenset(action.postponed)
    open_orders = state.orders.open

    for a, b, name in ((acc, rej, "accepted/rejected"),
                       (acc, post, "accepted/postponed"),
                       (rej, post, "rejected/postponed")):
        overlap = a & b
        if overlap:
            out.append(f"orders in both {name} sets: {sorted(overlap)}")
    decided = acc | rej | post
    missing = open_orders - decided
    if missing:
        out.append(f"no decision on open orders: {sorted(missing)}")
    unknown = decided - open_orders
    if unknown:
        out.append(f"decision on non-open orders: {sorted(unknown)}")

    for oid, until in sorted(action.postponed.items()):
        if until < state.time:
            out.append(f"order {oid} postponed until {until}, before decision "
                       f"time {state.time}")

    for vid, update in sorted(action.route_updates.items()):
        status = state.vehicles.get(vid)
        if status is None:
            out.append(f"route update for unknown vehicle {vid!r}")
            continue
        origin = status.origin
        if update.origin is not None:
            if origin.service_start is not None:
                out.append(f"vehicle {vid}: origin visit cannot be changed after "
                           f"its service started")
            elif update.origin.location != origin.location:
                out.append(f"vehicle {vid}: origin visit location cannot move from "
                           f"{origin.location} to {update.origin.location}")
        if origin.departure_time is not None:
            # En route: the destination is fixed.
            if not update.next_visits:
                out.append(f"vehicle {vid}: en-route vehicle must keep a next visit")
            elif update.next_visits[0].location != status.next_visits[0].location:
                out.append(f"vehicle {vid}: en-route destination cannot change from "
                           f"{status.next_visits[0].location} to "
                           f"{update.next_visits[0].location}")

    if out:
        return out

    # The enforcement transition clears the canceled list, so a feasible action
    # must have purged canceled orders from every plan.
    post_state = apply_action(state, action)
    post_state = replace(post_state,
                         orders=replace(post_state.orders, canceled=frozenset()))
    out.extend(validate_state(post_state, scenario))
    for validator in scenario.hooks.action_validators:
        out.extend(validator(state, action, scenario))
    return out


def apply_action(state: State, action: Action) -> State:
    """Post-decision transition: remove rejections, install updated route plans.

    A provided origin visit resets the service/departure timestamps (arrival
    time is kept); omitted vehicles and omitted origin visits are unchanged.
    The canceled list is cleared by the enclosing enforcement transition.
    """
    open_orders = state.orders.open - action.rejected
    vehicles = dict(state.vehicles)
    for vid, update in action.route_updates.items():
        status = vehicles[vid]
        origin = status.origin
        if update.origin is not None:
            origin = OriginVisit(
                location=origin.location,
                pickups=tuple(update.origin.pickups),
                deliveries=tuple(update.origin.deliveries),
                arrival_time=origin.arrival_time,
                service_start=None,
                service_finish=None,
                departure_time=None,
            )
        vehicles[vid] = replace(status, origin=origin,
                                next_visits=tuple(update.next_visits))
    return replace(state,
                   vehicles=vehicles,
                   orders=replace(state.orders, open=open_orders))
