"""Serialization codecs, the wire protocol adapters, and the greedy baseline."""
import itertools
import json
import os
import random
import sys
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from dispatchsim.engine import run_simulation
from dispatchsim.model import (Action, Location, Order, OrderStatus,
                               OriginVisit, RouteUpdate, Vehicle,
                               VehicleStatus, Visit, State, initial_state,
                               validate_state)
from dispatchsim.policy import (FileExchangePolicy, PolicyBinding,
                                ProtocolError, SubprocessPolicy, decode_action,
                                decode_state, encode_action, encode_state,
                                greedy_policy, make_policy, reject_all_policy)
from dispatchsim.reporting import trace_lines
from dispatchsim.routing import apply_action, validate_action
from dispatchsim.scenario import Scenario, TravelMetric

from helpers import grid_scenario, simple_order

HERE = os.path.dirname(__file__)
SCENARIOS = os.path.join(HERE, "..", "scenarios")


# -- codecs ---------------------------------------------------------------------

def test_encode_initial_state():
    scenario = grid_scenario([simple_order()])
    doc = encode_state(initial_state(scenario), scenario)
    assert doc["protocol_version"] == 1
    assert doc["time"] == 0.0
    assert doc["open_orders"] == []
    (vdoc,) = doc["vehicles"]
    assert vdoc["id"] == "v1"
    assert vdoc["origin"]["location"] == "g0"
    assert vdoc["origin"]["departure_time"] is None  # nulls stay explicit
    assert "departure_time" in json.dumps(doc)


def test_encode_open_order_carries_all_attributes():
    order = simple_order(quantity=2.5, deadline=99, pickup_duration=1)
    scenario = grid_scenario([order])
    state = replace(initial_state(scenario),
                    orders=OrderStatus(open=frozenset({"o1"})))
    doc = encode_state(state, scenario)
    (odoc,) = doc["open_orders"]
    assert odoc == {
        "id": "o1", "release_time": 0.0, "pickup_location": "g1",
        "delivery_location": "g2", "quantity": 2.5,
        "earliest_pickup_start": None, "earliest_delivery_start": None,
        "pickup_duration": 1, "delivery_duration": 0.0, "deadline": 99,
    }


ids = st.text(alphabet="abcdefgh", min_size=1, max_size=3)
times = st.one_of(st.none(), st.floats(min_value=0, max_value=100,
                                       allow_nan=False))


@st.composite
def states(draw):
    n_orders = draw(st.integers(0, 4))
    order_ids = [f"o{i}" for i in range(n_orders)]
    visits = st.builds(
        Visit,
        location=ids,
        pickups=st.lists(st.sampled_from(order_ids or ["ox"]),
                         max_size=2, unique=True).map(tuple),
        deliveries=st.lists(st.sampled_from(order_ids or ["ox"]),
                            max_size=2, unique=True).map(tuple),
        earliest_start=times,
    )
    vehicles = {}
    for i in range(draw(st.integers(1, 3))):
        vehicles[f"v{i}"] = VehicleStatus(
            load=tuple(draw(st.lists(st.sampled_from(order_ids or ["ox"]),
                                     max_size=2, unique=True))),
            origin=OriginVisit(
                location=draw(ids),
                pickups=(), deliveries=(),
                arrival_time=draw(st.floats(0, 100, allow_nan=False)),
                service_start=draw(times), service_finish=draw(times),
                departure_time=draw(times)),
            next_visits=tuple(draw(st.lists(visits, max_size=3))),
        )
    return State(time=draw(st.floats(0, 1000, allow_nan=False)),
                 vehicles=vehicles,
                 orders=OrderStatus(open=frozenset(order_ids)))


@st.composite
def state_scenarios(draw):
    state = draw(states())
    locations = {}
    orders = {}
    for status in state.vehicles.values():
        for visit in (status.origin, *status.next_visits):
            locations[visit.location] = Location(visit.location, coords=(0, 0))
    for oid in state.orders.open:
        locations.setdefault("pl", Location("pl", coords=(1, 0)))
        locations.setdefault("dl", Location("dl", coords=(2, 0)))
        orders[oid] = Order(oid, release_time=0, pickup_location="pl",
                            delivery_location="dl")
    scenario = Scenario(
        locations=locations,
        vehicles={vid: Vehicle(vid, initial_location=next(iter(locations)))
                  for vid in state.vehicles},
        orders=orders,
        metric=TravelMetric(mode="manhattan"))
    return state, scenario


@given(state_scenarios())
@settings(max_examples=60, deadline=None)
def test_state_roundtrip(pair):
    state, scenario = pair
    doc = encode_state(state, scenario)
    json.dumps(doc)  # must be JSON-serializable as-is
    assert decode_state(doc) == state


@given(st.dictionaries(st.sampled_from(["a", "b", "c"]),
                       st.floats(0, 50, allow_nan=False), max_size=3),
       st.lists(st.sampled_from(["x", "y", "z"]), unique=True, max_size=3))
@settings(deadline=None)
def test_action_roundtrip(postponed, accepted):
    action = Action(
        accepted=frozenset(accepted),
        rejected=frozenset({"r1"}),
        postponed=postponed,
        route_updates={"v1": RouteUpdate(
            origin=Visit("g1", pickups=("a",)),
            next_visits=(Visit("g2", deliveries=("a",), earliest_start=4),))})
    doc = encode_action(action)
    json.dumps(doc)
    assert decode_action(doc) == action


def test_decode_action_missing_until():
    doc = {"accepted": [], "rejected": [],
           "postponed": [{"order": "o1"}], "route_updates": []}
    with pytest.raises(ProtocolError, match="until"):
        decode_action(doc)


def test_decode_action_origin_cannot_carry_earliest_start():
    doc = {"route_updates": [{"vehicle": "v1",
                              "origin": {"location": "g1",
                                         "earliest_start": 5},
                              "next_visits": []}]}
    with pytest.raises(ProtocolError, match="earliest_start"):
        decode_action(doc)


def test_decode_action_malformed_visit():
    doc = {"route_updates": [{"vehicle": "v1", "origin": None,
                              "next_visits": [{"pickups": []}]}]}
    with pytest.raises(ProtocolError, match="location"):
        decode_action(doc)


# -- greedy baseline vs exhaustive oracle -----------------------------------------

def insertion_oracle(state, scenario):
    """Independent exhaustive insertion search for one unassigned order.

    Enumerates every (vehicle, pickup index, delivery index), accepts a
    candidate iff the resulting post-decision state passes validate_state,
    and ranks by (added travel, vehicle id, i, j).
    """
    from dispatchsim.policy import _assigned_orders, _plan_travel

    open_orders = state.orders.open
    unassigned = sorted(open_orders - _assigned_orders(state))
    plans = {vid: state.vehicles[vid].next_visits for vid in state.vehicles}
    accepted = set(open_orders & _assigned_orders(state))
    rejected = set()
    for oid in unassigned:
        order = scenario.orders[oid]
        best = None
        for vid in sorted(state.vehicles):
            vehicle = scenario.vehicles[vid]
            status = state.vehicles[vid]
            base = plans[vid]
            base_cost = _plan_travel(scenario, vehicle, status.origin.location,
                                     base, state.time)
            min_i = 1 if status.origin.departure_time is not None else 0
            for i in range(min_i, len(base) + 1):
                for j in range(i + 1, len(base) + 2):
                    with_p = (base[:i] + (Visit(order.pickup_location,
                                                pickups=(oid,)),) + base[i:])
                    cand = (with_p[:j] + (Visit(order.delivery_location,
                                                deliveries=(oid,)),)
                            + with_p[j:])
                    trial = state.with_vehicle(
                        vid, replace(status, next_visits=cand))
                    trial = replace(trial, orders=OrderStatus(
                        open=frozenset(accepted | {oid})))
                    if validate_state(trial, scenario):
                        continue
                    cost = _plan_travel(scenario, vehicle,
                                        status.origin.location, cand,
                                        state.time) - base_cost
                    key = (cost, vid, i, j)
                    if best is None or key < best[:4]:
                        best = (cost, vid, i, j, cand)
        if best is None:
            rejected.add(oid)
        else:
            plans[best[1]] = best[4]
            accepted.add(oid)
    return accepted, rejected, plans


def random_decision_state(rng):
    n_loc = rng.randint(3, 6)
    locations = {f"g{i}": Location(f"g{i}",
                                   coords=(rng.randint(0, 20),
                                           rng.randint(0, 20)))
                 for i in range(n_loc)}
    loc_ids = sorted(locations)
    vehicles = {}
    for i in range(rng.randint(1, 3)):
        vehicles[f"v{i}"] = Vehicle(
            f"v{i}", initial_location=rng.choice(loc_ids),
            capacity=rng.choice([None, 2, 3]),
            loading_rule=rng.choice(["none", "lifo"]))
    orders = {}
    for i in range(rng.randint(1, 6)):
        pick, deliv = rng.sample(loc_ids, 2)
        orders[f"o{i}"] = Order(f"o{i}", release_time=0, pickup_location=pick,
                                delivery_location=deliv, quantity=1)
    scenario = Scenario(locations=locations, vehicles=vehicles, orders=orders,
                        metric=TravelMetric(mode="manhattan"))
    state = replace(initial_state(scenario),
                    orders=OrderStatus(open=frozenset(orders)))
    return state, scenario


def test_greedy_matches_exhaustive_insertion_oracle():
    rng = random.Random(2024)
    for _ in range(40):
        state, scenario = random_decision_state(rng)
        action = greedy_policy(state, scenario)
        assert validate_action(state, action, scenario) == []
        accepted, rejected, plans = insertion_oracle(state, scenario)
        assert action.accepted == frozenset(accepted)
        assert action.rejected == frozenset(rejected)
        for vid, update in action.route_updates.items():
            assert update.next_visits == plans[vid]


def test_greedy_respects_capacity_and_rejects_infeasible():
    scenario = grid_scenario(
        [simple_order("o1", quantity=5)],
        vehicles={"v1": Vehicle("v1", initial_location="g0", capacity=2)})
    state = replace(initial_state(scenario),
                    orders=OrderStatus(open=frozenset({"o1"})))
    action = greedy_policy(state, scenario)
    assert action.rejected == {"o1"}


def test_reject_all_keeps_assigned_orders():
    scenario = grid_scenario([simple_order()])
    state = replace(initial_state(scenario),
                    orders=OrderStatus(open=frozenset({"o1"})))
    state = apply_action(state, Action(
        accepted=frozenset({"o1"}),
        route_updates={"v1": RouteUpdate(next_visits=(
            Visit("g1", pickups=("o1",)), Visit("g2", deliveries=("o1",))))}))
    action = reject_all_policy(state, scenario)
    assert action.accepted == {"o1"}
    assert action.rejected == frozenset()


# -- external adapters -------------------------------------------------------------

SCENARIO_PATH = os.path.join(SCENARIOS, "single_vehicle.json")
CHILD = [sys.executable, os.path.join(HERE, "external_greedy.py")]


def scenario_from_file():
    from dispatchsim.scenario import load_scenario
    return load_scenario(SCENARIO_PATH)


def test_subprocess_policy_matches_in_process_run():
    in_proc = run_simulation(scenario_from_file(), greedy_policy)
    policy = SubprocessPolicy(CHILD + [SCENARIO_PATH], timeout=30)
    external = run_simulation(scenario_from_file(), policy)
    assert trace_lines(external.history) == trace_lines(in_proc.history)


def test_file_exchange_policy_matches_in_process_run(tmp_path):
    in_proc = run_simulation(scenario_from_file(), greedy_policy)
    policy = FileExchangePolicy(CHILD + [SCENARIO_PATH, "--dir",
                                         str(tmp_path)],
                                directory=str(tmp_path), timeout=30)
    external = run_simulation(scenario_from_file(), policy)
    assert trace_lines(external.history) == trace_lines(in_proc.history)


def test_subprocess_policy_garbage_reply():
    policy = SubprocessPolicy(
        [sys.executable, "-c",
         "import sys\n"
         "sys.stdin.readline()\n"
         "print('this is not json')\n"
         "sys.stdout.flush()\n"
         "sys.stdin.readline()\n"],
        timeout=10)
    with pytest.raises(ProtocolError, match="not valid JSON"):
        run_simulation(scenario_from_file(), policy)


def test_subprocess_policy_early_exit():
    policy = SubprocessPolicy([sys.executable, "-c", "pass"], timeout=10)
    with pytest.raises(ProtocolError, match="closed its output"):
        run_simulation(scenario_from_file(), policy)


def test_subprocess_policy_timeout():
    policy = SubprocessPolicy(
        [sys.executable, "-c", "import time; time.sleep(30)"], timeout=0.3)
    with pytest.raises(ProtocolError, match="timed out"):
        run_simulation(scenario_from_file(), policy)


def test_binding_validation():
    with pytest.raises(ValueError):
        PolicyBinding(mode="in_process")
    with pytest.raises(ValueError):
        PolicyBinding(mode="subprocess")
    with pytest.raises(ValueError):
        PolicyBinding(mode="file_exchange", command="x")
    with pytest.raises(ValueError):
        PolicyBinding(mode="subprocess", command="x", timeout=0)
    with pytest.raises(ValueError):
        PolicyBinding(mode="teleport", command="x")
    binding = PolicyBinding(mode="in_process", fn=greedy_policy)
    assert make_policy(binding).fn is greedy_policy
