"""Scenario reading and the greedy insertion rule.

Everything works on plain JSON-shaped dicts; the only inputs are the
scenario file (vehicle fleet + travel metric) and the state documents the
simulator sends.  Order attributes are taken from the state's open-order
list, never from the scenario, so the server stays correct when scenarios
are generated programmatically.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass


class ScenarioFileError(Exception):
    pass


@dataclass
class VehicleSpec:
    id: str
    capacity: float | None
    loading_rule: str


@dataclass
class Scenario:
    vehicles: dict[str, VehicleSpec]
    mode: str                       # "matrix" | "manhattan" | "euclidean"
    entries: dict
    coords: dict[str, tuple[float, float]]
    speed: float

    def travel(self, frm: str, to: str) -> float:
        if frm == to:
            return 0.0
        if self.mode == "matrix":
            try:
                return float(self.entries[frm][to])
            except KeyError:
                raise ScenarioFileError(
                    f"no travel time from {frm!r} to {to!r}") from None
        (x1, y1), (x2, y2) = self.coords[frm], self.coords[to]
        if self.mode == "manhattan":
            distance = abs(x1 - x2) + abs(y1 - y2)
        else:
            distance = math.dist((x1, y1), (x2, y2))
        return distance / self.speed


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioFileError(f"{path}: {exc}") from None
    vehicles = {}
    for vdoc in doc.get("vehicles", []):
        cap = vdoc.get("capacity")
        vehicles[vdoc["id"]] = VehicleSpec(
            id=vdoc["id"],
            capacity=None if cap is None else float(cap),
            loading_rule=vdoc.get("loading_rule", "none"))
    travel = doc.get("travel", {})
    mode = travel.get("mode")
    if mode not in ("matrix", "manhattan", "euclidean"):
        raise ScenarioFileError(f"{path}: unsupported travel mode {mode!r}")
    coords = {ldoc["id"]: tuple(ldoc["coords"])
              for ldoc in doc.get("locations", [])
              if ldoc.get("coords") is not None}
    return Scenario(vehicles=vehicles, mode=mode,
                    entries=travel.get("entries", {}), coords=coords,
                    speed=float(travel.get("speed", 1.0)))


# ---------------------------------------------------------------------------
# Greedy insertion (must stay decision-identical to the simulator's built-in)
# ---------------------------------------------------------------------------

def _visit(location, pickups=(), deliveries=(), earliest_start=None):
    return {"location": location, "pickups": list(pickups),
            "deliveries": list(deliveries), "earliest_start": earliest_start}


def _filtered(visit, open_ids):
    pickups = [o for o in visit["pickups"] if o in open_ids]
    deliveries = [o for o in visit["deliveries"] if o in open_ids]
    changed = (pickups != visit["pickups"]
               or deliveries != visit["deliveries"])
    return _visit(visit["location"], pickups, deliveries,
                  visit.get("earliest_start")), changed


def _pending_origin_ops(vdoc):
    origin, load = vdoc["origin"], vdoc["load"]
    started = origin["service_start"] is not None
    deliveries = [o for o in origin["deliveries"]
                  if not started or o in load]
    pickups = [o for o in origin["pickups"]
               if not (started and o in load)]
    return deliveries, pickups


def _loads_ok(spec, vdoc, visits, quantity):
    odeliv, opick = _pending_origin_ops(vdoc)
    steps = [(odeliv, opick)] + [(v["deliveries"], v["pickups"])
                                 for v in visits]
    if spec.capacity is not None:
        running = sum(quantity[o] for o in vdoc["load"])
        if running > spec.capacity + 1e-9:
            return False
        for deliveries, pickups in steps:
            running -= sum(quantity[o] for o in deliveries)
            running += sum(quantity[o] for o in pickups)
            if running > spec.capacity + 1e-9:
                return False
    if spec.loading_rule == "lifo":
        stack = list(vdoc["load"])
        for deliveries, pickups in steps:
            for oid in deliveries:
                if not stack or stack[-1] != oid:
                    return False
                stack.pop()
            stack.extend(pickups)
    return True


def _plan_travel(scenario, origin_loc, visits):
    total = 0.0
    prev = origin_loc
    for visit in visits:
        total += scenario.travel(prev, visit["location"])
        prev = visit["location"]
    return total


def decide(state: dict, scenario: Scenario) -> dict:
    """Greedy insertion over a state document; returns an action document."""
    orders = {o["id"]: o for o in state["open_orders"]}
    open_ids = set(orders)
    quantity = {oid: o["quantity"] for oid, o in orders.items()}
    by_id = sorted(state["vehicles"], key=lambda v: v["id"])

    plans, origin_updates, changed, assigned = {}, {}, set(), set()
    for vdoc in by_id:
        vid = vdoc["id"]
        assigned.update(vdoc["load"])
        for visit in (vdoc["origin"], *vdoc["next_visits"]):
            assigned.update(visit["pickups"])
            assigned.update(visit["deliveries"])
        visits = []
        for visit in vdoc["next_visits"]:
            kept, kept_changed = _filtered(visit, open_ids)
            if kept_changed:
                changed.add(vid)
            visits.append(kept)
        plans[vid] = visits
        origin = vdoc["origin"]
        if origin["service_start"] is None:
            kept, kept_changed = _filtered(origin, open_ids)
            if kept_changed:
                kept["earliest_start"] = None
                origin_updates[vid] = kept
                changed.add(vid)

    accepted = set(open_ids & assigned)
    rejected = set()
    for oid in sorted(open_ids - assigned):
        order = orders[oid]
        best = None  # (cost, vid, i, j, plan)
        for vdoc in by_id:
            vid = vdoc["id"]
            spec = scenario.vehicles[vid]
            base = plans[vid]
            origin_loc = vdoc["origin"]["location"]
            base_cost = _plan_travel(scenario, origin_loc, base)
            en_route = vdoc["origin"]["departure_time"] is not None
            min_i = 1 if en_route else 0
            for i in range(min_i, len(base) + 1):
                with_pickup = (base[:i]
                               + [_visit(order["pickup_location"],
                                         pickups=[oid])]
                               + base[i:])
                for j in range(i + 1, len(with_pickup) + 1):
                    candidate = (with_pickup[:j]
                                 + [_visit(order["delivery_location"],
                                           deliveries=[oid])]
                                 + with_pickup[j:])
                    if not _loads_ok(spec, vdoc, candidate, quantity):
                        continue
                    cost = _plan_travel(scenario, origin_loc,
                                        candidate) - base_cost
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

    return {
        "accepted": sorted(accepted),
        "rejected": sorted(rejected),
        "postponed": [],
        "route_updates": [
            {"vehicle": vid, "origin": origin_updates.get(vid),
             "next_visits": plans[vid]}
            for vid in sorted(changed)
        ],
    }
