"""Scenario file format, configuration, and the travel metric.

A scenario is a single JSON document (time unit minutes by default).  All id
cross-references are resolved at load time; dangling references are load
errors naming both ids.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

from .model import Location, Order, Vehicle

FORMAT_VERSION = 1

TRIGGER_NAMES = frozenset({
    "on_order_request",
    "on_vehicle_arrival",
    "on_service_finish",
})


class ScenarioError(Exception):
    """Malformed or inconsistent scenario file."""


@dataclass(frozen=True)
class Config:
    triggers: frozenset[str] = frozenset({"on_order_request"})
    periodic_interval: Optional[float] = None
    dpe_imposes_decision_point: bool = False
    cancellation_imposes_decision_point: bool = True
    decision_latency: float = 0.0
    seed: int = 0
    strict: bool = True
    port_release: str = "service_finish"  # or "departure"
    time_unit: str = "minutes"


@dataclass
class Hooks:
    """Per-scenario customization points; all optional.

    Stochastic hooks receive the engine's seeded generator and must not use
    ambient randomness.
    """
    travel_time: Optional[Callable] = None        # (vehicle, frm, to, now, rng) -> duration
    travel_delay: Optional[Callable] = None       # stochastic extra delay after travel
    pre_service_gate: Optional[Callable] = None   # (vehicle, origin_visit, now, rng) -> time
    order_request_trigger: Optional[Callable] = None  # (state, scenario, order_id) -> bool
    arrival_trigger: Optional[Callable] = None    # (state, scenario, vehicle_id) -> bool
    action_validators: tuple[Callable, ...] = ()  # (state, action, scenario) -> [violations]
    end_condition: Optional[Callable] = None      # (state, sim) -> bool
    on_event: Optional[Callable] = None           # (sim, event) -> None, observation only


@dataclass(frozen=True)
class TravelMetric:
    mode: str  # "matrix" | "manhattan" | "euclidean"
    entries: dict = field(default_factory=dict)  # matrix mode: {from: {to: time}}
    speed: float = 1.0


@dataclass
class Scenario:
    locations: dict[str, Location]
    vehicles: dict[str, Vehicle]
    orders: dict[str, Order]
    metric: TravelMetric
    config: Config = Config()
    hooks: Hooks = field(default_factory=Hooks)

    def travel_time(self, vehicle: Vehicle, frm: str, to: str, now: float = 0.0,
                    rng=None) -> float:
        return travel_time(self, vehicle, frm, to, now, rng)


def travel_time(scenario: Scenario, vehicle: Vehicle, frm: str, to: str,
                now: float = 0.0, rng=None) -> float:
    """Travel duration between two locations for a vehicle.

    Undefined location pairs are hard errors: the metric must cover every pair
    that can appear consecutively in a plan.
    """
    if scenario.hooks.travel_time is not None:
        return scenario.hooks.travel_time(vehicle, frm, to, now, rng)
    if frm == to:
        return 0.0
    metric = scenario.metric
    if metric.mode == "matrix":
        try:
            return metric.entries[frm][to]
        except KeyError:
            raise ScenarioError(
                f"travel metric has no entry from {frm!r} to {to!r}") from None
    a = scenario.locations[frm].coords
    b = scenario.locations[to].coords
    if a is None or b is None:
        raise ScenarioError(
            f"coordinate metric requires coords on both {frm!r} and {to!r}")
    if metric.mode == "manhattan":
        dist = abs(a[0] - b[0]) + abs(a[1] - b[1])
    elif metric.mode == "euclidean":
        dist = math.hypot(a[0] - b[0], a[1] - b[1])
    else:
        raise ScenarioError(f"unknown travel metric mode {metric.mode!r}")
    return dist / metric.speed


def _require(doc: dict, key: str, path: str) -> Any:
    if key not in doc:
        raise ScenarioError(f"{path}: missing required field {key!r}")
    return doc[key]


def _opt_number(doc: dict, key: str, path: str) -> Optional[float]:
    value = doc.get(key)
    if value is None:
        return None
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ScenarioError(f"{path}.{key}: expected a number, got {value!r}")
    return float(value)


def _number(doc: dict, key: str, path: str, default: float = 0.0) -> float:
    value = _opt_number(doc, key, path)
    return default if value is None else value


def parse_scenario(doc: dict, path: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: expected an object")
    version = doc.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ScenarioError(f"{path}.format_version: unsupported version {version}")

    locations: dict[str, Location] = {}
    for i, ldoc in enumerate(_require(doc, "locations", path)):
        lpath = f"{path}.locations[{i}]"
        lid = _require(ldoc, "id", lpath)
        if lid in locations:
            raise ScenarioError(f"{lpath}: duplicate location id {lid!r}")
        coords = ldoc.get("coords")
        if coords is not None:
            coords = (float(coords[0]), float(coords[1]))
        port = ldoc.get("port_capacity")
        if port is not None and (not isinstance(port, int) or port < 1):
            raise ScenarioError(f"{lpath}.port_capacity: must be a positive integer")
        locations[lid] = Location(id=lid, coords=coords, port_capacity=port)

    vehicles: dict[str, Vehicle] = {}
    for i, vdoc in enumerate(_require(doc, "vehicles", path)):
        vpath = f"{path}.vehicles[{i}]"
        vid = _require(vdoc, "id", vpath)
        if vid in vehicles:
            raise ScenarioError(f"{vpath}: duplicate vehicle id {vid!r}")
        init = _require(vdoc, "initial_location", vpath)
        if init not in locations:
            raise ScenarioError(
                f"{vpath}: vehicle {vid!r} references unknown location {init!r}")
        rule = vdoc.get("loading_rule", "none")
        if rule not in ("none", "lifo"):
            raise ScenarioError(f"{vpath}.loading_rule: must be 'none' or 'lifo'")
        vehicles[vid] = Vehicle(
            id=vid,
            initial_location=init,
            capacity=_opt_number(vdoc, "capacity", vpath),
            loading_rule=rule,
            dock_approach_time=_number(vdoc, "dock_approach_time", vpath),
        )

    orders: dict[str, Order] = {}
    for i, odoc in enumerate(doc.get("orders", [])):
        opath = f"{path}.orders[{i}]"
        oid = _require(odoc, "id", opath)
        if oid in orders:
            raise ScenarioError(f"{opath}: duplicate order id {oid!r}")
        for key in ("pickup_location", "delivery_location"):
            loc = _require(odoc, key, opath)
            if loc not in locations:
                raise ScenarioError(
                    f"{opath}: order {oid!r} references unknown location {loc!r}")
        release = _number(odoc, "release_time", opath)
        if release < 0:
            raise ScenarioError(f"{opath}.release_time: must be nonnegative")
        orders[oid] = Order(
            id=oid,
            release_time=release,
            pickup_location=odoc["pickup_location"],
            delivery_location=odoc["delivery_location"],
            quantity=_number(odoc, "quantity", opath),
            earliest_pickup_start=_opt_number(odoc, "earliest_pickup_start", opath),
            earliest_delivery_start=_opt_number(odoc, "earliest_delivery_start", opath),
            pickup_duration=_number(odoc, "pickup_duration", opath),
            delivery_duration=_number(odoc, "delivery_duration", opath),
            cancel_time=_opt_number(odoc, "cancel_time", opath),
            deadline=_opt_number(odoc, "deadline", opath),
        )

    tdoc = _require(doc, "travel", path)
    mode = _require(tdoc, "mode", f"{path}.travel")
    if mode == "matrix":
        entries = _require(tdoc, "entries", f"{path}.travel")
        for frm, row in entries.items():
            if frm not in locations:
                raise ScenarioError(
                    f"{path}.travel.entries: unknown location {frm!r}")
            for to in row:
                if to not in locations:
                    raise ScenarioError(
                        f"{path}.travel.entries[{frm!r}]: unknown location {to!r}")
        metric = TravelMetric(mode="matrix", entries=entries)
    elif mode in ("manhattan", "euclidean"):
        metric = TravelMetric(mode=mode, speed=_number(tdoc, "speed", f"{path}.travel", 1.0))
        for lid, loc in locations.items():
            if loc.coords is None:
                raise ScenarioError(
                    f"{path}.travel: {mode} metric requires coords on location {lid!r}")
    else:
        raise ScenarioError(f"{path}.travel.mode: unknown mode {mode!r}")

    cdoc = doc.get("config", {})
    cpath = f"{path}.config"
    triggers = cdoc.get("decision_point_triggers", ["on_order_request"])
    for trig in triggers:
        if trig not in TRIGGER_NAMES:
            raise ScenarioError(f"{cpath}.decision_point_triggers: unknown trigger "
                                f"{trig!r}")
    port_release = cdoc.get("port_release", "service_finish")
    if port_release not in ("service_finish", "departure"):
        raise ScenarioError(f"{cpath}.port_release: must be 'service_finish' or "
                            f"'departure'")
    config = Config(
        triggers=frozenset(triggers),
        periodic_interval=_opt_number(cdoc, "periodic_interval", cpath),
        dpe_imposes_decision_point=bool(cdoc.get("dpe_imposes_decision_point", False)),
        cancellation_imposes_decision_point=bool(
            cdoc.get("cancellation_imposes_decision_point", True)),
        decision_latency=_number(cdoc, "decision_latency", cpath),
        seed=int(cdoc.get("seed", 0)),
        strict=bool(cdoc.get("strict", True)),
        port_release=port_release,
        time_unit=cdoc.get("time_unit", "minutes"),
    )
    return Scenario(locations=locations, vehicles=vehicles, orders=orders,
                    metric=metric, config=config)


def load_scenario(file_path: str) -> Scenario:
    try:
        with open(file_path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {file_path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{file_path}: invalid JSON: {exc}") from None
    return parse_scenario(doc, path=file_path)


def with_seed(scenario: Scenario, seed: int) -> Scenario:
    return replace(scenario, config=replace(scenario.config, seed=seed))
