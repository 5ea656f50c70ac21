"""Per-vehicle lifecycle bookkeeping and counted docking resources.

A vehicle's execution is a resumable record (phase + the event it awaits),
advanced by the engine loop; there is no concurrency.  Only the pre-departure
phase is interruptible by default: travel cannot be redirected and service
cannot be aborted.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .model import SimulationError

PHASES = ("idle_no_plan", "pre_departure", "en_route", "pre_service", "in_service")


@dataclass
class VehicleRuntime:
    """Mutable execution record for one vehicle."""
    vehicle_id: str
    phase: str = "idle_no_plan"
    pending_seq: Optional[int] = None  # seq of the event this phase awaits
    gate_time: float = 0.0             # earliest service start while in pre_service
    ready_time: float = 0.0            # docked-and-ready time (arrival/grant + approach)
    holds_dock: bool = False
    waiting_dock: bool = False
    # Remaining service steps once in service: ("delivery"|"pickup", order id).
    service_steps: deque = field(default_factory=deque)

    def reset(self) -> None:
        self.phase = "idle_no_plan"
        self.pending_seq = None
        self.gate_time = 0.0
        self.ready_time = 0.0
        self.waiting_dock = False
        self.service_steps.clear()


class DockResource:
    """Counted location resource granted strictly first-come-first-served."""

    def __init__(self, location_id: str, capacity: int) -> None:
        self.location_id = location_id
        self.capacity = capacity
        self.holders: set[str] = set()
        self.queue: deque[str] = deque()  # waiting vehicles in arrival order

    def acquire(self, vehicle_id: str) -> bool:
        """Grant immediately if a port is free and nobody arrived earlier."""
        if len(self.holders) < self.capacity and not self.queue:
            self.holders.add(vehicle_id)
            return True
        self.queue.append(vehicle_id)
        return False

    def release(self, vehicle_id: str) -> Optional[str]:
        """Free the port; returns the next granted vehicle, if any."""
        if vehicle_id not in self.holders:
            raise SimulationError(
                f"vehicle {vehicle_id} does not hold a port at {self.location_id}")
        self.holders.discard(vehicle_id)
        if self.queue and len(self.holders) < self.capacity:
            nxt = self.queue.popleft()
            self.holders.add(nxt)
            return nxt
        return None

    def forget(self, vehicle_id: str) -> None:
        if vehicle_id in self.queue:
            self.queue.remove(vehicle_id)
        self.holders.discard(vehicle_id)
