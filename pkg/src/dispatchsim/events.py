"""Prioritized, deterministic event queue.

Pop order: ascending time, then priority (enforcement < ordinary < decision
point), then insertion order.  Decision point events are deduplicated per
timestamp.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, Optional


class Priority(IntEnum):
    LOW = 0     # decision enforcement: processed before all other same-time events
    MEDIUM = 1  # the ten ordinary events
    HIGH = 2    # decision point: processed after all other same-time events


ORDINARY_KINDS = frozenset({
    "order_request",
    "order_cancellation",
    "order_pickup",
    "order_delivery",
    "order_postponement_expiration",
    "vehicle_arrival",
    "vehicle_departure",
    "service_start",
    "service_finish",
    "departure_postponement_expiration",
    "process_wakeup",  # engine plumbing for user processes; not part of the core ten
})

KIND_PRIORITY: dict[str, Priority] = {
    **{k: Priority.MEDIUM for k in ORDINARY_KINDS},
    "decision_point": Priority.HIGH,
    "decision_enforcement": Priority.LOW,
}

EVENT_KINDS = frozenset(KIND_PRIORITY)


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    payload: dict = field(default_factory=dict)
    seq: int = 0

    @property
    def priority(self) -> Priority:
        return KIND_PRIORITY[self.kind]

    def sort_key(self) -> tuple:
        return (self.time, int(self.priority), self.seq)


class ScheduleInPastError(Exception):
    """Scheduling an event before the current simulation time is an engine bug."""


class EventQueue:
    def __init__(self) -> None:
        self._heap: list[tuple[float, int, int, Event]] = []
        self._canceled: set[int] = set()
        self._seq = 0
        self._dp_times: set[float] = set()  # decision point timestamps in the queue
        self.now = 0.0

    def __len__(self) -> int:
        return len(self._heap) - len(self._canceled)

    def schedule(self, time: float, kind: str, payload: Optional[dict] = None) -> Optional[Event]:
        """Enqueue an event; returns it, or None for a deduplicated decision point."""
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        if time < self.now:
            raise ScheduleInPastError(
                f"cannot schedule {kind} at {time} before current time {self.now}")
        if kind == "decision_point":
            if time in self._dp_times:
                return None
            self._dp_times.add(time)
        event = Event(time=time, kind=kind, payload=payload or {}, seq=self._seq)
        self._seq += 1
        heapq.heappush(self._heap, (time, int(event.priority), event.seq, event))
        return event

    def cancel(self, predicate: Callable[[Event], bool]) -> int:
        """Remove all queued events matching ``predicate``; returns the count."""
        removed = 0
        for _, _, seq, event in self._heap:
            if seq not in self._canceled and predicate(event):
                self._canceled.add(seq)
                if event.kind == "decision_point":
                    self._dp_times.discard(event.time)
                removed += 1
        return removed

    def pop(self) -> Event:
        while self._heap:
            _, _, seq, event = heapq.heappop(self._heap)
            if seq in self._canceled:
                self._canceled.discard(seq)
                continue
            self.now = event.time
            if event.kind == "decision_point":
                self._dp_times.discard(event.time)
            return event
        raise IndexError("pop from empty event queue")

    def __iter__(self):
        """Queued events in pop order (non-destructive)."""
        pending = [e for _, _, seq, e in self._heap if seq not in self._canceled]
        return iter(sorted(pending, key=Event.sort_key))

    def __bool__(self) -> bool:
        return len(self) > 0

    def events(self) -> list[Event]:
        return list(self)
