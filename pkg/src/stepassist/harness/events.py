"""Append-only event log shared by replay and serve.

Every pipeline action lands here as a typed event with a non-decreasing
timestamp, so a run can be replayed, diffed bit-for-bit, and scored offline.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterator

SAMPLED_PAIR = "sampled_pair"
KEY_MOMENT = "key_moment"
REASONED = "reasoned"
TRANSITION = "transition"
DELIVERY = "delivery"
ERROR = "error"

EVENT_KINDS = (SAMPLED_PAIR, KEY_MOMENT, REASONED, TRANSITION, DELIVERY, ERROR)


@dataclass(frozen=True)
class Event:
    kind: str
    t: float
    data: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


class EventLog:
    """Ordered event collection with JSON round-tripping."""

    def __init__(self, events: list[Event] | None = None):
        self.events: list[Event] = []
        for ev in events or []:
            self.append(ev.kind, ev.t, **ev.data)

    def append(self, kind: str, t: float, **data: Any) -> Event:
        if self.events and t < self.events[-1].t:
            raise ValueError(
                f"event timestamps must be non-decreasing: {t} after {self.events[-1].t}"
            )
        ev = Event(kind=kind, t=t, data=data)
        self.events.append(ev)
        return ev

    def extend(self, events: Iterator[Event] | list[Event]) -> None:
        for ev in events:
            self.append(ev.kind, ev.t, **ev.data)

    def of_kind(self, kind: str) -> list[Event]:
        return [ev for ev in self.events if ev.kind == kind]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def to_obj(self) -> list[dict[str, Any]]:
        return [{"kind": ev.kind, "t": ev.t, "data": ev.data} for ev in self.events]

    @classmethod
    def from_obj(cls, obj: list[dict[str, Any]]) -> "EventLog":
        log = cls()
        for entry in obj:
            log.append(entry["kind"], entry["t"], **entry.get("data", {}))
        return log

    def dumps(self) -> str:
        """Canonical serialization; equal logs serialize to equal strings."""
        return json.dumps(self.to_obj(), sort_keys=True, separators=(",", ":"))
