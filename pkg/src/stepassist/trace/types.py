"""Core record types for recorded egocentric sessions.

A session couples a frame stream (grayscale, grouped into two-frame pairs),
a gyroscope stream, and ground-truth annotations (step segments and proactive
intervals) under a single natural-language task instruction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator

import numpy as np


class ExecutionStatus(str, Enum):
    """Execution phase of the current procedural step."""

    JUST_START = "just_start"
    IN_PROGRESS = "in_progress"
    ABOUT_TO_FINISH = "about_to_finish"
    STEP_TRANSITION = "step_transition"

    @classmethod
    def parse(cls, value: str) -> "ExecutionStatus":
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown execution status {value!r}") from None


@dataclass(frozen=True)
class FrameRecord:
    """One grayscale frame.

    ``image`` is a (height, width) uint8 array. ``slot`` is "a" for the first
    frame of a pair and "b" for the second.
    """

    timestamp: float
    pair_id: int
    slot: str
    image: np.ndarray

    def __post_init__(self) -> None:
        if self.slot not in ("a", "b"):
            raise ValueError(f"frame slot must be 'a' or 'b', got {self.slot!r}")
        if self.image.ndim != 2 or self.image.dtype != np.uint8:
            raise ValueError("frame image must be a 2-d uint8 array")


@dataclass(frozen=True)
class FramePair:
    """The two frames sampled around one moment; ``t`` is the first frame's time."""

    pair_id: int
    t: float
    frame_a: FrameRecord
    frame_b: FrameRecord


@dataclass(frozen=True)
class ImuSample:
    """One gyroscope reading, angular velocity in rad/s."""

    timestamp: float
    gx: float
    gy: float
    gz: float

    def magnitude(self) -> float:
        return math.sqrt(self.gx * self.gx + self.gy * self.gy + self.gz * self.gz)


@dataclass(frozen=True)
class StepSegment:
    """Ground-truth annotation: during [start, end) the user is in ``step`` with ``status``."""

    start: float
    end: float
    step: str
    status: ExecutionStatus

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise ValueError(f"segment start must precede end, got [{self.start}, {self.end})")

    def contains(self, t: float) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True)
class ProactiveInterval:
    """Window during which assistance for ``step`` is considered timely."""

    start: float
    end: float
    step: str

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise ValueError(
                f"proactive interval start must precede end, got [{self.start}, {self.end}]"
            )

    def contains(self, t: float) -> bool:
        """Half-open need test, consistent with segment alignment."""
        return self.start <= t < self.end


@dataclass
class SessionTrace:
    """A fully loaded session.

    ``hand_boxes`` optionally maps pair id to recorded hand boxes, each a dict
    with keys side/x/y/w/h; only annotation-backed hand detection reads them.
    """

    instruction: str
    width: int
    height: int
    pair_gap: float
    frames: list[FrameRecord]
    imu: list[ImuSample]
    segments: list[StepSegment]
    proactive_intervals: list[ProactiveInterval]
    hand_boxes: dict[int, list[dict[str, Any]]] = field(default_factory=dict)
    guideline_doc_id: str | None = None

    @property
    def duration(self) -> float:
        """Timestamp of the last recorded frame (0.0 for an empty frame stream)."""
        return self.frames[-1].timestamp if self.frames else 0.0

    def pairs(self) -> list[FramePair]:
        """Group frames into (a, b) pairs ordered by time."""
        by_id: dict[int, dict[str, FrameRecord]] = {}
        for fr in self.frames:
            by_id.setdefault(fr.pair_id, {})[fr.slot] = fr
        out = []
        for pid in sorted(by_id):
            slots = by_id[pid]
            if "a" not in slots or "b" not in slots:
                raise ValueError(f"frame pair {pid} is missing slot 'a' or 'b'")
            out.append(FramePair(pid, slots["a"].timestamp, slots["a"], slots["b"]))
        out.sort(key=lambda p: p.t)
        return out

    def segment_at(self, t: float) -> StepSegment | None:
        for seg in self.segments:
            if seg.contains(t):
                return seg
        return None

    def need_at(self, t: float) -> ProactiveInterval | None:
        """The proactive interval containing t, if any (half-open containment)."""
        for iv in self.proactive_intervals:
            if iv.contains(t):
                return iv
        return None

    def step_labels(self) -> list[str]:
        """Unique step labels in order of first appearance in the segments."""
        seen: list[str] = []
        for seg in self.segments:
            if seg.step not in seen:
                seen.append(seg.step)
        return seen

    def iter_sensor_records(self) -> Iterator[ImuSample | FrameRecord]:
        """All sensor records merged in timestamp order (imu before frames on ties)."""
        # ties resolved in favor of imu so motion state is current when a frame lands
        records: list[tuple[float, int, ImuSample | FrameRecord]] = []
        for s in self.imu:
            records.append((s.timestamp, 0, s))
        for f in self.frames:
            records.append((f.timestamp, 1, f))
        records.sort(key=lambda r: (r[0], r[1]))
        for _, _, rec in records:
            yield rec


@dataclass(frozen=True)
class Violation:
    """One validation finding: a short machine-readable kind plus a human message."""

    kind: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, kind: str, message: str) -> None:
        self.violations.append(Violation(kind, message))

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(f"[{v.kind}] {v.message}" for v in self.violations)
