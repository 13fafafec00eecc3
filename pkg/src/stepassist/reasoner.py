"""Step-aware reasoning over key moments.

One reasoner call sees four context blocks (structured guideline, completed
steps, the frame, and the textualized hand motion) and returns the current
step, its execution status, and whether to speak up. Two interchangeable
backends: a scripted oracle that reads ground truth (optionally corrupted at
seeded rates, for controlled evaluation) and a remote chat-completion client.
"""
from __future__ import annotations

import base64
import random
from bisect import bisect_right
from dataclasses import dataclass, replace
from typing import Protocol, Sequence, Union

from .httpchat import ChatEndpointError, chat_complete
from .jsontext import extract_first_json
from .trace.pgm import write_pgm
from .trace.types import (
    ExecutionStatus,
    ProactiveInterval,
    SessionTrace,
    StepSegment,
)

__all__ = [
    "ExecutionStatus",
    "MalformedOutput",
    "MissingFieldError",
    "MissingResponseError",
    "NoJsonError",
    "OracleConfig",
    "OracleReasoner",
    "Reasoner",
    "ReasonerInput",
    "ReasonerOutput",
    "ReasonerOutputError",
    "RemoteReasoner",
    "RemoteReasonerError",
    "UnknownStatusError",
    "assemble_prompt",
    "parse_output",
    "scripted_oracle",
]

PROMPT_TEMPLATE = (
    "Task Instructions: You are a proactive assistant for procedural tasks, "
    "tracking user progress through real-time sensory data from wearable "
    "devices and procedural context. Based on these contexts, you need to "
    "understand user's actions and identify the current procedural step and "
    "status, then determine whether to initiate a proactive service for the "
    "user or not. Please provide timely, relevant guidance when appropriate.\n"
    "Now you will receive the sensory and procedural contexts for the target "
    "moment in the procedural task.\n"
    "Guideline: Structured guideline with task-specific expert knowledge: "
    "{guideline}\n"
    "Historical Context: Previously completed steps in order: {history}\n"
    "Sensory Context: Vision information shows as the image. <IMAGE>\n"
    "Hand Motion Cues: The optical flow between the current frame and the "
    "previous frame indicates that in the image plane, {motion}. You may "
    "combine the image-plane hand motion cue with visual context, object "
    "relationships, and task semantics to infer how the hand is moving in "
    "the actual scene when useful.\n"
    "Output Format: Reply with a JSON object of the form "
    '{{"step": <guideline step title>, "status": one of "just_start", '
    '"in_progress", "about_to_finish", "step_transition", '
    '"proactive": true or false, "response": <guidance text, required when '
    'proactive is true>, "reasoning": <optional short justification>}}.'
)


@dataclass(frozen=True)
class ReasonerInput:
    """Everything one reasoning call needs, already rendered to text."""

    timestamp: float
    guideline_text: str
    history_text: str
    motion_text: str
    image_ref: str
    image: object | None = None  # optional raster (2-d uint8 array)


@dataclass(frozen=True)
class ReasonerOutput:
    step: str
    status: ExecutionStatus
    proactive: bool
    response: str | None = None
    reasoning: str | None = None
    off_guideline: bool = False

    def __post_init__(self) -> None:
        if self.proactive and not (self.response and self.response.strip()):
            raise ValueError("proactive output must carry a response")


@dataclass(frozen=True)
class MalformedOutput:
    """Marker for a reasoner reply that stayed unparseable after a retry."""

    reason: str
    attempts: int = 1


class Reasoner(Protocol):
    def reason(self, inp: ReasonerInput) -> Union[ReasonerOutput, MalformedOutput]: ...


def assemble_prompt(inp: ReasonerInput) -> str:
    """Fill the system prompt template from a reasoner input.

    The motion sentence is embedded as rendered, minus its trailing period
    (the template supplies the sentence-final punctuation).
    """
    motion = inp.motion_text.rstrip()
    if motion.endswith("."):
        motion = motion[:-1]
    return PROMPT_TEMPLATE.format(
        guideline=inp.guideline_text,
        history=inp.history_text,
        motion=motion,
    )


class ReasonerOutputError(ValueError):
    """Base for reply-parsing failures."""


class NoJsonError(ReasonerOutputError):
    """The reply contains no parseable JSON object."""


class MissingFieldError(ReasonerOutputError):
    """The reply's JSON object lacks a required field or has a bad type."""


class UnknownStatusError(ReasonerOutputError):
    """The reply names an execution status outside the vocabulary."""


class MissingResponseError(ReasonerOutputError):
    """The reply claims proactive=true but carries no response text."""


def parse_output(text: str) -> ReasonerOutput:
    """Parse a model reply into a ReasonerOutput.

    The first balanced JSON object found in the text is used; surrounding
    prose is tolerated. Each failure mode raises its own error type so
    callers can log and retry meaningfully.
    """
    try:
        obj = extract_first_json(text)
    except ValueError as exc:
        raise NoJsonError(str(exc)) from None
    if not isinstance(obj, dict):
        raise NoJsonError("reply JSON is not an object")

    if "step" not in obj or not isinstance(obj["step"], str) or not obj["step"].strip():
        raise MissingFieldError("reply lacks a step title")
    if "status" not in obj:
        raise MissingFieldError("reply lacks a status")
    try:
        status = ExecutionStatus.parse(str(obj["status"]))
    except ValueError as exc:
        raise UnknownStatusError(str(exc)) from None
    if "proactive" not in obj or not isinstance(obj["proactive"], bool):
        raise MissingFieldError("reply lacks a boolean proactive flag")
    proactive = obj["proactive"]
    response = obj.get("response")
    if response is not None and not isinstance(response, str):
        raise MissingFieldError("response must be a string")
    if proactive and not (response and response.strip()):
        raise MissingResponseError("proactive reply carries no response text")
    reasoning = obj.get("reasoning")
    if reasoning is not None:
        reasoning = str(reasoning)
    return ReasonerOutput(
        step=obj["step"],
        status=status,
        proactive=proactive,
        response=response,
        reasoning=reasoning,
    )


def flag_off_guideline(out: ReasonerOutput, step_titles: Sequence[str]) -> ReasonerOutput:
    """Mark outputs whose step is not in the guideline vocabulary."""
    off = out.step not in set(step_titles)
    return replace(out, off_guideline=off) if off != out.off_guideline else out


@dataclass(frozen=True)
class OracleConfig:
    step_error_rate: float = 0.0
    status_error_rate: float = 0.0
    proactive_flip_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("step_error_rate", "status_error_rate", "proactive_flip_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")


class OracleReasoner:
    """Ground-truth playback with per-field seeded corruption.

    Corruption is keyed by (seed, moment timestamp), never by call order, so
    any moment's output is reproducible in isolation. Step errors pick
    uniformly among the other scripted steps, status errors among the other
    three statuses, and proactive flips negate the ground-truth flag.
    """

    def __init__(
        self,
        segments: Sequence[StepSegment],
        proactive_intervals: Sequence[ProactiveInterval],
        cfg: OracleConfig = OracleConfig(),
    ):
        if not segments:
            raise ValueError("oracle needs at least one annotated segment")
        self.segments = sorted(segments, key=lambda s: s.start)
        self.intervals = list(proactive_intervals)
        self.cfg = cfg
        self.step_labels: list[str] = []
        for seg in self.segments:
            if seg.step not in self.step_labels:
                self.step_labels.append(seg.step)
        self._starts = [s.start for s in self.segments]

    @classmethod
    def from_trace(cls, trace: SessionTrace, cfg: OracleConfig = OracleConfig()) -> "OracleReasoner":
        return cls(trace.segments, trace.proactive_intervals, cfg)

    def _ground_truth(self, t: float) -> tuple[str, ExecutionStatus]:
        idx = bisect_right(self._starts, t) - 1
        if idx >= 0 and self.segments[idx].contains(t):
            seg = self.segments[idx]
            return seg.step, seg.status
        # outside every segment: nearest segment's step, read as transitional
        nearest = min(
            self.segments,
            key=lambda s: (0.0 if s.contains(t) else min(abs(t - s.start), abs(t - s.end)), s.start),
        )
        return nearest.step, ExecutionStatus.STEP_TRANSITION

    def reason_at(self, t: float) -> ReasonerOutput:
        step, status = self._ground_truth(t)
        proactive = any(iv.contains(t) for iv in self.intervals)

        # string seeding is stable across processes, unlike hash()
        rng = random.Random(f"{self.cfg.seed}:{t!r}")
        if rng.random() < self.cfg.step_error_rate:
            others = [s for s in self.step_labels if s != step]
            if others:
                step = others[rng.randrange(len(others))]
        if rng.random() < self.cfg.status_error_rate:
            others_s = [s for s in ExecutionStatus if s != status]
            status = others_s[rng.randrange(len(others_s))]
        if rng.random() < self.cfg.proactive_flip_rate:
            proactive = not proactive
        response = f"Guidance for {step} ({status.value})." if proactive else None
        return ReasonerOutput(step=step, status=status, proactive=proactive, response=response)

    def reason(self, inp: ReasonerInput) -> ReasonerOutput:
        return self.reason_at(inp.timestamp)


def scripted_oracle(trace: SessionTrace, cfg: OracleConfig, t: float) -> ReasonerOutput:
    """One-off oracle call; equivalent to OracleReasoner.from_trace(...).reason_at(t)."""
    return OracleReasoner.from_trace(trace, cfg).reason_at(t)


class RemoteReasonerError(RuntimeError):
    """Transport failure reaching the remote reasoner (endpoint and moment included)."""


_FORMAT_REMINDER = (
    "Your previous reply could not be parsed. Reply again with only a JSON "
    'object: {"step": str, "status": one of "just_start"/"in_progress"/'
    '"about_to_finish"/"step_transition", "proactive": bool, "response": str '
    'required when proactive is true, "reasoning": optional str}.'
)


class RemoteReasoner:
    """Chat-completion backend: one call per key moment, one retry on bad format."""

    def __init__(self, endpoint: str, model: str | None = None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout

    def _user_content(self, inp: ReasonerInput) -> list[dict[str, str]]:
        if inp.image is not None:
            return [
                {
                    "type": "image",
                    "format": "pgm_base64",
                    "data": base64.b64encode(write_pgm(inp.image)).decode("ascii"),
                }
            ]
        return [{"type": "text", "text": f"[image] {inp.image_ref}"}]

    def reason(self, inp: ReasonerInput) -> Union[ReasonerOutput, MalformedOutput]:
        messages = [
            {"role": "system", "content": assemble_prompt(inp)},
            {"role": "user", "content": self._user_content(inp)},
        ]
        try:
            reply = chat_complete(self.endpoint, messages, model=self.model, timeout=self.timeout)
        except ChatEndpointError as exc:
            raise RemoteReasonerError(f"{exc} (moment t={inp.timestamp})") from exc
        try:
            return parse_output(reply)
        except ReasonerOutputError as first_error:
            retry_messages = messages + [
                {"role": "assistant", "content": reply},
                {"role": "user", "content": _FORMAT_REMINDER},
            ]
            try:
                retry_reply = chat_complete(
                    self.endpoint, retry_messages, model=self.model, timeout=self.timeout
                )
            except ChatEndpointError as exc:
                raise RemoteReasonerError(f"{exc} (moment t={inp.timestamp})") from exc
            try:
                return parse_output(retry_reply)
            except ReasonerOutputError as second_error:
                return MalformedOutput(
                    reason=f"first: {first_error}; retry: {second_error}", attempts=2
                )
