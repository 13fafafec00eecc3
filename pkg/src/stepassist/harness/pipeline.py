"""The session engine: one causal pass from sensor records to deliveries.

SessionPipeline consumes IMU samples and frames in timestamp order and
resolves each scheduled pair as soon as causality allows: the IMU must have
reached the scheduled time and the frame stream must have passed the binding
tolerance (or ended). Batch replay and the live socket server both drive this
same engine, so a replayed trace and the same trace streamed over TCP produce
identical event sequences by construction.
"""
from __future__ import annotations

import time
from typing import Sequence

from ..checker import CheckerState, DeliveryDecision, SuppressReason, update
from ..context import (
    GuidelineCorpus,
    GuidelineFormatError,
    GuidelineStep,
    RemoteStructurer,
    ScriptedStructurer,
    StructuredGuideline,
    render_progress,
    retrieve_guideline,
    textualize_motion,
    validate_guideline,
)
from ..metrics import MetricsReport, compute_metrics
from ..motion import (
    AnnotationDetector,
    HandDetector,
    NullDetector,
    SyntheticDetector,
    detect_hands,
)
from ..perception import (
    SamplerState,
    bind_pair,
    head_motion,
    schedule_next_pair,
    select_key_moment,
)
from ..reasoner import (
    MalformedOutput,
    OracleReasoner,
    Reasoner,
    ReasonerInput,
    RemoteReasoner,
    flag_off_guideline,
)
from ..trace.io import frame_file_name
from ..trace.types import (
    FramePair,
    FrameRecord,
    ImuSample,
    ProactiveInterval,
    SessionTrace,
    StepSegment,
)
from .config import PipelineConfig
from .events import (
    DELIVERY,
    ERROR,
    KEY_MOMENT,
    REASONED,
    SAMPLED_PAIR,
    TRANSITION,
    Event,
    EventLog,
)


def synthesize_guideline(instruction: str, step_labels: Sequence[str]) -> StructuredGuideline:
    """Sequential guideline built from a session's own step vocabulary.

    Stands in when no expert corpus is configured (synthetic sessions carry
    their step plan; that plan is the expert knowledge).
    """
    steps = tuple(
        GuidelineStep(
            id=i + 1,
            title=label,
            prerequisites=(i,) if i >= 1 else (),
        )
        for i, label in enumerate(step_labels)
    )
    return validate_guideline(StructuredGuideline(task=instruction, steps=steps))


def resolve_guideline(
    cfg: PipelineConfig,
    instruction: str,
    step_labels: Sequence[str],
) -> tuple[str, list[str]]:
    """Produce the prompt's guideline text and the known step vocabulary.

    With a corpus configured: retrieve by instruction, then structure. A
    retrieval that cannot be structured falls back to the raw document text
    (vocabulary unknown). Without a corpus, a guideline is synthesized from
    the session's step labels when present, else the instruction stands in.
    """
    if cfg.corpus_dir is not None:
        corpus = GuidelineCorpus.load(cfg.corpus_dir)
        result = retrieve_guideline(instruction, corpus)
        if cfg.structurer.kind == "remote":
            structurer = RemoteStructurer(
                cfg.structurer.endpoint, cfg.structurer.model, cfg.structurer.timeout
            )
        else:
            structurer = ScriptedStructurer()
        try:
            guideline = structurer.structure(result.text)
        except GuidelineFormatError:
            return result.text, []
        return guideline.render(), guideline.step_titles()
    if step_labels:
        guideline = synthesize_guideline(instruction, step_labels)
        return guideline.render(), guideline.step_titles()
    return instruction, []


def build_detector(cfg: PipelineConfig, hand_boxes) -> HandDetector:
    if cfg.detector.kind == "annotation":
        return AnnotationDetector(hand_boxes or {})
    if cfg.detector.kind == "synthetic":
        return SyntheticDetector(cfg.detector.threshold, cfg.detector.min_area)
    return NullDetector()


class SessionPipeline:
    """Causal engine for one session.

    Feed sensor records in timestamp order via feed_imu/feed_frame, then call
    finish(). Every call returns the events it produced, in order; the full
    log accumulates on ``self.log``.
    """

    def __init__(
        self,
        cfg: PipelineConfig,
        *,
        instruction: str,
        segments: Sequence[StepSegment] = (),
        proactive_intervals: Sequence[ProactiveInterval] = (),
        hand_boxes: dict | None = None,
        reasoner: Reasoner | None = None,
        detector: HandDetector | None = None,
        guideline_text: str | None = None,
        step_titles: Sequence[str] | None = None,
    ):
        cfg.validate()
        self.cfg = cfg
        self.instruction = instruction
        self.segments = list(segments)
        self.intervals = list(proactive_intervals)

        if guideline_text is None:
            labels: list[str] = []
            for seg in self.segments:
                if seg.step not in labels:
                    labels.append(seg.step)
            guideline_text, titles = resolve_guideline(cfg, instruction, labels)
            if step_titles is None:
                step_titles = titles
        self.guideline_text = guideline_text
        self.step_titles = list(step_titles or [])

        if reasoner is None:
            if cfg.reasoner.kind == "oracle":
                reasoner = OracleReasoner(self.segments, self.intervals, cfg.reasoner.oracle)
            else:
                reasoner = RemoteReasoner(
                    cfg.reasoner.endpoint, cfg.reasoner.model, cfg.reasoner.timeout
                )
        self.reasoner = reasoner
        self.detector = detector if detector is not None else build_detector(cfg, hand_boxes)

        self.log = EventLog()
        self.sampler_state = SamplerState()
        self.checker_state = CheckerState()
        self.imu: list[ImuSample] = []
        self.pairs: list[FramePair] = []
        self.pair_times: list[float] = []
        self._pending_a: dict[int, FrameRecord] = {}
        self._last_frame_t: float | None = None
        self._finished = False
        self.deliveries = 0

    # -- feeding ---------------------------------------------------------

    def feed_imu(self, sample: ImuSample) -> list[Event]:
        self._check_open()
        if self.imu and sample.timestamp < self.imu[-1].timestamp:
            raise ValueError("imu samples must arrive in timestamp order")
        self.imu.append(sample)
        return self._advance(finished=False)

    def feed_frame(self, frame: FrameRecord) -> list[Event]:
        self._check_open()
        if self._last_frame_t is not None and frame.timestamp <= self._last_frame_t:
            raise ValueError("frames must arrive in strictly increasing order")
        self._last_frame_t = frame.timestamp
        if frame.slot == "a":
            self._pending_a[frame.pair_id] = frame
            return []
        first = self._pending_a.pop(frame.pair_id, None)
        if first is None:
            raise ValueError(f"frame pair {frame.pair_id} got slot b before slot a")
        self.pairs.append(FramePair(frame.pair_id, first.timestamp, first, frame))
        self.pair_times.append(first.timestamp)
        return self._advance(finished=False)

    def finish(self) -> list[Event]:
        self._check_open()
        events = self._advance(finished=True)
        self._finished = True
        return events

    def _check_open(self) -> None:
        if self._finished:
            raise RuntimeError("session already finished")

    # -- resolution ------------------------------------------------------

    @property
    def _bind_tolerance(self) -> float:
        return self.cfg.sampler.pair_gap / 2.0

    def _can_resolve(self, t: float, finished: bool) -> bool:
        if finished:
            return True
        if not self.imu or self.imu[-1].timestamp < t:
            return False  # motion estimate not causal yet
        # binding is decided once the frame stream has passed t + tolerance
        return bool(self.pair_times) and self.pair_times[-1] > t + self._bind_tolerance

    def _advance(self, finished: bool) -> list[Event]:
        produced: list[Event] = []
        horizon = self.pair_times[-1] if self.pair_times else None
        while True:
            t = self.sampler_state.next_pair_time
            if finished and (horizon is None or t > self._session_end()):
                break
            if not self._can_resolve(t, finished):
                break
            produced.extend(self._resolve_moment(t))
        return produced

    def _session_end(self) -> float:
        # the last frame timestamp bounds the schedule, like batch replay
        return self._last_frame_t if self._last_frame_t is not None else -1.0

    def _resolve_moment(self, t: float) -> list[Event]:
        before = len(self.log)
        motion = head_motion(self.imu, t, self.cfg.sampler)
        self.sampler_state = schedule_next_pair(self.sampler_state, motion, self.cfg.sampler)
        mode = self.sampler_state.mode

        idx = bind_pair(self.pair_times, t, self._bind_tolerance)
        if idx is None:
            self.log.append(
                ERROR,
                t,
                code="sampling_miss",
                detail=f"no recorded pair within {self._bind_tolerance}s of schedule",
                scheduled_t=t,
            )
            return self.log.events[before:]
        pair = self.pairs[idx]

        self.log.append(
            SAMPLED_PAIR,
            pair.t,
            pair=pair.pair_id,
            scheduled_t=t,
            mode=mode,
            motion=motion,
        )

        flow_started = time.perf_counter()
        hands = detect_hands(pair.frame_a, self.detector)
        moment = select_key_moment(pair, hands, self.cfg.key_moment, self.cfg.flow)
        flow_seconds = time.perf_counter() - flow_started
        if moment is None:
            return self.log.events[before:]

        cue = textualize_motion(
            moment.hand_flows,
            self.cfg.key_moment.stationary_threshold,
            scene_flow=moment.scene_flow,
        )
        key_data = {
            "pair": pair.pair_id,
            "trigger_magnitude": moment.trigger_magnitude,
            "flows": [
                {"side": side, "dx": f.dx, "dy": f.dy, "magnitude": f.magnitude}
                for side, f in moment.hand_flows.items()
            ]
            + (
                [
                    {
                        "side": "scene",
                        "dx": moment.scene_flow.dx,
                        "dy": moment.scene_flow.dy,
                        "magnitude": moment.scene_flow.magnitude,
                    }
                ]
                if moment.scene_flow is not None
                else []
            ),
            "motion_text": cue.rendered,
        }
        if self.cfg.record_latency:
            key_data["flow_seconds"] = flow_seconds
        self.log.append(KEY_MOMENT, pair.t, **key_data)

        inp = ReasonerInput(
            timestamp=pair.t,
            guideline_text=self.guideline_text,
            history_text=render_progress(self.checker_state.history),
            motion_text=cue.rendered,
            image_ref=frame_file_name(pair.pair_id, "b"),
            image=pair.frame_b.image,
        )
        reason_started = time.perf_counter()
        out = self.reasoner.reason(inp)
        reason_seconds = time.perf_counter() - reason_started

        if isinstance(out, MalformedOutput):
            # moment dropped whole: no reasoned event, checker untouched
            self.log.append(
                ERROR,
                pair.t,
                code="malformed_output",
                detail=out.reason,
                attempts=out.attempts,
                pair=pair.pair_id,
            )
            return self.log.events[before:]

        if self.step_titles:
            out = flag_off_guideline(out, self.step_titles)
        reasoned_data = {
            "pair": pair.pair_id,
            "step": out.step,
            "status": out.status.value,
            "proactive": out.proactive,
            "response": out.response,
            "reasoning": out.reasoning,
            "off_guideline": out.off_guideline,
        }
        if self.cfg.record_latency:
            reasoned_data["reason_seconds"] = reason_seconds
        self.log.append(REASONED, pair.t, **reasoned_data)

        prior_active = self.checker_state.active_step
        self.checker_state, decision = update(self.checker_state, out, self.cfg.checker)
        if decision.transitioned:
            self.log.append(
                TRANSITION,
                pair.t,
                from_step=prior_active,
                to_step=self.checker_state.active_step,
                history=list(self.checker_state.history.completed),
            )
        self._append_delivery(pair.t, out.step, out.status.value, decision)
        return self.log.events[before:]

    def _append_delivery(
        self, t: float, step: str, status: str, decision: DeliveryDecision
    ) -> None:
        data = {
            "deliver": decision.deliver,
            "step": step,
            "status": status,
        }
        if decision.deliver:
            data["response"] = decision.response
            self.deliveries += 1
        else:
            data["suppress_reason"] = decision.suppress_reason.value
        self.log.append(DELIVERY, t, **data)


def replay(
    trace: SessionTrace,
    cfg: PipelineConfig = PipelineConfig(),
    *,
    reasoner: Reasoner | None = None,
    detector: HandDetector | None = None,
) -> tuple[EventLog, MetricsReport]:
    """Run the whole pipeline over a recorded session and score it.

    The simulated clock is the trace's own timeline: records are fed in
    timestamp order and each scheduled pair resolves as soon as its inputs
    exist. With ``cfg.pace`` the feed additionally sleeps out the recorded
    gaps in wall-clock time (demo mode; scoring is unaffected).
    """
    engine = SessionPipeline(
        cfg,
        instruction=trace.instruction,
        segments=trace.segments,
        proactive_intervals=trace.proactive_intervals,
        hand_boxes=trace.hand_boxes,
        reasoner=reasoner,
        detector=detector,
    )
    prev_t: float | None = None
    for record in trace.iter_sensor_records():
        if cfg.pace and prev_t is not None:
            gap = record.timestamp - prev_t
            if gap > 0:
                time.sleep(gap)
        prev_t = record.timestamp
        if isinstance(record, ImuSample):
            engine.feed_imu(record)
        else:
            engine.feed_frame(record)
    engine.finish()
    return engine.log, compute_metrics(engine.log, trace)


__all__ = [
    "SessionPipeline",
    "build_detector",
    "replay",
    "resolve_guideline",
    "synthesize_guideline",
]
