"""Motion-aware frame-pair sampling and key-moment selection.

The sampler runs on gyro energy alone: the smoothed angular-velocity norm at
each pair time picks the spacing to the next pair (burst spacing while the
head is turning, relaxed spacing otherwise). Key moments are then chosen by
image evidence: a sampled pair survives only if some tracked region (hand
boxes when available, the whole frame otherwise) moved at least ``tau_f``
pixels between the pair's two frames.
"""
from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Sequence

from .motion import (
    FlowConfig,
    FlowSummary,
    HandBox,
    box_flow_region,
    estimate_flow,
)
from .trace.types import FramePair, ImuSample, SessionTrace

MODE_NORMAL = "normal"
MODE_BURST = "burst"


@dataclass(frozen=True)
class SamplerConfig:
    tau_s: float = 0.3
    normal_interval: float = 1.0
    burst_interval: float = 0.5
    pair_gap: float = 0.1
    smoothing_window: float = 0.2

    def __post_init__(self) -> None:
        if not 0 < self.burst_interval < self.normal_interval:
            raise ValueError(
                f"need 0 < burst_interval < normal_interval, got "
                f"{self.burst_interval} and {self.normal_interval}"
            )
        if not 0 < self.pair_gap < self.burst_interval:
            raise ValueError(
                f"pair gap {self.pair_gap} must be positive and below the burst interval"
            )
        if not 0 < self.smoothing_window <= self.normal_interval:
            raise ValueError(f"smoothing window {self.smoothing_window} out of range")
        if self.tau_s <= 0:
            raise ValueError(f"tau_s must be positive, got {self.tau_s}")


@dataclass(frozen=True)
class SamplerState:
    """``next_pair_time`` is the time of the pair about to be handled."""

    mode: str = MODE_NORMAL
    next_pair_time: float = 0.0


@dataclass(frozen=True)
class KeyMomentConfig:
    tau_f: float = 10.0
    stationary_threshold: float = 1.0

    def __post_init__(self) -> None:
        if not self.tau_f > self.stationary_threshold > 0:
            raise ValueError(
                f"need tau_f > stationary_threshold > 0, got "
                f"{self.tau_f} and {self.stationary_threshold}"
            )


@dataclass(frozen=True)
class KeyMoment:
    """A sampled pair whose imagery shows enough motion to reason about."""

    t: float
    pair_id: int
    hand_flows: dict[str, FlowSummary]
    scene_flow: FlowSummary | None
    trigger_magnitude: float


def head_motion(imu: Sequence[ImuSample], t: float, cfg: SamplerConfig) -> float:
    """Smoothed head-rotation speed at time t.

    Mean angular-velocity norm over samples in (t - smoothing_window, t];
    if the window is empty, the most recent sample at or before t stands in.
    """
    if not imu:
        raise ValueError("imu stream is empty")
    times = [s.timestamp for s in imu]
    hi = bisect_right(times, t)
    if hi == 0:
        raise ValueError(f"no imu sample at or before t={t}")
    lo = bisect_right(times, t - cfg.smoothing_window)
    if lo == hi:  # empty window, fall back to the latest sample
        return imu[hi - 1].magnitude()
    window = imu[lo:hi]
    return sum(s.magnitude() for s in window) / len(window)


def schedule_next_pair(
    state: SamplerState, motion: float, cfg: SamplerConfig
) -> SamplerState:
    """Advance the sampler past the pair at ``state.next_pair_time``.

    The mode is re-decided from scratch at every pair: burst iff motion
    strictly exceeds tau_s. No hysteresis.
    """
    mode = MODE_BURST if motion > cfg.tau_s else MODE_NORMAL
    interval = cfg.burst_interval if mode == MODE_BURST else cfg.normal_interval
    return SamplerState(mode=mode, next_pair_time=state.next_pair_time + interval)


def bind_pair(
    pair_times: Sequence[float], scheduled_t: float, tolerance: float
) -> int | None:
    """Index of the recorded pair nearest to scheduled_t within tolerance.

    Ties between two equidistant pairs go to the earlier one. Returns None
    when no recorded pair is close enough (a sampling miss).
    """
    idx = bisect_left(pair_times, scheduled_t)
    best: int | None = None
    best_err = tolerance
    for cand in (idx - 1, idx):
        if 0 <= cand < len(pair_times):
            err = abs(pair_times[cand] - scheduled_t)
            if err < best_err or (err == best_err and best is None):
                best = cand
                best_err = err
    return best


@dataclass(frozen=True)
class ScheduledSample:
    """One stop of the sampler walk; ``pair`` is None on a sampling miss."""

    scheduled_t: float
    motion: float
    mode: str  # mode decided at this pair, governing the gap to the next
    pair: FramePair | None


def run_sampler(trace: SessionTrace, cfg: SamplerConfig) -> list[ScheduledSample]:
    """Walk the sampling schedule over a whole recorded session.

    Starts at t = 0 and stops once the schedule passes the last frame
    timestamp. Each scheduled time is bound to the nearest recorded pair
    within half the pair gap.
    """
    pairs = trace.pairs()
    pair_times = [p.t for p in pairs]
    out: list[ScheduledSample] = []
    state = SamplerState()
    horizon = trace.duration
    while state.next_pair_time <= horizon:
        t = state.next_pair_time
        motion = head_motion(trace.imu, t, cfg)
        state = schedule_next_pair(state, motion, cfg)
        bound = bind_pair(pair_times, t, cfg.pair_gap / 2.0)
        out.append(
            ScheduledSample(
                scheduled_t=t,
                motion=motion,
                mode=state.mode,
                pair=None if bound is None else pairs[bound],
            )
        )
    return out


def select_key_moment(
    pair: FramePair,
    hands: Sequence[HandBox],
    kcfg: KeyMomentConfig = KeyMomentConfig(),
    fcfg: FlowConfig = FlowConfig(),
) -> KeyMoment | None:
    """Measure motion over the pair and keep it only if it clears tau_f.

    With hand boxes present, flow runs per hand box (grown to hold at least
    one block); otherwise a single full-frame flow stands in. The trigger is
    the largest per-region magnitude.
    """
    frame_h, frame_w = pair.frame_a.image.shape
    hand_flows: dict[str, FlowSummary] = {}
    scene_flow: FlowSummary | None = None
    if hands:
        for box in hands:
            region = box_flow_region(box, frame_w, frame_h, fcfg.block)
            hand_flows[box.side] = estimate_flow(
                pair.frame_a.image, pair.frame_b.image, region, fcfg
            )
        trigger = max(f.magnitude for f in hand_flows.values())
    else:
        scene_flow = estimate_flow(pair.frame_a.image, pair.frame_b.image, None, fcfg)
        trigger = scene_flow.magnitude
    if trigger < kcfg.tau_f:
        return None
    return KeyMoment(
        t=pair.t,
        pair_id=pair.pair_id,
        hand_flows=hand_flows,
        scene_flow=scene_flow,
        trigger_magnitude=trigger,
    )
