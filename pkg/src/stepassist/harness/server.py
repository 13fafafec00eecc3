"""Live session serving over TCP.

Wire protocol (version 1): newline-delimited JSON both ways. The client
opens a session, streams sensor records in timestamp order, and closes it:

    {"type": "session_start", "protocol": 1, "session_id": "...",
     "instruction": "...", "width": W, "height": H, "pair_gap": G,
     "annotations": {...}}          annotations optional
    {"type": "imu", "t": T, "gx": X, "gy": Y, "gz": Z}
    {"type": "frame", "t": T, "pair": P, "slot": "a"|"b", "data": "<b64 PGM>"}
    {"type": "session_end"}

The server acknowledges session_start, every completed pair, and
session_end (with run counts), and pushes an ``assist`` message for every
delivered response:

    {"type": "assist", "t": T, "step": "...", "status": "...", "text": "..."}

Protocol faults come back as {"type": "error", "code": ..., "detail": ...};
only a protocol version mismatch closes the connection. Each connection is
its own pipeline, so concurrent clients never share state.
"""
from __future__ import annotations

import base64
import json
import socketserver
import threading
from typing import Any

from ..trace.pgm import read_pgm
from ..trace.types import (
    ExecutionStatus,
    FrameRecord,
    ImuSample,
    ProactiveInterval,
    StepSegment,
)
from .config import PipelineConfig
from .events import DELIVERY, ERROR, KEY_MOMENT, REASONED, SAMPLED_PAIR, Event, EventLog
from .pipeline import SessionPipeline

PROTOCOL_VERSION = 1

# error codes: connection survives all of these except protocol_version
BAD_JSON = "bad_json"
BAD_MESSAGE = "bad_message"
BAD_STREAM = "bad_stream"
NO_SESSION = "no_session"
SESSION_ACTIVE = "session_active"
PROTOCOL_MISMATCH = "protocol_version"


def _parse_annotations(
    ann: dict[str, Any],
) -> tuple[list[StepSegment], list[ProactiveInterval], dict[int, list]]:
    segments = [
        StepSegment(
            start=float(s["start"]),
            end=float(s["end"]),
            step=str(s["step"]),
            status=ExecutionStatus.parse(s["status"]),
        )
        for s in ann.get("segments", [])
    ]
    intervals = [
        ProactiveInterval(
            start=float(iv["start"]), end=float(iv["end"]), step=str(iv["step"])
        )
        for iv in ann.get("proactive_intervals", [])
    ]
    hand_boxes = {
        int(pid): list(boxes) for pid, boxes in (ann.get("hand_boxes") or {}).items()
    }
    return segments, intervals, hand_boxes


class _Handler(socketserver.StreamRequestHandler):
    """One connection: at most one open session at a time, serially."""

    def handle(self) -> None:
        owner: PipelineServer = self.server.owner  # type: ignore[attr-defined]
        self.engine: SessionPipeline | None = None
        self.session_id: str | None = None
        self.geometry: tuple[int, int] | None = None
        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            try:
                msg = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                self._send_error(BAD_JSON, f"undecodable line: {exc}")
                continue
            if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
                self._send_error(BAD_MESSAGE, "messages are objects with a 'type' field")
                continue
            try:
                keep_open = self._dispatch(owner, msg)
            except (KeyError, TypeError, ValueError) as exc:
                # the stream is no longer trustworthy; drop the session
                self.engine = None
                self.session_id = None
                self._send_error(BAD_STREAM, f"{type(exc).__name__}: {exc}")
                continue
            if not keep_open:
                return

    # -- message handling --------------------------------------------------

    def _dispatch(self, owner: "PipelineServer", msg: dict[str, Any]) -> bool:
        kind = msg["type"]
        if kind == "session_start":
            return self._on_session_start(owner, msg)
        if kind in ("imu", "frame", "session_end"):
            if self.engine is None:
                self._send_error(NO_SESSION, f"{kind} before session_start")
                return True
            if kind == "imu":
                self._on_imu(msg)
            elif kind == "frame":
                self._on_frame(msg)
            else:
                self._on_session_end(owner)
            return True
        self._send_error(BAD_MESSAGE, f"unknown message type {kind!r}")
        return True

    def _on_session_start(self, owner: "PipelineServer", msg: dict[str, Any]) -> bool:
        if msg.get("protocol") != PROTOCOL_VERSION:
            self._send_error(
                PROTOCOL_MISMATCH,
                f"server speaks protocol {PROTOCOL_VERSION}, got {msg.get('protocol')!r}",
            )
            return False  # nothing sensible can follow; close
        if self.engine is not None:
            self._send_error(SESSION_ACTIVE, "finish the open session first")
            return True
        width = int(msg["width"])
        height = int(msg["height"])
        pair_gap = float(msg["pair_gap"])
        if abs(pair_gap - owner.cfg.sampler.pair_gap) > 1e-9:
            self._send_error(
                BAD_MESSAGE,
                f"session pair_gap {pair_gap} does not match server "
                f"configuration {owner.cfg.sampler.pair_gap}",
            )
            return True
        ann = msg.get("annotations") or {}
        segments, intervals, hand_boxes = _parse_annotations(ann)
        self.engine = SessionPipeline(
            owner.cfg,
            instruction=str(msg["instruction"]),
            segments=segments,
            proactive_intervals=intervals,
            hand_boxes=hand_boxes,
        )
        self.session_id = str(msg.get("session_id", ""))
        self.geometry = (height, width)
        self._send({"type": "ack", "of": "session_start", "session_id": self.session_id})
        return True

    def _on_imu(self, msg: dict[str, Any]) -> None:
        sample = ImuSample(
            timestamp=float(msg["t"]),
            gx=float(msg["gx"]),
            gy=float(msg["gy"]),
            gz=float(msg["gz"]),
        )
        self._push_assists(self.engine.feed_imu(sample))

    def _on_frame(self, msg: dict[str, Any]) -> None:
        slot = msg["slot"]
        if slot not in ("a", "b"):
            raise ValueError(f"frame slot must be 'a' or 'b', got {slot!r}")
        image = read_pgm(base64.b64decode(msg["data"]))
        if image.shape != self.geometry:
            raise ValueError(
                f"frame geometry {image.shape} does not match session {self.geometry}"
            )
        frame = FrameRecord(
            timestamp=float(msg["t"]),
            pair_id=int(msg["pair"]),
            slot=slot,
            image=image,
        )
        events = self.engine.feed_frame(frame)
        if slot == "b":
            self._send({"type": "ack", "of": "pair", "pair": frame.pair_id})
        self._push_assists(events)

    def _on_session_end(self, owner: "PipelineServer") -> None:
        engine = self.engine
        self._push_assists(engine.finish())
        counts = {
            "pairs": len(engine.pairs),
            "sampled_pairs": len(engine.log.of_kind(SAMPLED_PAIR)),
            "key_moments": len(engine.log.of_kind(KEY_MOMENT)),
            "reasoned": len(engine.log.of_kind(REASONED)),
            "deliveries": engine.deliveries,
            "errors": len(engine.log.of_kind(ERROR)),
        }
        owner.store_log(self.session_id, engine.log)
        self.engine = None
        self.session_id = None
        self.geometry = None
        self._send({"type": "ack", "of": "session_end", "counts": counts})

    # -- replies -----------------------------------------------------------

    def _push_assists(self, events: list[Event]) -> None:
        for ev in events:
            if ev.kind == DELIVERY and ev.data.get("deliver"):
                self._send(
                    {
                        "type": "assist",
                        "t": ev.t,
                        "step": ev.data["step"],
                        "status": ev.data["status"],
                        "text": ev.data["response"],
                    }
                )

    def _send(self, obj: dict[str, Any]) -> None:
        self.wfile.write(json.dumps(obj, sort_keys=True).encode("utf-8") + b"\n")
        self.wfile.flush()

    def _send_error(self, code: str, detail: str) -> None:
        self._send({"type": "error", "code": code, "detail": detail})


class _ThreadingServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class PipelineServer:
    """TCP front end; one pipeline per connection, sessions run in parallel.

    With ``keep_logs`` the full event log of every finished session stays
    addressable by session id (tests compare them against batch replays).
    """

    def __init__(
        self,
        cfg: PipelineConfig = PipelineConfig(),
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        keep_logs: bool = False,
    ):
        cfg.validate()
        self.cfg = cfg
        self.keep_logs = keep_logs
        self.finished_logs: dict[str, EventLog] = {}
        self._lock = threading.Lock()
        self._tcp = _ThreadingServer((host, port), _Handler)
        self._tcp.owner = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._tcp.server_address[:2]
        return str(host), int(port)

    def store_log(self, session_id: str | None, log: EventLog) -> None:
        if self.keep_logs:
            with self._lock:
                self.finished_logs[session_id or ""] = log

    def start(self) -> tuple[str, int]:
        """Serve on a background thread; returns the bound (host, port)."""
        self._thread = threading.Thread(target=self._tcp.serve_forever, daemon=True)
        self._thread.start()
        return self.address

    def serve_forever(self) -> None:
        self._tcp.serve_forever()

    def shutdown(self) -> None:
        self._tcp.shutdown()
        self._tcp.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def __enter__(self) -> "PipelineServer":
        self.start()
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.shutdown()


__all__ = [
    "BAD_JSON",
    "BAD_MESSAGE",
    "BAD_STREAM",
    "NO_SESSION",
    "PROTOCOL_MISMATCH",
    "PROTOCOL_VERSION",
    "SESSION_ACTIVE",
    "PipelineServer",
]
