"""Client side of the wire protocol: stream a recorded session to a server."""
from __future__ import annotations

import base64
import json
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Any

from ..trace.pgm import write_pgm
from ..trace.types import FrameRecord, ImuSample, SessionTrace
from .server import PROTOCOL_VERSION


@dataclass
class StreamResult:
    """Everything the server sent back, split by message type."""

    session_id: str
    assists: list[dict[str, Any]] = field(default_factory=list)
    errors: list[dict[str, Any]] = field(default_factory=list)
    end_counts: dict[str, int] | None = None
    replies: list[dict[str, Any]] = field(default_factory=list)

    @property
    def pair_acks(self) -> int:
        return sum(
            1 for r in self.replies if r.get("type") == "ack" and r.get("of") == "pair"
        )


def _annotations_obj(trace: SessionTrace) -> dict[str, Any]:
    return {
        "segments": [
            {"start": s.start, "end": s.end, "step": s.step, "status": s.status.value}
            for s in trace.segments
        ],
        "proactive_intervals": [
            {"start": iv.start, "end": iv.end, "step": iv.step}
            for iv in trace.proactive_intervals
        ],
        "hand_boxes": {str(pid): boxes for pid, boxes in trace.hand_boxes.items()},
    }


def record_message(record: ImuSample | FrameRecord) -> dict[str, Any]:
    """Wire form of one sensor record."""
    if isinstance(record, ImuSample):
        return {
            "type": "imu",
            "t": record.timestamp,
            "gx": record.gx,
            "gy": record.gy,
            "gz": record.gz,
        }
    return {
        "type": "frame",
        "t": record.timestamp,
        "pair": record.pair_id,
        "slot": record.slot,
        "data": base64.b64encode(write_pgm(record.image)).decode("ascii"),
    }


def stream_session(
    trace: SessionTrace,
    host: str,
    port: int,
    *,
    session_id: str = "session-0",
    include_annotations: bool = True,
    timeout: float = 60.0,
    pace: bool = False,
) -> StreamResult:
    """Stream one session over TCP and collect every reply.

    Sends session_start, all sensor records in timestamp order, then
    session_end, while a reader thread drains acks, assists, and errors.
    Returns once the session_end ack arrives; raises RuntimeError if the
    server closes or goes silent first.
    """
    result = StreamResult(session_id=session_id)
    done = threading.Event()

    sock = socket.create_connection((host, port), timeout=timeout)
    try:
        sock.settimeout(timeout)
        rfile = sock.makefile("rb")
        wfile = sock.makefile("wb")

        def read_replies() -> None:
            try:
                for raw in rfile:
                    msg = json.loads(raw.decode("utf-8"))
                    result.replies.append(msg)
                    kind = msg.get("type")
                    if kind == "assist":
                        result.assists.append(msg)
                    elif kind == "error":
                        result.errors.append(msg)
                    elif kind == "ack" and msg.get("of") == "session_end":
                        result.end_counts = msg.get("counts")
                        done.set()
                        return
            except (OSError, ValueError):
                pass  # connection torn down; fall through to EOF handling
            done.set()

        reader = threading.Thread(target=read_replies, daemon=True)
        reader.start()

        def send(obj: dict[str, Any]) -> None:
            wfile.write(json.dumps(obj).encode("utf-8") + b"\n")
            wfile.flush()

        start_msg: dict[str, Any] = {
            "type": "session_start",
            "protocol": PROTOCOL_VERSION,
            "session_id": session_id,
            "instruction": trace.instruction,
            "width": trace.width,
            "height": trace.height,
            "pair_gap": trace.pair_gap,
        }
        if include_annotations:
            start_msg["annotations"] = _annotations_obj(trace)

        try:
            send(start_msg)
            prev_t: float | None = None
            for record in trace.iter_sensor_records():
                if pace and prev_t is not None:
                    gap = record.timestamp - prev_t
                    if gap > 0:
                        time.sleep(gap)
                prev_t = record.timestamp
                send(record_message(record))
            send({"type": "session_end"})
        except (BrokenPipeError, ConnectionResetError):
            pass  # server hung up; the reader captured whatever it said

        if not done.wait(timeout):
            raise RuntimeError("timed out waiting for the session_end ack")
        reader.join(timeout=5.0)
    finally:
        sock.close()

    if result.end_counts is None:
        detail = result.errors[-1]["detail"] if result.errors else "connection closed"
        raise RuntimeError(f"session did not complete: {detail}")
    return result


__all__ = ["StreamResult", "record_message", "stream_session"]
