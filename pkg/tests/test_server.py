import base64
import json
import socket
import threading
from contextlib import contextmanager

import numpy as np
import pytest

from stepassist.harness.cli import main
from stepassist.harness.client import stream_session
from stepassist.harness.events import DELIVERY, ERROR, KEY_MOMENT, REASONED, SAMPLED_PAIR
from stepassist.harness.pipeline import replay
from stepassist.harness.report import REPORT_FILE
from stepassist.harness.server import PROTOCOL_VERSION, PipelineServer
from stepassist.trace.io import load_session, write_session
from stepassist.trace.pgm import write_pgm
from stepassist.trace.synthetic import (
    HandMove,
    HandTrack,
    PhaseSpec,
    StepPlan,
    generate_synthetic,
)
from stepassist.trace.types import ExecutionStatus

from conftest import fixture_config
from test_harness import shelf_script

SEGMENT_ANN = {
    "segments": [{"start": 0.0, "end": 1.0, "step": "A", "status": "in_progress"}],
    "proactive_intervals": [],
    "hand_boxes": {},
}


def start_message(**overrides):
    msg = {
        "type": "session_start",
        "protocol": PROTOCOL_VERSION,
        "session_id": "raw",
        "instruction": "demo",
        "width": 8,
        "height": 8,
        "pair_gap": 0.1,
        "annotations": SEGMENT_ANN,
    }
    msg.update(overrides)
    return msg


@pytest.fixture
def server():
    with PipelineServer(fixture_config(), keep_logs=True) as srv:
        yield srv


@contextmanager
def raw_client(server):
    host, port = server.address
    sock = socket.create_connection((host, port), timeout=10)
    rfile = sock.makefile("rb")
    wfile = sock.makefile("wb")

    def send(obj) -> None:
        data = obj if isinstance(obj, bytes) else json.dumps(obj).encode("utf-8")
        wfile.write(data + b"\n")
        wfile.flush()

    def recv():
        line = rfile.readline()
        return None if not line else json.loads(line.decode("utf-8"))

    try:
        yield send, recv
    finally:
        sock.close()


def delivered(log):
    return [
        (ev.t, ev.data["step"], ev.data["status"], ev.data["response"])
        for ev in log.of_kind(DELIVERY)
        if ev.data["deliver"]
    ]


# -- serving equals replaying ----------------------------------------------------


def test_streamed_session_matches_batch_replay(server):
    trace = generate_synthetic(shelf_script())
    host, port = server.address
    result = stream_session(trace, host, port, session_id="shelf")

    batch_log, _ = replay(trace, fixture_config())
    assert server.finished_logs["shelf"].dumps() == batch_log.dumps()

    assert [
        (a["t"], a["step"], a["status"], a["text"]) for a in result.assists
    ] == delivered(batch_log)
    assert result.pair_acks == len(trace.pairs())
    assert result.errors == []
    assert result.end_counts == {
        "pairs": len(trace.pairs()),
        "sampled_pairs": len(batch_log.of_kind(SAMPLED_PAIR)),
        "key_moments": len(batch_log.of_kind(KEY_MOMENT)),
        "reasoned": len(batch_log.of_kind(REASONED)),
        "deliveries": len(delivered(batch_log)),
        "errors": len(batch_log.of_kind(ERROR)),
    }


def test_concurrent_sessions_stay_isolated(server):
    shelf = generate_synthetic(shelf_script())
    paint = generate_synthetic(
        shelf_script(
            steps=(
                StepPlan(
                    "Prime the wall",
                    (
                        PhaseSpec(ExecutionStatus.JUST_START, 1.0),
                        PhaseSpec(ExecutionStatus.IN_PROGRESS, 3.0),
                    ),
                    proactive=((1.0, 3.0),),
                ),
                StepPlan("Roll the paint", (PhaseSpec(ExecutionStatus.IN_PROGRESS, 4.0),)),
            ),
            instruction="paint the wall",
            hands=(HandTrack("right", 80, 28, (HandMove(0.0, 8.0, 0, 12),)),),
            seed=9,
        )
    )
    host, port = server.address
    failures = []

    def run(trace, sid):
        try:
            stream_session(trace, host, port, session_id=sid)
        except Exception as exc:  # surfaced after join
            failures.append((sid, exc))

    threads = [
        threading.Thread(target=run, args=(shelf, "shelf")),
        threading.Thread(target=run, args=(paint, "paint")),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=60)
    assert failures == []

    for trace, sid in ((shelf, "shelf"), (paint, "paint")):
        batch_log, _ = replay(trace, fixture_config())
        assert server.finished_logs[sid].dumps() == batch_log.dumps()


def test_one_connection_can_run_sessions_back_to_back(server):
    with raw_client(server) as (send, recv):
        send(start_message())
        assert recv()["of"] == "session_start"
        send({"type": "session_end"})
        end = recv()
        assert end["of"] == "session_end"
        assert end["counts"]["pairs"] == 0
        send(start_message(session_id="second"))
        ack = recv()
        assert ack["of"] == "session_start" and ack["session_id"] == "second"


# -- protocol faults -------------------------------------------------------------


def test_garbage_line_keeps_the_connection(server):
    with raw_client(server) as (send, recv):
        send(b"{not json")
        err = recv()
        assert err["type"] == "error" and err["code"] == "bad_json"
        send(start_message())
        assert recv()["of"] == "session_start"


def test_untyped_and_unknown_messages_are_rejected(server):
    with raw_client(server) as (send, recv):
        send({"no_type": 1})
        assert recv()["code"] == "bad_message"
        send({"type": "telemetry"})
        err = recv()
        assert err["code"] == "bad_message" and "telemetry" in err["detail"]


def test_records_before_session_start_are_rejected(server):
    with raw_client(server) as (send, recv):
        send({"type": "imu", "t": 0.0, "gx": 0.0, "gy": 0.0, "gz": 0.0})
        assert recv()["code"] == "no_session"
        send(start_message())
        assert recv()["of"] == "session_start"


def test_protocol_mismatch_closes_the_connection(server):
    with raw_client(server) as (send, recv):
        send(start_message(protocol=2))
        err = recv()
        assert err["code"] == "protocol_version"
        assert "2" in err["detail"]
        assert recv() is None  # server hung up


def test_pair_gap_mismatch_is_refused(server):
    with raw_client(server) as (send, recv):
        send(start_message(pair_gap=0.2))
        err = recv()
        assert err["code"] == "bad_message" and "pair_gap" in err["detail"]
        send(start_message())  # the connection is still usable
        assert recv()["of"] == "session_start"


def test_second_session_start_is_refused_while_open(server):
    with raw_client(server) as (send, recv):
        send(start_message())
        assert recv()["of"] == "session_start"
        send(start_message(session_id="other"))
        assert recv()["code"] == "session_active"


def test_corrupt_stream_drops_the_session(server):
    with raw_client(server) as (send, recv):
        send(start_message())
        assert recv()["of"] == "session_start"
        send({"type": "imu", "t": 1.0, "gx": 0.0, "gy": 0.0, "gz": 0.0})
        send({"type": "imu", "t": 0.5, "gx": 0.0, "gy": 0.0, "gz": 0.0})
        err = recv()
        assert err["code"] == "bad_stream" and "timestamp order" in err["detail"]
        send({"type": "imu", "t": 2.0, "gx": 0.0, "gy": 0.0, "gz": 0.0})
        assert recv()["code"] == "no_session"


def test_frame_geometry_mismatch_is_a_stream_fault(server):
    with raw_client(server) as (send, recv):
        send(start_message())
        assert recv()["of"] == "session_start"
        pgm = base64.b64encode(write_pgm(np.zeros((16, 16), dtype=np.uint8)))
        send({"type": "frame", "t": 0.0, "pair": 0, "slot": "a", "data": pgm.decode()})
        err = recv()
        assert err["code"] == "bad_stream" and "geometry" in err["detail"]


def test_oracle_sessions_need_annotations(server):
    with raw_client(server) as (send, recv):
        send(start_message(annotations=None))
        err = recv()
        assert err["code"] == "bad_stream" and "segment" in err["detail"]


# -- command line -----------------------------------------------------------------


@pytest.fixture(scope="module")
def session_dir(tmp_path_factory):
    trace = generate_synthetic(shelf_script())
    return write_session(trace, tmp_path_factory.mktemp("cli") / "shelf-session")


REPLAY_FLAGS = ["--smoothing-window", "0.25", "--search-radius", "15"]


def test_cli_generate_and_replay(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path / "sess"), "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "wrote session" in out
    trace = load_session(tmp_path / "sess")
    assert trace.duration == 72.1

    assert (
        main(
            ["replay", "--session", str(tmp_path / "sess"), "--out", str(tmp_path / "rep")]
            + REPLAY_FLAGS
        )
        == 0
    )
    out = capsys.readouterr().out
    assert "step_acc" in out and "1.0000" in out
    assert "deliveries" in out
    assert (tmp_path / "rep" / REPORT_FILE).exists()


def test_cli_eval_recomputes_saved_reports(tmp_path, capsys, session_dir):
    assert (
        main(
            ["replay", "--session", str(session_dir), "--out", str(tmp_path / "rep")]
            + REPLAY_FLAGS
        )
        == 0
    )
    capsys.readouterr()
    assert (
        main(["eval", "--report", str(tmp_path / "rep"), "--session", str(session_dir)]) == 0
    )
    out = capsys.readouterr().out
    assert "step_acc" in out and "sts" in out


def test_cli_send_streams_to_a_live_server(capsys, session_dir):
    with PipelineServer(fixture_config()) as srv:
        host, port = srv.address
        code = main(
            ["send", "--session", str(session_dir), "--host", host, "--port", str(port)]
        )
    assert code == 0
    out = capsys.readouterr().out
    assert "finished:" in out and "deliveries=1" in out


def test_cli_retrieve_reports_the_matched_guideline(capsys, corpus_dir):
    code = main(
        [
            "retrieve",
            "--corpus",
            str(corpus_dir),
            "--instruction",
            "brew a cup of tea",
            "--structure",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("tea ")
    assert "Task: Brew tea" in out
    assert "4. Pour water [after 2, 3]" in out
