import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from stepassist.reasoner import (
    ExecutionStatus,
    MalformedOutput,
    MissingFieldError,
    MissingResponseError,
    NoJsonError,
    OracleConfig,
    OracleReasoner,
    ReasonerInput,
    ReasonerOutput,
    RemoteReasoner,
    RemoteReasonerError,
    UnknownStatusError,
    assemble_prompt,
    parse_output,
    scripted_oracle,
)
from stepassist.reasoner import flag_off_guideline
from stepassist.trace.pgm import read_pgm
import base64


def make_input(image=None):
    return ReasonerInput(
        timestamp=2.0,
        guideline_text="Task: Brew tea\nSteps:\n1. Measure water",
        history_text="[]",
        motion_text="The left hand is moving down-right.",
        image_ref="000004_b.pgm",
        image=image,
    )


VALID_REPLY = '{"step": "Measure water", "status": "in_progress", "proactive": false}'


# -- prompt assembly -----------------------------------------------------------


def test_prompt_carries_all_context_blocks():
    prompt = assemble_prompt(make_input())
    assert "You are a proactive assistant for procedural tasks" in prompt
    for header in (
        "Guideline:",
        "Historical Context:",
        "Sensory Context:",
        "Hand Motion Cues:",
        "Output Format:",
    ):
        assert header in prompt
    assert "Task: Brew tea" in prompt
    assert "Previously completed steps in order: []" in prompt
    assert "<IMAGE>" in prompt
    # the motion sentence drops its period; the template closes the sentence
    assert "in the image plane, The left hand is moving down-right. You may" in prompt
    assert '"step":' in prompt  # formatting braces render literally


# -- output parsing ------------------------------------------------------------


def test_parse_accepts_a_complete_reply():
    out = parse_output(
        '{"step": "Boil water", "status": "just_start", "proactive": true, '
        '"response": "Fill the kettle first.", "reasoning": "kettle is empty"}'
    )
    assert out.step == "Boil water"
    assert out.status is ExecutionStatus.JUST_START
    assert out.proactive
    assert out.response == "Fill the kettle first."
    assert out.reasoning == "kettle is empty"
    assert not out.off_guideline


def test_parse_tolerates_surrounding_prose():
    out = parse_output(f"Sure, here is my answer:\n```json\n{VALID_REPLY}\n```\nDone!")
    assert out.step == "Measure water"
    assert out.response is None and out.reasoning is None


def test_parse_error_kinds_are_distinct():
    with pytest.raises(NoJsonError):
        parse_output("the user is boiling water")
    with pytest.raises(NoJsonError):
        parse_output('{"step": broken')
    with pytest.raises(MissingFieldError):
        parse_output('{"status": "in_progress", "proactive": false}')
    with pytest.raises(MissingFieldError):
        parse_output('{"step": "  ", "status": "in_progress", "proactive": false}')
    with pytest.raises(MissingFieldError):
        parse_output('{"step": "X", "status": "in_progress", "proactive": "yes"}')
    with pytest.raises(MissingFieldError):
        parse_output('{"step": "X", "status": "in_progress", "proactive": false, "response": 3}')
    with pytest.raises(UnknownStatusError):
        parse_output('{"step": "X", "status": "done", "proactive": false}')
    with pytest.raises(MissingResponseError):
        parse_output('{"step": "X", "status": "in_progress", "proactive": true}')
    with pytest.raises(MissingResponseError):
        parse_output('{"step": "X", "status": "in_progress", "proactive": true, "response": " "}')


def test_output_type_requires_response_when_proactive():
    with pytest.raises(ValueError):
        ReasonerOutput(step="X", status=ExecutionStatus.IN_PROGRESS, proactive=True)


def test_flag_off_guideline():
    out = parse_output(VALID_REPLY)
    titles = ["Measure water", "Boil water"]
    assert flag_off_guideline(out, titles) is out  # on-guideline stays untouched
    off = flag_off_guideline(out, ["Other step"])
    assert off.off_guideline
    assert off.step == out.step


# -- scripted oracle -----------------------------------------------------------


def test_noiseless_oracle_plays_back_ground_truth(standard_trace):
    oracle = OracleReasoner.from_trace(standard_trace)
    for pair in standard_trace.pairs():
        out = oracle.reason_at(pair.t)
        seg = standard_trace.segment_at(pair.t)
        if seg is None:  # the final pair sits just past the half-open segments
            assert pair.t == 72.0
            assert out.step == "Serve tea"
            assert out.status is ExecutionStatus.STEP_TRANSITION
            continue
        assert out.step == seg.step
        assert out.status is seg.status
        assert out.proactive == (standard_trace.need_at(pair.t) is not None)
        if out.proactive:
            assert out.response == f"Guidance for {out.step} ({out.status.value})."
        else:
            assert out.response is None


def test_oracle_reads_segment_order_not_argument_order(steady_trace):
    forward = OracleReasoner(steady_trace.segments, steady_trace.proactive_intervals)
    shuffled = OracleReasoner(
        list(reversed(steady_trace.segments)), steady_trace.proactive_intervals
    )
    for t in (0.0, 3.0, 14.5, 60.0, 71.5):
        assert forward.reason_at(t) == shuffled.reason_at(t)


def test_oracle_outside_annotations_reads_as_transition(steady_trace):
    oracle = OracleReasoner.from_trace(steady_trace)
    past_end = oracle.reason_at(72.05)
    assert past_end.step == "Check stability"
    assert past_end.status is ExecutionStatus.STEP_TRANSITION
    before_start = oracle.reason_at(-0.5)
    assert before_start.step == "Lay out parts"
    assert before_start.status is ExecutionStatus.STEP_TRANSITION


def test_oracle_corruption_depends_only_on_seed_and_timestamp(steady_trace):
    cfg = OracleConfig(step_error_rate=0.5, status_error_rate=0.5, seed=7)
    a = OracleReasoner.from_trace(steady_trace, cfg)
    b = OracleReasoner.from_trace(steady_trace, cfg)
    for t in (0.0, 1.0, 2.0, 33.5):
        b.reason_at(t + 0.25)  # interleaved extra calls must not shift outcomes
    for t in (0.0, 1.0, 2.0, 33.5):
        assert a.reason_at(t) == b.reason_at(t)
        assert a.reason_at(t) == scripted_oracle(steady_trace, cfg, t)


def test_oracle_corruption_sets_are_frozen(steady_trace):
    # the noisy-checker fixture leans on these exact draws: with a step error
    # rate of 0.2, seeds 5/6/7/9 corrupt the moment at t=0.0 and no seed in
    # 0..9 corrupts the one at t=3.0
    truth = steady_trace.segment_at(0.0).step
    corrupted = set()
    for seed in range(10):
        cfg = OracleConfig(step_error_rate=0.2, seed=seed)
        out = OracleReasoner.from_trace(steady_trace, cfg).reason_at(0.0)
        if out.step != truth:
            corrupted.add(seed)
    assert corrupted == {5, 6, 7, 9}
    for seed in range(10):
        cfg = OracleConfig(step_error_rate=0.2, seed=seed)
        out = OracleReasoner.from_trace(steady_trace, cfg).reason_at(3.0)
        assert out.step == steady_trace.segment_at(3.0).step


def test_oracle_corruption_rates_match_configuration(steady_trace):
    cfg = OracleConfig(
        step_error_rate=0.3, status_error_rate=0.25, proactive_flip_rate=0.15, seed=1
    )
    noisy = OracleReasoner.from_trace(steady_trace, cfg)
    clean = OracleReasoner.from_trace(steady_trace)
    n = 2000
    step_errs = status_errs = flips = 0
    for k in range(n):
        t = 72.0 * k / n
        got, want = noisy.reason_at(t), clean.reason_at(t)
        step_errs += got.step != want.step
        status_errs += got.status != want.status
        flips += got.proactive != want.proactive
    assert abs(step_errs / n - 0.3) < 0.04
    assert abs(status_errs / n - 0.25) < 0.04
    assert abs(flips / n - 0.15) < 0.04


def test_corrupted_step_stays_in_the_scripted_vocabulary(steady_trace):
    cfg = OracleConfig(step_error_rate=1.0, seed=3)
    oracle = OracleReasoner.from_trace(steady_trace)
    noisy = OracleReasoner.from_trace(steady_trace, cfg)
    labels = set(steady_trace.step_labels())
    for k in range(50):
        t = 72.0 * k / 50
        out = noisy.reason_at(t)
        assert out.step in labels
        assert out.step != oracle.reason_at(t).step


def test_proactive_flip_negates_ground_truth(steady_trace):
    flipped = OracleReasoner.from_trace(steady_trace, OracleConfig(proactive_flip_rate=1.0))
    clean = OracleReasoner.from_trace(steady_trace)
    for t in (0.5, 3.0, 10.0, 21.5):
        assert flipped.reason_at(t).proactive == (not clean.reason_at(t).proactive)


def test_oracle_config_validation(steady_trace):
    with pytest.raises(ValueError):
        OracleConfig(step_error_rate=1.5)
    with pytest.raises(ValueError):
        OracleConfig(proactive_flip_rate=-0.1)
    with pytest.raises(ValueError):
        OracleReasoner([], steady_trace.proactive_intervals)


# -- remote backend ------------------------------------------------------------


class MockChat:
    """One-shot HTTP chat endpoint replaying scripted raw response bodies."""

    def __init__(self, bodies):
        self.bodies = list(bodies)
        self.requests = []
        owner = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                owner.requests.append(json.loads(self.rfile.read(length)))
                data = owner.bodies.pop(0).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)

    @property
    def endpoint(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}/chat"

    def __enter__(self):
        threading.Thread(target=self.server.serve_forever, daemon=True).start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def content_reply(text):
    return json.dumps({"content": text})


def test_remote_reasoner_round_trip():
    with MockChat([content_reply(VALID_REPLY)]) as mock:
        out = RemoteReasoner(mock.endpoint).reason(make_input())
    assert isinstance(out, ReasonerOutput)
    assert out.step == "Measure water"
    (request,) = mock.requests
    assert "model" not in request
    system, user = request["messages"]
    assert system == {"role": "system", "content": assemble_prompt(make_input())}
    assert user["role"] == "user"
    assert user["content"] == [{"type": "text", "text": "[image] 000004_b.pgm"}]


def test_remote_reasoner_embeds_the_frame_when_given():
    image = np.arange(24, dtype=np.uint8).reshape(4, 6)
    with MockChat([content_reply(VALID_REPLY)]) as mock:
        out = RemoteReasoner(mock.endpoint, model="m1").reason(make_input(image=image))
    assert isinstance(out, ReasonerOutput)
    (request,) = mock.requests
    assert request["model"] == "m1"
    (part,) = request["messages"][1]["content"]
    assert part["type"] == "image"
    assert part["format"] == "pgm_base64"
    assert np.array_equal(read_pgm(base64.b64decode(part["data"])), image)


def test_remote_reasoner_accepts_nested_completion_shape():
    body = json.dumps({"choices": [{"message": {"content": VALID_REPLY}}]})
    with MockChat([body]) as mock:
        out = RemoteReasoner(mock.endpoint).reason(make_input())
    assert isinstance(out, ReasonerOutput)


def test_remote_reasoner_retries_once_with_a_format_reminder():
    first = "The user seems to be measuring water right now."
    with MockChat([content_reply(first), content_reply(VALID_REPLY)]) as mock:
        out = RemoteReasoner(mock.endpoint).reason(make_input())
    assert isinstance(out, ReasonerOutput)
    assert len(mock.requests) == 2
    retry_messages = mock.requests[1]["messages"]
    assert retry_messages[2] == {"role": "assistant", "content": first}
    assert retry_messages[3]["role"] == "user"
    assert "could not be parsed" in retry_messages[3]["content"]


def test_remote_reasoner_gives_up_after_the_retry():
    with MockChat([content_reply("nope"), content_reply("still nope")]) as mock:
        out = RemoteReasoner(mock.endpoint).reason(make_input())
    assert isinstance(out, MalformedOutput)
    assert out.attempts == 2
    assert "first:" in out.reason and "retry:" in out.reason
    assert len(mock.requests) == 2


def test_remote_reasoner_wraps_transport_failures_with_the_moment():
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    endpoint = f"http://127.0.0.1:{port}/chat"
    with pytest.raises(RemoteReasonerError) as err:
        RemoteReasoner(endpoint, timeout=2.0).reason(make_input())
    assert endpoint in str(err.value)
    assert "t=2.0" in str(err.value)


def test_remote_reasoner_rejects_non_json_endpoint_body():
    with MockChat(["this is not json"]) as mock:
        with pytest.raises(RemoteReasonerError):
            RemoteReasoner(mock.endpoint).reason(make_input())
