import math

import pytest
from fastapi.testclient import TestClient

from alimt.data import StreamSource
from alimt.engine import TranslationEngine
from alimt.metrics import ksmr
from alimt.sampling import SamplingConfig
from alimt.service import create_app
from alimt.session import Accept, Correction, inmt_session, simulate_user


@pytest.fixture()
def client(mini_workbench):
    task, engine_dir, aligner = mini_workbench
    engine = TranslationEngine.load(engine_dir)
    app = create_app(
        engine,
        aligner=aligner,
        stream=StreamSource(task.stream_sources[:25]),
        sampling=SamplingConfig(strategy="ads", epsilon=0.3),
        beam=4,
        incremental_lr=0.01,
    )
    return TestClient(app), task


def start_nonempty_session(http, task):
    """First stream sentence whose initial decode is non-empty (a weak model
    may legitimately decode an empty hypothesis)."""
    for source in task.stream_sources[:10]:
        body = http.post("/session", json={"source": source}).json()
        if body["hypothesis"]:
            return body
    raise AssertionError("no non-empty initial hypothesis found")


def test_start_session_shape(client):
    http, task = client
    resp = http.post("/session", json={"source": task.stream_sources[0]})
    assert resp.status_code == 201
    body = resp.json()
    assert body["version"] == "1"
    assert body["status"] == "open"
    assert body["validated_prefix_len"] == 0
    assert isinstance(body["hypothesis"], str)
    att = body["attention"]
    assert len(att["matrix"]) == len(att["target_tokens"])
    assert len(att["matrix"][0]) == len(att["source_tokens"])
    for row in att["matrix"]:
        assert sum(row) == pytest.approx(1.0, abs=1e-6)


def test_empty_source_rejected(client):
    http, _ = client
    assert http.post("/session", json={"source": "   "}).status_code == 400


def test_distinct_session_ids(client):
    http, task = client
    a = http.post("/session", json={"source": task.stream_sources[0]}).json()
    b = http.post("/session", json={"source": task.stream_sources[0]}).json()
    assert a["session_id"] != b["session_id"]


def test_no_model_gives_503():
    http = TestClient(create_app(None))
    assert http.post("/session", json={"source": "hello"}).status_code == 503


def test_unknown_session_404(client):
    http, _ = client
    assert http.post("/session/nope/feedback", json={"position": 0, "char": "x"}).status_code == 404


def test_feedback_prefix_contract(client):
    http, task = client
    ref = task.stream_references[0]
    start = http.post("/session", json={"source": task.stream_sources[0]}).json()
    hyp = start["hypothesis"]
    fb = simulate_user(hyp, ref)
    if not isinstance(fb, Correction):
        pytest.skip("initial hypothesis already matches the reference")
    resp = http.post(
        f"/session/{start['session_id']}/feedback",
        json={"position": fb.position, "char": fb.char},
    )
    assert resp.status_code == 200
    body = resp.json()
    prefix = hyp[: fb.position] + fb.char
    assert body["hypothesis"].startswith(prefix)
    assert body["validated_prefix_len"] == len(prefix)
    assert body["ledger"]["keystrokes"] == 1


def test_out_of_range_position_409_echoes_state(client):
    http, task = client
    start = http.post("/session", json={"source": task.stream_sources[0]}).json()
    resp = http.post(
        f"/session/{start['session_id']}/feedback",
        json={"position": len(start["hypothesis"]) + 5, "char": "x"},
    )
    assert resp.status_code == 409
    detail = resp.json()["detail"]
    assert detail["state"]["session_id"] == start["session_id"]


def test_accept_finalizes_and_rejects_further_feedback(client):
    http, task = client
    start = start_nonempty_session(http, task)
    sid = start["session_id"]
    resp = http.post(f"/session/{sid}/accept", json={})
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "accepted"
    assert body["final"] == start["hypothesis"]
    assert body["ledger"]["keystrokes"] == 0
    assert body["ledger"]["mouse_actions"] == 1
    again = http.post(f"/session/{sid}/feedback", json={"position": 0, "char": "x"})
    assert again.status_code == 409
    assert http.post(f"/session/{sid}/accept", json={}).status_code == 409


def drive_scripted_session(http, source, reference, max_rounds=200):
    """A scripted client implementing the simulated user over the wire."""
    state = http.post("/session", json={"source": source}).json()
    sid = state["session_id"]
    for _ in range(max_rounds):
        fb = simulate_user(state["hypothesis"], reference)
        if isinstance(fb, Accept):
            payload = {} if fb.truncate_at is None else {"truncate_at": fb.truncate_at}
            final = http.post(f"/session/{sid}/accept", json=payload).json()
            return final
        resp = http.post(
            f"/session/{sid}/feedback", json={"position": fb.position, "char": fb.char}
        )
        assert resp.status_code == 200, resp.json()
        state = resp.json()
    raise AssertionError("scripted session did not terminate")


def test_service_reproduces_simulated_sessions(mini_workbench):
    task, engine_dir, aligner = mini_workbench
    sources = task.stream_sources[:4]
    references = task.stream_references[:4]
    lr = 0.01

    service_engine = TranslationEngine.load(engine_dir)
    http = TestClient(create_app(service_engine, beam=4, incremental_lr=lr))
    wire_results = [
        drive_scripted_session(http, src, ref) for src, ref in zip(sources, references)
    ]

    direct_engine = TranslationEngine.load(engine_dir)
    direct_results = []
    for src, ref in zip(sources, references):
        x = direct_engine.tokenize(src)
        _, trace = inmt_session(direct_engine, x, reference=ref, beam=4)
        from alimt.data import ParallelPair, Sentence

        direct_engine.update(ParallelPair(x, Sentence(trace.final)), lr)
        direct_results.append(trace)

    for wire, direct in zip(wire_results, direct_results):
        assert wire["final"] == direct.final == direct.reference
        assert wire["ledger"]["keystrokes"] == direct.ledger.keystrokes
        assert wire["ledger"]["mouse_actions"] == direct.ledger.mouse_actions
        assert wire["ksmr"] == pytest.approx(ksmr(direct.ledger))


def test_queue_scores_and_selection(client):
    http, _ = client
    body = http.get("/queue").json()
    assert body["available"]
    sentences = body["sentences"]
    assert len(sentences) == 20
    assert body["selected_count"] == math.ceil(0.3 * 20)
    assert sum(s["selected"] for s in sentences) == body["selected_count"]
    advanced = http.post("/queue/advance").json()
    assert advanced["block_index"] == body["block_index"] + 1
    assert len(advanced["sentences"]) == 5  # 25-sentence stream leaves a short block


def test_queue_unavailable_without_stream(mini_workbench):
    _, engine_dir, _ = mini_workbench
    http = TestClient(create_app(TranslationEngine.load(engine_dir)))
    body = http.get("/queue").json()
    assert body["available"] is False


def test_metrics_track_accepted_sessions(client):
    http, task = client
    before = http.get("/metrics").json()
    assert before["sessions_accepted"] == 0
    drive_scripted_session(http, task.stream_sources[0], task.stream_references[0])
    after = http.get("/metrics").json()
    assert after["sessions_accepted"] == 1
    assert after["reference_characters"] == len(task.stream_references[0])
    assert after["ksmr"] >= 0.0
