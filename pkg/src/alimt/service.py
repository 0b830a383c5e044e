"""HTTP service exposing live interactive translation sessions and the
adaptation queue to the companion UI.

Wire format: JSON with a top-level ``version`` field.  Corrections arrive one
character at a time; accepting a session triggers the incremental model
update.  All decodes and updates serialize through the engine's lock, so no
session ever observes a partially applied update.
"""

from __future__ import annotations

import os
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .alignment import AlignmentModel
from .data import ParallelPair, Sentence, StreamSource, get_block_from_stream
from .engine import TranslationEngine
from .metrics import EffortConvention, EffortLedger, corpus_bleu, ksmr
from .sampling import SamplingConfig, score_and_select
from .search import Hypothesis
from .session import charge_accept, charge_correction

API_VERSION = "1"
PORT_ENV_VAR = "ALIMT_PORT"


class StartSessionRequest(BaseModel):
    source: str


class FeedbackRequest(BaseModel):
    position: int
    char: str


class AcceptRequest(BaseModel):
    truncate_at: int | None = None


@dataclass
class LiveSession:
    session_id: str
    source: Sentence
    hypothesis: Hypothesis
    initial_surface: str = ""
    validated: int = 0
    prev_position: int | None = None
    ledger: EffortLedger = field(default_factory=EffortLedger)
    status: str = "open"  # "open" | "accepted"
    final: str = ""


def _attention_payload(hyp: Hypothesis, source: Sentence) -> dict:
    return {
        "matrix": np.asarray(hyp.attention).tolist(),  # row-major, one row per target token
        "source_tokens": list(source.tokens or ()),
        "target_tokens": list(hyp.token_strings) + ["</s>"],
    }


def _session_payload(session: LiveSession) -> dict:
    return {
        "version": API_VERSION,
        "session_id": session.session_id,
        "source": session.source.surface,
        "hypothesis": session.hypothesis.surface if session.status == "open" else session.final,
        "validated_prefix_len": session.validated,
        "status": session.status,
        "attention": _attention_payload(session.hypothesis, session.source),
        "ledger": {
            "keystrokes": session.ledger.keystrokes,
            "mouse_actions": session.ledger.mouse_actions,
        },
    }


def _conflict(session: LiveSession, detail: str) -> HTTPException:
    return HTTPException(status_code=409, detail={"error": detail, "state": _session_payload(session)})


def create_app(
    engine: TranslationEngine | None,
    aligner: AlignmentModel | None = None,
    stream: StreamSource | None = None,
    sampling: SamplingConfig | None = None,
    beam: int = 6,
    incremental_lr: float = 0.0005,
    convention: EffortConvention = EffortConvention(),
) -> FastAPI:
    app = FastAPI(title="alimt", version=API_VERSION)
    sessions: dict[str, LiveSession] = {}
    table_lock = threading.Lock()
    rng = np.random.default_rng(sampling.seed if sampling else 0)
    queue_state: dict = {"block": None, "scored": [], "selected": set(), "block_index": -1}
    history = {"initial": [], "final": [], "ledger": EffortLedger()}

    def require_engine() -> TranslationEngine:
        if engine is None:
            raise HTTPException(status_code=503, detail="no model loaded")
        return engine

    def get_session(session_id: str) -> LiveSession:
        with table_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    @app.post("/session", status_code=201)
    def start_session(request: StartSessionRequest) -> dict:
        eng = require_engine()
        if not request.source.strip():
            raise HTTPException(status_code=400, detail="empty source sentence")
        x = eng.tokenize(request.source)
        with eng.lock:
            hyp = eng.translate(x, beam)
        session = LiveSession(uuid.uuid4().hex, x, hyp, initial_surface=hyp.surface)
        with table_lock:
            sessions[session.session_id] = session
        return _session_payload(session)

    @app.post("/session/{session_id}/feedback")
    def feedback(session_id: str, request: FeedbackRequest) -> dict:
        eng = require_engine()
        session = get_session(session_id)
        if session.status != "open":
            raise _conflict(session, "session already accepted")
        surface = session.hypothesis.surface
        if not 0 <= request.position <= len(surface):
            raise _conflict(session, f"position {request.position} out of range")
        if len(request.char) != 1:
            raise HTTPException(status_code=400, detail="char must be a single character")
        prefix = surface[: request.position] + request.char
        if len(prefix) <= session.validated:
            raise _conflict(session, "correction does not extend the validated prefix")
        charge_correction(session.ledger, request.position, session.prev_position, convention)
        session.prev_position = request.position
        with eng.lock:
            session.hypothesis = eng.constrained_suffix_search(session.source, prefix, beam)
        session.validated = len(prefix)
        return _session_payload(session)

    @app.post("/session/{session_id}/accept")
    def accept(session_id: str, request: AcceptRequest) -> dict:
        eng = require_engine()
        session = get_session(session_id)
        if session.status != "open":
            raise _conflict(session, "session already accepted")
        surface = session.hypothesis.surface
        truncate_at = request.truncate_at
        if truncate_at is not None and not 0 <= truncate_at <= len(surface):
            raise _conflict(session, f"truncate_at {truncate_at} out of range")
        final = surface if truncate_at is None else surface[:truncate_at]
        charge_accept(session.ledger, truncated=truncate_at is not None)
        session.status = "accepted"
        session.final = final
        session.ledger.reference_characters = len(final)
        if final:  # an accepted empty translation cannot drive an update
            with eng.lock:
                eng.update(ParallelPair(session.source, Sentence(final)), incremental_lr)
        history["initial"].append(session.initial_surface)
        history["final"].append(final)
        history["ledger"] = history["ledger"] + session.ledger
        return {
            "version": API_VERSION,
            "session_id": session.session_id,
            "status": "accepted",
            "final": final,
            "ledger": {
                "keystrokes": session.ledger.keystrokes,
                "mouse_actions": session.ledger.mouse_actions,
                "reference_characters": session.ledger.reference_characters,
            },
            "ksmr": ksmr(session.ledger) if session.ledger.reference_characters else 0.0,
        }

    @app.get("/queue")
    def queue() -> dict:
        eng = require_engine()
        if stream is None or sampling is None:
            return {"version": API_VERSION, "available": False, "sentences": []}
        if queue_state["block"] is None:
            _advance_queue(eng)
        return _queue_payload()

    @app.post("/queue/advance")
    def advance_queue() -> dict:
        eng = require_engine()
        if stream is None or sampling is None:
            raise HTTPException(status_code=409, detail="no stream configured")
        _advance_queue(eng)
        return _queue_payload()

    def _advance_queue(eng: TranslationEngine) -> None:
        block = get_block_from_stream(stream, 20)
        queue_state["block_index"] += 1
        if block is None:
            queue_state["block"] = None
            queue_state["scored"] = []
            queue_state["selected"] = set()
            return
        sentences = [eng.tokenize(s) for s in block.sentences]
        with eng.lock:
            hyps = [eng.translate(x, beam) for x in sentences]
        items = list(
            zip(range(block.stream_offset, block.stream_offset + len(sentences)), sentences, hyps)
        )
        scored, selected = score_and_select(items, sampling, aligner, rng)
        queue_state["block"] = block
        queue_state["scored"] = scored
        queue_state["selected"] = {s.index for s in selected}

    def _queue_payload() -> dict:
        return {
            "version": API_VERSION,
            "available": queue_state["block"] is not None,
            "block_index": queue_state["block_index"],
            "epsilon": sampling.epsilon if sampling else None,
            "strategy": sampling.strategy if sampling else None,
            "selected_count": len(queue_state["selected"]),
            "sentences": [
                {
                    "index": s.index,
                    "source": s.sentence.surface,
                    "score": None if s.uncertainty == float("-inf") else s.uncertainty,
                    "selected": s.index in queue_state["selected"],
                }
                for s in queue_state["scored"]
            ],
        }

    @app.get("/metrics")
    def metrics() -> dict:
        ledger: EffortLedger = history["ledger"]
        bleu = (
            corpus_bleu(history["initial"], history["final"]) if history["final"] else 0.0
        )
        return {
            "version": API_VERSION,
            "sessions_accepted": len(history["final"]),
            "initial_hypothesis_bleu": bleu,
            "keystrokes": ledger.keystrokes,
            "mouse_actions": ledger.mouse_actions,
            "reference_characters": ledger.reference_characters,
            "ksmr": ksmr(ledger) if ledger.reference_characters else 0.0,
        }

    return app


def default_port() -> int:
    return int(os.environ.get(PORT_ENV_VAR, "8080"))
