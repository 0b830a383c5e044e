"""Prefix-based interactive translation sessions.

The user corrects the left-most wrong character of the hypothesis; the
correction validates a character prefix, and the engine re-decodes a suffix
compatible with it, until the hypothesis matches the desired translation.

When the hypothesis starts with the full desired sentence but runs past its
end, the user accepts at the caret instead of typing: that costs one extra
positioning mouse action (no keystroke) and truncates the hypothesis.  This
keeps the correction count bounded by the reference length even against
models that never predict the desired continuation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

from .data import Sentence
from .metrics import EffortConvention, EffortLedger
from .search import Hypothesis


@dataclass(frozen=True)
class Correction:
    """The user typed ``char`` at character index ``position``."""

    position: int
    char: str


@dataclass(frozen=True)
class Accept:
    """The user accepted the hypothesis, optionally truncated at a caret."""

    truncate_at: int | None = None


Feedback = Correction | Accept


class ProtocolError(RuntimeError):
    def __init__(self, message: str, trace: "SessionTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass
class SessionIteration:
    hypothesis: str
    feedback: Feedback


@dataclass
class SessionTrace:
    source: str
    reference: str | None
    iterations: list[SessionIteration] = field(default_factory=list)
    ledger: EffortLedger = field(default_factory=EffortLedger)
    final: str = ""

    def corrections(self) -> int:
        return sum(1 for it in self.iterations if isinstance(it.feedback, Correction))


class InteractiveTranslator(Protocol):
    """What a session needs from a translation engine."""

    def translate(self, x: Sentence, beam: int) -> Hypothesis: ...

    def constrained_suffix_search(
        self, x: Sentence, prefix_chars: str, beam: int
    ) -> Hypothesis: ...


def simulate_user(hypothesis_surface: str, reference_surface: str) -> Feedback:
    """Feedback of a simulated user who wants exactly ``reference_surface``.

    Corrects the first differing character; if the hypothesis is a strict
    prefix of the reference the next reference character is appended; if the
    reference is a strict prefix of the hypothesis the user accepts at the
    caret, truncating the surplus.
    """
    hyp, ref = hypothesis_surface, reference_surface
    if hyp == ref:
        return Accept()
    for i, (h, r) in enumerate(zip(hyp, ref)):
        if h != r:
            return Correction(i, r)
    if len(hyp) < len(ref):
        return Correction(len(hyp), ref[len(hyp)])
    return Accept(truncate_at=len(ref))


def validated_prefix(hypothesis_surface: str, correction: Correction) -> str:
    """The character prefix validated by a correction: everything the user
    read past plus the corrected character itself."""
    if correction.position > len(hypothesis_surface):
        raise ValueError(
            f"correction position {correction.position} beyond hypothesis "
            f"length {len(hypothesis_surface)}"
        )
    return hypothesis_surface[: correction.position] + correction.char


def charge_correction(
    ledger: EffortLedger,
    position: int,
    prev_position: int | None,
    convention: EffortConvention,
) -> None:
    """Account one correction: a keystroke plus (usually) a positioning mouse
    action.  Shared by simulated sessions and the live service so both count
    effort identically."""
    ledger.keystrokes += 1
    caret_adjacent = prev_position is not None and position == prev_position + 1
    if not (convention.skip_adjacent_positioning and caret_adjacent):
        ledger.mouse_actions += 1


def charge_accept(ledger: EffortLedger, truncated: bool) -> None:
    """Account the final accept action (plus caret positioning if the accept
    truncates a hypothesis that ran past the desired sentence)."""
    if truncated:
        ledger.mouse_actions += 1
    ledger.mouse_actions += 1


def inmt_session(
    engine: InteractiveTranslator,
    x: Sentence,
    reference: str | None = None,
    beam: int = 6,
    convention: EffortConvention = EffortConvention(),
    feedback_fn: Callable[[str], Feedback] | None = None,
    initial_hypothesis: Hypothesis | None = None,
) -> tuple[Hypothesis, SessionTrace]:
    """Run one interactive session; returns the last decoded hypothesis and
    the trace (whose ``final`` field holds the accepted surface).

    In simulated mode (``reference`` given) the session terminates with
    ``final == reference`` after at most ``len(reference)`` corrections.
    """
    if feedback_fn is None:
        if reference is None:
            raise ValueError("either a reference or a feedback_fn is required")
        feedback_fn = lambda surface: simulate_user(surface, reference)

    hyp = initial_hypothesis if initial_hypothesis is not None else engine.translate(x, beam)
    trace = SessionTrace(source=x.surface, reference=reference)
    if reference is not None:
        trace.ledger.reference_characters = len(reference)
    surface = hyp.surface
    validated = 0
    prev_position: int | None = None
    cap = (2 * len(reference) + 8) if reference is not None else None

    while True:
        feedback = feedback_fn(surface)
        trace.iterations.append(SessionIteration(surface, feedback))
        if isinstance(feedback, Accept):
            if feedback.truncate_at is not None:
                surface = surface[: feedback.truncate_at]
            charge_accept(trace.ledger, truncated=feedback.truncate_at is not None)
            trace.final = surface
            break

        charge_correction(trace.ledger, feedback.position, prev_position, convention)
        prev_position = feedback.position

        prefix = validated_prefix(surface, feedback)
        if len(prefix) <= validated:
            raise ProtocolError(
                f"validated prefix did not grow ({validated} -> {len(prefix)})", trace
            )
        validated = len(prefix)
        hyp = engine.constrained_suffix_search(x, prefix, beam)
        surface = hyp.surface
        if not surface.startswith(prefix):
            raise ProtocolError(
                f"hypothesis {surface!r} lost validated prefix {prefix!r}", trace
            )
        if cap is not None and len(trace.iterations) > cap:
            raise ProtocolError("iteration cap exceeded", trace)

    if reference is not None and trace.final != reference:
        raise ProtocolError(
            f"session ended with {trace.final!r}, wanted {reference!r}", trace
        )
    return hyp, trace
