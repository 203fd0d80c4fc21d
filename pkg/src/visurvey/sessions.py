"""Survey sessions: a resumable state machine over a task plan.

A session walks the plan's steps with a cursor. Submitting an answer
records a timed result for the current step (last write wins) and advances;
going back decrements the cursor and re-stamps presentation time. Summary
steps take an explicit acknowledge (answer ``None``). When the cursor
reaches the end with every non-summary step answered, the session completes
and can be finalized into an immutable :class:`ResultEnvelope`.

Mutations on one session must be serialized by the caller; distinct
sessions are independent.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable, Literal, Optional, Union

from .clock import Clock, SystemClock
from .compiler import MultiSelectGridStep, SingleChoiceImageStep, Step, SummaryStep, TaskPlan

__all__ = [
    "AnswerMismatch",
    "DEFAULT_SESSION_TTL",
    "ResultEnvelope",
    "SessionStateError",
    "StepResult",
    "SurveySession",
    "expire_if_stale",
    "finalize_session",
    "start_session",
]

ENVELOPE_SCHEMA_VERSION = 1
DEFAULT_SESSION_TTL = timedelta(hours=24)

Answer = Union[str, frozenset, None]
SessionStatus = Literal["in_progress", "completed", "abandoned"]


class SessionStateError(RuntimeError):
    """Operation not allowed in the session's current lifecycle state."""


class AnswerMismatch(ValueError):
    """Submitted answer does not fit the current step."""


@dataclass(frozen=True)
class StepResult:
    step_id: str
    answer: Answer                 # choice value | item id | frozenset of item ids | None
    presented_at: datetime
    answered_at: datetime
    item_id: Optional[str] = None  # the presented item, for single-choice image steps


@dataclass(frozen=True)
class ResultEnvelope:
    """Immutable record of a completed session, one result per non-summary step."""

    envelope_id: str
    session_id: str
    participant_id: str
    study_id: str
    task_kind: str
    results: tuple[StepResult, ...]
    schema_version: int
    completed_at: datetime


class SurveySession:
    """In-flight run of a task plan for one participant."""

    def __init__(self, plan: TaskPlan, participant_id: str, clock: Clock,
                 session_id: str | None = None):
        self.session_id = session_id or f"ses-{uuid.uuid4().hex}"
        self.participant_id = participant_id
        self.plan = plan
        self.cursor = 0
        self.answers: dict[str, StepResult] = {}
        self.status: SessionStatus = "in_progress"
        self.started_at = clock.now()
        self.ended_at: datetime | None = None
        self._clock = clock
        self._presented: dict[str, datetime] = {}
        self._stamp_current()

    # -- introspection ------------------------------------------------------

    @property
    def current_step(self) -> Step | None:
        if self.cursor >= len(self.plan.steps):
            return None
        return self.plan.steps[self.cursor]

    @property
    def total_steps(self) -> int:
        return len(self.plan.steps)

    def _stamp_current(self) -> None:
        step = self.current_step
        if step is not None:
            self._presented[step.step_id] = self._clock.now()

    # -- transitions --------------------------------------------------------

    def submit_answer(self, answer: Answer) -> "SurveySession":
        """Record a result for the current step and advance the cursor."""
        if self.status != "in_progress":
            raise SessionStateError(f"session is {self.status}, not in progress")
        step = self.current_step
        if step is None:
            raise SessionStateError("no current step to answer")

        normalized, item_id = _check_answer(step, answer)
        now = self._clock.now()
        self.answers[step.step_id] = StepResult(
            step_id=step.step_id,
            answer=normalized,
            presented_at=self._presented[step.step_id],
            answered_at=now,
            item_id=item_id,
        )
        self.cursor += 1
        if self.cursor == len(self.plan.steps) and self._all_answered():
            self.status = "completed"
            self.ended_at = now
        else:
            self._stamp_current()
        return self

    def go_back(self) -> "SurveySession":
        """Revisit the previous step; its prior answer stays until overwritten."""
        if self.status != "in_progress":
            raise SessionStateError(f"session is {self.status}, not in progress")
        if self.cursor == 0:
            raise SessionStateError("already at the first step")
        self.cursor -= 1
        self._stamp_current()
        return self

    def abandon(self, now: datetime | None = None) -> "SurveySession":
        if self.status != "in_progress":
            raise SessionStateError(f"session is {self.status}, not in progress")
        self.status = "abandoned"
        self.ended_at = now or self._clock.now()
        return self

    def _all_answered(self) -> bool:
        return all(step.step_id in self.answers for step in self.plan.steps
                   if not _is_summary(step))

    def finalize(self) -> ResultEnvelope:
        """Envelope of a completed session; stable across repeated calls."""
        if self.status != "completed":
            raise SessionStateError(f"cannot finalize a session that is {self.status}")
        assert self.ended_at is not None
        results = tuple(self.answers[step.step_id] for step in self.plan.steps
                        if not _is_summary(step))
        return ResultEnvelope(
            envelope_id=f"env-{self.session_id}",
            session_id=self.session_id,
            participant_id=self.participant_id,
            study_id=self.plan.study_id,
            task_kind=self.plan.task_kind,
            results=results,
            schema_version=ENVELOPE_SCHEMA_VERSION,
            completed_at=self.ended_at,
        )


def start_session(plan, participant_id: str, clock: Clock | None = None,
                  session_id: str | None = None) -> SurveySession:
    return SurveySession(plan, participant_id, clock or SystemClock(), session_id=session_id)


def finalize_session(session: SurveySession) -> ResultEnvelope:
    return session.finalize()


def expire_if_stale(session: SurveySession, now: datetime,
                    ttl: timedelta = DEFAULT_SESSION_TTL) -> bool:
    """Abandon an in-progress session whose TTL has lapsed; True if it did."""
    if session.status == "in_progress" and now - session.started_at > ttl:
        session.abandon(now)
        return True
    return False


# ---------------------------------------------------------------------------
# Answer/step type checking

def _is_summary(step: Step) -> bool:
    return isinstance(step, SummaryStep)


def _check_answer(step: Step, answer: Answer) -> tuple[Answer, Optional[str]]:
    """Validate against the step variant; returns (normalized answer, item id)."""
    if isinstance(step, SummaryStep):
        if answer is not None:
            raise AnswerMismatch("summary steps take an acknowledge (no answer value)")
        return None, None

    if isinstance(step, SingleChoiceImageStep):
        if not isinstance(answer, str):
            raise AnswerMismatch("choice steps take a single choice value string")
        allowed = {c.value for c in step.choices}
        if answer not in allowed:
            raise AnswerMismatch(
                f"choice value {answer!r} not offered; values are {{{', '.join(c.value for c in step.choices)}}}")
        return answer, step.item.identifier

    if isinstance(step, MultiSelectGridStep):
        grid_ids = {item.identifier for item in step.items}
        if step.select_mode == "single":
            if isinstance(answer, str):
                selected = [answer]
            elif isinstance(answer, Iterable) and not isinstance(answer, bytes):
                selected = list(answer)
            else:
                raise AnswerMismatch("single-select grid takes one item id")
            if len(selected) != 1:
                raise AnswerMismatch(f"single-select grid takes exactly one item id, got {len(selected)}")
            if selected[0] not in grid_ids:
                raise AnswerMismatch(f"item {selected[0]!r} is not on this grid")
            return selected[0], None

        if isinstance(answer, str) or answer is None or not isinstance(answer, Iterable):
            raise AnswerMismatch("multi-select grid takes a collection of item ids")
        chosen = frozenset(answer)
        if not all(isinstance(a, str) for a in chosen):
            raise AnswerMismatch("grid selections must be item id strings")
        stray = chosen - grid_ids
        if stray:
            raise AnswerMismatch(f"items not on this grid: {', '.join(sorted(stray))}")
        return chosen, None

    raise AnswerMismatch(f"unknown step variant {type(step).__name__}")
