"""Recurring survey occurrences: when, how often, and snoozable reminders.

Recurrences are computed in the schedule's local timezone and converted to
UTC. A local anchor time skipped by a DST gap rolls forward to the first
valid instant (the transition itself); a repeated anchor time (fall-back)
fires once, at its first occurrence. Day-of-month recurrences only accept
days 1-28 so every month has the date.

Occurrence ids are deterministic digests of (participant, task, due
instant), so repeated materialization converges on the same records.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Any, Iterable, Literal, Mapping, Sequence, Union
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from .clock import format_timestamp, parse_timestamp

__all__ = [
    "Daily",
    "Deployment",
    "DeploymentError",
    "Every",
    "Monthly",
    "Occurrence",
    "OccurrenceStateError",
    "ParticipantState",
    "Recurrence",
    "ReminderPolicy",
    "ScheduleSpec",
    "SnoozeLimitReached",
    "TaskRef",
    "Weekly",
    "apply_snooze",
    "due_occurrences",
    "next_occurrence",
    "parse_deployment",
    "parse_duration",
]

DEFAULT_WINDOW = timedelta(hours=24)
DEFAULT_SNOOZE = timedelta(minutes=30)
DEFAULT_MAX_SNOOZES = 3

OccurrenceState = Literal["pending", "snoozed", "completed", "expired"]

_WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")


class DeploymentError(ValueError):
    """Deployment document is malformed or breaks a schedule invariant."""


class OccurrenceStateError(RuntimeError):
    """Transition not allowed from the occurrence's current state."""


class SnoozeLimitReached(OccurrenceStateError):
    """The reminder policy's snooze budget is spent."""


@dataclass(frozen=True)
class Daily:
    pass


@dataclass(frozen=True)
class Weekly:
    weekday: int  # 0 = Monday .. 6 = Sunday


@dataclass(frozen=True)
class Monthly:
    day: int  # 1..28


@dataclass(frozen=True)
class Every:
    interval: timedelta
    anchor_at: datetime | None = None  # UTC; defaults to enrollment when scheduling


Recurrence = Union[Daily, Weekly, Monthly, Every]


@dataclass(frozen=True)
class TaskRef:
    assessment_id: str
    kind: Literal["full", "spot", "pam"]

    def __str__(self) -> str:
        return f"{self.assessment_id}#{self.kind}"


@dataclass(frozen=True)
class ScheduleSpec:
    task_ref: TaskRef
    recurrence: Recurrence
    anchor_time: time
    timezone: str
    window: timedelta = DEFAULT_WINDOW

    def __post_init__(self) -> None:
        if self.window <= timedelta(0):
            raise ValueError("window must be positive")
        rec = self.recurrence
        if isinstance(rec, Weekly) and not 0 <= rec.weekday <= 6:
            raise ValueError(f"weekday must be 0..6, got {rec.weekday}")
        if isinstance(rec, Monthly) and not 1 <= rec.day <= 28:
            raise ValueError(f"day-of-month must be 1..28, got {rec.day}")
        if isinstance(rec, Every) and rec.interval <= timedelta(0):
            raise ValueError("interval must be positive")


@dataclass(frozen=True)
class ReminderPolicy:
    snooze_duration: timedelta = DEFAULT_SNOOZE
    max_snoozes: int = DEFAULT_MAX_SNOOZES


@dataclass(frozen=True)
class Occurrence:
    occurrence_id: str
    participant_id: str
    task_ref: TaskRef
    due_at: datetime
    expires_at: datetime
    remind_at: datetime
    snooze_count: int = 0
    state: OccurrenceState = "pending"
    session_id: str | None = None  # audit link once a session runs it

    @property
    def open(self) -> bool:
        return self.state in ("pending", "snoozed")


@dataclass
class ParticipantState:
    """Scheduling state for one enrolled participant (mutable store)."""

    participant_id: str
    enrolled_at: datetime
    occurrences: dict[str, Occurrence] = field(default_factory=dict)


def make_occurrence_id(participant_id: str, task_ref: TaskRef, due_at: datetime) -> str:
    payload = f"{participant_id}|{task_ref}|{format_timestamp(due_at)}"
    return "occ-" + hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Recurrence computation

def _zone(name: str) -> ZoneInfo:
    try:
        return ZoneInfo(name)
    except (ZoneInfoNotFoundError, ValueError, KeyError) as exc:
        raise ValueError(f"invalid timezone name {name!r}") from exc


def _resolve_local(naive: datetime, tz: ZoneInfo) -> datetime:
    """Map a naive local wall time to a UTC instant.

    Repeated wall times (fall-back) take the first occurrence. Skipped wall
    times (spring-forward gap) roll forward to the transition instant, the
    first valid instant after the gap.
    """
    off0 = naive.replace(tzinfo=tz, fold=0).utcoffset()
    off1 = naive.replace(tzinfo=tz, fold=1).utcoffset()
    assert off0 is not None and off1 is not None
    if off0 == off1 or off0 > off1:
        # Unambiguous, or repeated: fold=0 picks the earlier instant.
        return (naive - off0).replace(tzinfo=timezone.utc)

    # Gap: bisect for the first instant carrying the post-transition offset.
    lo = (naive - off1).replace(tzinfo=timezone.utc)   # before the transition
    hi = (naive - off0).replace(tzinfo=timezone.utc)   # after the transition
    while hi - lo > timedelta(seconds=1):
        mid = lo + (hi - lo) / 2
        mid = mid.replace(microsecond=0)
        if mid.astimezone(tz).utcoffset() == off0:
            lo = mid
        else:
            hi = mid
    return hi


def _date_matches(recurrence: Recurrence, day: date) -> bool:
    if isinstance(recurrence, Daily):
        return True
    if isinstance(recurrence, Weekly):
        return day.weekday() == recurrence.weekday
    if isinstance(recurrence, Monthly):
        return day.day == recurrence.day
    raise TypeError(f"not a calendar recurrence: {recurrence!r}")


def next_occurrence(spec: ScheduleSpec, after: datetime) -> datetime:
    """Earliest instant strictly after ``after`` matching the recurrence."""
    if after.tzinfo is None:
        raise ValueError("'after' must be timezone-aware")
    after = after.astimezone(timezone.utc)
    rec = spec.recurrence

    if isinstance(rec, Every):
        if rec.anchor_at is None:
            raise ValueError("every-interval recurrence needs an anchor instant")
        anchor = rec.anchor_at.astimezone(timezone.utc)
        if after < anchor:
            return anchor
        elapsed = (after - anchor) // rec.interval
        return anchor + (elapsed + 1) * rec.interval

    tz = _zone(spec.timezone)
    day = after.astimezone(tz).date()
    for _ in range(800):  # > 2 years of daily candidates; plenty for any rule
        if _date_matches(rec, day):
            candidate = _resolve_local(datetime.combine(day, spec.anchor_time), tz)
            if candidate > after:
                return candidate
        day += timedelta(days=1)
    raise RuntimeError(f"no occurrence found after {after} for {spec}")


def _resolved_spec(spec: ScheduleSpec, enrolled_at: datetime) -> ScheduleSpec:
    rec = spec.recurrence
    if isinstance(rec, Every) and rec.anchor_at is None:
        return replace(spec, recurrence=Every(rec.interval, anchor_at=enrolled_at))
    return spec


def due_occurrences(specs: Iterable[ScheduleSpec], participant: ParticipantState,
                    now: datetime) -> list[Occurrence]:
    """Open occurrences with ``dueAt <= now < expiresAt``, oldest first.

    Materializes every occurrence due since enrollment into the
    participant's store and transitions lapsed ones to ``expired``.
    Completed and expired occurrences are never returned.
    """
    due: list[Occurrence] = []
    for spec in specs:
        spec = _resolved_spec(spec, participant.enrolled_at)
        due_at = next_occurrence(spec, participant.enrolled_at)
        while due_at <= now:
            occ_id = make_occurrence_id(participant.participant_id, spec.task_ref, due_at)
            occ = participant.occurrences.get(occ_id)
            if occ is None:
                occ = Occurrence(
                    occurrence_id=occ_id,
                    participant_id=participant.participant_id,
                    task_ref=spec.task_ref,
                    due_at=due_at,
                    expires_at=due_at + spec.window,
                    remind_at=due_at,
                )
            if occ.open and now >= occ.expires_at:
                occ = replace(occ, state="expired")
            participant.occurrences[occ_id] = occ
            if occ.open and occ.due_at <= now < occ.expires_at:
                due.append(occ)
            due_at = next_occurrence(spec, due_at)
    due.sort(key=lambda o: (o.due_at, str(o.task_ref), o.occurrence_id))
    return due


def apply_snooze(occ: Occurrence, now: datetime, policy: ReminderPolicy) -> Occurrence:
    """Push the reminder out by the policy's duration, clamped to expiry."""
    if occ.state == "completed":
        raise OccurrenceStateError("occurrence already completed")
    if occ.state == "expired" or now >= occ.expires_at:
        raise OccurrenceStateError("occurrence expired")
    if occ.snooze_count >= policy.max_snoozes:
        raise SnoozeLimitReached(
            f"snooze limit reached ({occ.snooze_count}/{policy.max_snoozes})")
    return replace(
        occ,
        remind_at=min(now + policy.snooze_duration, occ.expires_at),
        snooze_count=occ.snooze_count + 1,
        state="snoozed",
    )


# ---------------------------------------------------------------------------
# Deployment document: schedules + reminder policy + enrollment, as JSON.
#
#   {
#     "schemaVersion": 1,
#     "study": "yadl_study.json",
#     "schedules": [
#       {"taskRef": {"assessmentId": "...", "kind": "full"},
#        "recurrence": {"kind": "monthly", "dayOfMonth": 1},
#        "anchorTime": "09:00", "timezone": "UTC", "window": "24h"},
#       ...
#     ],
#     "reminders": {"snoozeDuration": "30m", "maxSnoozes": 3},
#     "participants": [{"participantId": "p1", "enrolledAt": "2016-09-01T00:00:00Z"}]
#   }
#
# Durations are "<n><unit>" with unit s/m/h/d.

_DURATION_RE = re.compile(r"(\d+)\s*(s|m|h|d)\Z")
_DURATION_UNITS = {"s": timedelta(seconds=1), "m": timedelta(minutes=1),
                   "h": timedelta(hours=1), "d": timedelta(days=1)}


def parse_duration(text: str) -> timedelta:
    match = _DURATION_RE.match(text.strip())
    if not match:
        raise DeploymentError(f"bad duration {text!r}; expected forms like 30m, 12h, 7d")
    return int(match.group(1)) * _DURATION_UNITS[match.group(2)]


def _parse_anchor_time(text: str) -> time:
    try:
        parsed = time.fromisoformat(text)
    except ValueError as exc:
        raise DeploymentError(f"bad anchorTime {text!r}: {exc}") from exc
    if parsed.tzinfo is not None:
        raise DeploymentError(f"anchorTime {text!r} must be a local wall time without offset")
    return parsed


def _parse_recurrence(data: Mapping[str, Any]) -> Recurrence:
    kind = data.get("kind")
    if kind == "daily":
        return Daily()
    if kind == "weekly":
        raw = data.get("weekday")
        if isinstance(raw, str):
            try:
                weekday = _WEEKDAYS.index(raw.lower())
            except ValueError:
                raise DeploymentError(f"bad weekday {raw!r}") from None
        elif isinstance(raw, int) and 0 <= raw <= 6:
            weekday = raw
        else:
            raise DeploymentError(f"bad weekday {raw!r}")
        return Weekly(weekday=weekday)
    if kind == "monthly":
        day = data.get("dayOfMonth")
        if not isinstance(day, int) or isinstance(day, bool):
            raise DeploymentError(f"bad dayOfMonth {day!r}")
        if not 1 <= day <= 28:
            raise DeploymentError(f"dayOfMonth must be 1..28, got {day}")
        return Monthly(day=day)
    if kind == "every":
        interval = parse_duration(str(data.get("interval", "")))
        if interval <= timedelta(0):
            raise DeploymentError("interval must be positive")
        anchor_raw = data.get("anchorAt")
        anchor = parse_timestamp(anchor_raw) if anchor_raw is not None else None
        return Every(interval=interval, anchor_at=anchor)
    raise DeploymentError(f"unknown recurrence kind {kind!r}")


def _parse_schedule(data: Mapping[str, Any], index: int) -> ScheduleSpec:
    where = f"schedules[{index}]"
    try:
        ref = data["taskRef"]
        task_ref = TaskRef(assessment_id=str(ref["assessmentId"]), kind=ref["kind"])
    except (KeyError, TypeError) as exc:
        raise DeploymentError(f"{where}: missing or malformed taskRef") from exc
    if task_ref.kind not in ("full", "spot", "pam"):
        raise DeploymentError(f"{where}: bad task kind {task_ref.kind!r}")
    if "recurrence" not in data:
        raise DeploymentError(f"{where}: missing recurrence")
    recurrence = _parse_recurrence(data["recurrence"])
    anchor_time = _parse_anchor_time(str(data.get("anchorTime", "09:00")))
    zone = str(data.get("timezone", "UTC"))
    _zone(zone)  # validate the name eagerly
    window = parse_duration(str(data.get("window", "24h")))
    try:
        return ScheduleSpec(task_ref=task_ref, recurrence=recurrence,
                            anchor_time=anchor_time, timezone=zone, window=window)
    except ValueError as exc:
        raise DeploymentError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class Deployment:
    study_ref: str
    schedules: tuple[ScheduleSpec, ...]
    reminders: ReminderPolicy
    participants: tuple[tuple[str, datetime], ...]  # (participantId, enrolledAt)
    schema_version: int = 1

    def participant_states(self) -> dict[str, ParticipantState]:
        return {pid: ParticipantState(participant_id=pid, enrolled_at=enrolled)
                for pid, enrolled in self.participants}


def parse_deployment(document: bytes | str) -> Deployment:
    text = document.decode("utf-8") if isinstance(document, bytes) else document
    try:
        root = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeploymentError(f"malformed JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(root, dict):
        raise DeploymentError("deployment document must be a JSON object")

    study_ref = root.get("study")
    if not isinstance(study_ref, str) or not study_ref:
        raise DeploymentError("missing study reference")

    raw_schedules = root.get("schedules")
    if not isinstance(raw_schedules, list) or not raw_schedules:
        raise DeploymentError("deployment needs a non-empty schedules array")
    schedules = tuple(_parse_schedule(s, i) for i, s in enumerate(raw_schedules))

    reminders_raw = root.get("reminders", {})
    if not isinstance(reminders_raw, dict):
        raise DeploymentError("reminders must be an object")
    snooze = parse_duration(str(reminders_raw.get("snoozeDuration", "30m")))
    max_snoozes = reminders_raw.get("maxSnoozes", DEFAULT_MAX_SNOOZES)
    if not isinstance(max_snoozes, int) or isinstance(max_snoozes, bool) or max_snoozes < 0:
        raise DeploymentError(f"maxSnoozes must be an integer >= 0, got {max_snoozes!r}")

    participants: list[tuple[str, datetime]] = []
    for i, entry in enumerate(root.get("participants", [])):
        try:
            participants.append((str(entry["participantId"]), parse_timestamp(entry["enrolledAt"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise DeploymentError(f"participants[{i}]: {exc}") from exc

    version = root.get("schemaVersion", 1)
    if not isinstance(version, int) or isinstance(version, bool) or version < 1:
        raise DeploymentError(f"bad schemaVersion {version!r}")

    return Deployment(study_ref=study_ref, schedules=schedules,
                      reminders=ReminderPolicy(snooze_duration=snooze, max_snoozes=max_snoozes),
                      participants=tuple(participants), schema_version=version)


def load_deployment(path: str | Path) -> Deployment:
    return parse_deployment(Path(path).read_bytes())
