"""Independent brute-force oracles used by unit and acceptance tests.

Everything here reimplements expected behavior from first principles
(enumeration, replay, filtering) without touching the engine's code paths,
so tests compare two separately derived answers.
"""

from __future__ import annotations

from datetime import datetime, time, timedelta, timezone
from typing import Callable, Iterable, Sequence
from zoneinfo import ZoneInfo

MINUTE = timedelta(minutes=1)


# ---------------------------------------------------------------------------
# Session replay: last-write-wins over an action log.
#
# A step spec is ("choice", allowed_values) | ("multi", item_ids)
# | ("single", item_ids) | ("summary",). Actions are ("answer", value)
# or ("back",). The oracle decides validity itself and tracks the final
# recorded answers for non-summary steps.

def replay_actions(step_specs: Sequence[tuple], actions: Iterable[tuple]):
    """Returns (recorded, cursor, completed, accepted_flags)."""
    recorded: dict[int, object] = {}
    cursor = 0
    accepted: list[bool] = []
    total = len(step_specs)

    def valid(spec: tuple, value) -> bool:
        kind = spec[0]
        if kind == "summary":
            return value is None
        if kind == "choice":
            return isinstance(value, str) and value in spec[1]
        if kind == "single":
            return isinstance(value, str) and value in spec[1]
        if kind == "multi":
            return (not isinstance(value, str) and isinstance(value, Iterable)
                    and all(v in spec[1] for v in value))
        raise AssertionError(f"unknown spec {spec}")

    completed = False
    for action in actions:
        if completed:
            accepted.append(False)
            continue
        if action[0] == "back":
            if cursor >= 1:
                cursor -= 1
                accepted.append(True)
            else:
                accepted.append(False)
            continue
        value = action[1]
        if cursor >= total or not valid(step_specs[cursor], value):
            accepted.append(False)
            continue
        if isinstance(value, Iterable) and not isinstance(value, str) and value is not None:
            value = frozenset(value)
        recorded[cursor] = value
        cursor += 1
        accepted.append(True)
        if cursor == total and all(i in recorded for i, s in enumerate(step_specs)
                                   if s[0] != "summary"):
            completed = True

    answers = {i: recorded[i] for i, s in enumerate(step_specs)
               if s[0] != "summary" and i in recorded}
    return answers, cursor, completed, accepted


# ---------------------------------------------------------------------------
# Activation filter: brute-force item selection from full answers.

def brute_force_active(item_ids: Sequence[str], answers_by_item: dict[str, str],
                       activating: set[str]) -> list[str]:
    return [iid for iid in item_ids if answers_by_item[iid] in activating]


# ---------------------------------------------------------------------------
# Recurrence enumeration: scan every minute of a window and pick the wall
# clock instants matching the rule. A local anchor time skipped by a DST
# gap matches at the first instant whose wall clock jumped past it.

def enumerate_recurrence(date_matches: Callable[[datetime], bool], anchor: time,
                         zone: str, start: datetime, end: datetime) -> list[datetime]:
    """All matching UTC instants in [start, end), minute resolution."""
    tz = ZoneInfo(zone)
    matches: list[datetime] = []
    matched_dates: set = set()
    t = start.astimezone(timezone.utc)
    prev_wall = t.astimezone(tz)
    t += MINUTE
    while t < end:
        wall = t.astimezone(tz)
        hit = False
        if (wall.hour, wall.minute) == (anchor.hour, anchor.minute):
            hit = True
        elif (prev_wall.date() == wall.date()
                and (prev_wall.hour, prev_wall.minute) < (anchor.hour, anchor.minute)
                and (wall.hour, wall.minute) > (anchor.hour, anchor.minute)):
            # Wall clock jumped over the anchor between consecutive minutes
            # (DST gap): the recurrence fires at the first valid instant.
            hit = True
        # One firing per matching local date (a fall-back transition repeats
        # the anchor wall time; only the first counts).
        if hit and date_matches(wall) and wall.date() not in matched_dates:
            matches.append(t)
            matched_dates.add(wall.date())
        prev_wall = wall
        t += MINUTE
    return matches


def next_from_enumeration(matches: Sequence[datetime], after: datetime) -> datetime | None:
    for m in matches:
        if m > after:
            return m
    return None
