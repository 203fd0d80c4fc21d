"""Injectable time sources and timestamp formatting.

Nothing in the engine reads the wall clock directly; every component that
needs the current time takes a :class:`Clock`. Timestamps are always
timezone-aware UTC datetimes and serialize to ISO 8601 with a ``Z`` suffix.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from typing import Protocol


class Clock(Protocol):
    def now(self) -> datetime:
        """Current instant as an aware UTC datetime."""
        ...


class SystemClock:
    """Real wall clock."""

    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class ManualClock:
    """Clock that only moves when told to; for tests and simulations."""

    def __init__(self, start: datetime):
        if start.tzinfo is None:
            raise ValueError("ManualClock start must be timezone-aware")
        self._now = start.astimezone(timezone.utc)

    def now(self) -> datetime:
        return self._now

    def advance(self, delta: timedelta) -> datetime:
        self._now = self._now + delta
        return self._now

    def set(self, instant: datetime) -> datetime:
        if instant.tzinfo is None:
            raise ValueError("instant must be timezone-aware")
        self._now = instant.astimezone(timezone.utc)
        return self._now


def format_timestamp(value: datetime) -> str:
    """UTC ISO 8601 string with a Z suffix, e.g. ``2016-09-01T09:00:00Z``."""
    if value.tzinfo is None:
        raise ValueError("naive datetime cannot be formatted as a timestamp")
    return value.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_timestamp(text: str) -> datetime:
    """Inverse of :func:`format_timestamp`; accepts Z or numeric offsets."""
    normalized = text.replace("Z", "+00:00") if text.endswith("Z") else text
    parsed = datetime.fromisoformat(normalized)
    if parsed.tzinfo is None:
        raise ValueError(f"timestamp must carry a timezone: {text!r}")
    return parsed.astimezone(timezone.utc)
