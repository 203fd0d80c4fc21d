"""Recurrence computation, due occurrences, snooze policy, deployment docs."""

from __future__ import annotations

import random
from datetime import datetime, time, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visurvey.scheduling import (
    Daily,
    DeploymentError,
    Every,
    Monthly,
    Occurrence,
    OccurrenceStateError,
    ParticipantState,
    ReminderPolicy,
    ScheduleSpec,
    SnoozeLimitReached,
    TaskRef,
    Weekly,
    apply_snooze,
    due_occurrences,
    load_deployment,
    next_occurrence,
    parse_deployment,
    parse_duration,
)

from conftest import FIXTURES
from oracles import enumerate_recurrence, next_from_enumeration

UTC = timezone.utc
SPOT = TaskRef(assessment_id="YADL Spot Identifier", kind="spot")
FULL = TaskRef(assessment_id="YADL Full Identifier", kind="full")


def daily(zone="UTC", anchor=time(9, 0), window=timedelta(hours=24), ref=SPOT):
    return ScheduleSpec(task_ref=ref, recurrence=Daily(), anchor_time=anchor,
                        timezone=zone, window=window)


class TestNextOccurrence:
    def test_daily_example(self):
        after = datetime(2016, 9, 25, 10, 0, tzinfo=UTC)
        assert next_occurrence(daily(), after) == datetime(2016, 9, 26, 9, 0, tzinfo=UTC)

    def test_daily_same_day_when_anchor_ahead(self):
        after = datetime(2016, 9, 25, 8, 0, tzinfo=UTC)
        assert next_occurrence(daily(), after) == datetime(2016, 9, 25, 9, 0, tzinfo=UTC)

    def test_monthly_example(self):
        spec = ScheduleSpec(task_ref=FULL, recurrence=Monthly(day=1),
                            anchor_time=time(9, 0), timezone="UTC")
        after = datetime(2016, 9, 1, 9, 0, tzinfo=UTC)
        assert next_occurrence(spec, after) == datetime(2016, 10, 1, 9, 0, tzinfo=UTC)

    def test_every_interval(self):
        anchor = datetime(2016, 9, 1, 9, 0, tzinfo=UTC)
        spec = ScheduleSpec(task_ref=SPOT, recurrence=Every(timedelta(hours=24), anchor_at=anchor),
                            anchor_time=time(0, 0), timezone="UTC")
        t = anchor + timedelta(hours=48)
        assert next_occurrence(spec, t) == t + timedelta(hours=24)
        assert next_occurrence(spec, anchor - timedelta(days=9)) == anchor

    def test_strictly_after(self):
        at_anchor = datetime(2016, 9, 25, 9, 0, tzinfo=UTC)
        assert next_occurrence(daily(), at_anchor) > at_anchor

    def test_weekly(self):
        spec = ScheduleSpec(task_ref=SPOT, recurrence=Weekly(weekday=0),  # Monday
                            anchor_time=time(8, 30), timezone="UTC")
        after = datetime(2016, 9, 21, 0, 0, tzinfo=UTC)  # a Wednesday
        nxt = next_occurrence(spec, after)
        assert nxt == datetime(2016, 9, 26, 8, 30, tzinfo=UTC)
        assert nxt.weekday() == 0

    def test_invalid_timezone(self):
        with pytest.raises(ValueError, match="invalid timezone"):
            next_occurrence(daily(zone="Mars/Olympus"), datetime(2016, 9, 1, tzinfo=UTC))

    def test_iteration_strictly_increasing(self):
        spec = daily(zone="America/New_York")
        t = datetime(2016, 10, 25, 0, 0, tzinfo=UTC)
        seen = []
        for _ in range(20):
            t2 = next_occurrence(spec, t)
            assert t2 > t
            seen.append(t2)
            t = t2
        assert seen == sorted(seen)

    def test_every_consecutive_differences_exact(self):
        anchor = datetime(2016, 9, 1, 7, 11, tzinfo=UTC)
        spec = ScheduleSpec(task_ref=SPOT, recurrence=Every(timedelta(hours=7), anchor_at=anchor),
                            anchor_time=time(0, 0), timezone="UTC")
        t = anchor
        for _ in range(30):
            t2 = next_occurrence(spec, t)
            assert t2 - t == timedelta(hours=7)
            t = t2


class TestDstTransitions:
    # US DST 2016: spring forward Mar 13 (02:00 -> 03:00), fall back Nov 6.

    def test_skipped_anchor_rolls_forward_to_gap_end(self):
        spec = daily(zone="America/New_York", anchor=time(2, 30))
        after = datetime(2016, 3, 13, 0, 0, tzinfo=UTC)
        nxt = next_occurrence(spec, after)
        # 02:30 EST does not exist on Mar 13; first valid instant is 03:00 EDT.
        assert nxt == datetime(2016, 3, 13, 7, 0, tzinfo=UTC)

    def test_repeated_anchor_fires_once_at_first_occurrence(self):
        spec = daily(zone="America/New_York", anchor=time(1, 30))
        after = datetime(2016, 11, 6, 0, 0, tzinfo=UTC)
        first = next_occurrence(spec, after)
        # 01:30 EDT (UTC-4), the first of the two 01:30 wall times.
        assert first == datetime(2016, 11, 6, 5, 30, tzinfo=UTC)
        second = next_occurrence(spec, first)
        assert second == datetime(2016, 11, 7, 6, 30, tzinfo=UTC)  # next day, EST

    @pytest.mark.parametrize("anchor", [time(2, 30), time(9, 0), time(0, 15)])
    def test_against_enumeration_oracle_over_dst(self, anchor):
        spec = daily(zone="America/New_York", anchor=anchor)
        start = datetime(2016, 3, 1, 0, 0, tzinfo=UTC)
        end = start + timedelta(days=30)
        expected = enumerate_recurrence(lambda wall: True, anchor, "America/New_York", start, end)
        t = start
        actual = []
        while True:
            t = next_occurrence(spec, t)
            if t >= end:
                break
            actual.append(t)
        assert actual == expected


class TestDueOccurrences:
    def participant(self, enrolled=datetime(2016, 9, 1, 0, 0, tzinfo=UTC)):
        return ParticipantState(participant_id="p1", enrolled_at=enrolled)

    def test_nothing_due_before_first(self):
        p = self.participant()
        now = datetime(2016, 9, 1, 3, 0, tzinfo=UTC)
        assert due_occurrences([daily()], p, now) == []

    def test_window_expiry(self):
        p = self.participant()
        spec = daily(window=timedelta(hours=12))
        now = datetime(2016, 9, 1, 9, 0, tzinfo=UTC) + timedelta(hours=13)
        assert due_occurrences([spec], p, now) == []
        first_id = next(iter(p.occurrences))
        assert p.occurrences[first_id].state == "expired"

    def test_due_within_window(self):
        p = self.participant()
        spec = daily(window=timedelta(hours=12))
        now = datetime(2016, 9, 1, 10, 0, tzinfo=UTC)
        due = due_occurrences([spec], p, now)
        assert len(due) == 1
        assert due[0].due_at == datetime(2016, 9, 1, 9, 0, tzinfo=UTC)
        assert due[0].state == "pending"

    def test_completed_never_returned(self):
        p = self.participant()
        spec = daily(window=timedelta(hours=12))
        now = datetime(2016, 9, 1, 10, 0, tzinfo=UTC)
        occ = due_occurrences([spec], p, now)[0]
        from dataclasses import replace
        p.occurrences[occ.occurrence_id] = replace(occ, state="completed")
        assert due_occurrences([spec], p, now) == []

    def test_deterministic_order(self):
        p = self.participant()
        specs = [daily(ref=SPOT, window=timedelta(hours=36)),
                 daily(ref=FULL, window=timedelta(hours=36))]
        now = datetime(2016, 9, 2, 10, 0, tzinfo=UTC)
        due = due_occurrences(specs, p, now)
        keys = [(o.due_at, str(o.task_ref)) for o in due]
        assert keys == sorted(keys)
        assert due == due_occurrences(specs, p, now)

    def test_thirty_day_timeline_against_oracle(self):
        # Daily spot (12h window) + monthly full (72h window), sampled every
        # 6h for 30 days; the due set must match the enumeration oracle's
        # window arithmetic, with completions tracked on both sides.
        enrolled = datetime(2016, 8, 20, 0, 0, tzinfo=UTC)
        end = enrolled + timedelta(days=30)
        spot = daily(window=timedelta(hours=12), ref=SPOT)
        full = ScheduleSpec(task_ref=FULL, recurrence=Monthly(day=1),
                            anchor_time=time(9, 0), timezone="UTC",
                            window=timedelta(hours=72))
        p = self.participant(enrolled)

        spot_times = enumerate_recurrence(lambda w: True, time(9, 0), "UTC", enrolled, end)
        full_times = enumerate_recurrence(lambda w: w.day == 1, time(9, 0), "UTC", enrolled, end)
        slots = ([(t, str(SPOT), timedelta(hours=12)) for t in spot_times]
                 + [(t, str(FULL), timedelta(hours=72)) for t in full_times])

        rng = random.Random(13)
        completed: set[tuple[datetime, str]] = set()
        now = enrolled
        while now < end:
            due = due_occurrences([spot, full], p, now)
            expected = sorted(
                (t, ref) for t, ref, window in slots
                if t <= now < t + window and (t, ref) not in completed
            )
            assert [(o.due_at, str(o.task_ref)) for o in due] == expected
            for occ in due:
                if rng.random() < 0.4:
                    from dataclasses import replace
                    p.occurrences[occ.occurrence_id] = replace(occ, state="completed")
                    completed.add((occ.due_at, str(occ.task_ref)))
            now += timedelta(hours=6)


class TestSnooze:
    def occurrence(self, due=datetime(2016, 9, 1, 9, 0, tzinfo=UTC),
                   window=timedelta(hours=12), count=0, state="pending"):
        return Occurrence(occurrence_id="occ-1", participant_id="p1", task_ref=SPOT,
                          due_at=due, expires_at=due + window, remind_at=due,
                          snooze_count=count, state=state)

    def test_snooze_increments_and_shifts(self):
        policy = ReminderPolicy(snooze_duration=timedelta(minutes=30), max_snoozes=3)
        now = datetime(2016, 9, 1, 9, 5, tzinfo=UTC)
        occ = apply_snooze(self.occurrence(), now, policy)
        assert occ.snooze_count == 1
        assert occ.state == "snoozed"
        assert occ.remind_at == now + timedelta(minutes=30)

    def test_limit_reached(self):
        policy = ReminderPolicy(max_snoozes=3)
        occ = self.occurrence(count=3, state="snoozed")
        with pytest.raises(SnoozeLimitReached):
            apply_snooze(occ, datetime(2016, 9, 1, 10, 0, tzinfo=UTC), policy)

    def test_clamped_to_expiry(self):
        policy = ReminderPolicy(snooze_duration=timedelta(hours=4))
        occ = self.occurrence(window=timedelta(hours=1))
        now = datetime(2016, 9, 1, 9, 30, tzinfo=UTC)
        snoozed = apply_snooze(occ, now, policy)
        assert snoozed.remind_at == occ.expires_at

    def test_expired_rejected(self):
        policy = ReminderPolicy()
        occ = self.occurrence(window=timedelta(hours=1))
        with pytest.raises(OccurrenceStateError, match="expired"):
            apply_snooze(occ, datetime(2016, 9, 1, 11, 0, tzinfo=UTC), policy)

    def test_completed_rejected(self):
        policy = ReminderPolicy()
        occ = self.occurrence(state="completed")
        with pytest.raises(OccurrenceStateError, match="completed"):
            apply_snooze(occ, datetime(2016, 9, 1, 9, 30, tzinfo=UTC), policy)

    @given(st.integers(min_value=0, max_value=8), st.integers(min_value=1, max_value=40))
    @settings(max_examples=60, deadline=None)
    def test_count_never_exceeds_limit(self, max_snoozes, attempts):
        policy = ReminderPolicy(snooze_duration=timedelta(minutes=5), max_snoozes=max_snoozes)
        occ = self.occurrence(window=timedelta(hours=48))
        now = occ.due_at
        for _ in range(attempts):
            now += timedelta(minutes=1)
            try:
                occ = apply_snooze(occ, now, policy)
            except SnoozeLimitReached:
                pass
            assert occ.snooze_count <= max_snoozes


class TestDeploymentDocument:
    def test_fixture_parses(self):
        deployment = load_deployment(FIXTURES / "deployment.json")
        assert deployment.study_ref == "yadl_study.json"
        assert len(deployment.schedules) == 2
        full_spec = deployment.schedules[0]
        assert full_spec.task_ref == FULL
        assert full_spec.recurrence == Monthly(day=1)
        assert full_spec.window == timedelta(hours=72)
        assert deployment.reminders == ReminderPolicy(timedelta(minutes=30), 3)
        assert deployment.participants[0][0] == "p1"

    def test_duration_grammar(self):
        assert parse_duration("30m") == timedelta(minutes=30)
        assert parse_duration("12h") == timedelta(hours=12)
        assert parse_duration("7d") == timedelta(days=7)
        assert parse_duration("45s") == timedelta(seconds=45)
        with pytest.raises(DeploymentError):
            parse_duration("1 fortnight")

    def test_day_of_month_29_rejected(self):
        doc = b"""{"study": "s.json", "schedules": [{
            "taskRef": {"assessmentId": "a", "kind": "full"},
            "recurrence": {"kind": "monthly", "dayOfMonth": 29}}]}"""
        with pytest.raises(DeploymentError, match="1..28"):
            parse_deployment(doc)

    def test_bad_timezone_rejected(self):
        doc = b"""{"study": "s.json", "schedules": [{
            "taskRef": {"assessmentId": "a", "kind": "spot"},
            "recurrence": {"kind": "daily"}, "timezone": "Nowhere/None"}]}"""
        with pytest.raises(ValueError, match="invalid timezone"):
            parse_deployment(doc)

    def test_defaults_applied(self):
        doc = b"""{"study": "s.json", "schedules": [{
            "taskRef": {"assessmentId": "a", "kind": "spot"},
            "recurrence": {"kind": "daily"}}]}"""
        deployment = parse_deployment(doc)
        spec = deployment.schedules[0]
        assert spec.window == timedelta(hours=24)
        assert spec.anchor_time == time(9, 0)
        assert deployment.reminders.max_snoozes == 3
        assert deployment.reminders.snooze_duration == timedelta(minutes=30)

    def test_weekday_names(self):
        doc = b"""{"study": "s.json", "schedules": [{
            "taskRef": {"assessmentId": "a", "kind": "spot"},
            "recurrence": {"kind": "weekly", "weekday": "friday"}}]}"""
        assert parse_deployment(doc).schedules[0].recurrence == Weekly(weekday=4)
