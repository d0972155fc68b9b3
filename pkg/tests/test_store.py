"""Persistence: event immutability, label upserts, elicitation idempotence,
model swaps, and the order-independent state digest.

ISO week expectations are worked out from the calendar by hand (e.g.
2023-11-14 is a Tuesday in ISO week 46).
"""

from __future__ import annotations

import sqlite3

import pytest

from helpers import event
from salient_feedback.store import (
    ConflictError,
    ElicitationRecord,
    NotFoundError,
    Store,
    iso_week_of,
)

# 2023-11-14T22:13:20Z; handy round number used across the suite.
TS = 1_700_000_000
DAY = 86_400


@pytest.fixture()
def store():
    s = Store(":memory:")
    yield s
    s.close()


class TestIsoWeek:
    def test_known_week(self):
        # 2023-11-14 is a Tuesday in ISO week 46 of 2023.
        assert iso_week_of(TS) == "2023-W46"

    def test_year_boundary_uses_iso_year(self):
        # 2023-01-01 (Sunday) belongs to ISO week 52 of 2022.
        assert iso_week_of(1_672_531_200) == "2022-W52"

    def test_single_digit_weeks_zero_padded(self):
        # 2024-01-08 is the Monday starting ISO week 2 of 2024.
        assert iso_week_of(1_704_672_000) == "2024-W02"


class TestEvents:
    def test_add_event_insert_then_idempotent(self, store):
        e = event("ev1")
        assert store.add_event(e) is True
        assert store.add_event(e) is False
        assert store.event_count() == 1

    def test_add_event_conflict_on_different_content(self, store):
        store.add_event(event("ev1", ingredients=5))
        with pytest.raises(ConflictError, match="different content"):
            store.add_event(event("ev1", ingredients=6))
        # The original payload is untouched.
        assert store.get_event("ev1").annotations.ingredient_count == 5

    def test_add_event_auto_creates_user(self, store):
        store.add_event(event("ev1", user_id="alice"))
        assert store.has_user("alice")
        prof = store.get_profile("alice")
        assert prof.prior_habit_vegetables == 0
        assert store.get_user_mode("alice") is None

    def test_get_event_round_trip(self, store):
        e = event("ev1", macros={"fat": 2}, groups={"dairy": True}, ingredients=9)
        store.add_event(e)
        assert store.get_event("ev1") == e

    def test_get_event_unknown(self, store):
        with pytest.raises(NotFoundError):
            store.get_event("ghost")
        assert not store.has_event("ghost")

    def test_events_for_user_sorted_by_time_then_id(self, store):
        store.add_event(event("ev-b", timestamp=TS + DAY))
        store.add_event(event("ev-c", timestamp=TS))
        store.add_event(event("ev-a", timestamp=TS + DAY))
        ids = [e.event_id for e in store.events_for_user("u1")]
        assert ids == ["ev-c", "ev-a", "ev-b"]

    def test_events_for_user_week_filters(self, store):
        store.add_event(event("ev1", timestamp=TS))
        store.add_event(event("ev2", timestamp=TS + 14 * DAY))
        week = iso_week_of(TS)
        assert [e.event_id for e in store.events_for_user_week("u1", week)] == ["ev1"]


class TestUsers:
    def test_upsert_and_profile(self, store):
        store.upsert_user("alice", mode="Manual", habit_vegetables=4, habit_fruits=1)
        prof = store.get_profile("alice")
        assert (prof.prior_habit_vegetables, prof.prior_habit_fruits) == (4, 1)
        assert store.get_user_mode("alice") == "Manual"

    def test_mode_is_sticky(self, store):
        store.upsert_user("alice", mode="Manual")
        store.upsert_user("alice", mode="Manual")  # same mode is fine
        with pytest.raises(ConflictError, match="already assigned"):
            store.upsert_user("alice", mode="Auto")
        assert store.get_user_mode("alice") == "Manual"

    def test_partial_update_keeps_other_fields(self, store):
        store.upsert_user("alice", mode="Auto", habit_vegetables=4, habit_fruits=1)
        store.upsert_user("alice", habit_fruits=6)
        prof = store.get_profile("alice")
        assert (prof.prior_habit_vegetables, prof.prior_habit_fruits) == (4, 6)
        assert store.get_user_mode("alice") == "Auto"

    def test_mode_can_be_set_after_auto_creation(self, store):
        store.add_event(event("ev1", user_id="alice"))
        store.upsert_user("alice", mode="Auto")
        assert store.get_user_mode("alice") == "Auto"

    def test_unknown_user(self, store):
        with pytest.raises(NotFoundError):
            store.get_profile("ghost")
        with pytest.raises(NotFoundError):
            store.get_user_mode("ghost")
        assert not store.has_user("ghost")

    def test_user_ids_sorted(self, store):
        for uid in ("zoe", "alice", "mia"):
            store.upsert_user(uid)
        assert store.user_ids() == ["alice", "mia", "zoe"]

    def test_invalid_mode_rejected(self, store):
        with pytest.raises(ValueError):
            store.upsert_user("alice", mode="Hybrid")


class TestLabels:
    def test_set_label_and_read_back(self, store):
        store.add_event(event("ev1"))
        store.set_label("ev1", rating=2, source="test")
        examples = store.labeled_examples()
        assert len(examples) == 1
        assert examples[0].rating == 2
        assert examples[0].label is True
        assert examples[0].event.event_id == "ev1"

    def test_latest_label_wins(self, store):
        store.add_event(event("ev1"))
        store.set_label("ev1", rating=2, source="first")
        store.set_label("ev1", rating=-1, source="second")
        (example,) = store.labeled_examples()
        assert example.rating == -1
        assert example.label is False
        assert store.label_count() == 1

    def test_label_for_unknown_event(self, store):
        with pytest.raises(NotFoundError):
            store.set_label("ghost", rating=1, source="test")

    def test_invalid_rating_rejected(self, store):
        store.add_event(event("ev1"))
        with pytest.raises(ValueError):
            store.set_label("ev1", rating=7, source="test")

    def test_label_count_by_mode(self, store):
        store.upsert_user("manual-user", mode="Manual")
        store.upsert_user("auto-user", mode="Auto")
        store.add_event(event("ev1", user_id="manual-user"))
        store.add_event(event("ev2", user_id="auto-user", timestamp=TS + 1))
        store.add_event(event("ev3", user_id="auto-user", timestamp=TS + 2))
        for ev, rating in (("ev1", 1), ("ev2", 2), ("ev3", -2)):
            store.set_label(ev, rating=rating, source="test")
        assert store.label_count() == 3
        assert store.label_count("Manual") == 1
        assert store.label_count("Auto") == 2
        auto_examples = store.labeled_examples("Auto")
        assert [x.event.event_id for x in auto_examples] == ["ev2", "ev3"]
        assert all(x.mode == "Auto" for x in auto_examples)

    def test_unmoded_user_yields_empty_mode_string(self, store):
        store.add_event(event("ev1"))
        store.set_label("ev1", rating=0, source="test")
        (example,) = store.labeled_examples()
        assert example.mode == ""


class TestElicitations:
    def _record(self, submission_id=None, rating=2) -> ElicitationRecord:
        return ElicitationRecord(
            event_id="ev1",
            user_id="u1",
            feature="Meal Macros (Fat level)",
            answer="High",
            rating=rating,
            received_at=TS,
            submission_id=submission_id,
        )

    def test_append_and_label_upsert(self, store):
        store.add_event(event("ev1"))
        seq, created = store.add_elicitation(self._record())
        assert created and seq >= 1
        assert store.label_count() == 1
        (example,) = store.labeled_examples()
        assert example.rating == 2 and example.label is True

    def test_same_submission_id_is_idempotent(self, store):
        store.add_event(event("ev1"))
        seq1, created1 = store.add_elicitation(self._record(submission_id="sub-1"))
        seq2, created2 = store.add_elicitation(self._record(submission_id="sub-1"))
        assert created1 and not created2
        assert seq1 == seq2
        assert len(store.elicitations()) == 1

    def test_distinct_submissions_append(self, store):
        store.add_event(event("ev1"))
        store.add_elicitation(self._record(submission_id="sub-1", rating=2))
        store.add_elicitation(self._record(submission_id="sub-2", rating=-1))
        records = store.elicitations("ev1")
        assert len(records) == 2
        # Latest elicitation's rating owns the label.
        (example,) = store.labeled_examples()
        assert example.rating == -1

    def test_unknown_event_rejected(self, store):
        with pytest.raises(NotFoundError):
            store.add_elicitation(self._record())

    def test_invalid_rating_rejected_before_write(self, store):
        store.add_event(event("ev1"))
        with pytest.raises(ValueError):
            store.add_elicitation(self._record(rating=9))
        assert store.elicitations() == []

    def test_record_round_trip(self, store):
        store.add_event(event("ev1"))
        rec = self._record(submission_id="sub-9")
        store.add_elicitation(rec)
        (stored,) = store.elicitations()
        assert stored == rec
        assert stored.to_dict()["submission_id"] == "sub-9"


class TestModels:
    def test_missing_model_is_none(self, store):
        assert store.get_model("Manual") is None

    def test_put_get_round_trip(self, store):
        store.put_model(
            "Manual",
            payload='{"kind": "gbt"}',
            schema_json="[]",
            cv_json="{}",
            n_labels=42,
            trained_at=TS,
        )
        m = store.get_model("Manual")
        assert m is not None
        assert m.mode == "Manual"
        assert m.payload == '{"kind": "gbt"}'
        assert m.n_labels == 42
        assert m.trained_at == TS

    def test_put_overwrites_atomically(self, store):
        store.put_model("Auto", payload="v1", schema_json="[]", cv_json="{}", n_labels=1, trained_at=1)
        store.put_model("Auto", payload="v2", schema_json="[]", cv_json="{}", n_labels=2, trained_at=2)
        m = store.get_model("Auto")
        assert (m.payload, m.n_labels, m.trained_at) == ("v2", 2, 2)

    def test_invalid_mode_rejected(self, store):
        with pytest.raises(ValueError):
            store.put_model("Bogus", payload="", schema_json="", cv_json="", n_labels=0, trained_at=0)


class TestStateDigest:
    def test_insertion_order_does_not_matter(self):
        a, b = Store(":memory:"), Store(":memory:")
        try:
            e1, e2 = event("ev1"), event("ev2", timestamp=TS + 1)
            a.add_event(e1)
            a.add_event(e2)
            b.add_event(e2)
            b.add_event(e1)
            assert a.state_digest() == b.state_digest()
        finally:
            a.close()
            b.close()

    def test_labels_change_digest(self, store):
        store.add_event(event("ev1"))
        before = store.state_digest()
        store.set_label("ev1", rating=1, source="test")
        assert store.state_digest() != before

    def test_idempotent_operations_keep_digest(self, store):
        store.add_event(event("ev1"))
        store.add_elicitation(
            ElicitationRecord(
                event_id="ev1",
                user_id="u1",
                feature="Meal Macros (Fat level)",
                answer="High",
                rating=2,
                received_at=TS,
                submission_id="sub-1",
            )
        )
        before = store.state_digest()
        assert store.add_event(event("ev1")) is False
        store.add_elicitation(
            ElicitationRecord(
                event_id="ev1",
                user_id="u1",
                feature="Meal Macros (Fat level)",
                answer="High",
                rating=2,
                received_at=TS,
                submission_id="sub-1",
            )
        )
        assert store.state_digest() == before


class TestFilePersistence:
    def test_reopen_preserves_rows(self, tmp_path):
        path = tmp_path / "nested" / "store.sqlite3"
        s = Store(path)
        s.add_event(event("ev1"))
        s.set_label("ev1", rating=2, source="test")
        s.close()
        reopened = Store(path)
        try:
            assert reopened.has_event("ev1")
            assert reopened.label_count() == 1
        finally:
            reopened.close()

    def test_unknown_schema_version_rejected(self, tmp_path):
        path = tmp_path / "store.sqlite3"
        Store(path).close()
        conn = sqlite3.connect(path)
        conn.execute("PRAGMA user_version = 99")
        conn.commit()
        conn.close()
        with pytest.raises(ConflictError, match="schema version"):
            Store(path)
