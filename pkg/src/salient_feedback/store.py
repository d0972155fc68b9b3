"""Single-file transactional persistence for events, labels, and models.

Backed by stdlib sqlite3 with a schema-version stamp. Events are immutable
after ingest (re-adding an identical event is a no-op; a differing payload
under the same id is a conflict). Elicitations are append-only; each one
also upserts the event's informativeness label so the next training run
consumes it. Model swaps are single transactions, so a reader observes the
old model or the new one, never a mixture.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .domain import (
    FeedbackMode,
    TrackedEvent,
    UserProfile,
    binarize_rating,
    event_from_json,
    event_to_json,
)

SCHEMA_VERSION = 1


class ConflictError(Exception):
    """An immutable record was re-written with different content."""


class NotFoundError(KeyError):
    """A referenced id does not exist in the store."""


def iso_week_of(timestamp: int) -> str:
    """ISO week label (e.g. '2023-W45') of a UTC epoch timestamp."""
    iso = datetime.fromtimestamp(int(timestamp), tz=timezone.utc).isocalendar()
    return f"{iso.year}-W{iso.week:02d}"


@dataclass(frozen=True)
class LabeledExample:
    event: TrackedEvent
    rating: int
    label: bool
    mode: str


@dataclass(frozen=True)
class ElicitationRecord:
    """One submitted answer + rating, kept as an immutable audit row."""

    event_id: str
    user_id: str
    feature: str
    answer: str
    rating: int
    received_at: int
    submission_id: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "user_id": self.user_id,
            "feature": self.feature,
            "answer": self.answer,
            "rating": self.rating,
            "received_at": self.received_at,
            "submission_id": self.submission_id,
        }


@dataclass(frozen=True)
class StoredModel:
    mode: str
    payload: str
    schema_json: str
    cv_json: str
    n_labels: int
    trained_at: int


_SCHEMA = """
CREATE TABLE IF NOT EXISTS users (
    user_id TEXT PRIMARY KEY,
    mode TEXT,
    habit_vegetables INTEGER NOT NULL DEFAULT 0,
    habit_fruits INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS events (
    event_id TEXT PRIMARY KEY,
    user_id TEXT NOT NULL,
    timestamp INTEGER NOT NULL,
    meal_type TEXT NOT NULL,
    payload TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_events_user_ts ON events (user_id, timestamp, event_id);
CREATE TABLE IF NOT EXISTS labels (
    event_id TEXT PRIMARY KEY,
    rating INTEGER NOT NULL,
    label INTEGER NOT NULL,
    source TEXT NOT NULL,
    updated_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS elicitations (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    submission_id TEXT UNIQUE,
    event_id TEXT NOT NULL,
    user_id TEXT NOT NULL,
    feature TEXT NOT NULL,
    answer TEXT NOT NULL,
    rating INTEGER NOT NULL,
    received_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS models (
    mode TEXT PRIMARY KEY,
    payload TEXT NOT NULL,
    schema_json TEXT NOT NULL,
    cv_json TEXT NOT NULL,
    n_labels INTEGER NOT NULL,
    trained_at INTEGER NOT NULL
);
"""


class Store:
    """Thread-safe store over one sqlite file (or ':memory:' for tests)."""

    def __init__(self, path: str | Path):
        self._path = str(path)
        if self._path != ":memory:":
            Path(self._path).parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(self._path, check_same_thread=False)
        self._conn.execute("PRAGMA foreign_keys = ON")
        with self._lock, self._conn:
            version = self._conn.execute("PRAGMA user_version").fetchone()[0]
            if version == 0:
                self._conn.executescript(_SCHEMA)
                self._conn.execute(f"PRAGMA user_version = {SCHEMA_VERSION}")
            elif version != SCHEMA_VERSION:
                raise ConflictError(
                    f"store schema version {version} != supported {SCHEMA_VERSION}"
                )

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # ------------------------------------------------------------- users

    def upsert_user(
        self,
        user_id: str,
        mode: str | None = None,
        habit_vegetables: int | None = None,
        habit_fruits: int | None = None,
    ) -> None:
        """Create or update a user row.

        A user's mode is a study condition: once set, submitting a different
        mode is a conflict. Habit fields overwrite only when provided.
        """
        if mode is not None:
            mode = FeedbackMode(mode).value
        with self._lock, self._conn:
            row = self._conn.execute(
                "SELECT mode, habit_vegetables, habit_fruits FROM users WHERE user_id = ?",
                (user_id,),
            ).fetchone()
            if row is None:
                self._conn.execute(
                    "INSERT INTO users (user_id, mode, habit_vegetables, habit_fruits)"
                    " VALUES (?, ?, ?, ?)",
                    (user_id, mode, habit_vegetables or 0, habit_fruits or 0),
                )
                return
            old_mode, old_veg, old_fruit = row
            if mode is not None and old_mode is not None and mode != old_mode:
                raise ConflictError(
                    f"user {user_id!r} already assigned mode {old_mode!r}, got {mode!r}"
                )
            self._conn.execute(
                "UPDATE users SET mode = ?, habit_vegetables = ?, habit_fruits = ?"
                " WHERE user_id = ?",
                (
                    mode if mode is not None else old_mode,
                    habit_vegetables if habit_vegetables is not None else old_veg,
                    habit_fruits if habit_fruits is not None else old_fruit,
                    user_id,
                ),
            )

    def get_profile(self, user_id: str) -> UserProfile:
        with self._lock:
            row = self._conn.execute(
                "SELECT habit_vegetables, habit_fruits FROM users WHERE user_id = ?",
                (user_id,),
            ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown user {user_id!r}")
        return UserProfile(
            user_id=user_id, prior_habit_vegetables=row[0], prior_habit_fruits=row[1]
        )

    def get_user_mode(self, user_id: str) -> str | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT mode FROM users WHERE user_id = ?", (user_id,)
            ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown user {user_id!r}")
        return row[0]

    def user_ids(self) -> list[str]:
        with self._lock:
            rows = self._conn.execute("SELECT user_id FROM users ORDER BY user_id").fetchall()
        return [r[0] for r in rows]

    def has_user(self, user_id: str) -> bool:
        with self._lock:
            row = self._conn.execute(
                "SELECT 1 FROM users WHERE user_id = ?", (user_id,)
            ).fetchone()
        return row is not None

    # ------------------------------------------------------------ events

    def add_event(self, event: TrackedEvent) -> bool:
        """Store one event. Returns True if inserted, False if an identical
        event already existed. A differing payload under the same event_id
        raises ConflictError and changes nothing."""
        payload = event_to_json(event)
        with self._lock, self._conn:
            existing = self._conn.execute(
                "SELECT payload FROM events WHERE event_id = ?", (event.event_id,)
            ).fetchone()
            if existing is not None:
                if existing[0] != payload:
                    raise ConflictError(
                        f"event {event.event_id!r} already stored with different content"
                    )
                return False
            self._conn.execute(
                "INSERT OR IGNORE INTO users (user_id) VALUES (?)", (event.user_id,)
            )
            self._conn.execute(
                "INSERT INTO events (event_id, user_id, timestamp, meal_type, payload)"
                " VALUES (?, ?, ?, ?, ?)",
                (
                    event.event_id,
                    event.user_id,
                    event.timestamp,
                    event.meal_type.value,
                    payload,
                ),
            )
            return True

    def add_ingest_row(
        self,
        event: TrackedEvent,
        mode: str | None = None,
        habit_vegetables: int | None = None,
        habit_fruits: int | None = None,
        rating: int | None = None,
        received_at: int = 0,
    ) -> bool:
        """Store one ingestion row (event + user fields + optional label) in a
        single transaction, so a conflict anywhere stores nothing from the row.

        Returns True if the event was newly inserted, False if an identical
        event already existed (idempotent re-ingest).
        """
        payload = event_to_json(event)
        if mode is not None:
            mode = FeedbackMode(mode).value
        label = None if rating is None else binarize_rating(rating, event_id=event.event_id)
        with self._lock, self._conn:
            existing = self._conn.execute(
                "SELECT payload FROM events WHERE event_id = ?", (event.event_id,)
            ).fetchone()
            if existing is not None and existing[0] != payload:
                raise ConflictError(
                    f"event {event.event_id!r} already stored with different content"
                )
            user = self._conn.execute(
                "SELECT mode, habit_vegetables, habit_fruits FROM users WHERE user_id = ?",
                (event.user_id,),
            ).fetchone()
            if user is None:
                self._conn.execute(
                    "INSERT INTO users (user_id, mode, habit_vegetables, habit_fruits)"
                    " VALUES (?, ?, ?, ?)",
                    (event.user_id, mode, habit_vegetables or 0, habit_fruits or 0),
                )
            else:
                old_mode, old_veg, old_fruit = user
                if mode is not None and old_mode is not None and mode != old_mode:
                    raise ConflictError(
                        f"user {event.user_id!r} already assigned mode {old_mode!r},"
                        f" got {mode!r}"
                    )
                self._conn.execute(
                    "UPDATE users SET mode = ?, habit_vegetables = ?, habit_fruits = ?"
                    " WHERE user_id = ?",
                    (
                        mode if mode is not None else old_mode,
                        habit_vegetables if habit_vegetables is not None else old_veg,
                        habit_fruits if habit_fruits is not None else old_fruit,
                        event.user_id,
                    ),
                )
            inserted = existing is None
            if inserted:
                self._conn.execute(
                    "INSERT INTO events (event_id, user_id, timestamp, meal_type, payload)"
                    " VALUES (?, ?, ?, ?, ?)",
                    (
                        event.event_id,
                        event.user_id,
                        event.timestamp,
                        event.meal_type.value,
                        payload,
                    ),
                )
            if rating is not None:
                self._conn.execute(
                    "INSERT INTO labels (event_id, rating, label, source, updated_at)"
                    " VALUES (?, ?, ?, 'ingest', ?)"
                    " ON CONFLICT(event_id) DO UPDATE SET rating = excluded.rating,"
                    " label = excluded.label, source = excluded.source,"
                    " updated_at = excluded.updated_at",
                    (event.event_id, int(rating), int(label), int(received_at)),
                )
            return inserted

    def has_event(self, event_id: str) -> bool:
        with self._lock:
            row = self._conn.execute(
                "SELECT 1 FROM events WHERE event_id = ?", (event_id,)
            ).fetchone()
        return row is not None

    def get_event(self, event_id: str) -> TrackedEvent:
        with self._lock:
            row = self._conn.execute(
                "SELECT payload FROM events WHERE event_id = ?", (event_id,)
            ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown event {event_id!r}")
        return event_from_json(row[0])

    def events_for_user(self, user_id: str) -> list[TrackedEvent]:
        """The user's full stream, sorted by (timestamp, event_id)."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT payload FROM events WHERE user_id = ?"
                " ORDER BY timestamp, event_id",
                (user_id,),
            ).fetchall()
        return [event_from_json(r[0]) for r in rows]

    def events_for_user_week(self, user_id: str, week: str) -> list[TrackedEvent]:
        return [e for e in self.events_for_user(user_id) if iso_week_of(e.timestamp) == week]

    def event_count(self) -> int:
        with self._lock:
            return int(self._conn.execute("SELECT COUNT(*) FROM events").fetchone()[0])

    # ------------------------------------------------------------ labels

    def set_label(
        self, event_id: str, rating: int, source: str, updated_at: int = 0
    ) -> None:
        """Upsert the informativeness label for an event (latest wins).

        The binary label is derived from the rating; the raw rating is kept
        so re-binarization stays possible.
        """
        label = binarize_rating(rating, event_id=event_id)
        with self._lock, self._conn:
            exists = self._conn.execute(
                "SELECT 1 FROM events WHERE event_id = ?", (event_id,)
            ).fetchone()
            if exists is None:
                raise NotFoundError(f"unknown event {event_id!r}")
            self._conn.execute(
                "INSERT INTO labels (event_id, rating, label, source, updated_at)"
                " VALUES (?, ?, ?, ?, ?)"
                " ON CONFLICT(event_id) DO UPDATE SET rating = excluded.rating,"
                " label = excluded.label, source = excluded.source,"
                " updated_at = excluded.updated_at",
                (event_id, int(rating), int(label), source, int(updated_at)),
            )

    def label_count(self, mode: str | None = None) -> int:
        query = "SELECT COUNT(*) FROM labels"
        args: tuple[Any, ...] = ()
        if mode is not None:
            query = (
                "SELECT COUNT(*) FROM labels JOIN events USING (event_id)"
                " JOIN users USING (user_id) WHERE users.mode = ?"
            )
            args = (FeedbackMode(mode).value,)
        with self._lock:
            return int(self._conn.execute(query, args).fetchone()[0])

    def labeled_examples(self, mode: str | None = None) -> list[LabeledExample]:
        """Labeled events (optionally one mode), sorted by (user, timestamp)."""
        query = (
            "SELECT events.payload, labels.rating, labels.label, users.mode"
            " FROM labels JOIN events USING (event_id) JOIN users USING (user_id)"
        )
        args: tuple[Any, ...] = ()
        if mode is not None:
            query += " WHERE users.mode = ?"
            args = (FeedbackMode(mode).value,)
        query += " ORDER BY events.user_id, events.timestamp, events.event_id"
        with self._lock:
            rows = self._conn.execute(query, args).fetchall()
        return [
            LabeledExample(
                event=event_from_json(payload),
                rating=int(rating),
                label=bool(label),
                mode=row_mode if row_mode is not None else "",
            )
            for payload, rating, label, row_mode in rows
        ]

    # ------------------------------------------------------ elicitations

    def add_elicitation(self, record: ElicitationRecord) -> tuple[int, bool]:
        """Append an elicitation and upsert the event's label, atomically.

        Returns (sequence number, created). Re-submitting the same
        submission_id acknowledges the stored row without writing anything,
        making client retries idempotent.
        """
        binarize_rating(record.rating, event_id=record.event_id)
        with self._lock, self._conn:
            if record.submission_id is not None:
                row = self._conn.execute(
                    "SELECT seq FROM elicitations WHERE submission_id = ?",
                    (record.submission_id,),
                ).fetchone()
                if row is not None:
                    return int(row[0]), False
            exists = self._conn.execute(
                "SELECT 1 FROM events WHERE event_id = ?", (record.event_id,)
            ).fetchone()
            if exists is None:
                raise NotFoundError(f"unknown event {record.event_id!r}")
            cur = self._conn.execute(
                "INSERT INTO elicitations (submission_id, event_id, user_id, feature,"
                " answer, rating, received_at) VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    record.submission_id,
                    record.event_id,
                    record.user_id,
                    record.feature,
                    record.answer,
                    int(record.rating),
                    int(record.received_at),
                ),
            )
            label = binarize_rating(record.rating, event_id=record.event_id)
            self._conn.execute(
                "INSERT INTO labels (event_id, rating, label, source, updated_at)"
                " VALUES (?, ?, ?, 'elicitation', ?)"
                " ON CONFLICT(event_id) DO UPDATE SET rating = excluded.rating,"
                " label = excluded.label, source = excluded.source,"
                " updated_at = excluded.updated_at",
                (record.event_id, int(record.rating), int(label), int(record.received_at)),
            )
            return int(cur.lastrowid), True

    def elicitations(self, event_id: str | None = None) -> list[ElicitationRecord]:
        query = (
            "SELECT event_id, user_id, feature, answer, rating, received_at,"
            " submission_id FROM elicitations"
        )
        args: tuple[Any, ...] = ()
        if event_id is not None:
            query += " WHERE event_id = ?"
            args = (event_id,)
        query += " ORDER BY seq"
        with self._lock:
            rows = self._conn.execute(query, args).fetchall()
        return [
            ElicitationRecord(
                event_id=r[0],
                user_id=r[1],
                feature=r[2],
                answer=r[3],
                rating=int(r[4]),
                received_at=int(r[5]),
                submission_id=r[6],
            )
            for r in rows
        ]

    # ------------------------------------------------------------ models

    def put_model(
        self,
        mode: str,
        payload: str,
        schema_json: str,
        cv_json: str,
        n_labels: int,
        trained_at: int,
    ) -> None:
        """Swap in a newly trained model for a mode in one transaction."""
        mode = FeedbackMode(mode).value
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO models (mode, payload, schema_json, cv_json, n_labels, trained_at)"
                " VALUES (?, ?, ?, ?, ?, ?)"
                " ON CONFLICT(mode) DO UPDATE SET payload = excluded.payload,"
                " schema_json = excluded.schema_json, cv_json = excluded.cv_json,"
                " n_labels = excluded.n_labels, trained_at = excluded.trained_at",
                (mode, payload, schema_json, cv_json, int(n_labels), int(trained_at)),
            )

    def get_model(self, mode: str) -> StoredModel | None:
        mode = FeedbackMode(mode).value
        with self._lock:
            row = self._conn.execute(
                "SELECT payload, schema_json, cv_json, n_labels, trained_at"
                " FROM models WHERE mode = ?",
                (mode,),
            ).fetchone()
        if row is None:
            return None
        return StoredModel(
            mode=mode,
            payload=row[0],
            schema_json=row[1],
            cv_json=row[2],
            n_labels=int(row[3]),
            trained_at=int(row[4]),
        )

    # ----------------------------------------------------------- digest

    def state_digest(self) -> str:
        """Order-independent content hash of events, users, and labels.

        Two stores hold the same trainable state iff their digests match;
        used to verify ingest idempotence.
        """
        import hashlib

        h = hashlib.sha256()
        with self._lock:
            for table, order in (
                ("events", "event_id"),
                ("users", "user_id"),
                ("labels", "event_id"),
            ):
                for row in self._conn.execute(f"SELECT * FROM {table} ORDER BY {order}"):
                    h.update(json.dumps(row, sort_keys=True, default=str).encode())
        return h.hexdigest()
