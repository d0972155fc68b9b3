"""Flat-file ingestion: CSV or JSON-lines rows into the store.

One row describes one tracked meal event, with optional label fields. Rows
are independent and all-or-nothing: a row either fully validates and lands
in the store (event + user fields + optional label in one transaction) or
is reported with its row/column coordinates and stores nothing. Re-ingesting
identical rows is a no-op, so ingestion is idempotent.

Columns
-------
required:
  event_id, user_id, timestamp (ISO-8601 UTC or epoch seconds),
  meal_type (breakfast|lunch|dinner|snack),
  calorie, carbs, protein, fat, fiber           (Low|Medium|High or 0|1|2),
  grains, vegetables, meat, fruits, dairy       (booleans),
  baked, pan_air_fried, deep_fried, steamed, grilled, boiled, roasted,
  microwaved, raw                               (booleans),
  ingredient_count                              (int >= 0)
optional:
  food_group_count  (int; must equal the number of true food groups)
  rating            (int -2..+2; presence makes the row labeled)
  mode              (Manual|Auto; the user's study condition)
  prior_habit_vegetables, prior_habit_fruits    (int 0..6)

Boolean cells accept 0/1, true/false, yes/no (any case). Empty CSV cells
mean "absent" for optional columns and are invalid for required ones.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .domain import (
    COOKING_METHODS,
    FOOD_GROUPS,
    MACROS,
    AnnotationVector,
    FeedbackMode,
    Level,
    MealType,
    TrackedEvent,
    ValidationError,
    validate_event,
)
from .store import ConflictError, Store

INGEST_FORMAT_VERSION = 1

_REQUIRED_COLUMNS = (
    ("event_id", "user_id", "timestamp", "meal_type")
    + tuple(MACROS)
    + tuple(FOOD_GROUPS)
    + tuple(COOKING_METHODS)
    + ("ingredient_count",)
)
_OPTIONAL_COLUMNS = (
    "food_group_count",
    "rating",
    "mode",
    "prior_habit_vegetables",
    "prior_habit_fruits",
)
KNOWN_COLUMNS = _REQUIRED_COLUMNS + _OPTIONAL_COLUMNS

_TRUE_WORDS = {"1", "true", "yes"}
_FALSE_WORDS = {"0", "false", "no"}


@dataclass(frozen=True)
class RowError:
    """One rejected row (or header problem), with coordinates."""

    row: int
    column: str | None
    message: str
    conflict: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "row": self.row,
            "column": self.column,
            "message": self.message,
            "conflict": self.conflict,
        }


@dataclass
class IngestReport:
    """Outcome of one ingestion run."""

    source: str
    format: str
    n_rows: int = 0
    n_inserted: int = 0
    n_duplicates: int = 0
    errors: list[RowError] = field(default_factory=list)

    @property
    def n_rejected(self) -> int:
        rows_with_errors = {e.row for e in self.errors}
        return len(rows_with_errors)

    @property
    def has_conflicts(self) -> bool:
        return any(e.conflict for e in self.errors)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": INGEST_FORMAT_VERSION,
            "source": self.source,
            "format": self.format,
            "n_rows": self.n_rows,
            "n_inserted": self.n_inserted,
            "n_duplicates": self.n_duplicates,
            "n_rejected": self.n_rejected,
            "errors": [e.to_dict() for e in self.errors],
            "ok": self.ok,
        }


def _parse_bool(raw: Any, column: str) -> bool:
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, int) and raw in (0, 1):
        return bool(raw)
    if isinstance(raw, str):
        word = raw.strip().lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
    raise ValidationError(f"{column}: not a boolean: {raw!r}")


def _parse_int(raw: Any, column: str) -> int:
    if isinstance(raw, bool):
        raise ValidationError(f"{column}: not an integer: {raw!r}")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, str):
        try:
            return int(raw.strip())
        except ValueError:
            pass
    raise ValidationError(f"{column}: not an integer: {raw!r}")


def parse_timestamp(raw: Any) -> int:
    """ISO-8601 (UTC assumed when naive) or epoch seconds -> epoch seconds."""
    if isinstance(raw, bool):
        raise ValidationError(f"timestamp: not a timestamp: {raw!r}")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, str):
        text = raw.strip()
        try:
            return int(text)
        except ValueError:
            pass
        iso = text[:-1] + "+00:00" if text.endswith("Z") else text
        try:
            dt = datetime.fromisoformat(iso)
        except ValueError:
            raise ValidationError(f"timestamp: not ISO-8601 or epoch seconds: {raw!r}") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    raise ValidationError(f"timestamp: not a timestamp: {raw!r}")


def _parse_meal_type(raw: Any) -> MealType:
    if isinstance(raw, str):
        word = raw.strip().lower()
        for mt in MealType:
            if mt.value == word:
                return mt
    raise ValidationError(f"meal_type: unknown meal type: {raw!r}")


def _parse_mode(raw: Any) -> str:
    if isinstance(raw, str):
        word = raw.strip().capitalize()
        try:
            return FeedbackMode(word).value
        except ValueError:
            pass
    raise ValidationError(f"mode: expected Manual or Auto, got {raw!r}")


@dataclass(frozen=True)
class ParsedRow:
    event: TrackedEvent
    mode: str | None
    habit_vegetables: int | None
    habit_fruits: int | None
    rating: int | None


def _present(row: Mapping[str, Any], column: str) -> bool:
    if column not in row:
        return False
    value = row[column]
    if value is None:
        return False
    if isinstance(value, str) and value.strip() == "":
        return False
    return True


def parse_row(row: Mapping[str, Any]) -> ParsedRow:
    """Parse and fully validate one ingestion row.

    Raises ValidationError listing every problem found, so a rejected row
    reports all its defects at once.
    """
    problems: list[str] = []
    unknown = sorted(set(row) - set(KNOWN_COLUMNS))
    for col in unknown:
        problems.append(f"{col}: unknown column")
    missing = [c for c in _REQUIRED_COLUMNS if not _present(row, c)]
    for col in missing:
        problems.append(f"{col}: missing required value")
    if problems:
        raise ValidationError("; ".join(problems), violations=problems)

    def attempt(column: str, fn, *args):
        try:
            return fn(*args)
        except ValidationError as exc:
            problems.append(str(exc) if str(exc).startswith(column) else f"{column}: {exc}")
            return None

    event_id = str(row["event_id"]).strip()
    user_id = str(row["user_id"]).strip()
    timestamp = attempt("timestamp", parse_timestamp, row["timestamp"])
    meal_type = attempt("meal_type", _parse_meal_type, row["meal_type"])
    macro_levels = {
        m: attempt(m, lambda v=row[m], c=m: int(Level.from_any(v))) for m in MACROS
    }
    food_groups = {g: attempt(g, _parse_bool, row[g], g) for g in FOOD_GROUPS}
    cooking = {c: attempt(c, _parse_bool, row[c], c) for c in COOKING_METHODS}
    ingredient_count = attempt("ingredient_count", _parse_int, row["ingredient_count"], "ingredient_count")

    group_count = sum(v for v in food_groups.values() if v)
    if _present(row, "food_group_count"):
        declared = attempt("food_group_count", _parse_int, row["food_group_count"], "food_group_count")
        if declared is not None and declared != group_count:
            problems.append(
                f"food_group_count: declared {declared} but {group_count} groups are set"
            )
    rating: int | None = None
    if _present(row, "rating"):
        rating = attempt("rating", _parse_int, row["rating"], "rating")
        if rating is not None and not -2 <= rating <= 2:
            problems.append(f"rating: rating {rating} out of range [-2, 2]")
            rating = None
    mode = attempt("mode", _parse_mode, row["mode"]) if _present(row, "mode") else None
    habits: dict[str, int | None] = {}
    for col in ("prior_habit_vegetables", "prior_habit_fruits"):
        if _present(row, col):
            value = attempt(col, _parse_int, row[col], col)
            if value is not None and not 0 <= value <= 6:
                problems.append(f"{col}: frequency {value} out of range [0, 6]")
                value = None
            habits[col] = value
        else:
            habits[col] = None

    if problems:
        raise ValidationError("; ".join(problems), violations=problems)

    annotations = AnnotationVector(
        macro_levels=macro_levels,
        food_groups=food_groups,
        food_group_count=group_count,
        cooking_methods=cooking,
        ingredient_count=ingredient_count,
    )
    event = TrackedEvent(
        event_id=event_id,
        user_id=user_id,
        timestamp=timestamp,
        meal_type=meal_type,
        annotations=annotations,
    )
    return ParsedRow(
        event=validate_event(event),
        mode=mode,
        habit_vegetables=habits["prior_habit_vegetables"],
        habit_fruits=habits["prior_habit_fruits"],
        rating=rating,
    )


def ingest_rows(
    store: Store,
    rows: Iterable[tuple[int, Mapping[str, Any]]],
    source: str,
    fmt: str,
) -> IngestReport:
    """Drive (row_number, mapping) pairs through parse -> store."""
    report = IngestReport(source=source, format=fmt)
    for rownum, raw in rows:
        report.n_rows += 1
        try:
            parsed = parse_row(raw)
        except ValidationError as exc:
            for problem in exc.violations or [str(exc)]:
                column = problem.split(":", 1)[0] if ":" in problem else None
                report.errors.append(
                    RowError(row=rownum, column=column, message=problem)
                )
            continue
        try:
            inserted = store.add_ingest_row(
                parsed.event,
                mode=parsed.mode,
                habit_vegetables=parsed.habit_vegetables,
                habit_fruits=parsed.habit_fruits,
                rating=parsed.rating,
            )
        except ConflictError as exc:
            report.errors.append(
                RowError(row=rownum, column="event_id", message=str(exc), conflict=True)
            )
            continue
        if inserted:
            report.n_inserted += 1
        else:
            report.n_duplicates += 1
    return report


def ingest_csv_text(store: Store, text: str, source: str = "<csv>") -> IngestReport:
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    report = IngestReport(source=source, format="csv")
    unknown = sorted(set(header) - set(KNOWN_COLUMNS))
    missing = sorted(set(_REQUIRED_COLUMNS) - set(header))
    if unknown or missing:
        for col in unknown:
            report.errors.append(RowError(row=1, column=col, message=f"{col}: unknown column"))
        for col in missing:
            report.errors.append(
                RowError(row=1, column=col, message=f"{col}: missing required column")
            )
        return report
    rows = ((i, {k: v for k, v in r.items() if v is not None}) for i, r in enumerate(reader, start=2))
    sub = ingest_rows(store, rows, source, "csv")
    sub.source = source
    return sub


def ingest_jsonl_text(store: Store, text: str, source: str = "<jsonl>") -> IngestReport:
    def rows() -> Iterable[tuple[int, Mapping[str, Any]]]:
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            yield lineno, line

    report = IngestReport(source=source, format="jsonl")
    parsed_rows: list[tuple[int, Mapping[str, Any]]] = []
    for lineno, line in rows():
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            report.errors.append(RowError(row=lineno, column=None, message=f"bad JSON: {exc}"))
            continue
        if not isinstance(obj, dict):
            report.errors.append(
                RowError(row=lineno, column=None, message="row must be a JSON object")
            )
            continue
        parsed_rows.append((lineno, obj))
    sub = ingest_rows(store, parsed_rows, source, "jsonl")
    sub.errors = report.errors + sub.errors
    sub.n_rows += len(report.errors)
    return sub


def ingest_path(store: Store, path: str | Path, fmt: str | None = None) -> IngestReport:
    """Ingest a file, inferring the format from its suffix unless given."""
    p = Path(path)
    if fmt is None:
        suffix = p.suffix.lower()
        if suffix == ".csv":
            fmt = "csv"
        elif suffix in (".jsonl", ".ndjson"):
            fmt = "jsonl"
        else:
            raise ValueError(f"cannot infer format from suffix {suffix!r}; pass fmt")
    text = p.read_text(encoding="utf-8")
    if fmt == "csv":
        return ingest_csv_text(store, text, source=str(p))
    if fmt == "jsonl":
        return ingest_jsonl_text(store, text, source=str(p))
    raise ValueError(f"unknown format {fmt!r}")


def event_to_row(
    event: TrackedEvent,
    mode: str | None = None,
    rating: int | None = None,
    habit_vegetables: int | None = None,
    habit_fruits: int | None = None,
) -> dict[str, Any]:
    """Flatten an event (plus optional label fields) into an ingestion row;
    the exact inverse of parse_row for valid data."""
    ann = event.annotations
    row: dict[str, Any] = {
        "event_id": event.event_id,
        "user_id": event.user_id,
        "timestamp": datetime.fromtimestamp(event.timestamp, tz=timezone.utc)
        .isoformat()
        .replace("+00:00", "Z"),
        "meal_type": event.meal_type.value,
        "ingredient_count": ann.ingredient_count,
        "food_group_count": ann.food_group_count,
    }
    for m in MACROS:
        row[m] = Level(ann.macro_levels[m]).label
    for g in FOOD_GROUPS:
        row[g] = int(ann.food_groups[g])
    for c in COOKING_METHODS:
        row[c] = int(ann.cooking_methods[c])
    if mode is not None:
        row["mode"] = mode
    if rating is not None:
        row["rating"] = rating
    if habit_vegetables is not None:
        row["prior_habit_vegetables"] = habit_vegetables
    if habit_fruits is not None:
        row["prior_habit_fruits"] = habit_fruits
    return row


def rows_to_csv(rows: Sequence[Mapping[str, Any]]) -> str:
    """Serialize rows to CSV with a canonical column order."""
    columns = [c for c in KNOWN_COLUMNS if any(c in r for r in rows)]
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=columns, extrasaction="raise")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: r.get(c, "") for c in columns})
    return out.getvalue()
