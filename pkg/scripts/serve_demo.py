#!/usr/bin/env python3
"""Seed a demo store with partially labeled meal streams, train both modes,
and serve the HTTP API (plus the browser UI at /ui when frontend/dist is
built).

Every Nth event is ingested without a rating, so the review flow has
genuinely unlabeled events to elicit answers for. With --manifest the
script prints one "MANIFEST {...}" line naming a shown card that carries a
choice-style Manual prompt on an unlabeled event - handy for scripted
end-to-end checks - before the server starts.

Example:
    python3 scripts/serve_demo.py --port 8010 --data-dir /tmp/demo
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from salient_feedback.config import EngineConfig
from salient_feedback.ingest import event_to_row, ingest_rows
from salient_feedback.pipeline import Runtime, pipeline_train, weekly_feedback
from salient_feedback.service import serve
from salient_feedback.store import Store, iso_week_of
from salient_feedback.synthetic import SyntheticSpec, generate_synthetic_dataset


def build_store(args: argparse.Namespace, data_dir: Path) -> tuple[Store, dict, set]:
    spec = SyntheticSpec(
        n_events=args.events, n_users=args.users, noise_rate=args.noise, seed=args.seed
    )
    dataset = generate_synthetic_dataset(spec)

    rows = []
    unlabeled: set[str] = set()
    user_mode: dict[str, str] = {}
    for i, event in enumerate(dataset.events):
        profile = dataset.profiles[event.user_id]
        rating: int | None = int(dataset.ratings[i])
        if i % args.unlabeled_every == args.unlabeled_every - 1:
            rating = None
            unlabeled.add(event.event_id)
        user_mode[event.user_id] = dataset.modes[i]
        rows.append(
            event_to_row(
                event,
                mode=dataset.modes[i],
                rating=rating,
                habit_vegetables=profile.prior_habit_vegetables,
                habit_fruits=profile.prior_habit_fruits,
            )
        )

    store = Store(data_dir / "store.sqlite3")
    report = ingest_rows(store, list(enumerate(rows, start=1)), "<demo>", "json")
    if not report.ok:
        raise SystemExit(f"demo ingest rejected rows: {report.to_dict()}")
    return store, user_mode, unlabeled


def find_manifest_card(
    store: Store, runtime: Runtime, user_mode: dict, unlabeled: set
) -> dict | None:
    """First shown card with a choice-style Manual prompt on an unlabeled
    event, scanning each user's weeks newest-first."""
    for user_id in sorted(user_mode):
        events = store.events_for_user(user_id)
        weeks = sorted({iso_week_of(e.timestamp) for e in events}, reverse=True)
        for week in weeks:
            for bundle in weekly_feedback(runtime, user_id, week=week, with_anchors=False):
                if bundle.report.decision != "Show":
                    continue
                if bundle.event_id not in unlabeled:
                    continue
                for item in bundle.card.items:
                    if item.mode.value == "Manual" and item.choices:
                        return {
                            "user_id": user_id,
                            "week": week,
                            "event_id": bundle.event_id,
                            "feature": item.feature,
                            "choices": list(item.choices),
                            "mode": user_mode[user_id],
                            "labels_total": store.label_count(),
                            "labels_for_mode": store.label_count(user_mode[user_id]),
                        }
    return None


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--data-dir", default="./demo-data")
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--events", type=int, default=120)
    parser.add_argument("--users", type=int, default=4)
    parser.add_argument("--noise", type=float, default=0.1)
    parser.add_argument("--unlabeled-every", type=int, default=4)
    parser.add_argument("--trees", type=int, default=16)
    parser.add_argument(
        "--manifest",
        action="store_true",
        help="print a MANIFEST line naming an unlabeled shown card before serving",
    )
    args = parser.parse_args()

    data_dir = Path(args.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    store_file = data_dir / "store.sqlite3"
    if store_file.exists():
        store_file.unlink()

    config = EngineConfig(
        data_dir=str(data_dir),
        seed=args.seed,
        n_trees=args.trees,
        max_depth=3,
        min_labels_per_mode=10,
        cv_folds=2,
        background_cap=64,
        host=args.host,
        port=args.port,
    )

    store, user_mode, unlabeled = build_store(args, data_dir)
    report = pipeline_train(store, config, trained_at=int(time.time()))
    for outcome in report.outcomes:
        status = "trained" if outcome.trained else f"skipped ({outcome.reason})"
        print(f"{outcome.mode}: {status}", file=sys.stderr)
    if not all(o.trained for o in report.outcomes):
        # Explanations need both mode models; mode assignment is a per-user
        # draw, so a tiny demo can land all users in one mode.
        raise SystemExit(
            "a mode missed the label floor; increase --events/--users or "
            "try another --seed"
        )

    if args.manifest:
        manifest = find_manifest_card(store, Runtime(store, config), user_mode, unlabeled)
        if manifest is None:
            raise SystemExit(
                "no shown card with a choice-style Manual prompt on an "
                "unlabeled event; try another --seed"
            )
        print("MANIFEST " + json.dumps(manifest, sort_keys=True), flush=True)

    serve(store, config)


if __name__ == "__main__":
    main()
