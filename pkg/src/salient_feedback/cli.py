"""Batch command-line interface.

Subcommands: ingest, train, explain, feedback, simulate, serve. Every
subcommand honors --config (key = value file) and --json (exactly one JSON
document on stdout). Failures print one machine-parseable line to stderr
(`error: <kind>: <message>`) and exit 1; a training run that trains nothing
exits 3 (no-op) so scripts can tell "nothing to do" from "failed".

`simulate` builds the planted-rule dataset, ingests it into a fresh store
under <data_dir>/simulate/, re-ingests to demonstrate idempotence, trains
both modes, and prints a deterministic report: same seed, same bytes.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Any

from .config import EngineConfig, load_config
from .domain import FeedbackMode
from .ingest import event_to_row, ingest_path, ingest_rows
from .pipeline import (
    MissingModelError,
    Runtime,
    explain_event,
    full_card,
    pipeline_train,
    weekly_feedback,
)
from .store import NotFoundError, Store, iso_week_of
from .cards import render_text


def _store_path(config: EngineConfig) -> Path:
    return Path(config.data_dir) / "store.sqlite3"


def _open_store(config: EngineConfig) -> Store:
    return Store(_store_path(config))


def _print_json(doc: Any) -> None:
    print(json.dumps(doc, sort_keys=True, indent=2))


def _metrics_line(tag: str, metrics: dict[str, Any]) -> str:
    pr = metrics.get("pr_auc")
    pr_text = "n/a" if pr is None else f"{pr:.4f}"
    return (
        f"{tag}: accuracy={metrics['accuracy']:.4f}"
        f" f1={metrics['f1']:.4f} pr_auc={pr_text} n={metrics['n']}"
    )


# ------------------------------------------------------------- subcommands


def _cmd_ingest(args: argparse.Namespace, config: EngineConfig) -> int:
    store = _open_store(config)
    report = ingest_path(store, args.path, fmt=args.format)
    if args.json:
        _print_json(report.to_dict())
    else:
        print(
            f"ingested {report.source}: rows={report.n_rows}"
            f" inserted={report.n_inserted} duplicates={report.n_duplicates}"
            f" rejected={report.n_rejected}"
        )
        for err in report.errors:
            where = f" column {err.column}" if err.column else ""
            print(f"  row {err.row}{where}: {err.message}")
    return 0 if report.ok else 1


def _cmd_train(args: argparse.Namespace, config: EngineConfig) -> int:
    store = _open_store(config)
    report = pipeline_train(store, config)
    if args.json:
        _print_json(report.to_dict())
    else:
        for outcome in report.outcomes:
            if outcome.trained:
                pooled = outcome.cv.to_dict()["pooled"]
                print(
                    _metrics_line(
                        f"{outcome.mode}: trained on {outcome.n_labels} labels; CV",
                        pooled,
                    )
                )
            else:
                print(f"{outcome.mode}: skipped ({outcome.reason})")
    return 0 if report.any_trained else 3


def _cmd_explain(args: argparse.Namespace, config: EngineConfig) -> int:
    store = _open_store(config)
    runtime = Runtime(store, config)
    bundle = explain_event(runtime, args.event_id, with_anchors=not args.no_anchors)
    if args.json:
        _print_json(bundle.to_json_dict())
        return 0
    report = bundle.report
    print(f"event {bundle.event_id}: decision={report.decision}")
    for mode, p in sorted(report.confidences.items()):
        print(f"  p_informative[{mode}]={p:.4f}")
    for rank, sel in enumerate(report.selected, start=1):
        rule = f" (rule: {sel.rule.describe()})" if sel.rule is not None else ""
        print(
            f"  {rank}. {sel.feature} weight={sel.weight:.5f}"
            f" mode={sel.mode.value}{rule}"
        )
    return 0


def _cmd_feedback(args: argparse.Namespace, config: EngineConfig) -> int:
    store = _open_store(config)
    runtime = Runtime(store, config)
    bundles = weekly_feedback(
        runtime, args.user_id, week=args.week, with_anchors=not args.no_anchors
    )
    if args.json:
        _print_json(
            {
                "format_version": 1,
                "user_id": args.user_id,
                "week": args.week,
                "cards": [b.card.to_json_dict() for b in bundles],
            }
        )
        return 0
    if not bundles:
        print(f"no events for {args.user_id}" + (f" in {args.week}" if args.week else ""))
        return 0
    for bundle in bundles:
        for line in render_text(bundle.card):
            print(line)
        print()
    return 0


def _cmd_simulate(args: argparse.Namespace, config: EngineConfig) -> int:
    from .synthetic import SyntheticSpec, generate_synthetic_dataset

    seed = args.seed if args.seed is not None else config.seed
    spec = SyntheticSpec(
        n_events=args.events, n_users=args.users, noise_rate=args.noise, seed=seed
    )
    dataset = generate_synthetic_dataset(spec)

    sim_dir = Path(config.data_dir) / "simulate"
    store_file = sim_dir / "store.sqlite3"
    if store_file.exists():
        store_file.unlink()
    store = Store(store_file)

    rows = []
    for i, event in enumerate(dataset.events):
        profile = dataset.profiles[event.user_id]
        rows.append(
            event_to_row(
                event,
                mode=dataset.modes[i],
                rating=dataset.ratings[i],
                habit_vegetables=profile.prior_habit_vegetables,
                habit_fruits=profile.prior_habit_fruits,
            )
        )
    first = ingest_rows(store, list(enumerate(rows, start=1)), "<simulate>", "json")
    digest_after_first = store.state_digest()
    second = ingest_rows(store, list(enumerate(rows, start=1)), "<simulate>", "json")
    digest_after_second = store.state_digest()

    sim_config = dataclasses.replace(config, seed=seed, data_dir=str(sim_dir))
    train = pipeline_train(store, sim_config, trained_at=0)

    runtime = Runtime(store, sim_config)
    sample_user = dataset.events[0].user_id
    sample_week = iso_week_of(max(e.timestamp for e in store.events_for_user(sample_user)))
    bundles = weekly_feedback(runtime, sample_user, week=sample_week, with_anchors=False)
    shown = [b for b in bundles if b.report.decision == "Show"]
    card_lines: list[str] = []
    if shown:
        detailed = explain_event(runtime, shown[0].event_id, with_anchors=True)
        card_lines = render_text(detailed.card)

    doc = {
        "format_version": 1,
        "spec": {
            "n_events": spec.n_events,
            "n_users": spec.n_users,
            "noise_rate": spec.noise_rate,
            "seed": spec.seed,
            "rule": spec.rule.describe(),
        },
        "ingest": {
            "first": {
                "inserted": first.n_inserted,
                "duplicates": first.n_duplicates,
                "rejected": first.n_rejected,
            },
            "reingest": {
                "inserted": second.n_inserted,
                "duplicates": second.n_duplicates,
                "rejected": second.n_rejected,
            },
            "idempotent": digest_after_first == digest_after_second,
        },
        "labels": {
            "total": store.label_count(),
            FeedbackMode.MANUAL.value: store.label_count(FeedbackMode.MANUAL.value),
            FeedbackMode.AUTO.value: store.label_count(FeedbackMode.AUTO.value),
        },
        "train": train.to_dict(),
        "sample_feedback": {
            "user_id": sample_user,
            "week": sample_week,
            "n_cards": len(bundles),
            "n_shown": len(shown),
            "n_omitted": len(bundles) - len(shown),
            "first_shown_card": card_lines,
        },
    }
    if args.json:
        _print_json(doc)
        return 0
    print(f"simulated {spec.n_events} events for {spec.n_users} users (seed {seed})")
    print(f"planted rule: {doc['spec']['rule']}")
    ing = doc["ingest"]
    print(
        f"ingest: inserted={ing['first']['inserted']} then"
        f" duplicates={ing['reingest']['duplicates']};"
        f" idempotent={ing['idempotent']}"
    )
    labels = doc["labels"]
    print(
        f"labels: total={labels['total']}"
        f" Manual={labels[FeedbackMode.MANUAL.value]}"
        f" Auto={labels[FeedbackMode.AUTO.value]}"
    )
    for outcome in train.outcomes:
        if outcome.trained:
            pooled = outcome.cv.to_dict()["pooled"]
            print(_metrics_line(f"{outcome.mode}: CV", pooled))
        else:
            print(f"{outcome.mode}: skipped ({outcome.reason})")
    sample = doc["sample_feedback"]
    print(
        f"feedback {sample['user_id']} {sample['week']}:"
        f" shown={sample['n_shown']} omitted={sample['n_omitted']}"
        f" of {sample['n_cards']} cards"
    )
    for line in card_lines:
        print(f"  {line}")
    return 0


def _cmd_serve(args: argparse.Namespace, config: EngineConfig) -> int:
    from .service import serve

    if args.host is not None:
        config = dataclasses.replace(config, host=args.host)
    if args.port is not None:
        config = dataclasses.replace(config, port=args.port)
    store = _open_store(config)
    print(f"serving on http://{config.host}:{config.port} (store: {_store_path(config)})")
    serve(store, config)
    return 0


# ------------------------------------------------------------------ driver


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value config file")
    common.add_argument(
        "--data-dir",
        default=argparse.SUPPRESS,
        help="override the configured data directory",
    )
    common.add_argument(
        "--json",
        action="store_true",
        default=argparse.SUPPRESS,
        help="print one JSON document on stdout",
    )
    parser = argparse.ArgumentParser(
        prog="salient-feedback",
        description="Salient feedback engine for meal self-tracking logs.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help_text, parents=[common])

    p_ingest = add("ingest", "load a CSV or JSON-lines event file")
    p_ingest.add_argument("path")
    p_ingest.add_argument("--format", choices=("csv", "jsonl"), default=None)
    p_ingest.set_defaults(fn=_cmd_ingest)

    p_train = add("train", "train per-mode models from stored labels")
    p_train.set_defaults(fn=_cmd_train)

    p_explain = add("explain", "explain one event's prediction")
    p_explain.add_argument("event_id")
    p_explain.add_argument("--no-anchors", action="store_true")
    p_explain.set_defaults(fn=_cmd_explain)

    p_feedback = add("feedback", "render feedback cards for a user")
    p_feedback.add_argument("user_id")
    p_feedback.add_argument("--week", default=None, help="ISO week, e.g. 2023-W46")
    p_feedback.add_argument("--no-anchors", action="store_true")
    p_feedback.set_defaults(fn=_cmd_feedback)

    p_sim = add(
        "simulate",
        "run the planted-rule dataset through the full pipeline"
        " (sandboxed in <data-dir>/simulate/, leaving the main store untouched)",
    )
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--events", type=int, default=2000)
    p_sim.add_argument("--users", type=int, default=20)
    p_sim.add_argument("--noise", type=float, default=0.1)
    p_sim.set_defaults(fn=_cmd_simulate)

    p_serve = add("serve", "run the HTTP API")
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "json"):
        args.json = False
    try:
        config_path = getattr(args, "config", None)
        config = load_config(config_path) if config_path else EngineConfig()
        data_dir = getattr(args, "data_dir", None)
        if data_dir:
            config = dataclasses.replace(config, data_dir=data_dir)
        return args.fn(args, config)
    except NotFoundError as exc:
        print(f"error: not-found: {exc.args[0]}", file=sys.stderr)
        return 1
    except MissingModelError as exc:
        print(f"error: no-model: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
