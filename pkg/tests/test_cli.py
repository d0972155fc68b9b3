"""Command-line driver tests, run in-process through main().

Each test invokes main() with an argv list and inspects exit code, stdout,
and stderr. A module-scoped data directory holds a trained store; commands
that mutate state get their own temporary directories.
"""

from __future__ import annotations

import json
from types import SimpleNamespace

import numpy as np
import pytest

from salient_feedback.cli import build_parser, main
from salient_feedback.config import dump_config
from salient_feedback.ingest import event_to_row, rows_to_csv
from salient_feedback.pipeline import pipeline_train
from salient_feedback.store import Store

from helpers import event, populate_user, small_config


def run_cli(capsys, *argv) -> tuple[int, str, str]:
    rc = main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data_dir = root / "data"
    data_dir.mkdir()
    rng = np.random.default_rng(11)
    store = Store(data_dir / "store.sqlite3")
    populate_user(store, "u-manual", "Manual", 30, rng, habits=(4, 1))
    populate_user(store, "u-auto", "Auto", 30, rng, habits=(1, 5))
    config = small_config()
    pipeline_train(store, config, trained_at=0)
    cfg_path = root / "engine.conf"
    cfg_path.write_text(dump_config(config))
    return SimpleNamespace(
        data=str(data_dir), config=str(cfg_path), root=root, store=store
    )


class TestParser:
    def test_prog_name(self):
        assert build_parser().prog == "salient-feedback"

    def test_subcommand_required(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["destroy"])
        assert exc.value.code == 2


class TestConfigFlag:
    def test_missing_config_file_is_reported(self, capsys, tmp_path):
        rc, _, err = run_cli(
            capsys, "train", "--config", str(tmp_path / "none.conf")
        )
        assert rc == 1
        assert err.startswith("error:")

    def test_bad_config_key_is_reported(self, capsys, tmp_path):
        bad = tmp_path / "engine.conf"
        bad.write_text("trees = 5\n")
        rc, _, err = run_cli(capsys, "train", "--config", str(bad))
        assert rc == 1
        assert "unknown config key 'trees'" in err


class TestIngestCommand:
    @pytest.fixture()
    def csv_file(self, tmp_path):
        rows = [
            event_to_row(
                event(f"csv-e{i}", user_id="csv-u", timestamp=1_700_000_000 + i * 3600),
                mode="Manual",
                rating=(1 if i % 2 == 0 else -1),
                habit_vegetables=2,
                habit_fruits=2,
            )
            for i in range(3)
        ]
        path = tmp_path / "meals.csv"
        path.write_text(rows_to_csv(rows))
        return path

    def test_ingest_ok(self, capsys, tmp_path, csv_file):
        rc, out, _ = run_cli(
            capsys, "ingest", str(csv_file), "--data-dir", str(tmp_path / "d")
        )
        assert rc == 0
        assert "inserted=3" in out
        assert "rejected=0" in out
        store = Store(tmp_path / "d" / "store.sqlite3")
        assert store.event_count() == 3
        assert store.label_count("Manual") == 3

    def test_ingest_json(self, capsys, tmp_path, csv_file):
        rc, out, _ = run_cli(
            capsys,
            "ingest",
            str(csv_file),
            "--data-dir",
            str(tmp_path / "d"),
            "--json",
        )
        assert rc == 0
        doc = json.loads(out)
        assert doc["ok"] is True
        assert doc["n_inserted"] == 3

    def test_bad_row_exits_1_and_prints_location(self, capsys, tmp_path):
        row = event_to_row(event("bad-e1", user_id="u", timestamp=1_700_000_000))
        row["fat"] = "Colossal"
        path = tmp_path / "bad.csv"
        path.write_text(rows_to_csv([row]))
        rc, out, _ = run_cli(
            capsys, "ingest", str(path), "--data-dir", str(tmp_path / "d")
        )
        assert rc == 1
        assert "row 2" in out
        assert "column fat" in out

    def test_missing_file_is_error(self, capsys, tmp_path):
        rc, _, err = run_cli(
            capsys, "ingest", str(tmp_path / "ghost.csv"), "--data-dir", str(tmp_path)
        )
        assert rc == 1
        assert err.startswith("error:")


class TestTrainCommand:
    def test_train_text_output(self, capsys, cli_env):
        rc, out, _ = run_cli(
            capsys, "train", "--config", cli_env.config, "--data-dir", cli_env.data
        )
        assert rc == 0
        assert "Manual: trained on" in out
        assert "Auto: trained on" in out
        assert "f1=" in out

    def test_train_json(self, capsys, cli_env):
        rc, out, _ = run_cli(
            capsys,
            "train",
            "--config",
            cli_env.config,
            "--data-dir",
            cli_env.data,
            "--json",
        )
        assert rc == 0
        doc = json.loads(out)
        assert all(o["trained"] for o in doc["outcomes"])

    def test_nothing_to_train_exits_3(self, capsys, tmp_path):
        rc, out, _ = run_cli(capsys, "train", "--data-dir", str(tmp_path / "empty"))
        assert rc == 3
        assert "skipped" in out


class TestExplainCommand:
    def test_explain_text(self, capsys, cli_env):
        rc, out, _ = run_cli(
            capsys,
            "explain",
            "u-manual-e029",
            "--no-anchors",
            "--config",
            cli_env.config,
            "--data-dir",
            cli_env.data,
        )
        assert rc == 0
        first = out.splitlines()[0]
        assert first.startswith("event u-manual-e029: decision=")
        assert "p_informative[Auto]=" in out
        assert "p_informative[Manual]=" in out

    def test_explain_json(self, capsys, cli_env):
        rc, out, _ = run_cli(
            capsys,
            "explain",
            "u-auto-e029",
            "--no-anchors",
            "--json",
            "--config",
            cli_env.config,
            "--data-dir",
            cli_env.data,
        )
        assert rc == 0
        doc = json.loads(out)
        assert doc["event_id"] == "u-auto-e029"
        assert set(doc["modes"]) == {"Manual", "Auto"}

    def test_unknown_event(self, capsys, cli_env):
        rc, _, err = run_cli(
            capsys,
            "explain",
            "nope",
            "--config",
            cli_env.config,
            "--data-dir",
            cli_env.data,
        )
        assert rc == 1
        assert err.startswith("error: not-found:")
        assert "unknown event" in err

    def test_untrained_store_reports_no_model(self, capsys, tmp_path, cli_env):
        data = tmp_path / "raw"
        store = Store(data / "store.sqlite3")
        populate_user(store, "u-x", "Manual", 3, np.random.default_rng(0))
        rc, _, err = run_cli(
            capsys,
            "explain",
            "u-x-e000",
            "--config",
            cli_env.config,
            "--data-dir",
            str(data),
        )
        assert rc == 1
        assert err.startswith("error: no-model:")
        assert "no trained model" in err


class TestFeedbackCommand:
    def test_week_of_cards(self, capsys, cli_env):
        rc, out, _ = run_cli(
            capsys,
            "feedback",
            "u-manual",
            "--week",
            "2023-W46",
            "--no-anchors",
            "--config",
            cli_env.config,
            "--data-dir",
            cli_env.data,
        )
        assert rc == 0
        headers = [l for l in out.splitlines() if l.startswith("[")]
        assert headers
        assert all(
            l.startswith("[SalientOnly] event ") or l.startswith("[Omitted] event ")
            for l in headers
        )
        assert "event u-manual-e000" in out

    def test_empty_week_message(self, capsys, cli_env):
        rc, out, _ = run_cli(
            capsys,
            "feedback",
            "u-manual",
            "--week",
            "1999-W05",
            "--config",
            cli_env.config,
            "--data-dir",
            cli_env.data,
        )
        assert rc == 0
        assert "no events for u-manual in 1999-W05" in out

    def test_feedback_json(self, capsys, cli_env):
        rc, out, _ = run_cli(
            capsys,
            "feedback",
            "u-auto",
            "--week",
            "2023-W46",
            "--no-anchors",
            "--json",
            "--config",
            cli_env.config,
            "--data-dir",
            cli_env.data,
        )
        assert rc == 0
        doc = json.loads(out)
        assert doc["week"] == "2023-W46"
        assert doc["cards"]
        assert all(c["event_id"].startswith("u-auto-") for c in doc["cards"])

    def test_unknown_user(self, capsys, cli_env):
        rc, _, err = run_cli(
            capsys,
            "feedback",
            "nobody",
            "--config",
            cli_env.config,
            "--data-dir",
            cli_env.data,
        )
        assert rc == 1
        assert err.startswith("error: not-found:")


class TestSimulateCommand:
    def _run(self, capsys, cli_env, where: str, *extra) -> tuple[int, str]:
        rc, out, _ = run_cli(
            capsys,
            "simulate",
            "--seed",
            "7",
            "--events",
            "80",
            "--users",
            "4",
            "--config",
            cli_env.config,
            "--data-dir",
            where,
            *extra,
        )
        return rc, out

    def test_json_output_is_byte_identical_across_runs(self, capsys, cli_env, tmp_path):
        where = str(tmp_path / "sim")
        rc1, out1 = self._run(capsys, cli_env, where, "--json")
        rc2, out2 = self._run(capsys, cli_env, where, "--json")
        assert rc1 == rc2 == 0
        assert out1 == out2
        doc = json.loads(out1)
        assert doc["ingest"]["idempotent"] is True
        assert doc["ingest"]["first"]["inserted"] == 80
        assert doc["ingest"]["reingest"]["inserted"] == 0
        assert doc["ingest"]["reingest"]["duplicates"] == 80
        assert doc["labels"]["total"] == 80
        assert all(o["trained"] for o in doc["train"]["outcomes"])

    def test_text_output_mentions_idempotence(self, capsys, cli_env, tmp_path):
        rc, out = self._run(capsys, cli_env, str(tmp_path / "sim"))
        assert rc == 0
        assert "idempotent=True" in out
        assert "planted rule:" in out
