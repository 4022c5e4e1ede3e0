"""CLI behaviour: artifact flow, determinism, table formats, diagnostics."""

import json

import pytest

from cellcast import cli
from cellcast.config import save_config
from cellcast.data import BINS_PER_DAY, STEP_MS, SYNTH_START_MS, load_series
from conftest import tiny_config


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestDataCommands:
    def test_synth_writes_store_and_config(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        save_config(tiny_config(str(tmp_path / "out")), cfg_path)
        code, out, _ = run(capsys, "synth", "--config", str(cfg_path))
        assert code == 0
        assert "4 cells x 576 bins" in out
        series = load_series(tmp_path / "out" / "series.csv")
        assert len(series) == 4
        assert (tmp_path / "out" / "run_config.json").exists()

    def test_ingest_round_trips_cdr_lines(self, tmp_path, capsys):
        lines = ["cell_id,timestamp_ms,activity\n"]
        for cell in (3, 8):
            for k in range(4):
                ts = SYNTH_START_MS + k * STEP_MS
                lines.append(f"{cell},{ts},{10.0 + cell + k}\n")
        cdr = tmp_path / "records.csv"
        cdr.write_text("".join(lines))
        cfg_path = tmp_path / "cfg.json"
        save_config(tiny_config(str(tmp_path / "out")), cfg_path)
        code, out, _ = run(capsys, "ingest", "--config", str(cfg_path), "--cdr", str(cdr))
        assert code == 0
        assert "8 records into 2 cells" in out
        series = {s.cell_id: s for s in load_series(tmp_path / "out" / "series.csv")}
        assert sorted(series) == [3, 8]
        assert list(series[3].values) == [13.0 + k for k in range(4)]

    def test_ingest_missing_file(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        save_config(tiny_config(str(tmp_path / "out")), cfg_path)
        code, _, err = run(capsys, "ingest", "--config", str(cfg_path), "--cdr", "/nope.csv")
        assert code == 1
        assert err.startswith("error:") and "/nope.csv" in err

    def test_ingest_needs_some_source(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        save_config(tiny_config(str(tmp_path / "out")), cfg_path)
        code, _, err = run(capsys, "ingest", "--config", str(cfg_path))
        assert code == 1
        assert "needs a CDR file" in err


class TestTrainingCommands:
    def test_same_seed_checkpoints_are_byte_identical(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        save_config(tiny_config(str(tmp_path / "unused")), cfg_path)
        blobs = []
        for sub in ("a", "b"):
            code, _, _ = run(
                capsys, "train", "--config", str(cfg_path),
                "--output-dir", str(tmp_path / sub), "--seed", "7",
            )
            assert code == 0
            blobs.append((tmp_path / sub / "forecaster_mse.ckpt").read_bytes())
        assert blobs[0] == blobs[1]

    def test_different_seed_changes_checkpoint(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        save_config(tiny_config(str(tmp_path / "unused")), cfg_path)
        blobs = []
        for sub, seed in (("a", "7"), ("b", "8")):
            code, _, _ = run(
                capsys, "train", "--config", str(cfg_path),
                "--output-dir", str(tmp_path / sub), "--seed", seed,
            )
            assert code == 0
            blobs.append((tmp_path / sub / "forecaster_mse.ckpt").read_bytes())
        assert blobs[0] != blobs[1]

    def test_train_writes_metrics(self, tiny_run):
        metrics = json.loads((tiny_run.out / "train_metrics.json").read_text())
        assert metrics["steps"] == 4
        assert metrics["aborted"] is False
        assert len(metrics["history"]) >= 1
        assert {"epoch", "train_loss", "eval_mse", "lr", "grad_norm"} <= set(
            metrics["history"][0]
        )

    def test_finetune_requires_base_checkpoint(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        save_config(tiny_config(str(tmp_path / "out")), cfg_path)
        code, _, err = run(capsys, "finetune", "--config", str(cfg_path))
        assert code == 1
        assert "base checkpoint not found" in err and "train" in err


class TestEvaluateCommand:
    def test_three_rows_sorted_ascending(self, tiny_run, capsys):
        code, out, _ = run(capsys, "evaluate", "--config", str(tiny_run.cfg_path))
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0].split() == ["model", "test_mse"]
        rows = [ln.split() for ln in lines[1:]]
        assert sorted(r[0] for r in rows) == ["bert_mse", "fnn", "previous_value"]
        values = [float(r[1]) for r in rows]
        assert values == sorted(values)
        stored = json.loads((tiny_run.out / "evaluate.json").read_text())
        assert [r["model"] for r in stored["rows"]] == [r[0] for r in rows]
        assert stored["test_samples"] == 4 * BINS_PER_DAY

    def test_missing_checkpoint_diagnostic(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        save_config(tiny_config(str(tmp_path / "out")), cfg_path)
        code, _, err = run(capsys, "evaluate", "--config", str(cfg_path))
        assert code == 1
        assert err.startswith("error: checkpoint not found")


class TestSimulateCommand:
    def test_report_is_tagged_with_phrase_and_q(self, tiny_run, capsys):
        code, out, _ = run(
            capsys, "simulate", "--config", str(tiny_run.cfg_path),
            "--preference", "Focus highly on power savings",
        )
        assert code == 0
        assert "orientation: table_consistent" in out
        assert "'Focus highly on power savings'  (q=0.1)" in out
        assert "savings are watts summed over pairs, averaged over intervals" in out
        stored = json.loads(
            (tiny_run.out / "simulate_high_power_savings.json").read_text()
        )
        assert stored["preference"] == "Focus highly on power savings"
        assert stored["q"] == 0.1
        assert stored["baseline"] == "bert_mse"
        assert len(stored["per_pair"]) == 2
        assert len(stored["q_mapping"]) == 5
        assert stored["time_range"]["end_ms"] - stored["time_range"]["start_ms"] == (
            BINS_PER_DAY * STEP_MS
        )

    def test_unknown_phrase_lists_valid_ones(self, tiny_run, capsys):
        code, _, err = run(
            capsys, "simulate", "--config", str(tiny_run.cfg_path),
            "--preference", "Maximize vibes",
        )
        assert code == 1
        assert "unknown preference" in err
        assert "No specific focus" in err

    def test_custom_window(self, tiny_run, capsys):
        from cellcast.pipeline import build_dataset

        ds = build_dataset(tiny_run.cfg, load_series(tiny_run.out / "series.csv"))
        start_ms = ds.test_start_ms
        end_ms = start_ms + 6 * STEP_MS
        code, out, _ = run(
            capsys, "simulate", "--config", str(tiny_run.cfg_path),
            "--preference", "No specific focus",
            "--start-ms", str(start_ms), "--end-ms", str(end_ms),
        )
        assert code == 0
        assert "6 intervals x 2 pairs" in out


class TestReportCommand:
    def test_renders_stored_results(self, tiny_run, capsys):
        for phrase in ("Focus highly on service quality", "No specific focus"):
            assert run(
                capsys, "simulate", "--config", str(tiny_run.cfg_path),
                "--preference", phrase,
            )[0] == 0
        assert run(capsys, "evaluate", "--config", str(tiny_run.cfg_path))[0] == 0
        code, out, _ = run(capsys, "report", "--config", str(tiny_run.cfg_path))
        assert code == 0
        assert "forecast accuracy" in out
        assert "on-off simulations" in out
        lines = out.splitlines()
        table = lines[next(i for i, ln in enumerate(lines) if "on-off simulations" in ln):]
        hsq = next(i for i, ln in enumerate(table) if "Focus highly on service quality" in ln)
        neutral = next(i for i, ln in enumerate(table) if "No specific focus" in ln)
        assert hsq < neutral  # canonical quality-first ordering

    def test_empty_output_dir_is_an_error(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        save_config(tiny_config(str(tmp_path / "out")), cfg_path)
        code, _, err = run(capsys, "report", "--config", str(cfg_path))
        assert code == 1
        assert "no stored results" in err


class TestDriver:
    def test_unknown_flag_exits_nonzero(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["train", "--definitely-not-a-flag"])
        assert exc.value.code == 2

    def test_unknown_command_exits_nonzero(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["transmogrify"])
        assert exc.value.code == 2

    def test_missing_config_file(self, capsys):
        code, _, err = run(capsys, "evaluate", "--config", "/no/such/config.json")
        assert code == 1
        assert err.startswith("error: config file not found")

    def test_serve_refuses_without_checkpoints(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        save_config(tiny_config(str(tmp_path / "out")), cfg_path)
        code, _, err = run(capsys, "serve", "--config", str(cfg_path))
        assert code == 1
        assert "refusing to start" in err

    def test_bad_listen_address_rejected(self, tiny_run, capsys, monkeypatch):
        monkeypatch.setenv(cli.LISTEN_ENV, "not-an-address")
        code, _, err = run(capsys, "serve", "--config", str(tiny_run.cfg_path))
        assert code == 1
        assert cli.LISTEN_ENV in err
