"""Command-line entry points for the forecasting and simulation pipeline.

Every subcommand reads one JSON run config (``--config``; defaults are
used when omitted) and works out of its ``output_dir``:

    series.csv              ingested or generated per-cell load store
    run_config.json         snapshot of the effective config
    forecaster_mse.ckpt     squared-error base forecaster
    forecaster_tuned.ckpt   preference-tuned forecaster
    fnn.ckpt                small feed-forward baseline
    *_metrics.json, evaluate.json, simulate_*.json   stored results

Commands exit 0 on success and 1 with a one-line ``error: ...`` on
stderr otherwise.  Training is deterministic per seed: running ``train
--seed 7`` twice produces byte-identical checkpoints.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import torch

from cellcast import __version__
from cellcast.baselines import fnn_predict_batch, fnn_train, previous_value_predictions
from cellcast.checkpoint import CheckpointError
from cellcast.config import RunConfig, load_config, save_config, with_updates
from cellcast.data import build_series, load_series, parse_cdr, save_series, synth_traffic
from cellcast.energysim import format_report, report_records
from cellcast.losses import mse
from cellcast.pipeline import (
    Dataset,
    baseline_run,
    benchmark_vocabulary,
    build_dataset,
    finetune_base,
    load_fnn,
    load_forecaster,
    save_fnn,
    save_forecaster,
    simulate_preference,
    train_base,
)
from cellcast.prompting import (
    PREFERENCE_ORDER,
    OperatorPreference,
    q_for_preference,
)
from cellcast.training import TrainResult, evaluate

LISTEN_ENV = "CELLCAST_LISTEN"
DEFAULT_LISTEN = "127.0.0.1:8733"

SERIES_FILE = "series.csv"
BASE_CKPT = "forecaster_mse.ckpt"
TUNED_CKPT = "forecaster_tuned.ckpt"
FNN_CKPT = "fnn.ckpt"


# ---------------------------------------------------------------- helpers


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "output_dir", None):
        cfg = with_updates(cfg, output_dir=args.output_dir)
    return cfg


def _prepare_output_dir(cfg: RunConfig) -> None:
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    save_config(cfg, cfg.out_path("run_config.json"))


def _dataset_for(cfg: RunConfig) -> Dataset:
    """Prefer the ingested/generated store; fall back to the configured source."""
    store = cfg.out_path(SERIES_FILE)
    series = load_series(store) if store.exists() else None
    return build_dataset(cfg, series)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _train_meta(phase: str, seed: int, result: TrainResult) -> dict:
    return {
        "phase": phase,
        "seed": seed,
        "steps": result.steps,
        "best_eval_mse": result.best_eval_mse,
        "stopped_early": result.stopped_early,
        "aborted": result.aborted,
    }


def _metrics_payload(result: TrainResult, seconds: float) -> dict:
    return {
        "steps": result.steps,
        "best_eval_mse": result.best_eval_mse,
        "stopped_early": result.stopped_early,
        "aborted": result.aborted,
        "wall_seconds": round(seconds, 1),
        "history": [
            {
                "epoch": r.epoch,
                "train_loss": r.train_loss,
                "eval_mse": r.eval_mse,
                "lr": r.lr,
                "grad_norm": r.grad_norm,
            }
            for r in result.history
        ],
    }


def _q_mapping(cfg: RunConfig) -> list[dict]:
    return [
        {"phrase": p.phrase, "q": q_for_preference(p, cfg.orientation)}
        for p in PREFERENCE_ORDER
    ]


def _report_header(cfg: RunConfig) -> str:
    lines = [f"orientation: {cfg.orientation.value}"]
    for entry in _q_mapping(cfg):
        lines.append(f"  q={entry['q']:<6g} {entry['phrase']!r}")
    return "\n".join(lines)


# ------------------------------------------------------------- subcommands


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    cdr_path = args.cdr or cfg.cdr_path
    if cdr_path is None:
        raise ValueError("ingest needs a CDR file (--cdr or cdr_path in the config)")
    if not Path(cdr_path).exists():
        raise FileNotFoundError(f"CDR file not found: {cdr_path}")
    cfg = with_updates(cfg, cdr_path=str(cdr_path))
    _prepare_output_dir(cfg)
    with open(cdr_path, encoding="utf-8") as f:
        records = parse_cdr(f)
    cells = sorted({r.cell_id for r in records})
    series = [build_series(records, cell) for cell in cells]
    save_series(cfg.out_path(SERIES_FILE), series)
    print(
        f"ingested {len(records)} records into {len(series)} cells "
        f"({min(len(s.values) for s in series)}-{max(len(s.values) for s in series)} bins) "
        f"-> {cfg.out_path(SERIES_FILE)}"
    )
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    _prepare_output_dir(cfg)
    series = synth_traffic(cfg.synth)
    save_series(cfg.out_path(SERIES_FILE), series)
    print(
        f"generated {len(series)} cells x {len(series[0].values)} bins "
        f"(seed {cfg.synth.seed}) -> {cfg.out_path(SERIES_FILE)}"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    if args.seed is not None:
        cfg = with_updates(
            cfg, model_seed=args.seed, train=dataclasses.replace(cfg.train, seed=args.seed)
        )
    _prepare_output_dir(cfg)
    dataset = _dataset_for(cfg)
    started = time.time()
    if args.target == "fnn":
        result = fnn_train(dataset.train, dataset.test, cfg.train)
        path = cfg.out_path(FNN_CKPT)
        save_fnn(path, result.model, meta=_train_meta("train_fnn", cfg.train.seed, result))
        _write_json(cfg.out_path("train_fnn_metrics.json"), _metrics_payload(result, time.time() - started))
    else:
        vocab = benchmark_vocabulary()
        model, result = train_base(cfg, dataset, vocab)
        path = cfg.out_path(BASE_CKPT)
        save_forecaster(path, model, vocab, meta=_train_meta("train", cfg.train.seed, result))
        _write_json(cfg.out_path("train_metrics.json"), _metrics_payload(result, time.time() - started))
    status = "aborted" if result.aborted else "done"
    print(
        f"train[{args.target}] {status}: {result.steps} steps, "
        f"best eval MSE {result.best_eval_mse:.4f} -> {path}"
    )
    return 1 if result.aborted else 0


def cmd_finetune(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    if args.seed is not None:
        cfg = with_updates(cfg, finetune=dataclasses.replace(cfg.finetune, seed=args.seed))
    _prepare_output_dir(cfg)
    dataset = _dataset_for(cfg)
    vocab = benchmark_vocabulary()
    base_path = Path(args.base) if args.base else cfg.out_path(BASE_CKPT)
    if not base_path.exists():
        raise FileNotFoundError(f"base checkpoint not found: {base_path} (run `train` first)")
    base, _ = load_forecaster(base_path, vocab)
    started = time.time()
    tuned, result = finetune_base(cfg, dataset, vocab, base)
    path = cfg.out_path(TUNED_CKPT)
    save_forecaster(path, tuned, vocab, meta=_train_meta("finetune", cfg.finetune.seed, result))
    _write_json(cfg.out_path("finetune_metrics.json"), _metrics_payload(result, time.time() - started))
    status = "aborted" if result.aborted else "done"
    print(
        f"finetune {status}: {result.steps} steps, "
        f"best eval MSE {result.best_eval_mse:.4f} -> {path}"
    )
    return 1 if result.aborted else 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    dataset = _dataset_for(cfg)
    vocab = benchmark_vocabulary()
    base_path = cfg.out_path(BASE_CKPT)
    fnn_path = cfg.out_path(FNN_CKPT)
    for path, hint in ((base_path, "train"), (fnn_path, "train --target fnn")):
        if not path.exists():
            raise FileNotFoundError(f"checkpoint not found: {path} (run `{hint}` first)")
    model, _ = load_forecaster(base_path, vocab)
    fnn, _ = load_fnn(fnn_path)

    actual = np.array([s.target for s in dataset.test])
    rows = [
        ("previous_value", float(np.mean(mse(previous_value_predictions(dataset.test), actual)))),
        ("fnn", float(np.mean(mse(fnn_predict_batch(fnn, dataset.test), actual)))),
        ("bert_mse", evaluate(model, dataset.test, vocab, None).mse),
    ]
    rows.sort(key=lambda r: r[1])
    width = max(len(name) for name, _ in rows)
    print(f"{'model':<{width}}  test_mse")
    for name, value in rows:
        print(f"{name:<{width}}  {value:.4f}")
    _write_json(
        cfg.out_path("evaluate.json"),
        {
            "test_samples": len(dataset.test),
            "rows": [{"model": n, "test_mse": v} for n, v in rows],
        },
    )
    return 0


def _simulate_slug(pref: OperatorPreference) -> str:
    return pref.name.lower()


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    dataset = _dataset_for(cfg)
    vocab = benchmark_vocabulary()
    pref = OperatorPreference.from_phrase(args.preference)
    for path, hint in (
        (cfg.out_path(BASE_CKPT), "train"),
        (cfg.out_path(TUNED_CKPT), "finetune"),
    ):
        if not path.exists():
            raise FileNotFoundError(f"checkpoint not found: {path} (run `{hint}` first)")
    base, _ = load_forecaster(cfg.out_path(BASE_CKPT), vocab)
    tuned, _ = load_forecaster(cfg.out_path(TUNED_CKPT), vocab)
    start_ms = dataset.test_start_ms if args.start_ms is None else args.start_ms
    end_ms = dataset.test_end_ms if args.end_ms is None else args.end_ms
    baseline = baseline_run(base, dataset, vocab, cfg, start_ms, end_ms)
    report = simulate_preference(tuned, dataset, vocab, cfg, pref, baseline, start_ms, end_ms)

    print(_report_header(cfg))
    print(f"preference: {pref.phrase!r}  (q={q_for_preference(pref, cfg.orientation):g})")
    print(format_report(report))
    payload = report_records(report)
    payload.update(
        {
            "preference": pref.phrase,
            "q": q_for_preference(pref, cfg.orientation),
            "orientation": cfg.orientation.value,
            "q_mapping": _q_mapping(cfg),
            "time_range": {"start_ms": start_ms, "end_ms": end_ms},
        }
    )
    out = cfg.out_path(f"simulate_{_simulate_slug(pref)}.json")
    _write_json(out, payload)
    print(f"-> {out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    outdir = Path(cfg.output_dir)
    sections: list[str] = [f"cellcast report  (output_dir: {outdir})", _report_header(cfg)]

    eval_path = cfg.out_path("evaluate.json")
    if eval_path.exists():
        data = json.loads(eval_path.read_text())
        lines = [f"forecast accuracy over {data['test_samples']} test samples:"]
        for row in data["rows"]:
            lines.append(f"  {row['model']:<16} MSE {row['test_mse']:.4f}")
        sections.append("\n".join(lines))

    sim_paths = sorted(outdir.glob("simulate_*.json"))
    if sim_paths:
        lines = ["on-off simulations (vs bert_mse baseline):"]
        lines.append(f"  {'preference':<34} {'q':>6} {'savings_w':>10} {'loss_pct':>9}")
        phrase_rank = {p.phrase: i for i, p in enumerate(PREFERENCE_ORDER)}
        recs = [json.loads(p.read_text()) for p in sim_paths]
        recs.sort(key=lambda d: phrase_rank.get(d["preference"], len(phrase_rank)))
        for data in recs:
            lines.append(
                f"  {data['preference']:<34} {data['q']:>6g} "
                f"{data['total_savings_w']:>10.3f} {data['avg_throughput_loss_pct']:>9.4f}"
            )
        sections.append("\n".join(lines))

    for name, title in (
        ("train_metrics.json", "base training"),
        ("finetune_metrics.json", "preference tuning"),
    ):
        path = cfg.out_path(name)
        if path.exists():
            data = json.loads(path.read_text())
            sections.append(
                f"{title}: {data['steps']} steps, best eval MSE {data['best_eval_mse']:.4f}, "
                f"{data['wall_seconds']:.0f}s"
            )

    if len(sections) == 2:
        raise FileNotFoundError(
            f"no stored results under {outdir} (run evaluate/simulate first)"
        )
    print("\n\n".join(sections))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from cellcast.service import ServiceBundle, create_app

    cfg = _load_run_config(args)
    dataset = _dataset_for(cfg)
    vocab = benchmark_vocabulary()
    for path, hint in (
        (cfg.out_path(BASE_CKPT), "train"),
        (cfg.out_path(TUNED_CKPT), "finetune"),
    ):
        if not path.exists():
            raise FileNotFoundError(
                f"refusing to start: checkpoint not found: {path} (run `{hint}` first)"
            )
    base, _ = load_forecaster(cfg.out_path(BASE_CKPT), vocab)
    tuned, _ = load_forecaster(cfg.out_path(TUNED_CKPT), vocab)
    bundle = ServiceBundle(
        cfg=cfg, dataset=dataset, vocab=vocab, tuned=tuned, baseline_model=base
    )
    listen = os.environ.get(LISTEN_ENV, DEFAULT_LISTEN)
    host, _, port_text = listen.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValueError(f"{LISTEN_ENV} must look like host:port, got {listen!r}")
    app = create_app(bundle)
    print(f"serving on http://{listen}  ({len(dataset.series)} cells, {len(dataset.pairs)} pairs)")
    uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    return 0


# ------------------------------------------------------------------ driver


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellcast",
        description="Prompt-conditioned load forecasting and cell on-off simulation.",
    )
    parser.add_argument("--version", action="version", version=f"cellcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON run config (defaults used when omitted)")
        p.add_argument("--output-dir", help="override the config's output directory")

    p = sub.add_parser("ingest", help="parse a CDR file into the per-cell series store")
    common(p)
    p.add_argument("--cdr", help="CDR file path (overrides the config)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate synthetic traffic into the series store")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit the squared-error forecaster (or the FNN baseline)")
    common(p)
    p.add_argument("--target", choices=("transformer", "fnn"), default="transformer")
    p.add_argument("--seed", type=int, help="sets both the init and shuffle seeds")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="preference-tune the trained forecaster")
    common(p)
    p.add_argument("--base", help="base checkpoint (default: <output_dir>/forecaster_mse.ckpt)")
    p.add_argument("--seed", type=int, help="sets the finetune shuffle seed")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="test-set MSE table: previous-value, fnn, bert_mse")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="run the on-off simulator for one preference phrase")
    common(p)
    p.add_argument(
        "--preference",
        required=True,
        help='operator phrase, e.g. "Focus highly on power savings"',
    )
    p.add_argument("--start-ms", type=int, help="simulation window start (default: test start)")
    p.add_argument("--end-ms", type=int, help="simulation window end (default: test end)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help=f"start the JSON service (listen address from ${LISTEN_ENV})")
    common(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="render stored evaluate/simulate results")
    common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    torch.set_num_threads(1)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, CheckpointError, KeyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
