"""End-to-end benchmark run: train, tune, evaluate, simulate all phrases.

Reproduces the full pipeline on the synthetic 20-cell benchmark and prints
the accuracy table plus the five-phrase trade-off table. Roughly 15-20
minutes on one CPU core with the default step budgets.

    python3 scripts/run_benchmark.py --output-dir out/benchmark
"""

import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np
import torch

from cellcast.baselines import fnn_predict_batch, fnn_train, previous_value_predictions
from cellcast.config import RunConfig, save_config
from cellcast.data import SynthConfig
from cellcast.losses import LossSpec, mse
from cellcast.pipeline import (
    baseline_run,
    benchmark_vocabulary,
    build_dataset,
    finetune_base,
    save_forecaster,
    simulate_preference,
    train_base,
)
from cellcast.prompting import PREFERENCE_ORDER, q_for_preference
from cellcast.training import TrainConfig, evaluate


def benchmark_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        output_dir=args.output_dir,
        synth=SynthConfig(
            num_cells=20, days=14, base_load=45.0, diurnal_amplitude=28.0,
            noise_std=5.0, seed=101,
        ),
        train=TrainConfig(
            loss=LossSpec.mse(), base_lr=args.lr, batch_size=32, epochs=8,
            max_steps=args.steps, seed=args.seed,
        ),
        finetune=TrainConfig(
            loss=LossSpec.blf(1.0), base_lr=args.finetune_lr, batch_size=32,
            epochs=8, max_steps=args.finetune_steps, seed=args.seed + 1,
        ),
        model_seed=args.seed,
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--output-dir", default="out/benchmark")
    parser.add_argument("--steps", type=int, default=500)
    parser.add_argument("--lr", type=float, default=5e-4)
    parser.add_argument("--finetune-steps", type=int, default=600)
    parser.add_argument("--finetune-lr", type=float, default=2e-4)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    torch.set_num_threads(1)
    cfg = benchmark_config(args)
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    save_config(cfg, cfg.out_path("run_config.json"))

    t0 = time.time()
    dataset = build_dataset(cfg)
    vocab = benchmark_vocabulary()
    print(f"dataset: {len(dataset.train)} train / {len(dataset.test)} test samples, "
          f"{len(dataset.pairs)} pairs")

    base, base_result = train_base(cfg, dataset, vocab)
    save_forecaster(cfg.out_path("forecaster_mse.ckpt"), base, vocab)
    print(f"[{time.time()-t0:6.0f}s] base: {base_result.steps} steps, "
          f"held-out MSE {base_result.best_eval_mse:.2f}")

    actual = np.array([s.target for s in dataset.test])
    rows = [
        ("previous_value",
         float(np.mean(mse(previous_value_predictions(dataset.test), actual)))),
        ("fnn",
         float(np.mean(mse(fnn_predict_batch(
             fnn_train(dataset.train, dataset.test,
                       TrainConfig(base_lr=3e-3, batch_size=128, epochs=8,
                                   patience=3, seed=args.seed)).model,
             dataset.test), actual)))),
        ("bert_mse", evaluate(base, dataset.test, vocab, None).mse),
    ]
    rows.sort(key=lambda r: r[1])
    print(f"[{time.time()-t0:6.0f}s] test MSE:")
    for name, value in rows:
        print(f"    {name:<16} {value:8.3f}")

    tuned, tuned_result = finetune_base(cfg, dataset, vocab, base)
    save_forecaster(cfg.out_path("forecaster_tuned.ckpt"), tuned, vocab)
    print(f"[{time.time()-t0:6.0f}s] tuned: {tuned_result.steps} steps, "
          f"held-out MSE {tuned_result.best_eval_mse:.2f}")

    baseline = baseline_run(base, dataset, vocab, cfg)
    table = []
    print(f"[{time.time()-t0:6.0f}s] trade-off vs bert_mse "
          f"(orientation {cfg.orientation.value}):")
    print(f"    {'phrase':<34} {'q':>5}  {'savings W':>10}  {'loss %':>8}  {'off %':>6}")
    for pref in PREFERENCE_ORDER:
        rep = simulate_preference(tuned, dataset, vocab, cfg, pref, baseline)
        q = q_for_preference(pref, cfg.orientation)
        print(f"    {pref.phrase:<34} {q:>5g}  {rep.total_savings_w:>10.3f}  "
              f"{rep.avg_throughput_loss_pct:>8.4f}  {100*rep.off_fraction:>6.2f}")
        table.append({
            "phrase": pref.phrase, "q": q,
            "total_savings_w": rep.total_savings_w,
            "avg_throughput_loss_pct": rep.avg_throughput_loss_pct,
            "off_fraction": rep.off_fraction,
        })

    summary = {
        "mse": {name: value for name, value in rows},
        "tradeoff": table,
        "orientation": cfg.orientation.value,
        "wall_seconds": round(time.time() - t0, 1),
    }
    cfg.out_path("benchmark_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"[{time.time()-t0:6.0f}s] wrote {cfg.out_path('benchmark_summary.json')}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
