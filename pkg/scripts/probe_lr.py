# quick-and-dirty lr probe on a shortened step budget; used to pick the
# benchmark base_lr before committing to a full run.
#   python3 scripts/probe_lr.py 1e-4 5e-4 1e-3
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import dataclasses

import torch

from cellcast.config import RunConfig
from cellcast.data import SynthConfig
from cellcast.losses import LossSpec
from cellcast.pipeline import benchmark_vocabulary, build_dataset, train_base
from cellcast.training import TrainConfig

torch.set_num_threads(1)
STEPS = 200

cfg = RunConfig(
    output_dir="out/probe",
    synth=SynthConfig(num_cells=20, days=14, base_load=45.0,
                      diurnal_amplitude=28.0, noise_std=5.0, seed=101),
)
dataset = build_dataset(cfg)
vocab = benchmark_vocabulary()

for raw in sys.argv[1:] or ["1e-4", "5e-4", "1e-3"]:
    lr = float(raw)
    run = dataclasses.replace(
        cfg,
        train=TrainConfig(loss=LossSpec.mse(), base_lr=lr, batch_size=32,
                          epochs=8, max_steps=STEPS, seed=0),
    )
    t0 = time.time()
    _, result = train_base(run, dataset, vocab)
    print(f"lr={lr:g}  steps={result.steps}  eval_mse={result.best_eval_mse:8.2f}  "
          f"({time.time()-t0:.0f}s)", flush=True)
