import sys
from pathlib import Path
from types import SimpleNamespace

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cellcast import cli
from cellcast.config import ModelShape, RunConfig, save_config
from cellcast.data import SynthConfig
from cellcast.losses import LossSpec
from cellcast.training import TrainConfig


def tiny_config(output_dir: str) -> RunConfig:
    """A seconds-scale run: 4 cells, 4 days, 1-layer model, 4 train steps."""
    return RunConfig(
        output_dir=output_dir,
        synth=SynthConfig(
            num_cells=4, days=4, base_load=45.0, diurnal_amplitude=28.0,
            noise_std=5.0, seed=3,
        ),
        train_days=2,
        test_days=1,
        model=ModelShape(layers=1, hidden=12, heads=2, ffn_dim=24, max_len=96,
                         head_dims=(8, 4, 1)),
        train=TrainConfig(base_lr=1e-4, batch_size=32, epochs=1, max_steps=4, seed=0),
        finetune=TrainConfig(loss=LossSpec.blf(1.0), base_lr=1e-4, batch_size=32,
                             epochs=1, max_steps=4, seed=1),
    )


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """Artifacts of a full tiny CLI run: series store plus all three checkpoints."""
    root = tmp_path_factory.mktemp("tinyrun")
    out = root / "out"
    cfg = tiny_config(str(out))
    cfg_path = root / "config.json"
    save_config(cfg, cfg_path)
    for argv in (["synth"], ["train"], ["train", "--target", "fnn"], ["finetune"]):
        code = cli.main([*argv, "--config", str(cfg_path)])
        assert code == 0, f"tiny run step {argv} failed"
    return SimpleNamespace(cfg=cfg, cfg_path=cfg_path, out=out)
