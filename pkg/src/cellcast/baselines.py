"""Reference predictors the transformer is compared against.

``previous_value_predict`` repeats the latest observed load.  ``Fnn`` is
a ~150-parameter two-layer network over the same per-sample features the
prompts carry (history window plus its mean and deviation), trained with
the exact optimizer/schedule/stopping contracts as the main model so the
comparison isolates architecture rather than training tricks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from cellcast.data import PredictionSample
from cellcast.losses import batch_loss
from cellcast.model import INIT_STD, GradientError
from cellcast.training import (
    AdamWState,
    EpochRecord,
    TrainConfig,
    adamw_step,
    clip_global_norm,
    cosine_lr,
)

DEFAULT_WINDOW = 5
DEFAULT_HIDDEN = 16


def previous_value_predict(sample: PredictionSample) -> float:
    """Forecast the next interval as a repeat of the latest one."""
    if not sample.history:
        raise ValueError("cannot repeat the previous value of an empty history")
    return float(sample.history[-1])


def previous_value_predictions(samples: Sequence[PredictionSample]) -> np.ndarray:
    return np.array([previous_value_predict(s) for s in samples], dtype=np.float64)


def features_of(samples: Sequence[PredictionSample], window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Per-sample feature rows: the h history values plus their mean and deviation."""
    rows = []
    for s in samples:
        if len(s.history) != window:
            raise ValueError(f"expected a {window}-value history, got {len(s.history)}")
        rows.append(list(s.history) + [s.mean, s.deviation])
    return np.array(rows, dtype=np.float64)


class Fnn(nn.Module):
    """window+2 -> hidden -> 1 with GELU; inputs and outputs calibrated by buffers."""

    def __init__(self, window: int = DEFAULT_WINDOW, hidden: int = DEFAULT_HIDDEN):
        super().__init__()
        self.window = window
        in_dim = window + 2
        self.hidden_layer = nn.Linear(in_dim, hidden)
        self.output_layer = nn.Linear(hidden, 1)
        self.activation = nn.GELU()
        self.register_buffer("in_shift", torch.zeros(in_dim))
        self.register_buffer("in_scale", torch.ones(in_dim))
        self.register_buffer("out_shift", torch.tensor(0.0))
        self.register_buffer("out_scale", torch.tensor(1.0))
        self.to(torch.float64)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        x = (features - self.in_shift) / self.in_scale
        z = self.output_layer(self.activation(self.hidden_layer(x))).squeeze(-1)
        return self.out_shift + self.out_scale * z

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def init_fnn(window: int = DEFAULT_WINDOW, hidden: int = DEFAULT_HIDDEN, seed: int = 0) -> Fnn:
    """Seeded N(0, 0.02) weights and zero biases, like the main model."""
    model = Fnn(window, hidden)
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for layer in (model.hidden_layer, model.output_layer):
            layer.weight.normal_(0.0, INIT_STD, generator=generator)
            layer.bias.zero_()
    return model


def calibrate_fnn(model: Fnn, samples: Sequence[PredictionSample]) -> None:
    feats = features_of(samples, model.window)
    targets = np.array([s.target for s in samples], dtype=np.float64)
    with torch.no_grad():
        model.in_shift.copy_(torch.from_numpy(feats.mean(axis=0)))
        model.in_scale.copy_(torch.from_numpy(np.maximum(feats.std(axis=0), 1e-6)))
        model.out_shift.fill_(float(targets.mean()))
        model.out_scale.fill_(max(float(targets.std()), 1e-6))


def fnn_predict(model: Fnn, sample: PredictionSample) -> float:
    return float(fnn_predict_batch(model, [sample])[0])


def fnn_predict_batch(model: Fnn, samples: Sequence[PredictionSample]) -> np.ndarray:
    feats = torch.from_numpy(features_of(samples, model.window))
    with torch.no_grad():
        return model(feats).numpy()


@dataclass
class FnnTrainResult:
    model: Fnn
    history: list[EpochRecord]
    steps: int
    stopped_early: bool
    aborted: bool
    best_eval_mse: float


def _fnn_eval_mse(model: Fnn, feats: torch.Tensor, targets: torch.Tensor) -> float:
    with torch.no_grad():
        err = model(feats) - targets
        return float((err * err).mean())


def fnn_train(
    train_samples: Sequence[PredictionSample],
    eval_samples: Sequence[PredictionSample],
    cfg: TrainConfig,
    window: int = DEFAULT_WINDOW,
    hidden: int = DEFAULT_HIDDEN,
) -> FnnTrainResult:
    """Fit the network under the shared optimizer/schedule/stopping contracts."""
    if not train_samples or not eval_samples:
        raise ValueError("need non-empty train and eval sample lists")
    model = init_fnn(window, hidden, seed=cfg.seed)
    calibrate_fnn(model, train_samples)

    feats = torch.from_numpy(features_of(train_samples, window))
    targets = torch.tensor([s.target for s in train_samples], dtype=torch.float64)
    eval_feats = torch.from_numpy(features_of(eval_samples, window))
    eval_targets = torch.tensor([s.target for s in eval_samples], dtype=torch.float64)

    n = len(train_samples)
    shuffle_rng = np.random.default_rng([cfg.seed, 11])
    params = dict(model.named_parameters())
    state = AdamWState(model)
    batches_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    total_steps = batches_per_epoch * cfg.epochs
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)

    history: list[EpochRecord] = []
    best_mse = math.inf
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    stale = 0
    stopped_early = aborted = False
    step = 0
    lr = cosine_lr(0, total_steps, cfg.base_lr)

    for epoch in range(cfg.epochs):
        if step >= total_steps:
            break
        order = shuffle_rng.permutation(n)
        epoch_loss, epoch_norm, seen = 0.0, 0.0, 0
        try:
            for lo in range(0, n, cfg.batch_size):
                if step >= total_steps:
                    break
                rows = order[lo : lo + cfg.batch_size]
                pred = model(feats[rows])
                loss = batch_loss(pred, targets[rows], cfg.loss)
                if not torch.isfinite(loss):
                    raise GradientError(f"non-finite loss at step {step}")
                grads = torch.autograd.grad(loss, list(params.values()))
                grad_map = dict(zip(params.keys(), grads))
                epoch_norm = clip_global_norm(list(grad_map.values()), cfg.clip_norm)
                lr = cosine_lr(step, total_steps, cfg.base_lr)
                adamw_step(model, grad_map, state, lr, cfg)
                step += 1
                epoch_loss += float(loss.detach()) * len(rows)
                seen += len(rows)
        except GradientError:
            aborted = True
            model.load_state_dict(best_state)
            break

        eval_mse = _fnn_eval_mse(model, eval_feats, eval_targets)
        history.append(
            EpochRecord(epoch, epoch_loss / max(seen, 1), eval_mse, lr, epoch_norm)
        )
        if eval_mse < best_mse:
            best_mse, stale = eval_mse, 0
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                stopped_early = True
                break

    model.load_state_dict(best_state)
    return FnnTrainResult(
        model=model,
        history=history,
        steps=step,
        stopped_early=stopped_early,
        aborted=aborted,
        best_eval_mse=best_mse if history else math.inf,
    )
