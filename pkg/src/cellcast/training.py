"""Seeded training loops for the forecaster: base fit and preference tuning.

The optimizer is a from-scratch AdamW (decoupled weight decay, bias
correction) with a half-cosine learning-rate decay and global-norm
gradient clipping, so every update is explicit and reproducible: two runs
with the same seed produce byte-identical weights.

``train`` fits one fixed objective on goal-free prompts.  ``finetune``
continues from trained weights with the balancing loss, drawing an
operator preference per instance each epoch (from an RNG stream separate
from shuffling, so the schedule of batches never depends on how many
preferences are in play) and rendering the matching goal clause into the
prompt.  Both early-stop when held-out MSE stops improving and abort
safely if a step produces non-finite numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from cellcast.data import PredictionSample
from cellcast.losses import LossSpec, batch_blf, batch_loss
from cellcast.model import GradientError, LoadForecaster
from cellcast.prompting import (
    DEFAULT_SEQ_LEN,
    OperatorPreference,
    Orientation,
    Vocabulary,
    q_for_preference,
    render_prompt,
    tokenize,
)

EVAL_BATCH = 256


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings; defaults follow common BERT fine-tuning."""

    loss: LossSpec = field(default_factory=LossSpec.mse)
    base_lr: float = 1e-5
    batch_size: int = 128
    epochs: int = 10
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    patience: int = 5
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.base_lr <= 0 or self.eps <= 0:
            raise ValueError("base_lr and eps must be > 0")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    eval_mse: float
    lr: float
    grad_norm: float


@dataclass
class TrainResult:
    model: LoadForecaster
    history: list[EpochRecord]
    steps: int
    stopped_early: bool
    aborted: bool
    best_eval_mse: float


@dataclass
class EvalResult:
    mse: float
    mean_signed_error: float
    predictions: np.ndarray
    targets: np.ndarray


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Half-cosine decay from ``base_lr`` at step 0 to 0 at ``total_steps``."""
    if total_steps <= 0:
        return base_lr
    step = min(step, total_steps)
    return base_lr * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


class AdamWState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, model: torch.nn.Module):
        self.step = 0
        self.m = {n: torch.zeros_like(p) for n, p in model.named_parameters()}
        self.v = {n: torch.zeros_like(p) for n, p in model.named_parameters()}


def clip_global_norm(grads: Sequence[torch.Tensor], max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is <= max_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads:
            g.mul_(scale)
    return total


def adamw_step(
    model: torch.nn.Module,
    grads: dict[str, torch.Tensor],
    state: AdamWState,
    lr: float,
    cfg: TrainConfig,
) -> None:
    """One decoupled-weight-decay Adam update: w -= lr*(m_hat/(sqrt(v_hat)+eps) + wd*w)."""
    for grad in grads.values():
        if not torch.all(torch.isfinite(grad)):
            raise GradientError("non-finite gradient passed to optimizer")
    state.step += 1
    bc1 = 1.0 - cfg.beta1**state.step
    bc2 = 1.0 - cfg.beta2**state.step
    with torch.no_grad():
        for name, param in model.named_parameters():
            g = grads[name]
            m = state.m[name].mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            v = state.v[name].mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            update = (m / bc1) / ((v / bc2).sqrt() + cfg.eps)
            param.sub_(lr * (update + cfg.weight_decay * param))


def tokenize_samples(
    samples: Sequence[PredictionSample],
    vocab: Vocabulary,
    pref: OperatorPreference | None = None,
    length: int = DEFAULT_SEQ_LEN,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Render + tokenize every sample into stacked (ids, attention_mask) tensors."""
    seqs = [tokenize(render_prompt(s, pref), vocab, length) for s in samples]
    ids = torch.from_numpy(np.stack([s.ids for s in seqs]))
    mask = torch.from_numpy(np.stack([s.attention_mask for s in seqs]))
    return ids, mask


def calibrate_output(model: LoadForecaster, samples: Sequence[PredictionSample]) -> None:
    """Anchor the model's output range to the training targets."""
    targets = np.array([s.target for s in samples], dtype=np.float64)
    model.set_output_calibration(float(targets.mean()), max(float(targets.std()), 1e-6))


def evaluate(
    model: LoadForecaster,
    samples: Sequence[PredictionSample],
    vocab: Vocabulary,
    pref: OperatorPreference | None = None,
    batch_size: int = EVAL_BATCH,
) -> EvalResult:
    """Held-out MSE and signed bias; fixed batching keeps the numbers reproducible."""
    if not samples:
        raise ValueError("cannot evaluate on an empty sample list")
    ids, mask = tokenize_samples(samples, vocab, pref, model.cfg.max_len)
    targets = np.array([s.target for s in samples], dtype=np.float64)
    preds = np.empty(len(samples), dtype=np.float64)
    with torch.no_grad():
        for lo in range(0, len(samples), batch_size):
            hi = lo + batch_size
            preds[lo:hi] = model(ids[lo:hi], mask[lo:hi]).numpy()
    err = preds - targets
    return EvalResult(
        mse=float((err * err).mean()),
        mean_signed_error=float(err.mean()),
        predictions=preds,
        targets=targets,
    )


def _loss_for_batch(
    pred: torch.Tensor, target: torch.Tensor, spec: LossSpec, q: torch.Tensor | None
) -> torch.Tensor:
    if q is not None:
        return batch_blf(pred, target, q).mean()
    return batch_loss(pred, target, spec)


def _fit(
    model: LoadForecaster,
    train_samples: Sequence[PredictionSample],
    eval_samples: Sequence[PredictionSample],
    vocab: Vocabulary,
    cfg: TrainConfig,
    prefs: Sequence[OperatorPreference] | None,
    orientation: Orientation,
    eval_pref: OperatorPreference | None,
) -> TrainResult:
    if not train_samples:
        raise ValueError("cannot train on an empty sample list")
    n = len(train_samples)
    length = model.cfg.max_len

    if prefs is None:
        banks = [tokenize_samples(train_samples, vocab, None, length)]
        q_by_bank = None
    else:
        if not prefs:
            raise ValueError("preference list must not be empty")
        banks = [tokenize_samples(train_samples, vocab, p, length) for p in prefs]
        q_by_bank = torch.tensor(
            [q_for_preference(p, orientation) for p in prefs], dtype=model.dtype
        )
    targets_all = torch.tensor([s.target for s in train_samples], dtype=model.dtype)

    shuffle_rng = np.random.default_rng([cfg.seed, 11])
    pref_rng = np.random.default_rng([cfg.seed, 13])
    params = dict(model.named_parameters())
    state = AdamWState(model)
    batches_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    total_steps = batches_per_epoch * cfg.epochs
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)

    history: list[EpochRecord] = []
    best_mse = math.inf
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    stale_epochs = 0
    stopped_early = aborted = False
    step = 0
    lr = cosine_lr(0, total_steps, cfg.base_lr)

    for epoch in range(cfg.epochs):
        if step >= total_steps:
            break
        order = shuffle_rng.permutation(n)
        # One preference draw per instance per epoch, from its own stream.
        bank_idx = pref_rng.integers(0, len(banks), size=n)
        epoch_loss = 0.0
        epoch_norm = 0.0
        seen = 0
        try:
            for lo in range(0, n, cfg.batch_size):
                if step >= total_steps:
                    break
                rows = order[lo : lo + cfg.batch_size]
                ids = torch.stack([banks[bank_idx[i]][0][i] for i in rows])
                mask = torch.stack([banks[bank_idx[i]][1][i] for i in rows])
                target = targets_all[rows]
                q = q_by_bank[bank_idx[rows]] if q_by_bank is not None else None

                pred = model(ids, mask)
                loss = _loss_for_batch(pred, target, cfg.loss, q)
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

        eval_mse = evaluate(model, eval_samples, vocab, eval_pref).mse
        history.append(
            EpochRecord(
                epoch=epoch,
                train_loss=epoch_loss / max(seen, 1),
                eval_mse=eval_mse,
                lr=lr,
                grad_norm=epoch_norm,
            )
        )
        if eval_mse < best_mse:
            best_mse = eval_mse
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= cfg.patience:
                stopped_early = True
                break

    model.load_state_dict(best_state)
    return TrainResult(
        model=model,
        history=history,
        steps=step,
        stopped_early=stopped_early,
        aborted=aborted,
        best_eval_mse=best_mse if history else math.inf,
    )


def train(
    model: LoadForecaster,
    train_samples: Sequence[PredictionSample],
    eval_samples: Sequence[PredictionSample],
    vocab: Vocabulary,
    cfg: TrainConfig,
) -> TrainResult:
    """Fit ``cfg.loss`` on goal-free prompts; calibrates the output range first."""
    calibrate_output(model, train_samples)
    return _fit(model, train_samples, eval_samples, vocab, cfg, None, Orientation.TABLE_CONSISTENT, None)


def finetune(
    model: LoadForecaster,
    train_samples: Sequence[PredictionSample],
    eval_samples: Sequence[PredictionSample],
    vocab: Vocabulary,
    cfg: TrainConfig,
    prefs: Sequence[OperatorPreference] = tuple(OperatorPreference),
    orientation: Orientation = Orientation.TABLE_CONSISTENT,
) -> TrainResult:
    """Preference-tune a trained model with per-instance goals and balancing loss.

    Held-out MSE for early stopping is measured under the neutral goal so
    the stopping signal is comparable across preference mixes.
    """
    return _fit(
        model,
        train_samples,
        eval_samples,
        vocab,
        cfg,
        list(prefs),
        orientation,
        OperatorPreference.NEUTRAL,
    )
