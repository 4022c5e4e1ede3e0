"""Forecast losses: MSE and the asymmetric balancing loss.

The balancing loss ``blf`` is a pinball-family loss with a single knob
``q``: underpredictions are charged at slope q/(q+1) and overpredictions
at 1/(q+1).  Its expected-loss minimizer over constants is therefore the
q/(q+1) quantile of the target distribution, which is what lets a single
scalar steer a trained model between cautious and aggressive forecasts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class LossSpec:
    """Training objective: ``kind`` is "mse" or "blf"; ``q`` applies to blf only."""

    kind: str
    q: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("mse", "blf"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "blf":
            if self.q is None or not self.q > 0:
                raise ValueError("blf requires q > 0")

    @staticmethod
    def mse() -> "LossSpec":
        return LossSpec("mse")

    @staticmethod
    def blf(q: float) -> "LossSpec":
        return LossSpec("blf", q)


def mse(y, yhat):
    """Squared error (y - yhat)**2; elementwise on arrays."""
    d = np.asarray(y, dtype=np.float64) - np.asarray(yhat, dtype=np.float64)
    out = d * d
    return float(out) if out.ndim == 0 else out


def blf(y, yhat, q: float):
    """Balancing loss max{q*(y - yhat), (yhat - y)} / (q + 1); elementwise on arrays."""
    if not q > 0:
        raise ValueError("q must be > 0")
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    out = np.maximum(q * (y - yhat) / (q + 1.0), (yhat - y) / (q + 1.0))
    return float(out) if out.ndim == 0 else out


def blf_subgradient(y, yhat, q: float):
    """d(blf)/d(yhat): -q/(q+1) below the target, 1/(q+1) above, 0 at the kink."""
    if not q > 0:
        raise ValueError("q must be > 0")
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    out = np.where(yhat < y, -q / (q + 1.0), np.where(yhat > y, 1.0 / (q + 1.0), 0.0))
    return float(out) if out.ndim == 0 else out


def blf_minimizer_quantile(q: float) -> float:
    """Quantile level tau = q/(q+1) whose empirical quantile minimizes mean blf."""
    if not q > 0:
        raise ValueError("q must be > 0")
    return q / (q + 1.0)


def batch_loss(pred: torch.Tensor, target: torch.Tensor, spec: LossSpec) -> torch.Tensor:
    """Mean loss over a batch, differentiable; blf uses the 0-at-kink subgradient."""
    if spec.kind == "mse":
        d = target - pred
        return (d * d).mean()
    return batch_blf(pred, target, torch.as_tensor(spec.q, dtype=pred.dtype)).mean()


def batch_blf(pred: torch.Tensor, target: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    """Per-sample balancing loss; ``q`` broadcasts, enabling per-sample knobs."""
    under = q * (target - pred) / (q + 1.0)
    over = (pred - target) / (q + 1.0)
    # torch.maximum splits the gradient at exact ties; route through the zero
    # branch instead so the kink subgradient is 0.
    return torch.where(pred < target, under, torch.where(pred > target, over, 0.0 * pred))
