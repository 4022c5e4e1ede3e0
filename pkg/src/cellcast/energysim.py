"""Cell on-off energy simulator.

Each co-located pair has a low-band cell that always stays on and a
high-band cell that sleeps whenever the pair's *predicted* combined load
fits on the low cell: L1 + e*L2 <= off_threshold.  Power and service
quality are then scored on the *actual* loads:

    both on:   P = 2*A + B*(L1 + L2)
    high off:  P = A + B*(L1 + e*L2)
    raw loss (high off) = max(0, L1 + e*L2 - capacity)

with A the fixed per-cell wattage and B watts per percent of load.
Savings are reported against an explicit baseline run (conventionally the
squared-error model with the same on-off scheme), as summed-over-pairs,
averaged-over-intervals watts; negative values mean the run burned more
power than the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "PowerParams",
    "PairLoads",
    "PairResult",
    "SimReport",
    "TraceAlignmentError",
    "onoff_decide",
    "power",
    "throughput_loss",
    "simulate",
    "format_report",
    "report_records",
]


class TraceAlignmentError(ValueError):
    """Predicted and actual traces disagree on pairs or interval counts."""


@dataclass(frozen=True)
class PowerParams:
    """Power and service model constants (loads in percent, power in watts)."""

    fixed_w: float = 167.0
    per_load_w: float = 2.73
    transfer_efficiency: float = 1.0
    off_threshold: float = 80.0
    capacity: float = 100.0

    def __post_init__(self) -> None:
        if self.fixed_w <= 0 or self.per_load_w <= 0:
            raise ValueError("fixed_w and per_load_w must be > 0")
        if not 0 < self.off_threshold <= self.capacity:
            raise ValueError("need 0 < off_threshold <= capacity")
        if self.transfer_efficiency <= 0:
            raise ValueError("transfer_efficiency must be > 0")


@dataclass(frozen=True)
class PairLoads:
    """Aligned load traces for one pair; ``high`` is the sleep candidate."""

    pair_key: str
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "low", np.asarray(self.low, dtype=np.float64))
        object.__setattr__(self, "high", np.asarray(self.high, dtype=np.float64))
        if self.low.shape != self.high.shape or self.low.ndim != 1:
            raise TraceAlignmentError(f"pair {self.pair_key}: low/high traces must share a 1-d shape")
        if np.any(self.low < 0) or np.any(self.high < 0):
            raise ValueError(f"pair {self.pair_key}: loads must be >= 0")


def _combined(l1, l2, params: PowerParams):
    return np.asarray(l1, dtype=np.float64) + params.transfer_efficiency * np.asarray(
        l2, dtype=np.float64
    )


def onoff_decide(l1_pred, l2_pred, params: PowerParams):
    """True where the high cell sleeps: predicted L1 + e*L2 <= threshold (inclusive)."""
    off = _combined(l1_pred, l2_pred, params) <= params.off_threshold
    return bool(off) if off.ndim == 0 else off


def power(l1, l2, high_off, params: PowerParams):
    """Pair power draw in watts from actual loads under the given decision."""
    l1 = np.asarray(l1, dtype=np.float64)
    l2 = np.asarray(l2, dtype=np.float64)
    on_w = 2.0 * params.fixed_w + params.per_load_w * (l1 + l2)
    off_w = params.fixed_w + params.per_load_w * _combined(l1, l2, params)
    out = np.where(high_off, off_w, on_w)
    return float(out) if out.ndim == 0 else out


def throughput_loss(l1, l2, high_off, params: PowerParams):
    """Raw load shed when the low cell must carry both and overflows its capacity."""
    overflow = np.maximum(0.0, _combined(l1, l2, params) - params.capacity)
    out = np.where(high_off, overflow, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class PairResult:
    """Per-interval traces and aggregates for one simulated pair."""

    pair_key: str
    off: np.ndarray
    power_w: np.ndarray
    loss_raw: np.ndarray
    offered_raw: np.ndarray
    savings_w: float = 0.0

    @property
    def off_fraction(self) -> float:
        return float(self.off.mean())

    @property
    def mean_power_w(self) -> float:
        return float(self.power_w.mean())

    @property
    def loss_pct(self) -> float:
        offered = float(self.offered_raw.sum())
        return 100.0 * float(self.loss_raw.sum()) / offered if offered > 0 else 0.0


@dataclass
class SimReport:
    """One simulator run: per-pair traces plus whole-run aggregates.

    ``total_savings_w`` is summed across pairs and averaged across
    intervals (watts); ``savings_sum_w`` keeps the raw pair-interval sum.
    """

    name: str
    params: PowerParams
    pairs: list[PairResult]
    intervals: int
    baseline_name: str | None = None
    total_savings_w: float = 0.0
    savings_sum_w: float = 0.0

    @property
    def avg_throughput_loss_pct(self) -> float:
        offered = sum(float(p.offered_raw.sum()) for p in self.pairs)
        lost = sum(float(p.loss_raw.sum()) for p in self.pairs)
        return 100.0 * lost / offered if offered > 0 else 0.0

    @property
    def mean_power_w(self) -> float:
        return float(sum(p.mean_power_w for p in self.pairs))

    @property
    def off_fraction(self) -> float:
        if not self.pairs:
            return 0.0
        return float(np.mean([p.off_fraction for p in self.pairs]))


def _check_alignment(
    predicted: Sequence[PairLoads], actual: Sequence[PairLoads]
) -> tuple[dict[str, PairLoads], dict[str, PairLoads]]:
    pred = {p.pair_key: p for p in predicted}
    act = {a.pair_key: a for a in actual}
    if len(pred) != len(predicted) or len(act) != len(actual):
        raise TraceAlignmentError("duplicate pair keys in traces")
    if pred.keys() != act.keys():
        raise TraceAlignmentError(
            f"predicted pairs {sorted(pred)} != actual pairs {sorted(act)}"
        )
    lengths = {p.low.shape[0] for p in list(pred.values()) + list(act.values())}
    if len(lengths) != 1:
        raise TraceAlignmentError(f"traces have mixed interval counts {sorted(lengths)}")
    if not lengths.pop():
        raise TraceAlignmentError("traces are empty")
    return pred, act


def simulate(
    predicted: Sequence[PairLoads],
    actual: Sequence[PairLoads],
    params: PowerParams = PowerParams(),
    baseline: SimReport | None = None,
    name: str = "run",
) -> SimReport:
    """Decide on-off from predictions, score power/loss on actuals.

    With a ``baseline`` report, per-pair and total savings are the
    baseline's power minus this run's, interval-averaged; a run scored
    against itself reports exactly 0.
    """
    pred, act = _check_alignment(predicted, actual)
    base_power = {}
    if baseline is not None:
        base_power = {p.pair_key: p.power_w for p in baseline.pairs}
        if base_power.keys() != pred.keys():
            raise TraceAlignmentError("baseline run covers different pairs")

    results = []
    for key in sorted(pred):
        p, a = pred[key], act[key]
        off = onoff_decide(p.low, p.high, params)
        watts = power(a.low, a.high, off, params)
        if baseline is not None and base_power[key].shape != watts.shape:
            raise TraceAlignmentError(f"baseline pair {key} has a different interval count")
        result = PairResult(
            pair_key=key,
            off=off,
            power_w=watts,
            loss_raw=throughput_loss(a.low, a.high, off, params),
            offered_raw=_combined(a.low, a.high, params),
        )
        if baseline is not None:
            result.savings_w = float((base_power[key] - watts).mean())
        results.append(result)

    report = SimReport(
        name=name,
        params=params,
        pairs=results,
        intervals=results[0].power_w.shape[0],
        baseline_name=baseline.name if baseline is not None else None,
    )
    report.total_savings_w = float(sum(r.savings_w for r in results))
    if baseline is not None:
        report.savings_sum_w = float(
            sum((base_power[r.pair_key] - r.power_w).sum() for r in results)
        )
    return report


def format_report(report: SimReport) -> str:
    """Fixed-width text table: one row per pair, then totals."""
    lines = [
        f"energy simulation: {report.name}"
        + (f" (savings vs {report.baseline_name})" if report.baseline_name else ""),
        f"{report.intervals} intervals x {len(report.pairs)} pairs; "
        "savings are watts summed over pairs, averaged over intervals",
        f"{'pair':>10} {'off%':>7} {'power W':>10} {'savings W':>10} {'loss %':>8}",
    ]
    for r in report.pairs:
        lines.append(
            f"{r.pair_key:>10} {100 * r.off_fraction:>7.1f} {r.mean_power_w:>10.1f} "
            f"{r.savings_w:>10.2f} {r.loss_pct:>8.3f}"
        )
    lines.append(
        f"{'TOTAL':>10} {100 * report.off_fraction:>7.1f} {report.mean_power_w:>10.1f} "
        f"{report.total_savings_w:>10.2f} {report.avg_throughput_loss_pct:>8.3f}"
    )
    return "\n".join(lines)


def report_records(report: SimReport, include_traces: bool = True) -> dict:
    """JSON-ready view of a report for the service layer and stored results."""
    pairs = []
    for r in report.pairs:
        row: dict = {
            "pair": r.pair_key,
            "off_fraction": r.off_fraction,
            "mean_power_w": r.mean_power_w,
            "savings_w": r.savings_w,
            "loss_pct": r.loss_pct,
        }
        if include_traces:
            row["off"] = [int(v) for v in r.off]
            row["power_w"] = [round(float(v), 3) for v in r.power_w]
            row["loss_raw"] = [round(float(v), 3) for v in r.loss_raw]
        pairs.append(row)
    return {
        "name": report.name,
        "baseline": report.baseline_name,
        "intervals": report.intervals,
        "total_savings_w": report.total_savings_w,
        "savings_sum_w": report.savings_sum_w,
        "avg_throughput_loss_pct": report.avg_throughput_loss_pct,
        "mean_power_w": report.mean_power_w,
        "off_fraction": report.off_fraction,
        "per_pair": pairs,
    }
