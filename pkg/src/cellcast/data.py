"""CDR-style traffic ingestion, load normalization, windowing, and synthetic traffic.

Raw grid records arrive as (cell_id, timestamp_ms, activity) rows on a
10-minute grid.  Each cell becomes a gap-filled :class:`LoadSeries`, is
normalized to percent-of-capacity units via a per-cell percentile
calibration, and is then windowed into :class:`PredictionSample`
instances (history window + trailing stats + time-of-day).  A seeded
sinusoidal generator stands in for the real dataset at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STEP_MS = 600_000  # 10-minute bins
BINS_PER_DAY = 144
CLIP_MAX_PCT = 120.0
SYNTH_START_MS = 1_383_264_000_000  # aligned to the 10-minute grid


class ParseError(ValueError):
    """A CDR line that cannot be parsed; the message names the line number."""


class EmptySeriesError(ValueError):
    """No records for the requested cell."""


class DegenerateCellError(ValueError):
    """Calibration percentile is zero; the cell carries no usable signal."""


class PairingError(ValueError):
    """Cell list cannot be split into co-located pairs."""


@dataclass(frozen=True)
class CellRecord:
    """One aligned observation: activity for a cell in a 10-minute bin."""

    cell_id: int
    timestamp_ms: int
    activity: float


@dataclass
class LoadSeries:
    """Equally spaced per-cell load values on the 10-minute grid."""

    cell_id: int
    start_ms: int
    values: np.ndarray
    step_s: int = 600

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.values) < 1:
            raise ValueError("values must be a non-empty 1-d array")
        if self.start_ms % STEP_MS != 0:
            raise ValueError("start_ms must sit on the 10-minute grid")
        if self.step_s * 1000 != STEP_MS:
            raise ValueError("step is fixed at 600 s")

    def __len__(self) -> int:
        return len(self.values)

    def timestamp_of(self, index: int) -> int:
        return self.start_ms + index * STEP_MS

    def index_of(self, timestamp_ms: int) -> int:
        offset = timestamp_ms - self.start_ms
        if offset % STEP_MS != 0:
            raise ValueError("timestamp is off the 10-minute grid")
        return offset // STEP_MS

    def tod_bucket(self, index: int) -> int:
        """Bin-of-day in [0, 143] for the value at ``index``."""
        return (self.start_ms // STEP_MS + index) % BINS_PER_DAY


@dataclass(frozen=True)
class CellPair:
    """Co-located pair: low-frequency cell stays on, high-frequency may sleep."""

    low_cell: int
    high_cell: int
    e: float = 1.0

    def __post_init__(self) -> None:
        if self.low_cell == self.high_cell:
            raise ValueError("a pair needs two distinct cells")
        if not self.e > 0:
            raise ValueError("spectral efficiency ratio e must be > 0")


@dataclass(frozen=True)
class PredictionSample:
    """One forecasting instance: h-value history plus trailing stats and context."""

    cell_id: int
    history: tuple[float, ...]
    mean: float
    deviation: float
    tod_bucket: int
    target: float
    target_ms: int

    def __post_init__(self) -> None:
        if self.deviation < 0:
            raise ValueError("deviation must be >= 0")
        if not 0 <= self.tod_bucket < BINS_PER_DAY:
            raise ValueError("tod_bucket out of range")


@dataclass(frozen=True)
class SynthConfig:
    """Seeded sinusoidal traffic generator settings (percent units)."""

    num_cells: int
    days: int
    base_load: float = 50.0
    diurnal_amplitude: float = 20.0
    weekly_modulation: float = 0.1
    noise_std: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_cells < 1 or self.days < 1:
            raise ValueError("need at least one cell and one day")
        if min(self.diurnal_amplitude, self.noise_std) < 0 or not 0 <= self.weekly_modulation <= 1:
            raise ValueError("amplitudes must be >= 0 and weekly_modulation in [0, 1]")
        if self.base_load < 0:
            raise ValueError("base_load must be >= 0")


def _split_line(line: str) -> list[str]:
    sep = "\t" if "\t" in line else ","
    return [f.strip() for f in line.split(sep)]


def parse_cdr(lines: Iterable[str]) -> list[CellRecord]:
    """Parse delimited (cell_id, timestamp_ms, activity) rows.

    Timestamps are floored to the 10-minute grid and same-bin activities for
    a cell are summed.  An optional header (non-numeric first field on the
    first line) is skipped.  Output is sorted by (cell, timestamp).
    """
    totals: dict[tuple[int, int], float] = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        fields = _split_line(line)
        if lineno == 1 and fields and not _is_number(fields[0]):
            continue  # header row
        if len(fields) != 3:
            raise ParseError(f"line {lineno}: expected 3 fields, got {len(fields)}")
        try:
            cell = int(fields[0])
            ts = int(fields[1])
            activity = float(fields[2])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if not math.isfinite(activity) or activity < 0:
            raise ParseError(f"line {lineno}: activity must be finite and >= 0")
        key = (cell, ts - ts % STEP_MS)
        totals[key] = totals.get(key, 0.0) + activity
    return [CellRecord(c, t, a) for (c, t), a in sorted(totals.items())]


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def build_series(records: Sequence[CellRecord], cell: int) -> LoadSeries:
    """Contiguous raw-unit series for one cell; interior gaps linearly interpolated."""
    bins: dict[int, float] = {}
    for r in records:
        if r.cell_id == cell:
            bins[r.timestamp_ms] = bins.get(r.timestamp_ms, 0.0) + r.activity
    if not bins:
        raise EmptySeriesError(f"no records for cell {cell}")
    times = np.array(sorted(bins), dtype=np.int64)
    observed = np.array([bins[t] for t in times], dtype=np.float64)
    grid = np.arange(times[0], times[-1] + STEP_MS, STEP_MS, dtype=np.int64)
    values = np.interp(grid, times, observed)
    return LoadSeries(cell_id=cell, start_ms=int(times[0]), values=values)


def missing_fraction(records: Sequence[CellRecord], cell: int) -> float:
    """Fraction of grid bins between first and last observation with no record."""
    times = sorted({r.timestamp_ms for r in records if r.cell_id == cell})
    if not times:
        return 1.0
    span = (times[-1] - times[0]) // STEP_MS + 1
    return 1.0 - len(times) / span


def normalize_load(
    series: LoadSeries, percentile: float = 99.5, train_len: int | None = None
) -> LoadSeries:
    """Map raw units to percent via the training-period percentile.

    ``train_len`` restricts calibration to the leading bins (the training
    period); values become 100 * raw / P_cal, clipped to [0, 120].
    """
    cal = series.values if train_len is None else series.values[:train_len]
    if len(cal) == 0:
        raise DegenerateCellError(f"cell {series.cell_id}: empty calibration window")
    p_cal = float(np.percentile(cal, percentile))
    if p_cal == 0:
        raise DegenerateCellError(f"cell {series.cell_id}: calibration percentile is zero")
    pct = np.clip(100.0 * series.values / p_cal, 0.0, CLIP_MAX_PCT)
    return LoadSeries(cell_id=series.cell_id, start_ms=series.start_ms, values=pct)


def make_samples(
    series: LoadSeries, h: int = 5, stats_window: int = BINS_PER_DAY
) -> list[PredictionSample]:
    """One sample per target index t >= max(h, stats_window).

    History is values[t-h:t]; mean/deviation cover the trailing
    ``stats_window`` bins ending at t-1, never touching the target.
    """
    if h < 1 or stats_window < 1:
        raise ValueError("h and stats_window must be >= 1")
    values = series.values
    samples: list[PredictionSample] = []
    for t in range(max(h, stats_window), len(values)):
        window = values[t - stats_window : t]
        samples.append(
            PredictionSample(
                cell_id=series.cell_id,
                history=tuple(values[t - h : t]),
                mean=float(window.mean()),
                deviation=float(window.std()),
                tod_bucket=series.tod_bucket(t),
                target=float(values[t]),
                target_ms=series.timestamp_of(t),
            )
        )
    return samples


def pair_cells(cells: Sequence[int], e: float = 1.0) -> list[CellPair]:
    """Pair cells by adjacent index: (c0, c1), (c2, c3), ..."""
    if len(cells) % 2 != 0:
        raise PairingError(f"need an even number of cells, got {len(cells)}")
    return [CellPair(cells[i], cells[i + 1], e) for i in range(0, len(cells), 2)]


def synth_traffic(cfg: SynthConfig, start_ms: int = SYNTH_START_MS) -> list[LoadSeries]:
    """Deterministic sinusoidal traffic in percent units.

    value(t) = clip(base + A*sin(2*pi*t/144 + phase_cell)*weekly(t) + noise),
    with weekly(t) damping weekend days by ``weekly_modulation`` and the
    per-cell phase and noise drawn from default_rng([seed, cell]).  Fixed
    seeds reproduce bit-identically; noise draws are consumed even when
    noise_std == 0 so the noiseless path shares the rng stream.
    """
    n = cfg.days * BINS_PER_DAY
    t = np.arange(n)
    day = t // BINS_PER_DAY
    weekly = 1.0 - cfg.weekly_modulation * ((day % 7) >= 5)
    out = []
    for cell in range(cfg.num_cells):
        rng = np.random.default_rng([cfg.seed, cell])
        phase = rng.uniform(0.0, 2.0 * np.pi)
        noise = rng.standard_normal(n) * cfg.noise_std
        diurnal = cfg.diurnal_amplitude * np.sin(2.0 * np.pi * t / BINS_PER_DAY + phase)
        values = np.clip(cfg.base_load + diurnal * weekly + noise, 0.0, CLIP_MAX_PCT)
        out.append(LoadSeries(cell_id=cell, start_ms=start_ms, values=values))
    return out


def split_samples(
    samples: Sequence[PredictionSample], start_ms: int, train_days: int = 11, test_days: int = 3
) -> tuple[list[PredictionSample], list[PredictionSample]]:
    """Time split by target bin: first ``train_days`` train, next ``test_days`` test."""
    boundary = start_ms + train_days * BINS_PER_DAY * STEP_MS
    end = boundary + test_days * BINS_PER_DAY * STEP_MS
    train = [s for s in samples if s.target_ms < boundary]
    test = [s for s in samples if boundary <= s.target_ms < end]
    return train, test


def save_series(path: str | Path, series_list: Sequence[LoadSeries]) -> None:
    """Line-delimited store: ``cell_id,start_ms,step_s,v0,v1,...`` per series."""
    with open(path, "w", encoding="utf-8") as f:
        for s in series_list:
            values = ",".join(repr(float(v)) for v in s.values)
            f.write(f"{s.cell_id},{s.start_ms},{s.step_s},{values}\n")


def load_series(path: str | Path) -> list[LoadSeries]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            out.append(
                LoadSeries(
                    cell_id=int(fields[0]),
                    start_ms=int(fields[1]),
                    step_s=int(fields[2]),
                    values=np.array([float(v) for v in fields[3:]]),
                )
            )
    return out
