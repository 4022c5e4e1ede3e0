"""End-to-end orchestration shared by the CLI, the JSON service, and the
benchmark suite: data preparation, model training phases, typed
checkpoint save/load, and assembling per-pair load traces for the energy
simulator."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from cellcast import checkpoint as ckpt
from cellcast.baselines import Fnn
from cellcast.config import RunConfig
from cellcast.data import (
    BINS_PER_DAY,
    CellPair,
    LoadSeries,
    PredictionSample,
    build_series,
    make_samples,
    normalize_load,
    pair_cells,
    parse_cdr,
    split_samples,
    synth_traffic,
)
from cellcast.energysim import PairLoads, SimReport, simulate
from cellcast.model import LoadForecaster, ModelConfig, init_model, predict
from cellcast.prompting import (
    OperatorPreference,
    Vocabulary,
    build_vocabulary,
    render_prompt,
    tokenize,
)
from cellcast.training import TrainResult, finetune, train

PREDICT_BATCH = 256
HISTORY = 5
STATS_WINDOW = BINS_PER_DAY


@dataclass
class Dataset:
    """Normalized per-cell series plus the chronological sample split."""

    series: dict[int, LoadSeries]
    train: list[PredictionSample]
    test: list[PredictionSample]
    pairs: list[CellPair]
    start_ms: int
    test_start_ms: int
    test_end_ms: int


def load_input_series(cfg: RunConfig) -> list[LoadSeries]:
    """Raw per-cell series from the configured source (CDR file or generator)."""
    if cfg.cdr_path is not None:
        with open(cfg.cdr_path, "r", encoding="utf-8") as f:
            records = parse_cdr(f)
        return build_series(records)
    return synth_traffic(cfg.synth)


def build_dataset(cfg: RunConfig, series_list: Sequence[LoadSeries] | None = None) -> Dataset:
    """Normalize each cell on its training period and split samples in time."""
    if series_list is None:
        series_list = load_input_series(cfg)
    if not series_list:
        raise ValueError("no input series")
    train_len = cfg.train_days * BINS_PER_DAY
    start_ms = min(s.start_ms for s in series_list)
    normalized = {}
    train_samples: list[PredictionSample] = []
    test_samples: list[PredictionSample] = []
    for series in series_list:
        norm = normalize_load(series, cfg.normalize_percentile, train_len=train_len)
        normalized[norm.cell_id] = norm
        tr, te = split_samples(
            make_samples(norm, h=HISTORY, stats_window=STATS_WINDOW),
            start_ms,
            cfg.train_days,
            cfg.test_days,
        )
        train_samples.extend(tr)
        test_samples.extend(te)
    pairs = pair_cells(sorted(normalized), e=cfg.pair_efficiency)
    boundary = start_ms + train_len * 600_000
    return Dataset(
        series=normalized,
        train=train_samples,
        test=test_samples,
        pairs=pairs,
        start_ms=start_ms,
        test_start_ms=boundary,
        test_end_ms=boundary + cfg.test_days * BINS_PER_DAY * 600_000,
    )


def eval_subset(
    samples: Sequence[PredictionSample], limit: int, seed: int = 0
) -> list[PredictionSample]:
    """Deterministic subsample used for per-epoch early-stopping checks."""
    if len(samples) <= limit:
        return list(samples)
    idx = np.sort(np.random.default_rng(seed).choice(len(samples), size=limit, replace=False))
    return [samples[i] for i in idx]


def train_base(
    cfg: RunConfig, dataset: Dataset, vocab: Vocabulary, eval_limit: int = 1000
) -> tuple[LoadForecaster, TrainResult]:
    """Phase 1: fit the squared-error forecaster on goal-free prompts."""
    model = init_model(cfg.model_config(len(vocab)), seed=cfg.model_seed)
    held = eval_subset(dataset.test, eval_limit)
    result = train(model, dataset.train, held, vocab, cfg.train)
    return model, result


def finetune_base(
    cfg: RunConfig,
    dataset: Dataset,
    vocab: Vocabulary,
    base: LoadForecaster,
    eval_limit: int = 1000,
) -> tuple[LoadForecaster, TrainResult]:
    """Phase 2: preference-tune a copy of the base model with the balancing loss."""
    model = copy.deepcopy(base)
    held = eval_subset(dataset.test, eval_limit)
    result = finetune(
        model,
        dataset.train,
        held,
        vocab,
        cfg.finetune,
        prefs=list(OperatorPreference),
        orientation=cfg.orientation,
    )
    return model, result


def save_forecaster(
    path: str | Path,
    model: LoadForecaster,
    vocab: Vocabulary,
    meta: Mapping | None = None,
) -> None:
    cfg = model.cfg
    ckpt.save_checkpoint(
        path,
        model.state_dict(),
        kind="forecaster",
        config={
            "vocab_size": cfg.vocab_size,
            "layers": cfg.layers,
            "hidden": cfg.hidden,
            "heads": cfg.heads,
            "ffn_dim": cfg.ffn_dim,
            "max_len": cfg.max_len,
            "pool_kernel": cfg.pool_kernel,
            "pool_stride": cfg.pool_stride,
            "head_dims": list(cfg.head_dims),
        },
        vocab_sha256=vocab.content_hash(),
        meta=dict(meta or {}),
    )


def load_forecaster(path: str | Path, vocab: Vocabulary) -> tuple[LoadForecaster, dict]:
    tensors, header = ckpt.load_checkpoint(path)
    if header.get("kind") != "forecaster":
        raise ckpt.CheckpointError(f"{path}: expected a forecaster checkpoint")
    ckpt.require_vocab(header, vocab.content_hash())
    raw = dict(header["config"])
    raw["head_dims"] = tuple(raw["head_dims"])
    model = LoadForecaster(ModelConfig(**raw))
    model.load_state_dict(tensors)
    return model, header


def save_fnn(path: str | Path, model: Fnn, meta: Mapping | None = None) -> None:
    ckpt.save_checkpoint(
        path,
        model.state_dict(),
        kind="fnn",
        config={"window": model.window, "hidden": model.hidden_layer.out_features},
        meta=dict(meta or {}),
    )


def load_fnn(path: str | Path) -> tuple[Fnn, dict]:
    tensors, header = ckpt.load_checkpoint(path)
    if header.get("kind") != "fnn":
        raise ckpt.CheckpointError(f"{path}: expected an fnn checkpoint")
    model = Fnn(header["config"]["window"], header["config"]["hidden"])
    model.load_state_dict(tensors)
    return model, header


def sample_at(series: LoadSeries, target_index: int) -> PredictionSample:
    """The forecasting instance whose target is ``series`` at ``target_index``."""
    if target_index < max(HISTORY, STATS_WINDOW) or target_index >= len(series.values):
        raise ValueError(
            f"cell {series.cell_id}: target index {target_index} outside the usable range"
        )
    window = series.values[target_index - STATS_WINDOW : target_index]
    return PredictionSample(
        cell_id=series.cell_id,
        history=tuple(series.values[target_index - HISTORY : target_index]),
        mean=float(window.mean()),
        deviation=float(window.std()),
        tod_bucket=series.tod_bucket(target_index),
        target=float(series.values[target_index]),
        target_ms=series.timestamp_of(target_index),
    )


def predict_samples(
    model: LoadForecaster,
    samples: Sequence[PredictionSample],
    vocab: Vocabulary,
    pref: OperatorPreference | None,
) -> np.ndarray:
    """Batched one-step predictions, clipped to valid (non-negative) loads."""
    out = np.empty(len(samples), dtype=np.float64)
    for lo in range(0, len(samples), PREDICT_BATCH):
        chunk = samples[lo : lo + PREDICT_BATCH]
        seqs = [tokenize(render_prompt(s, pref), vocab, model.cfg.max_len) for s in chunk]
        out[lo : lo + len(chunk)] = predict(model, seqs)
    return np.maximum(out, 0.0)


def predicted_trace(
    model: LoadForecaster,
    series: LoadSeries,
    vocab: Vocabulary,
    start_ms: int,
    end_ms: int,
    pref: OperatorPreference | None,
) -> np.ndarray:
    """Predicted load for every interval of [start_ms, end_ms), observed history."""
    t0, t1 = series.index_of(start_ms), series.index_of(end_ms)
    samples = [sample_at(series, t) for t in range(t0, t1)]
    return predict_samples(model, samples, vocab, pref)


def actual_pair_traces(
    dataset: Dataset, start_ms: int, end_ms: int
) -> list[PairLoads]:
    out = []
    for pair in dataset.pairs:
        low = dataset.series[pair.low_cell]
        high = dataset.series[pair.high_cell]
        out.append(
            PairLoads(
                pair_key=f"{pair.low_cell}-{pair.high_cell}",
                low=low.values[low.index_of(start_ms) : low.index_of(end_ms)],
                high=high.values[high.index_of(start_ms) : high.index_of(end_ms)],
            )
        )
    return out


def predicted_pair_traces(
    model: LoadForecaster,
    dataset: Dataset,
    vocab: Vocabulary,
    start_ms: int,
    end_ms: int,
    pref: OperatorPreference | None,
) -> list[PairLoads]:
    cache: dict[int, np.ndarray] = {}

    def trace(cell: int) -> np.ndarray:
        if cell not in cache:
            cache[cell] = predicted_trace(
                model, dataset.series[cell], vocab, start_ms, end_ms, pref
            )
        return cache[cell]

    return [
        PairLoads(
            pair_key=f"{p.low_cell}-{p.high_cell}",
            low=trace(p.low_cell),
            high=trace(p.high_cell),
        )
        for p in dataset.pairs
    ]


def baseline_run(
    baseline_model: LoadForecaster,
    dataset: Dataset,
    vocab: Vocabulary,
    cfg: RunConfig,
    start_ms: int | None = None,
    end_ms: int | None = None,
) -> SimReport:
    """The squared-error model's own on-off run (goal-free prompts)."""
    start_ms = dataset.test_start_ms if start_ms is None else start_ms
    end_ms = dataset.test_end_ms if end_ms is None else end_ms
    actual = actual_pair_traces(dataset, start_ms, end_ms)
    base_pred = predicted_pair_traces(baseline_model, dataset, vocab, start_ms, end_ms, None)
    return simulate(base_pred, actual, cfg.power, name="bert_mse")


def simulate_preference(
    tuned: LoadForecaster,
    dataset: Dataset,
    vocab: Vocabulary,
    cfg: RunConfig,
    pref: OperatorPreference,
    baseline: SimReport,
    start_ms: int | None = None,
    end_ms: int | None = None,
) -> SimReport:
    """Simulate one preference phrase against a precomputed baseline run."""
    start_ms = dataset.test_start_ms if start_ms is None else start_ms
    end_ms = dataset.test_end_ms if end_ms is None else end_ms
    actual = actual_pair_traces(dataset, start_ms, end_ms)
    run_pred = predicted_pair_traces(tuned, dataset, vocab, start_ms, end_ms, pref)
    return simulate(run_pred, actual, cfg.power, baseline=baseline, name=pref.phrase)


def benchmark_vocabulary() -> Vocabulary:
    return build_vocabulary()
