"""JSON service exposing prediction and what-if simulation.

A thin adapter over the pipeline: one immutable bundle (config, data,
vocabulary, tuned model, squared-error baseline model) is loaded at
startup and every endpoint is a pure function of it, so identical
requests always produce identical responses.  Simulation results are
memoized per (preference, time range).

Endpoints:
    POST /predict      {cell_id, window_end_time, preference} -> {prediction, q, preference}
    POST /simulate     {preference, time_range?} -> report summary with per-pair rows
    GET  /preferences  the five canonical phrases and their q values
    GET  /health       build/version info

Unknown preference phrases and malformed bodies return 400 with the list
of valid phrases where relevant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from cellcast import __version__
from cellcast.config import RunConfig
from cellcast.data import STEP_MS
from cellcast.energysim import report_records
from cellcast.model import LoadForecaster
from cellcast.pipeline import (
    Dataset,
    baseline_run,
    predict_samples,
    sample_at,
    simulate_preference,
)
from cellcast.prompting import (
    PREFERENCE_ORDER,
    OperatorPreference,
    UnknownPreferenceError,
    Vocabulary,
    q_for_preference,
)

VALID_PHRASES = [p.phrase for p in PREFERENCE_ORDER]


@dataclass
class ServiceBundle:
    """Everything the endpoints read; immutable after startup."""

    cfg: RunConfig
    dataset: Dataset
    vocab: Vocabulary
    tuned: LoadForecaster
    baseline_model: LoadForecaster
    sim_cache: dict[tuple, dict] = field(default_factory=dict)
    baseline_cache: dict[tuple, Any] = field(default_factory=dict)


class PredictBody(BaseModel):
    cell_id: int
    window_end_time: int
    preference: str


class TimeRange(BaseModel):
    start_ms: int
    end_ms: int


class SimulateBody(BaseModel):
    preference: str
    time_range: TimeRange | None = None


def _bad_request(detail) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": detail})


def _parse_preference(phrase: str) -> OperatorPreference:
    return OperatorPreference.from_phrase(phrase)


def create_app(bundle: ServiceBundle) -> FastAPI:
    app = FastAPI(title="cellcast", version=__version__)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return _bad_request({"error": "malformed request body", "errors": exc.errors()})

    @app.exception_handler(UnknownPreferenceError)
    async def unknown_preference(request: Request, exc: UnknownPreferenceError):
        return _bad_request({"error": str(exc), "valid_phrases": VALID_PHRASES})

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "version": __version__,
            "orientation": bundle.cfg.orientation.value,
            "cells": sorted(bundle.dataset.series),
            "pairs": len(bundle.dataset.pairs),
            "test_window": {
                "start_ms": bundle.dataset.test_start_ms,
                "end_ms": bundle.dataset.test_end_ms,
            },
            "step_ms": STEP_MS,
        }

    @app.get("/preferences")
    def preferences():
        return {
            "orientation": bundle.cfg.orientation.value,
            "preferences": [
                {"phrase": p.phrase, "q": q_for_preference(p, bundle.cfg.orientation)}
                for p in PREFERENCE_ORDER
            ],
        }

    @app.post("/predict")
    def predict_endpoint(body: PredictBody):
        pref = _parse_preference(body.preference)
        series = bundle.dataset.series.get(body.cell_id)
        if series is None:
            return _bad_request(
                {"error": f"unknown cell {body.cell_id}", "cells": sorted(bundle.dataset.series)}
            )
        try:
            target_index = series.index_of(body.window_end_time) + 1
            sample = sample_at(series, target_index)
        except ValueError as err:
            return _bad_request({"error": str(err)})
        value = float(predict_samples(bundle.tuned, [sample], bundle.vocab, pref)[0])
        return {
            "prediction": value,
            "q": q_for_preference(pref, bundle.cfg.orientation),
            "preference": pref.phrase,
            "cell_id": body.cell_id,
            "target_time": sample.target_ms,
            "actual": sample.target,
        }

    @app.post("/simulate")
    def simulate_endpoint(body: SimulateBody):
        pref = _parse_preference(body.preference)
        ds = bundle.dataset
        if body.time_range is None:
            start_ms, end_ms = ds.test_start_ms, ds.test_end_ms
        else:
            start_ms, end_ms = body.time_range.start_ms, body.time_range.end_ms
        if not ds.test_start_ms <= start_ms < end_ms <= ds.test_end_ms:
            return _bad_request(
                {
                    "error": "time_range must lie inside the test window",
                    "test_window": {"start_ms": ds.test_start_ms, "end_ms": ds.test_end_ms},
                }
            )
        if (start_ms - ds.test_start_ms) % STEP_MS or (end_ms - ds.test_start_ms) % STEP_MS:
            return _bad_request({"error": "time_range must align to the 10-minute grid"})

        key = (pref.phrase, start_ms, end_ms)
        if key not in bundle.sim_cache:
            base_key = (start_ms, end_ms)
            if base_key not in bundle.baseline_cache:
                bundle.baseline_cache[base_key] = baseline_run(
                    bundle.baseline_model, ds, bundle.vocab, bundle.cfg, start_ms, end_ms
                )
            report = simulate_preference(
                bundle.tuned,
                ds,
                bundle.vocab,
                bundle.cfg,
                pref,
                bundle.baseline_cache[base_key],
                start_ms,
                end_ms,
            )
            payload = report_records(report)
            payload.update(
                {
                    "preference": pref.phrase,
                    "q": q_for_preference(pref, bundle.cfg.orientation),
                    "orientation": bundle.cfg.orientation.value,
                    "time_range": {"start_ms": start_ms, "end_ms": end_ms},
                }
            )
            bundle.sim_cache[key] = payload
        return bundle.sim_cache[key]

    return app
