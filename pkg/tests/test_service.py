"""JSON service endpoints: contracts, determinism, and error responses."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from cellcast.config import with_updates
from cellcast.data import STEP_MS, load_series
from cellcast.energysim import report_records
from cellcast.pipeline import (
    baseline_run,
    benchmark_vocabulary,
    build_dataset,
    load_forecaster,
    predict_samples,
    sample_at,
    simulate_preference,
)
from cellcast.prompting import PREFERENCE_ORDER, OperatorPreference
from cellcast.service import ServiceBundle, create_app

PHRASES = [p.phrase for p in PREFERENCE_ORDER]


def make_bundle(tiny_run, **cfg_updates) -> ServiceBundle:
    cfg = tiny_run.cfg if not cfg_updates else with_updates(tiny_run.cfg, **cfg_updates)
    vocab = benchmark_vocabulary()
    base, _ = load_forecaster(tiny_run.cfg.out_path("forecaster_mse.ckpt"), vocab)
    tuned, _ = load_forecaster(tiny_run.cfg.out_path("forecaster_tuned.ckpt"), vocab)
    ds = build_dataset(cfg, load_series(tiny_run.cfg.out_path("series.csv")))
    return ServiceBundle(cfg=cfg, dataset=ds, vocab=vocab, tuned=tuned, baseline_model=base)


@pytest.fixture(scope="module")
def bundle(tiny_run):
    return make_bundle(tiny_run)


@pytest.fixture(scope="module")
def client(bundle):
    return TestClient(create_app(bundle))


class TestHealthAndPreferences:
    def test_health(self, client, bundle):
        r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert body["cells"] == [0, 1, 2, 3]
        assert body["pairs"] == 2
        assert body["test_window"]["start_ms"] == bundle.dataset.test_start_ms
        assert body["step_ms"] == STEP_MS

    def test_preferences_exact_phrases_and_q(self, client):
        r = client.get("/preferences")
        assert r.status_code == 200
        body = r.json()
        assert body["orientation"] == "table_consistent"
        assert [p["phrase"] for p in body["preferences"]] == PHRASES
        assert [p["q"] for p in body["preferences"]] == [10.0, 2.0, 1.0, 0.2, 0.1]

    def test_preferences_under_eq4_orientation(self, tiny_run):
        client = TestClient(create_app(make_bundle(tiny_run, orientation="eq4")))
        r = client.get("/preferences")
        assert [p["q"] for p in r.json()["preferences"]] == [0.1, 0.5, 1.0, 5.0, 10.0]

    def test_cors_headers_for_console(self, client):
        r = client.get("/preferences", headers={"Origin": "http://localhost:5173"})
        assert r.headers.get("access-control-allow-origin") == "*"


class TestPredict:
    def test_matches_pipeline_prediction(self, client, bundle):
        ds = bundle.dataset
        t = ds.series[2].index_of(ds.test_start_ms) + 3
        body = {
            "cell_id": 2,
            "window_end_time": ds.series[2].timestamp_of(t - 1),
            "preference": "Focus on power savings",
        }
        r = client.post("/predict", json=body)
        assert r.status_code == 200
        got = r.json()
        sample = sample_at(ds.series[2], t)
        expected = predict_samples(
            bundle.tuned, [sample], bundle.vocab, OperatorPreference.POWER_SAVINGS
        )[0]
        assert got["prediction"] == pytest.approx(float(expected), rel=1e-15)
        assert got["q"] == 0.2
        assert got["preference"] == "Focus on power savings"
        assert got["target_time"] == sample.target_ms
        assert got["actual"] == pytest.approx(sample.target, rel=1e-15)

    def test_neutral_reports_q_one_either_orientation(self, tiny_run, client, bundle):
        body = {
            "cell_id": 0,
            "window_end_time": bundle.dataset.test_start_ms,
            "preference": "No specific focus",
        }
        assert client.post("/predict", json=body).json()["q"] == 1.0
        eq4_client = TestClient(create_app(make_bundle(tiny_run, orientation="eq4")))
        assert eq4_client.post("/predict", json=body).json()["q"] == 1.0

    def test_identical_requests_identical_responses(self, client, bundle):
        body = {
            "cell_id": 1,
            "window_end_time": bundle.dataset.test_start_ms,
            "preference": "Focus highly on service quality",
        }
        assert client.post("/predict", json=body).json() == client.post(
            "/predict", json=body
        ).json()

    def test_unknown_cell(self, client, bundle):
        r = client.post(
            "/predict",
            json={
                "cell_id": 42,
                "window_end_time": bundle.dataset.test_start_ms,
                "preference": PHRASES[0],
            },
        )
        assert r.status_code == 400
        assert r.json()["detail"]["cells"] == [0, 1, 2, 3]

    def test_time_off_grid_or_out_of_range(self, client, bundle):
        base = {"cell_id": 0, "preference": PHRASES[0]}
        r = client.post(
            "/predict", json={**base, "window_end_time": bundle.dataset.test_start_ms + 1}
        )
        assert r.status_code == 400
        r = client.post("/predict", json={**base, "window_end_time": 0})
        assert r.status_code == 400

    def test_unknown_preference_lists_valid(self, client, bundle):
        r = client.post(
            "/predict",
            json={
                "cell_id": 0,
                "window_end_time": bundle.dataset.test_start_ms,
                "preference": "whatever",
            },
        )
        assert r.status_code == 400
        assert r.json()["detail"]["valid_phrases"] == PHRASES

    def test_malformed_body(self, client):
        r = client.post("/predict", json={"cell_id": "zero"})
        assert r.status_code == 400
        assert "malformed" in r.json()["detail"]["error"]


class TestSimulate:
    def test_defaults_to_test_window_and_matches_pipeline(self, client, bundle):
        r = client.post("/simulate", json={"preference": "Focus highly on power savings"})
        assert r.status_code == 200
        got = r.json()
        ds, cfg, vocab = bundle.dataset, bundle.cfg, bundle.vocab
        baseline = baseline_run(bundle.baseline_model, ds, vocab, cfg)
        report = simulate_preference(
            bundle.tuned, ds, vocab, cfg, OperatorPreference.HIGH_POWER_SAVINGS, baseline
        )
        expected = report_records(report)
        for key in ("total_savings_w", "avg_throughput_loss_pct", "per_pair", "intervals"):
            assert got[key] == expected[key]
        assert got["preference"] == "Focus highly on power savings"
        assert got["q"] == 0.1
        assert got["orientation"] == "table_consistent"
        assert got["time_range"] == {"start_ms": ds.test_start_ms, "end_ms": ds.test_end_ms}
        assert len(got["per_pair"][0]["off"]) == got["intervals"]

    def test_identical_requests_identical_reports(self, client):
        body = {"preference": "Focus on service quality"}
        assert client.post("/simulate", json=body).json() == client.post(
            "/simulate", json=body
        ).json()

    def test_sub_window(self, client, bundle):
        ds = bundle.dataset
        tr = {"start_ms": ds.test_start_ms, "end_ms": ds.test_start_ms + 6 * STEP_MS}
        r = client.post("/simulate", json={"preference": PHRASES[2], "time_range": tr})
        assert r.status_code == 200
        assert r.json()["intervals"] == 6

    def test_range_outside_test_window(self, client, bundle):
        ds = bundle.dataset
        for tr in (
            {"start_ms": 0, "end_ms": ds.test_end_ms},
            {"start_ms": ds.test_start_ms, "end_ms": ds.test_end_ms + STEP_MS},
            {"start_ms": ds.test_end_ms, "end_ms": ds.test_start_ms},
        ):
            r = client.post("/simulate", json={"preference": PHRASES[0], "time_range": tr})
            assert r.status_code == 400, tr

    def test_misaligned_range(self, client, bundle):
        ds = bundle.dataset
        tr = {"start_ms": ds.test_start_ms + 1, "end_ms": ds.test_start_ms + STEP_MS}
        r = client.post("/simulate", json={"preference": PHRASES[0], "time_range": tr})
        assert r.status_code == 400
        assert "grid" in r.json()["detail"]["error"]

    def test_unknown_preference(self, client):
        r = client.post("/simulate", json={"preference": "maximum chaos"})
        assert r.status_code == 400
        assert r.json()["detail"]["valid_phrases"] == PHRASES

    def test_numbers_are_finite(self, client):
        got = client.post("/simulate", json={"preference": PHRASES[4]}).json()
        assert np.isfinite(got["total_savings_w"])
        assert np.isfinite(got["avg_throughput_loss_pct"])
        for pair in got["per_pair"]:
            assert np.isfinite(pair["savings_w"])
            assert all(np.isfinite(v) for v in pair["power_w"])
