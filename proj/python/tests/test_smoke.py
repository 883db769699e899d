import json
import math
import os
import pathlib

import numpy as np
import pytest

import flaute

ROOT = pathlib.Path(__file__).resolve().parents[2]
SCHEMA = ROOT / "schemas" / "report.schema.json"


def test_version_and_commands():
    assert flaute.__version__ == "0.1.0"
    assert flaute.command_names()[0] == "synth"
    assert flaute.default_config("detect")["threshold"] == pytest.approx(0.06)


def test_power_curve_and_pv():
    cf = flaute.wind_power_curve(np.array([2.0, 8.0, 13.0, 26.0]))
    np.testing.assert_allclose(cf, [0.0, 0.125, 1.0, 0.0])
    pv = flaute.pv_capacity_factor(np.array([0.0, 1000.0]), np.array([298.15, 298.15]))
    np.testing.assert_allclose(pv, [0.0, 0.825])
    assert flaute.log_law_factor(100.0, 0.1) == pytest.approx(1.5)


def test_shares():
    shares = flaute.technology_shares_2024()
    assert shares["solar_pv"] == pytest.approx((0.577, 99.3))
    assert sum(s for s, _ in shares.values()) == pytest.approx(1.0, abs=1e-3)


def test_detection_roundtrip():
    values = np.full(40, 0.5)
    values[10:20] = 0.01
    events = flaute.detect_events(values, 0, 21600)
    assert len(events) == 1
    smoothed = flaute.rolling_mean(values, 21600, 48)
    assert len(smoothed) == 33


def test_quantile_map_shift():
    rng = np.random.default_rng(3)
    model = rng.normal(5.0, 1.0, 10_000)
    obs = rng.normal(0.0, 1.0, 10_000)
    qm = flaute.fit_quantile_map(model, obs, 100)
    corrected = qm(model)
    assert abs(np.mean(corrected)) < 0.05
    assert np.all(np.diff(qm(np.sort(model))) >= 0)


def test_stats():
    mean, std = flaute.rolling_decadal(np.arange(1.0, 13.0))
    np.testing.assert_allclose(mean, [5.5, 6.5, 7.5])
    e = flaute.ensemble_stats(np.array([[2.0], [4.0]]))
    assert e["std"][0] == pytest.approx(math.sqrt(2.0))
    r = flaute.trend_test(2.0 * np.arange(10.0))
    assert r["significant"] and r["slope"] == pytest.approx(2.0)


def test_errors_carry_category():
    with pytest.raises(flaute.FlauteError) as info:
        flaute.ensemble_stats(np.array([[1.0]]))
    assert info.value.category == "TooFewMembers"
    assert info.value.code == 22


def test_gridpack_roundtrip(tmp_path):
    values = np.arange(16, dtype=np.float32).reshape(4, 2, 2) - 3.5
    values[0, 0, 0] = -0.0
    flaute.save_gridpack(tmp_path / "g", "tas", values, 0, 21600, np.array([50.0, 50.25]), np.array([9.0, 9.25]))
    back = flaute.load_gridpack(str(tmp_path / "g"))
    assert back["units"] == "K"
    assert back["values"].tobytes() == values.tobytes()
    assert flaute.coarsen(values, 2, 2).shape == (2, 1, 1)


def test_pipeline_report_validates(tmp_path):
    jsonschema = pytest.importorskip("jsonschema")
    w, cf, det, risk = (tmp_path / n for n in ("w", "cf", "det", "risk"))
    flaute.run("synth", out=w, years=2, seed=4)
    flaute.run("cf", input=w, out=cf)
    flaute.run("detect", input=cf, out=det)
    flaute.run("riskmap", cf_dir=cf, out=risk)
    prov = flaute.run("report", events=det, riskmap=risk, out=tmp_path / "report.json")
    report = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(report, json.loads(SCHEMA.read_text()))
    assert prov["config_hash"] == report["provenance"]["config_hash"]
    assert (cf / "national_cf.csv").read_text().startswith("time,cf\n")


def test_missing_stage(tmp_path):
    with pytest.raises(flaute.FlauteError) as info:
        flaute.run("report", events=tmp_path / "nothing", out=tmp_path / "r.json")
    assert info.value.category == "StageMissing"
