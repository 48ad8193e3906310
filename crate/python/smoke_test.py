"""Smoke test for the capgrowth extension module.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/capgrowth-*.whl
    python python/smoke_test.py
"""

import json
import math
import random
import tempfile
from pathlib import Path

import capgrowth


def check_basics():
    assert capgrowth.success_probability(30.0, 0.8, 30.0) == 0.5
    assert capgrowth.encode_date("2019-01-01") == 0.0
    assert capgrowth.decode_date(0.5) == "2019-07-03"
    beta0, beta1, months = capgrowth.ols_log_fit([(0.0, 1.0), (1.0, math.e)])
    assert abs(beta1 - 1.0) < 1e-12 and abs(months - 12 * math.log(2)) < 1e-9
    h = capgrowth.model_horizon(5.0, True, 40.0, 3.0, (1.2, -6.0), (2.0, -12.0))
    assert 0.0 < h < 40.0 * 4.0
    try:
        capgrowth.success_probability(-1.0, 0.8, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative horizon accepted")


def check_horizon_fit():
    rng = random.Random(0)
    minutes, outcomes = [], []
    for _ in range(500):
        t = math.exp(rng.uniform(math.log(0.5), math.log(1000.0)))
        minutes.append(t)
        outcomes.append(rng.random() < capgrowth.success_probability(30.0, 0.8, t))
    est = capgrowth.fit_horizon(minutes, outcomes)
    print(est)
    assert est.converged and 15.0 < est.h_minutes < 60.0


def check_theorem():
    report = json.loads(capgrowth.certify_bounds(3, 2.5))
    assert report["passed"], report
    try:
        capgrowth.certify_bounds(2, 1.5)
    except ValueError as e:
        assert "alpha" in str(e)
    else:
        raise AssertionError("alpha < 2 accepted")


def check_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        runs = Path(tmp) / "runs.csv"
        n = capgrowth.write_synthetic_runs(str(runs), seed=1)
        assert n == 15 * 170 * 2
        fit = capgrowth.fit_trend(str(runs), "sigmoid-curve")
        print(fit, fit.inflections())
        assert fit.converged and fit.predict("2025-01-01") > 0.0
        report = json.loads(capgrowth.run_pipeline(str(runs), str(Path(tmp) / "out"), specs=["metr-exp", "sigmoid-link"]))
        assert [row["specification"] for row in report["comparison"]] != []
        assert len(report["comparison"]) == 2
        assert (Path(tmp) / "out" / "report.json").is_file()
        print("doubling time (months):", round(report["doubling_time_months"], 2))


if __name__ == "__main__":
    check_basics()
    check_horizon_fit()
    check_theorem()
    check_pipeline()
    print("capgrowth", capgrowth.__version__, "smoke test passed")
