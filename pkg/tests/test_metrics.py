import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectropitch.errors import DegenerateInput, NoVoicedFrames
from spectropitch.metrics import (
    EvalReport, accuracy_rate, aggregate, band, boundary_frames, evaluate_contour, pearson,
    transition_artifacts, write_reports_csv, write_summary_csv,
)


def naive_pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    sx = (sum((a - mx) ** 2 for a in x) / n) ** 0.5
    sy = (sum((b - my) ** 2 for b in y) / n) ** 0.5
    return cov / (sx * sy)


def test_pearson_examples():
    assert pearson([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    # hand evaluation: cov 0.875, sigmas sqrt(1.25), sqrt(1.1875)
    assert pearson([1, 2, 3, 4], [2, 4, 5, 4]) == pytest.approx(3.5 / np.sqrt(23.75), abs=1e-12)
    assert pearson([1, 2, 3, 4], [2, 4, 5, 4]) == pytest.approx(0.7183, abs=2e-4)  # quoted to ~4 digits; exact value 0.71818


def test_pearson_degenerate():
    with pytest.raises(DegenerateInput):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1], [1])


vec = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=40)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_pearson_properties(data):
    x = np.array(data.draw(vec))
    y = np.array(data.draw(st.lists(st.floats(-1e3, 1e3), min_size=len(x), max_size=len(x))))
    if np.std(x) < 1e-3 or np.std(y) < 1e-3:
        return
    r = pearson(x, y)
    assert r == pytest.approx(naive_pearson(list(x), list(y)), abs=1e-9)
    assert r == pytest.approx(pearson(y, x), abs=1e-12)
    a = data.draw(st.floats(0.1, 10))
    b = data.draw(st.floats(-100, 100))
    assert pearson(a * x + b, y) == pytest.approx(r, abs=1e-9)


def test_band():
    assert band(0.97) == "strong"
    assert band(0.7) == "strong"
    assert band(0.6999) == "moderate"
    assert band(0.5) == "moderate"
    assert band(-0.2) == "weak"


@given(st.floats(-1, 1))
def test_band_partition(r):
    hits = [r >= 0.7, 0.5 <= r < 0.7, r < 0.5]
    assert sum(hits) == 1
    assert band(r) == ("strong", "moderate", "weak")[hits.index(True)]


def test_accuracy_rate_examples():
    assert accuracy_rate([100, 0, 200], [100, 0, 200]) == (1.0, 2, 2)
    assert accuracy_rate([104, 50, 250], [100, 0, 200]) == (0.5, 1, 2)
    assert accuracy_rate([105], [100])[0] == 1.0
    assert accuracy_rate([95], [100])[0] == 1.0
    assert accuracy_rate([105.01], [100])[0] == 0.0
    assert accuracy_rate([0], [100])[0] == 0.0
    with pytest.raises(NoVoicedFrames):
        accuracy_rate([1, 2], [0, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 100))
def test_accuracy_rate_scale_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    truth = np.where(rng.random(30) < 0.7, rng.uniform(50, 500, 30), 0)
    truth[0] = 200.0
    est = np.where(rng.random(30) < 0.8, truth * rng.uniform(0.9, 1.1, 30), 0)
    assert accuracy_rate(est * scale, truth * scale)[:2] == pytest.approx(accuracy_rate(est, truth)[:2])


def test_transition_artifacts():
    truth = np.array([0, 0, 0, 200, 200, 200, 0, 0])
    assert transition_artifacts(truth, truth) == 0
    est = truth.astype(float).copy()
    est[2] = 120.0
    assert transition_artifacts(est, truth) == 1
    est[0] = 120.0  # far from any boundary
    assert transition_artifacts(est, truth) == 1
    est[6] = 150.0
    est[5] = 100.0
    assert transition_artifacts(est, truth) == 3
    assert transition_artifacts(np.full(5, 300.0), np.full(5, 200.0)) == 0
    np.testing.assert_array_equal(np.flatnonzero(boundary_frames(truth)), [2, 3, 5, 6])


def test_evaluate_contour_degenerate_flag():
    r = evaluate_contour("a", [200, 200, 0], [200, 200, 0], 20)
    assert r.rho_band == "degenerate" and r.rho == 0.0 and r.ar == 1.0
    r = evaluate_contour("b", [100, 200, 300, 0], [100, 200, 300, 0], 6)
    assert r.rho == pytest.approx(1.0) and r.rho_band == "strong" and r.n_voiced == 3


def _rep(i, b, snr, ar):
    return EvalReport(f"e{i}", snr, 0.0, b, ar, 10, 0, 2)


def test_aggregate():
    reps = [_rep(0, "strong", 6, 0.5), _rep(1, "strong", 20, 1.0), _rep(2, "strong", 20, 0.8),
            _rep(3, "moderate", 6, 0.7), _rep(4, "degenerate", 20, 0.9)]
    s = aggregate(reps)
    assert s["band_pct"] == {"strong": 75.0, "moderate": 25.0, "weak": 0.0}
    assert s["band_counts"]["degenerate"] == 1
    assert list(s["ar_by_snr"]) == [6, 20]
    assert s["ar_by_snr"][20] == pytest.approx(0.9)
    assert len(aggregate([_rep(0, "weak", 12, 0.1), _rep(1, "weak", 12, 0.3)])["ar_by_snr"]) == 1
    with pytest.raises(ValueError):
        aggregate([])


def test_csv_outputs(tmp_path):
    reps = [_rep(1, "moderate", 6, 0.7), _rep(0, "strong", 6, 0.5)]
    write_reports_csv(reps, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "entry_id,snr_db,rho,rho_band,ar,n_voiced,transition_errors"
    assert lines[1].startswith("e0,6,")
    write_summary_csv({"cnn": aggregate(reps)}, tmp_path / "s.csv")
    assert "cnn,band_pct,strong,50.0000" in (tmp_path / "s.csv").read_text()
