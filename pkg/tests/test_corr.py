import io
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from faultcorr.corr import CorrelationMatrix, correlate_windows, correlation_matrix, pearson, save_matrix_csv
from faultcorr.detrend import ResidualSeries, residuals
from faultcorr.errors import DegenerateSignalError, InsufficientDataError, ValidationError


def _series(name, values, start=0):
    return ResidualSeries(name, np.asarray(values, dtype=float), 2, start)


def test_pearson_examples():
    r = np.array([1.0, 3.0, -2.0, 0.5])
    assert pearson(r, r) == 1.0
    assert pearson(r, -r) == -1.0
    assert pearson([1, -1, 1, -1], [1, 1, -1, -1]) == 0.0


def test_pearson_matches_stdlib():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.normal(size=(2, 17))
        assert pearson(a, b) == pytest.approx(statistics.correlation(a.tolist(), b.tolist()), abs=1e-12)


def test_pearson_degenerate():
    with pytest.raises(DegenerateSignalError):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValidationError):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])


def test_identical_pair():
    s = [0.3, -1.0, 2.0, 0.1]
    cm = correlation_matrix([_series("a", s), _series("b", s), _series("c", [1, 2, -1, 0])], 3, 4)
    assert cm.matrix[0, 1] == 1.0
    assert np.all(np.diag(cm.matrix) == 0.0)


def test_constant_sensor_excluded():
    cm = correlation_matrix(
        [_series("s1", [1, 2, 0, 4]), _series("s2", [2, 1, 3, 0]), _series("s3", [5, 5, 5, 5]), _series("s4", [0, 1, 0, 1])],
        3, 4,
    )
    assert cm.sensors == ("s1", "s2", "s4")
    assert cm.excluded == ("s3",)
    assert cm.matrix.shape == (3, 3)


def test_insufficient_sensors():
    with pytest.raises(InsufficientDataError):
        correlation_matrix([_series("s1", [1, 2, 0]), _series("s2", [2, 1, 3]), _series("s3", [5, 5, 5])], 2, 3)


def test_window_is_trailing_and_exact_length():
    rng = np.random.default_rng(5)
    raw = rng.normal(size=(4, 60))
    res = [residuals(x, 4, f"s{i}") for i, x in enumerate(raw)]
    cm = correlation_matrix(res, 40, 10)
    w = np.stack([r.values[40 - 9 - 2 : 40 - 2 + 1] for r in res])
    assert w.shape == (4, 10)
    assert cm.matrix[0, 1] == pytest.approx(pearson(w[0], w[1]), abs=1e-12)


def test_caller_excluded_reported():
    rng = np.random.default_rng(0)
    cm = correlate_windows(rng.normal(size=(3, 8)), ["a", "b", "c"], 7, excluded=["gone"])
    assert cm.excluded == ("gone",)


def test_nan_rows_excluded():
    w = np.random.default_rng(0).normal(size=(4, 8))
    w[2, 3] = np.nan
    cm = correlate_windows(w, ["a", "b", "c", "d"], 7)
    assert cm.excluded == ("c",)


def test_matrix_csv_dump():
    cm = correlate_windows(np.random.default_rng(0).normal(size=(3, 8)), ["a", "b", "c"], 7)
    buf = io.StringIO()
    save_matrix_csv(cm, buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == ",a,b,c"
    assert float(rows[1].split(",")[2]) == cm.matrix[0, 1]


def test_matrix_is_read_only():
    cm = correlate_windows(np.random.default_rng(0).normal(size=(3, 8)), ["a", "b", "c"], 7)
    with pytest.raises(ValueError):
        cm.matrix[0, 1] = 0.5
    with pytest.raises(ValidationError):
        CorrelationMatrix(np.zeros((2, 3)), ("a", "b"), 0, 3)


def test_null_mean_is_zero():
    rng = np.random.default_rng(11)
    vals = []
    for _ in range(300):
        cm = correlate_windows(rng.normal(size=(10, 30)), [str(i) for i in range(10)], 29)
        vals.append(cm.matrix[np.triu_indices(10, 1)].mean())
    vals = np.asarray(vals)
    assert abs(vals.mean()) < 3 * vals.std(ddof=1) / np.sqrt(vals.size)


@settings(max_examples=100, deadline=None)
@given(
    w=hnp.arrays(np.float64, (5, 12), elements=st.floats(-100, 100)),
    a=st.floats(0.01, 100),
    b=st.floats(-100, 100),
)
def test_affine_invariance(w, a, b):
    try:
        base = correlate_windows(w, list("abcde"), 11)
    except InsufficientDataError:
        return
    if base.sensors[0] != "a":
        return
    w2 = w.copy()
    w2[0] = a * w[0] + b
    w3 = w.copy()
    w3[0] = -a * w[0] + b
    for other, sign in ((w2, 1.0), (w3, -1.0)):
        try:
            cm = correlate_windows(other, list("abcde"), 11)
        except InsufficientDataError:
            continue
        if cm.sensors != base.sensors:
            continue
        assert np.allclose(cm.matrix[0, 1:], sign * base.matrix[0, 1:], atol=1e-8)


def test_cost_grows_with_size():
    import time

    rng = np.random.default_rng(0)

    def cost(n):
        w = rng.normal(size=(n, 200))
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            correlate_windows(w, [str(i) for i in range(n)], 199)
            best = min(best, time.perf_counter() - t0)
        return best

    assert cost(50) < cost(1600)
