import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gstpinn import diffnet
from gstpinn.metrics import MetricsError, compare_arrays, evaluate
from gstpinn.problems import PdeProblem
from gstpinn.reference import ReferenceSolution


def test_examples():
    r = compare_arrays([3.0, 4.0], [3.0, 4.0])
    assert r.mse == 0 and r.rel_l2 == 0
    r = compare_arrays([0.0, 0.0], [3.0, 4.0])
    assert r.rel_l2 == 1.0 and r.mse == 12.5 and r.max_abs == 4.0
    assert compare_arrays([0.0, 0.0], [1.0, 1.0]).mse == 1.0


def test_zero_reference_rel_undefined():
    r = compare_arrays([1.0, 0.0], [0.0, 0.0])
    assert r.rel_l2 is None and r.mse == 0.5
    assert r.row()["rel_l2"] == "undefined"


def test_errors():
    with pytest.raises(MetricsError):
        compare_arrays([1.0], [1.0, 2.0])
    with pytest.raises(MetricsError):
        compare_arrays([], [])


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(a=arrays(np.float64, 12, elements=finite), b=arrays(np.float64, 12, elements=finite),
       c=st.floats(0.01, 100))
def test_properties(a, b, c):
    r = compare_arrays(a, b)
    assert r.mse >= 0 and r.max_abs >= 0
    assert r.mse <= r.max_abs**2 * (1 + 1e-12)
    if r.rel_l2 is not None:
        assert (r.rel_l2 == 0) == (r.mse == 0)
        s = compare_arrays(c * a, c * b)
        assert s.rel_l2 == pytest.approx(r.rel_l2, rel=1e-9, abs=1e-12)
        assert s.mse == pytest.approx(c * c * r.mse, rel=1e-9, abs=1e-300)


def test_evaluate_on_grid():
    prob = PdeProblem.default("burgers")
    p = diffnet.init_params((2, 4, 1), 0)
    t = np.linspace(0, 2, 3)
    x = np.linspace(0, 1, 4)
    pts = np.array([[ti, xi] for ti in t for xi in x])
    vals = np.asarray(diffnet.forward_batch(p, pts)).reshape(3, 4)
    ref = ReferenceSolution(prob, t, x, vals)
    r = evaluate(p, ref)
    assert r.mse == 0 and r.rel_l2 == 0
    ref2 = ReferenceSolution(prob, t, x, vals + 0.1)
    r2 = evaluate(p, ref2)
    assert r2.mse == pytest.approx(0.01) and r2.error_field.shape == (3, 4)
