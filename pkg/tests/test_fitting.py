import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solitonlab.fitting import fit_slope
from solitonlab.sampling import sample_points
from solitonlab import flows


@settings(max_examples=50, deadline=None)
@given(k=st.floats(0.1, 3.0), sign=st.sampled_from([-1.0, 1.0]), c=st.floats(1e-6, 1e6))
def test_exact_power_law(k, sign, c):
    k *= sign
    xs = np.array([1e2, 1e3, 1e4, 1e5])
    fit = fit_slope(xs, c * xs**k)
    assert fit.slope == pytest.approx(k, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-9)
    assert fit.excluded == ()


def test_nonpositive_values_are_excluded():
    fit = fit_slope([1, 10, 100, 1000], [1.0, 0.1, 0.0, 0.001])
    assert fit.excluded == (2,)
    assert fit.slope == pytest.approx(-1.0)


def test_too_few_usable_points_gives_nan():
    fit = fit_slope([1, 10, 100, 1000], [0.0, 0.0, 0.0, 1.0])
    assert np.isnan(fit.slope)


@pytest.mark.parametrize("xs, ys", [([1, 2, 3], [1, 2, 3]), ([0, 1, 2, 3], [1, 1, 1, 1]),
                                    ([1, 2, 3, 4], [1, 2, 3])])
def test_invalid_input(xs, ys):
    with pytest.raises(ValueError):
        fit_slope(xs, ys)


def test_sample_points_reproducible_and_inside():
    flow = flows.get_flow("sphere2")
    a = sample_points(flow, 16, seed=3)
    b = sample_points(flow, 16, seed=3)
    assert a == b
    assert sample_points(flow, 16, seed=4) != a
    for p in a:
        flow.check(p, margin=0.05)
        assert flow.sample_interval[0] <= p.tau <= flow.sample_interval[1]


def test_sample_points_rejects_zero():
    with pytest.raises(ValueError):
        sample_points(flows.get_flow("flat2"), 0)
