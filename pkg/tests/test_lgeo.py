import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solitonlab import flows, lgeo, soliton
from solitonlab.errors import ConvergenceError, PointOutsideChart, TauOutsideInterval
from solitonlab.fitting import fit_slope
from solitonlab.lgeo import DiscreteCurve

FLAT1 = flows.flat_flow(1)
FLAT2 = flows.flat_flow(2)
SPHERE2 = flows.sphere_flow(2)


# -- curves and functionals --------------------------------------------------


def test_sqrt_partition():
    t = lgeo.sqrt_partition(1.0, 4.0, 8)
    assert t[0] == 1.0 and t[-1] == 4.0
    assert np.allclose(np.diff(np.sqrt(t)), 1.0 / 8)


def test_curve_validation():
    with pytest.raises(ValueError):
        DiscreteCurve.constant([0.0], 1.0, 2.0, K=4)
    with pytest.raises(ValueError):
        DiscreteCurve(np.linspace(2.0, 1.0, 10), np.zeros(10))
    with pytest.raises(ValueError):
        DiscreteCurve(np.linspace(1.0, 2.0, 10), np.zeros(9))
    with pytest.raises(ValueError):
        DiscreteCurve.straight([0.0], [1.0], 1.0, 2.0, parametrisation="cubic")


def test_curve_checks():
    with pytest.raises(PointOutsideChart):
        lgeo.l_length(FLAT2, DiscreteCurve.constant([0.0], 1.0, 2.0))
    with pytest.raises(PointOutsideChart):
        lgeo.l_length(SPHERE2, DiscreteCurve.constant([0.0, 0.0], 1.0, 2.0))
    with pytest.raises(TauOutsideInterval):
        lgeo.l_length(FLAT1, DiscreteCurve.constant([0.0], 1.0, 100.0))


def test_constant_curve_flat_lengths_vanish():
    c = DiscreteCurve.constant([0.3, -0.4], 1.0, 4.0)
    assert lgeo.l_length(FLAT2, c) == 0.0
    assert lgeo.l0_length(FLAT2, c) == 0.0


def test_l_length_of_flat_minimiser():
    c = DiscreteCurve.from_function(lambda t: (math.sqrt(t) - 1) / (math.sqrt(4) - 1), 1.0, 4.0, 64)
    assert lgeo.l_length(FLAT1, c) == pytest.approx(0.5, abs=2e-3)


def test_l0_length_of_straight_line():
    c = DiscreteCurve.straight([0.0], [1.0], 1.0, 4.0, 64, "linear")
    assert lgeo.l0_length(FLAT1, c) == pytest.approx(1 / 3, abs=2e-3)


def test_l0_length_of_constant_curve_on_sphere():
    c = DiscreteCurve.constant([1.0, 0.5], 1.0, 4.0)
    assert lgeo.l0_length(SPHERE2, c) == pytest.approx(math.log(4.0), abs=1e-9)


def test_spacetime_lengths():
    c = DiscreteCurve.constant([1.0, 0.5], 1.0, 4.0)
    sm = soliton.SpacetimeMetric(SPHERE2, 1e4)
    assert lgeo.spacetime_length(sm, c) == pytest.approx(math.sqrt(2e4) * 0.5, abs=1e-3)
    steady = soliton.SpacetimeMetric(FLAT2, 100, soliton.STEADY)
    assert lgeo.spacetime_length(steady, DiscreteCurve.constant([0.0, 0.0], 1.0, 4.0)) == pytest.approx(30.0)


# -- minimisation ------------------------------------------------------------


def test_flat_oracle_one_dimension():
    curve, Q = lgeo.minimize_l(FLAT1, [0.0], [1.0], 1.0, 4.0)
    assert Q == pytest.approx(0.5, abs=1e-4)
    exact = lgeo.flat_minimizer([0.0], [1.0], 1.0, 4.0)
    for t, g in zip(curve.tau_nodes, curve.gamma_nodes):
        assert g == pytest.approx(exact(t), abs=1e-4)
        assert g[0] == pytest.approx(math.sqrt(t) - 1, abs=1e-4)


def test_equal_endpoints_give_constant_curve():
    curve, Q = lgeo.minimize_l(FLAT2, [0.5, 0.5], [0.5, 0.5], 1.0, 4.0)
    assert Q == 0.0
    assert np.allclose(curve.gamma_nodes, 0.5)


def test_flat_Q_is_stable_in_K():
    x, y = [0.0, 0.0], [1.5, -0.5]
    q32 = lgeo.minimize_l(FLAT2, x, y, 0.7, 2.9, K=32)[1]
    q64 = lgeo.minimize_l(FLAT2, x, y, 0.7, 2.9, K=64)[1]
    assert abs(q32 - q64) < 1e-4
    assert abs(q64 - lgeo.flat_Q(x, y, 0.7, 2.9)) < 1e-4


def test_full_output_and_multistart():
    res = lgeo.minimize_l(FLAT2, [0.0, 0.0], [1.0, 1.0], 1.0, 2.0, K=16, multistart=2,
                          full_output=True)
    assert isinstance(res, lgeo.LMinimum)
    assert res.grad_norm < lgeo.GRAD_TOL
    assert res.Q <= res.initial_L
    assert not res.multistart_flag and res.multistart_spread < 1e-6


def test_convergence_error_carries_best():
    with pytest.raises(ConvergenceError) as err:
        lgeo.minimize_l(SPHERE2, [1.0, 0.0], [1.5, 0.8], 1.0, 4.0, max_iter=2)
    assert isinstance(err.value.best, lgeo.LMinimum)


def test_analytic_gradient_matches_finite_differences():
    curve = DiscreteCurve.from_function(lambda t: [1.0 + 0.1 * t, 0.3 * math.sin(t)], 1.0, 3.0, 10)
    nodes = np.array(curve.gamma_nodes)
    _, grad = lgeo._l_and_grad(SPHERE2, curve, nodes)
    h = 1e-6
    for k, i in [(3, 0), (5, 1), (8, 0)]:
        up, dn = nodes.copy(), nodes.copy()
        up[k, i] += h
        dn[k, i] -= h
        fd = (lgeo.l_length(SPHERE2, curve.with_nodes(up)) - lgeo.l_length(SPHERE2, curve.with_nodes(dn))) / (2 * h)
        assert grad[k, i] == pytest.approx(fd, rel=1e-6, abs=1e-8)


@pytest.fixture(scope="module")
def sphere_minimum():
    x, y = np.array([1.0, 0.0]), np.array([1.5, 0.6])
    curve, Q = lgeo.minimize_l(SPHERE2, x, y, 1.0, 4.0, K=32)
    return x, y, curve, Q


def _great_circle(x, y, tau1, tau2, K=32):
    chart = SPHERE2.chart
    p, q = chart.embed(x), chart.embed(y)
    omega = math.acos(float(np.clip(p @ q, -1, 1)))
    a, b = math.sqrt(tau1), math.sqrt(tau2)

    def point(t):
        s = (math.sqrt(t) - a) / (b - a)
        v = (math.sin((1 - s) * omega) * p + math.sin(s * omega) * q) / math.sin(omega)
        return chart.from_embedding(v)

    return DiscreteCurve.from_function(point, tau1, tau2, K)


def test_sphere_Q_bounds(sphere_minimum):
    x, y, _, Q = sphere_minimum
    competitor = lgeo.l_length(SPHERE2, _great_circle(x, y, 1.0, 4.0))
    assert 2 * (math.sqrt(4.0) - 1.0) <= Q <= competitor + 1e-12


@settings(max_examples=20, deadline=None)
@given(k=st.integers(1, 31), i=st.integers(0, 1), eps=st.floats(1e-4, 1e-2),
       sign=st.sampled_from([-1.0, 1.0]))
def test_node_perturbation_does_not_lower_L(sphere_minimum, k, i, eps, sign):
    _, _, curve, Q = sphere_minimum
    nodes = np.array(curve.gamma_nodes)
    nodes[k, i] += sign * eps
    assert lgeo.l_length(SPHERE2, curve.with_nodes(nodes)) >= Q - 1e-12


def test_sphere_equal_endpoints_cost():
    c = lgeo.cost_c(SPHERE2, [1.2, 0.3], [1.2, 0.3], 1.0, 4.0, K=32)
    assert abs(c) < 1e-6


def test_flat_costs():
    assert lgeo.cost_c(FLAT1, [0.0], [1.0], 1.0, 4.0) == pytest.approx(-0.5, abs=1e-4)
    assert lgeo.cost_c(FLAT2, [0.2, 0.2], [0.2, 0.2], 1.0, 4.0) == pytest.approx(-2.0, abs=1e-12)


def test_cost_matrix_closed_matches_minimisation():
    xs = np.array([[0.0], [1.0]])
    ys = np.array([[0.5], [-1.0], [2.0]])
    closed = lgeo.cost_matrix(FLAT1, xs, ys, 1.0, 2.0, method="closed")
    numeric = lgeo.cost_matrix(FLAT1, xs, ys, 1.0, 2.0, K=64, method="minimize")
    assert np.allclose(closed, numeric, atol=1e-4)
    with pytest.raises(ValueError):
        lgeo.cost_matrix(SPHERE2, [[1.0, 0.0]], [[1.0, 0.1]], 1.0, 2.0, method="closed")


def test_cost_matrix_periodic_lift():
    period = 2 * math.pi
    m = lgeo.cost_matrix(FLAT1, [[0.1]], [[6.0]], 1.0, 4.0, method="closed", period=period)
    d = 6.0 - period - 0.1
    assert m[0, 0] == pytest.approx(d * d / 2.0)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-3, 3), y=st.floats(-3, 3), t1=st.floats(0.1, 2.0), dt=st.floats(0.1, 3.0))
def test_flat_Q_scaling(x, y, t1, dt):
    t2 = t1 + dt
    q = lgeo.flat_Q([x], [y], t1, t2)
    assert q >= 0
    assert lgeo.flat_Q([2 * x], [2 * y], t1, t2) == pytest.approx(4 * q, rel=1e-12, abs=1e-15)
    assert lgeo.flat_minimizer([x], [y], t1, t2)(t2) == pytest.approx([y])


# -- length expansion --------------------------------------------------------


def test_expansion_flat_constant_curve():
    sm = soliton.SpacetimeMetric(FLAT2, 1e3)
    rep = lgeo.expansion_check(sm, DiscreteCurve.constant([0.0, 0.0], 1.0, 4.0))
    assert rep.passed and not rep.exact
    assert rep.fitted_slope == pytest.approx(-1.5, abs=0.1)
    assert np.allclose(rep.remainders, rep.naive_remainders, rtol=1e-3, atol=1e-12)


def test_expansion_sphere_constant_curve_is_exact():
    sm = soliton.SpacetimeMetric(SPHERE2, 1e3)
    rep = lgeo.expansion_check(sm, DiscreteCurve.constant([1.0, 0.5], 1.0, 4.0))
    assert rep.exact and rep.passed
    assert rep.leading_term[0] == pytest.approx(math.sqrt(2e3) * (1 - 0.5))
    assert rep.l_term == pytest.approx(0.0, abs=1e-12)


def test_expansion_steady_straight_line():
    sm = soliton.SpacetimeMetric(FLAT2, 1e3, soliton.STEADY)
    rep = lgeo.expansion_check(sm, DiscreteCurve.straight([0.0, 0.0], [1.0, 2.0], 1.0, 4.0, 64, "linear"))
    assert rep.fitted_slope == pytest.approx(-1.5, abs=0.1)
    length, lead, l_term, rem, _ = lgeo.expansion_terms(sm, DiscreteCurve.straight(
        [0.0, 0.0], [1.0, 2.0], 1.0, 4.0, 64, "linear"))
    assert lead == pytest.approx(math.sqrt(1e3) * 3.0)
    assert length == pytest.approx(lead + l_term + rem, rel=1e-14)


def test_scaled_length_limit():
    c = DiscreteCurve.straight([1.0, 0.0], [1.4, 0.4], 1.0, 4.0, 64)
    target = 1.0 - 0.5
    errs = []
    for N in (1e3, 1e4, 1e5, 1e6):
        sm = soliton.SpacetimeMetric(SPHERE2, N)
        errs.append(abs(lgeo.spacetime_length(sm, c) / math.sqrt(2 * N) - target))
    assert fit_slope((1e3, 1e4, 1e5, 1e6), errs).slope == pytest.approx(-1.0, abs=0.1)


def test_expansion_input_validation():
    sm = soliton.SpacetimeMetric(FLAT2, 1e3)
    with pytest.raises(ValueError):
        lgeo.expansion_check(sm, DiscreteCurve.constant([0.0, 0.0], 1.0, 4.0), (1e3, 1e4, 1e5))
