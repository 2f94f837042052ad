"""Soliton-metric checks against hand values and a symbolic oracle.

The frozen closed forms below were derived symbolically (sympy) from the
space-time metric components, independently of the package code.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solitonlab import flows, soliton, tensor
from solitonlab.errors import DomainError, PositivityError
from solitonlab.fitting import fit_slope
from solitonlab.flows import SpacetimePoint
from solitonlab.sampling import sample_points

NS = (1e2, 1e3, 1e4, 1e5)


def sm_(key, N=1e3, kind=soliton.SHRINKING):
    return soliton.SpacetimeMetric(flows.get_flow(key), N, kind)


# -- components --------------------------------------------------------------


def test_sphere_components_einstein_time_entry():
    sm = sm_("sphere2", 1000)
    g = soliton.spacetime_components(sm, SpacetimePoint((math.pi / 4, 0.0), 1.0)).components
    assert np.allclose(g, np.diag([500.0, 2.0, 1.0]), atol=1e-12)


def test_flat_components():
    sm = sm_("flat2", 100)
    g = soliton.spacetime_components(sm, SpacetimePoint((0.0, 0.0), 2.0)).components
    assert g[0, 0] == pytest.approx(6.0, abs=1e-14)
    assert np.allclose(g[1:, 1:], 0.5 * np.eye(2))


def test_positivity_boundary():
    sm = sm_("flat2", 4)
    with pytest.raises(PositivityError) as err:
        soliton.spacetime_components(sm, SpacetimePoint((0.0, 0.0), 2.0))
    assert err.value.minimal_N == pytest.approx(4.0)


def test_steady_components():
    sm = sm_("sphere2", 10, soliton.STEADY)
    g = soliton.spacetime_components(sm, SpacetimePoint((math.pi / 2, 0.0), 2.0)).components
    assert g[0, 0] == pytest.approx(10.5)
    assert np.allclose(g[1:, 1:], np.diag([4.0, 4.0]))


def test_metric_validation():
    with pytest.raises(ValueError):
        soliton.SpacetimeMetric(flows.flat_flow(2), 10, "expanding")
    with pytest.raises(DomainError):
        soliton.SpacetimeMetric(flows.flat_flow(2), -1.0)
    with pytest.raises(DomainError):
        soliton.SpacetimeMetric(flows.flat_flow(2), math.inf)


def test_analytic_field_partials_match_fd():
    sm = sm_("hyp2", 500)
    y = np.array([1.5, 0.1, -0.2])
    plain = soliton.spacetime_field(sm)
    exact = soliton.spacetime_field(sm, analytic=True)
    assert np.allclose(tensor.christoffel(plain, y).components,
                       tensor.christoffel(exact, y).components, atol=1e-8)


# -- Christoffel symbols -----------------------------------------------------


@pytest.mark.parametrize("key", ["sphere2", "flat3"])
def test_christoffel_examples(key):
    p = SpacetimePoint((1.0, 0.5) if key == "sphere2" else (0.1, 0.2, 0.3), 1.0)
    assert soliton.christoffel_crosscheck(sm_(key), p) < 1e-6


def test_steady_flat_christoffels_vanish():
    sm = sm_("flat2", kind=soliton.STEADY)
    p = SpacetimePoint((0.3, 0.4), 1.0)
    assert soliton.christoffel_closed(sm, p).sup_norm() < 1e-10
    assert soliton.christoffel_numeric(sm, p).sup_norm() < 1e-10


@settings(max_examples=20, deadline=None)
@given(idx=st.integers(0, len(flows.BUILTIN_KEYS) - 1), seed=st.integers(0, 1000),
       kind=st.sampled_from(soliton.KINDS), logN=st.floats(2.0, 5.0))
def test_christoffel_symmetric_and_crosschecked(idx, seed, kind, logN):
    flow = flows.get_flow(flows.BUILTIN_KEYS[idx])
    sm = soliton.SpacetimeMetric(flow, 10.0**logN, kind)
    p = sample_points(flow, 1, seed=seed)[0]
    gamma = soliton.christoffel_closed(sm, p)
    assert gamma.symmetry_defect() < 1e-12
    assert soliton.christoffel_crosscheck(sm, p) < 1e-6 * max(1.0, 10.0**logN / 1e3)


# -- Ricci, Hessian and residual --------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("tau, N", [(1.0, 100.0), (2.5, 1e4)])
def test_flat_ricci_hessian_closed_forms(n, tau, N):
    sm = soliton.SpacetimeMetric(flows.flat_flow(n), N)
    p = SpacetimePoint((0.3,) * n, tau)
    ric, hess = soliton.ricci_hessian(sm, p)
    d = N - n * tau
    # spatial Ricci entries as returned by the symbolic oracle for each n
    spatial = {1: tau / (2 * d * d), 2: (4 * tau - N) / (2 * d * d), 3: (4.5 * tau - N) / (d * d)}[n]
    ric_expected = np.diag([n * n / (4 * tau * d)] + [spatial] * n)
    hess_expected = np.diag([N * (N - 2 * n * tau) / (4 * tau**3 * d)] + [N / (2 * tau * d)] * n)
    assert np.allclose(ric.components, ric_expected, rtol=1e-7, atol=1e-11)
    assert np.allclose(hess.components, hess_expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("N", NS)
def test_flat_residual_closed_form(n, N):
    sm = soliton.SpacetimeMetric(flows.flat_flow(n), N)
    tau = 1.7
    res = soliton.residual_tensor(sm, SpacetimePoint((0.5,) * n, tau)).components
    expected = np.zeros((n + 1, n + 1))
    expected[1:, 1:] = N / (2 * (N - n * tau) ** 2) * np.eye(n)
    # the time entry cancels terms of size N / tau^3
    assert np.allclose(res, expected, rtol=1e-7, atol=1e-15 * N)


HYP_ORACLE = {1e2: 0.764727347978216, 1e3: 0.0719733064313828,
              1e4: 0.00715462741118643, 1e5: 0.000715037893747406}


@pytest.mark.parametrize("pipeline, rtol", [("closed-form", 1e-9), ("numeric", 1e-7)])
def test_hyperbolic_residual_oracle(pipeline, rtol):
    sm = sm_("hyp2")
    p = SpacetimePoint((0.2, -0.3), 1.5)
    for N, expected in HYP_ORACLE.items():
        value = soliton.residual_tensor(sm.with_N(N), p, pipeline).sup_norm()
        assert value == pytest.approx(expected, rel=rtol)


@pytest.mark.parametrize("N", NS)
def test_steady_sphere_residual_closed_form(N):
    sm = sm_("sphere2", N, soliton.STEADY)
    th, tau = 1.1, 1.3
    res = soliton.residual_tensor(sm, SpacetimePoint((th, 0.2), tau)).components
    c = (N * tau + 0.5) / (N * tau + 1) ** 2
    expected = np.diag([0.0, c, c * math.sin(th) ** 2])
    assert np.allclose(res, expected, rtol=1e-7, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_steady_flat_residual_vanishes(n):
    sm = soliton.SpacetimeMetric(flows.flat_flow(n), 1e3, soliton.STEADY)
    assert soliton.residual_tensor(sm, SpacetimePoint((0.1,) * n, 2.0)).sup_norm() < 1e-10


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), key=st.sampled_from(["sphere2", "sphere3"]),
       logN=st.floats(2.0, 5.0))
def test_einstein_residual_vanishes(seed, key, logN):
    flow = flows.get_flow(key)
    p = sample_points(flow, 1, seed=seed)[0]
    sm = soliton.SpacetimeMetric(flow, 10.0**logN)
    assert soliton.residual_tensor(sm, p).sup_norm() < 1e-10
    assert soliton.residual_tensor(sm, p, "numeric").sup_norm() < 1e-7


def test_residual_slope_flat_and_hyperbolic():
    for key in ("flat2", "hyp2"):
        rep = soliton.soliton_residual(sm_(key), SpacetimePoint((0.1, 0.1), 1.0))
        assert rep.passed and not rep.exact
        assert abs(rep.fitted_slope + 1) <= 0.1


def test_sphere_report_is_exact():
    rep = soliton.soliton_residual(sm_("sphere2"), SpacetimePoint((1.0, 0.0), 2.0))
    assert rep.exact and rep.passed
    assert rep.tolerance == soliton.EINSTEIN_TOL["closed-form"]
    d = rep.as_dict()
    assert d["pass"] is True and len(d["sup_norms"]) == 4


def test_full_fd_pipeline_limits():
    sm = sm_("flat2", 1e5)
    with pytest.raises(DomainError):
        soliton.residual_tensor(sm, SpacetimePoint((0.0, 0.0), 1.0), "full-fd")
    with pytest.raises(ValueError):
        soliton.residual_tensor(sm, SpacetimePoint((0.0, 0.0), 1.0), "symbolic")
    small = sm_("flat2", 1e3)
    a = soliton.residual_tensor(small, SpacetimePoint((0.0, 0.0), 1.0), "full-fd").sup_norm()
    b = soliton.residual_tensor(small, SpacetimePoint((0.0, 0.0), 1.0)).sup_norm()
    assert a == pytest.approx(b, rel=1e-4)


def test_sweep_validation():
    p = SpacetimePoint((0.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        soliton.soliton_residual(sm_("flat2"), p, (1e2, 1e3, 1e4))
    with pytest.raises(ValueError):
        soliton.soliton_residual(sm_("flat2"), p, (1e2, 1e4, 1e3, 1e5))


@pytest.mark.parametrize("key", ["flat2", "hyp2"])
def test_approx_gap_order(key):
    rep = soliton.approx_vs_numeric_gap(sm_(key), SpacetimePoint((0.1, -0.1), 1.0))
    assert abs(rep.fitted_slope + 1) <= 0.1 and rep.r_squared > 0.98


def test_approx_gap_sphere_exact():
    rep = soliton.approx_vs_numeric_gap(sm_("sphere2"), SpacetimePoint((1.0, 0.0), 1.5))
    assert rep.exact and rep.passed


def test_potential_derivatives():
    f = soliton.potential(sm_("flat2", 100))
    y = np.array([2.0, 0.1, 0.2])
    assert f.value(y) == pytest.approx(25.0)
    assert np.allclose(f.gradient(y), [-100 / 8, 0, 0])
    assert f.hessian(y)[0, 0] == pytest.approx(100 / 8)
    g = soliton.potential(sm_("flat2", 100, soliton.STEADY))
    assert g.value(y) == pytest.approx(-200.0)
    assert np.allclose(g.gradient(y), [-100, 0, 0])


# -- slices, psi-flow and curvature -----------------------------------------


def test_mean_curvature():
    assert soliton.mean_curvature_slice(sm_("sphere2"), SpacetimePoint((1.0, 0.0), 1.5)) == 0.0
    H = soliton.mean_curvature_slice(sm_("flat2", 100), SpacetimePoint((0.0, 0.0), 1.0))
    assert H == pytest.approx(-1 / 7, abs=1e-14)
    Ns = (1e2, 1e3, 1e4, 1e5)
    hs = [abs(soliton.mean_curvature_slice(sm_("flat2", N), SpacetimePoint((0.0, 0.0), 1.0))) for N in Ns]
    assert fit_slope(Ns, hs).slope == pytest.approx(-0.5, abs=0.01)
    with pytest.raises(ValueError):
        soliton.mean_curvature_slice(sm_("flat2", kind=soliton.STEADY), SpacetimePoint((0.0, 0.0), 1.0))


@pytest.mark.parametrize("key", ["flat2", "sphere2", "hyp2"])
def test_gradient_identity(key):
    flow = flows.get_flow(key)
    for p in sample_points(flow, 4, seed=2):
        for N in NS:
            sm = soliton.SpacetimeMetric(flow, N)
            assert soliton.gradient_identity_residual(sm, p).sup_norm() < 1e-12
            assert abs(soliton.slice_identity_defect(sm, p)) < 1e-9


def test_psi_flow_identity_and_sphere():
    sm = sm_("sphere2")
    assert soliton.psi_flow(sm, 1.3, 1.0) == 1.3
    assert soliton.psi_flow(sm, 1.0, 1.5) == pytest.approx(1.5, abs=1e-9)
    assert soliton.psi_flow(sm, 2.0, 0.8) == pytest.approx(1.6, abs=1e-9)
    with pytest.raises(ValueError):
        soliton.psi_flow(sm, 1.0, 0.0)


def test_psi_flow_flat_order():
    Ns = (1e3, 1e4, 1e5, 1e6)
    errs = [abs(soliton.psi_flow(sm_("flat2", N), 1.0, 1.2) - 1.2) for N in Ns]
    assert fit_slope(Ns, errs).slope == pytest.approx(-1.0, abs=0.15)


def test_scaled_riemann_flat_oracle():
    N, tau = 100.0, 1.0
    rm = soliton.riemann_scaled(sm_("flat2", N), SpacetimePoint((0.1, 0.2), tau)).components
    assert rm[0, 1, 0, 1] == pytest.approx(1 / (2 * tau * (N - 2 * tau)), rel=1e-7)
    assert rm[0, 2, 0, 2] == pytest.approx(1 / (2 * tau * (N - 2 * tau)), rel=1e-7)
    assert rm[1, 2, 1, 2] == pytest.approx(-1 / (2 * (N - 2 * tau)), rel=1e-7)
    assert rm[0, 1, 1, 0] == pytest.approx(-rm[0, 1, 0, 1], rel=1e-12)


@pytest.mark.parametrize("key", ["flat2", "sphere2"])
def test_scaled_riemann_convergence(key):
    flow = flows.get_flow(key)
    p = sample_points(flow, 1, seed=5)[0]
    rep = soliton.riemann_scaled_convergence(soliton.SpacetimeMetric(flow, 1e2), p)
    assert rep.passed, rep.reasons
    assert soliton.riemann_symmetry_defect(soliton.SpacetimeMetric(flow, 1e3), p) < 1e-6
