import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solitonlab import flows, transport
from solitonlab.errors import CFLError, DomainError

STATIC = transport.static_circle()


def circular_variance(m: transport.GridMeasure) -> float:
    return 1.0 - abs(complex(np.sum(m.weights * np.exp(1j * m.grid))))


# -- measures ----------------------------------------------------------------


def test_measure_validation():
    with pytest.raises(ValueError):
        transport.GridMeasure(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        transport.GridMeasure(np.array([1.5, -0.5]))
    with pytest.raises(ValueError):
        transport.GridMeasure(np.array([1.0]))
    m = transport.uniform(8)
    with pytest.raises(ValueError):
        m.weights[0] = 1.0


def test_dirac_and_density():
    m = transport.dirac(16, math.pi)
    assert m.weights[8] == 1.0
    assert m.density(transport.static_circle(2.0)).sum() * m.spacing * 2.0 == pytest.approx(1.0)


# -- diffusion ---------------------------------------------------------------


def test_uniform_is_fixed():
    u = transport.uniform(64)
    assert np.allclose(transport.diffuse(u, STATIC, 0.0, 0.5).weights, u.weights, atol=1e-15)


@pytest.mark.parametrize("key", ["static", "shrinking", "expanding"])
def test_bump_spreads_and_keeps_mass(key):
    m = transport.bump(64, 1.0, 0.2)
    res = transport.diffuse_detailed(m, transport.circle_metric(key), 0.0, 0.5)
    assert res.mass_drift <= 1e-10
    assert math.fsum(res.measure.weights.tolist()) == pytest.approx(1.0, abs=1e-12)
    assert circular_variance(res.measure) > circular_variance(m)
    assert res.measure.tau == 0.5


def test_time_step_rule():
    metric = transport.circle_metric("shrinking")
    limit = transport.max_time_step(metric, 32, 0.0, 0.5)
    assert limit == pytest.approx(0.5 * math.exp(-1.0) / 32**2)
    with pytest.raises(CFLError):
        transport.diffuse(transport.uniform(32), metric, 0.0, 0.5, steps=10)
    with pytest.raises(DomainError):
        transport.diffuse(transport.uniform(32), metric, 0.5, 0.0)


def test_backward_heat_eigenfunction():
    M = 128
    theta = 2 * math.pi * np.arange(M) / M
    out = transport.backward_heat(np.sin(theta), STATIC, 1.0, 0.5)
    assert np.max(np.abs(out - math.exp(-0.5) * np.sin(theta))) < 1e-4
    assert np.allclose(transport.backward_heat(np.full(M, 3.0), STATIC, 1.0, 0.5), 3.0)
    with pytest.raises(DomainError):
        transport.backward_heat(np.sin(theta), STATIC, 0.5, 1.0)


def test_lipschitz_constants():
    M = 64
    theta = 2 * math.pi * np.arange(M) / M
    tri = np.minimum(theta, 2 * math.pi - theta)
    assert transport.lipschitz_const(tri, STATIC, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert transport.lipschitz_const(tri, transport.static_circle(2.0), 0.0) == pytest.approx(0.5)
    assert transport.lipschitz_const(np.ones(M), STATIC, 0.0) == 0.0


def test_metric_kinds():
    assert STATIC.is_super
    assert transport.circle_metric("shrinking").is_super
    assert not transport.circle_metric("expanding").is_super
    with pytest.raises(KeyError):
        transport.circle_metric("wobbly")
    bad = transport.EvolvingMetric1D(lambda t: 1 + t, lambda t: 1.0, transport.SUPER_RICCI_FLOW)
    with pytest.raises(DomainError):
        bad.check_kind(0.0, 1.0)


# -- Wasserstein distance ----------------------------------------------------


def test_w1_identical_is_zero():
    m = transport.random_measure(32, 1)
    assert transport.w1(m, m, STATIC) == 0.0
    assert transport.w1(m, m, STATIC, method="lp") == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("k", [1, 5, 16, 20])
def test_w1_diracs(k):
    M = 32
    a, b = transport.dirac(M, 0.0), transport.dirac(M, 2 * math.pi * k / M)
    d = 2 * math.pi * min(k, M - k) / M
    assert transport.w1(a, b, STATIC) == pytest.approx(d, abs=1e-12)
    assert transport.w1(a, b, STATIC, method="lp") == pytest.approx(d, abs=1e-12)


def test_w1_method_validation():
    m = transport.uniform(8)
    with pytest.raises(ValueError):
        transport.w1(m, m, STATIC, method="sinkhorn")
    with pytest.raises(ValueError):
        transport.w1(m, transport.uniform(16), STATIC)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), M=st.integers(4, 40), radius=st.floats(0.1, 5.0))
def test_cdf_lp_and_dual_agree(seed, M, radius):
    m1 = transport.random_measure(M, seed)
    m2 = transport.random_measure(M, seed + 1)
    cmp_ = transport.w1_compare(m1, m2, transport.static_circle(radius))
    assert cmp_.method_gap <= 1e-9 * max(1.0, radius)
    assert abs(cmp_.duality_gap) <= 1e-9 * max(1.0, radius)
    phi = transport.kantorovich_potential(m1, m2, radius)
    steps = np.abs(np.diff(np.append(phi, phi[0])))
    assert np.all(steps <= radius * m1.spacing * (1 + 1e-12))
    cmp_.plan.check()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_w1_is_a_metric(seed):
    ms = [transport.random_measure(24, seed + k) for k in range(3)]
    d = lambda a, b: transport.w1(a, b, STATIC)  # noqa: E731
    assert d(ms[0], ms[1]) == pytest.approx(d(ms[1], ms[0]), abs=1e-14)
    assert d(ms[0], ms[2]) <= d(ms[0], ms[1]) + d(ms[1], ms[2]) + 1e-14


# -- monotonicity suites -----------------------------------------------------


def _bumps():
    return (lambda M: transport.bump(M, math.pi / 2, 0.25),
            lambda M: transport.bump(M, 3 * math.pi / 2 - 0.5, 0.25))


def test_thm31_static_and_shrinking_pass():
    taus = np.linspace(0.0, 0.5, 6)
    for key in ("static", "shrinking"):
        rep = transport.thm31_suite(transport.circle_metric(key), *_bumps(), taus, M=32)
        assert rep.passed, rep.reasons
    shrink = transport.thm31_suite(transport.circle_metric("shrinking"), *_bumps(), taus, M=32)
    assert shrink.strictly_decreasing
    d = shrink.as_dict()
    assert d["pass"] and d["fine"]["M"] == 64


def test_thm31_expanding_control_fails():
    taus = np.linspace(0.0, 0.5, 6)
    rep = transport.thm31_suite(transport.circle_metric("expanding"), *_bumps(), taus, M=32)
    assert not rep.passed
    assert rep.extras["delta_constant"] > transport.DELTA_CONSTANT_MAX


def test_thm31_input_validation():
    with pytest.raises(ValueError):
        transport.thm31_suite(STATIC, *_bumps(), [0.0], M=16)
    with pytest.raises(ValueError):
        transport.thm31_suite(STATIC, *_bumps(), [0.5, 0.1], M=16)


def test_d_distance_equal_diracs():
    flat = flows.flat_flow(1)
    m = transport.dirac(32, 2.0)
    res = transport.d_distance(flat, m, m, 1.0, 4.0)
    assert res.V == 0.0
    assert res.D == pytest.approx(-(math.sqrt(4.0) - 1.0))
    assert res.dual_bound <= res.V + 1e-12


def test_d_distance_separated_diracs():
    flat = flows.flat_flow(1)
    M = 32
    a, b = transport.dirac(M, 0.0), transport.dirac(M, 2 * math.pi * 4 / M)
    res = transport.d_distance(flat, a, b, 1.0, 4.0)
    d = 2 * math.pi * 4 / M
    assert res.V == pytest.approx(d * d / 2.0)
    assert res.dual_bound == pytest.approx(res.V, abs=1e-12)


def test_d_distance_validation():
    m = transport.uniform(16)
    with pytest.raises(ValueError):
        transport.d_distance(flows.flat_flow(2), m, m, 1.0, 2.0)
    with pytest.raises(DomainError):
        transport.d_distance(flows.flat_flow(1), m, m, 2.0, 1.0)


def test_thm32_bumps_pass_with_refining_delta():
    flat = flows.flat_flow(1)
    rep = transport.thm32_suite(flat, lambda M: transport.bump(M, 2.0, 0.3),
                                lambda M: transport.bump(M, 4.0, 0.3), 1.0, 4.0, M=32)
    assert rep.passed, rep.reasons
    assert rep.delta_ratio == pytest.approx(4.0, rel=0.25)
    with pytest.raises(ValueError):
        transport.thm32_suite(flat, transport.uniform, transport.uniform, 1.0, 4.0, s_grid=[1.1, 1.2])
