"""Both kernel backends against independent references."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from solitonlab import _kernels

BACKENDS = sorted(_kernels.backends().items())


def _random_problem(rng, m, n):
    a = rng.random(m)
    b = rng.random(n)
    return rng.random((m, n)), a / a.sum(), b / b.sum()


def _lp_reference(cost, a, b):
    m, n = cost.shape
    rows = [np.kron(np.eye(m)[i], np.ones(n)) for i in range(m)]
    cols = [np.kron(np.ones(m), np.eye(n)[j]) for j in range(n)]
    res = linprog(cost.ravel(), A_eq=np.array(rows + cols), b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs")
    assert res.success
    return res.fun


def test_compiled_backend_available():
    assert _kernels.BACKEND in ("compiled", "python")
    assert "python" in _kernels.backends()


@pytest.mark.parametrize("name, mod", BACKENDS)
@pytest.mark.parametrize("bland", [True, False])
@pytest.mark.parametrize("m, n", [(5, 5), (7, 4), (3, 9), (16, 16)])
def test_simplex_matches_highs(name, mod, bland, m, n):
    rng = np.random.default_rng(m * 100 + n)
    cost, a, b = _random_problem(rng, m, n)
    plan, u, v, _ = mod.transport_simplex(cost, a, b, bland=bland)
    assert np.all(plan >= 0)
    assert np.allclose(plan.sum(axis=1), a, atol=1e-13)
    assert np.allclose(plan.sum(axis=0), b, atol=1e-13)
    value = float((plan * cost).sum())
    assert value == pytest.approx(_lp_reference(cost, a, b), abs=1e-10)
    # dual feasibility and zero duality gap
    assert np.all(u[:, None] + v[None, :] <= cost + 1e-12)
    assert float(u @ a + v @ b) == pytest.approx(value, abs=1e-12)


def test_simplex_degenerate_identical_marginals():
    M = 12
    k = np.arange(M)
    d = np.abs(k[:, None] - k[None, :])
    cost = np.minimum(d, M - d).astype(float)
    a = np.full(M, 1.0 / M)
    for _, mod in BACKENDS:
        plan, *_ = mod.transport_simplex(cost, a, a)
        assert float((plan * cost).sum()) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), m=st.integers(2, 10), n=st.integers(2, 10))
def test_backends_agree_on_optimum(seed, m, n):
    rng = np.random.default_rng(seed)
    cost, a, b = _random_problem(rng, m, n)
    values = [float((mod.transport_simplex(cost, a, b)[0] * cost).sum()) for _, mod in BACKENDS]
    assert max(values) - min(values) < 1e-12


def _dense_cn(w, mu):
    M = w.size
    lap = -2 * np.eye(M) + np.roll(np.eye(M), 1, axis=1) + np.roll(np.eye(M), -1, axis=1)
    for mk in mu:
        w = np.linalg.solve(np.eye(M) - 0.5 * mk * lap, (np.eye(M) + 0.5 * mk * lap) @ w)
    return w


@pytest.mark.parametrize("name, mod", BACKENDS)
def test_heat_matches_dense_crank_nicolson(name, mod):
    rng = np.random.default_rng(7)
    w = rng.random(24)
    mu = np.array([0.3, 0.45, 0.1, 0.5])
    assert np.allclose(mod.heat_cn_periodic(w, mu), _dense_cn(w, mu), atol=1e-13)


@pytest.mark.parametrize("name, mod", BACKENDS)
def test_heat_conserves_sum_and_constants(name, mod):
    w = np.full(16, 0.25)
    assert np.allclose(mod.heat_cn_periodic(w, [0.5] * 10), 0.25, atol=1e-15)
    rng = np.random.default_rng(3)
    v = rng.random(33)
    out = mod.heat_cn_periodic(v, np.full(50, 0.4))
    assert out.sum() == pytest.approx(v.sum(), abs=1e-12)


def test_heat_accepts_read_only_input():
    w = np.linspace(0.0, 1.0, 10)
    w.setflags(write=False)
    for _, mod in BACKENDS:
        mod.heat_cn_periodic(w, np.array([0.2]))
