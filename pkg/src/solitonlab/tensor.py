"""Coordinate tensor calculus on metric fields.

Derivatives come from analytic suppliers when a field carries them and from
fourth-order central differences with one Richardson level otherwise.
Index conventions for stored arrays:

* ``dg[k, i, j]`` is the partial of ``g_ij`` along coordinate ``k``;
* ``Gamma[a, b, c]`` is the Christoffel symbol with upper index ``a``;
* ``Rm[a, b, c, d]`` is ``R^a_{bcd}``, so ``Ric_bd = Rm[a, b, a, d]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InsufficientMargin, SingularMetricError

BASE_STEP = 1e-3
MAX_CONDITION = 1e12



class FDEstimate(NamedTuple):
    value: np.ndarray
    error: np.ndarray


@dataclass(frozen=True)
class TensorValue:
    """Dense components with valence ``(upper, lower)`` and declared symmetries.

    ``symmetries`` holds ``((axis_i, axis_j), sign)`` pairs: sign ``+1`` for a
    symmetric pair of axes, ``-1`` for antisymmetric.
    """

    components: np.ndarray
    upper: int = 0
    lower: int = 0
    symmetries: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "components", np.asarray(self.components, dtype=float))

    @property
    def dims(self):
        return self.components.shape

    def sup_norm(self) -> float:
        c = self.components
        return float(np.max(np.abs(c))) if c.size else 0.0

    def symmetry_defect(self) -> float:
        worst = 0.0
        for (i, j), sign in self.symmetries:
            swapped = np.swapaxes(self.components, i, j)
            worst = max(worst, float(np.max(np.abs(self.components - sign * swapped))))
        return worst

    def check_symmetries(self, tol: float = 1e-12) -> bool:
        return self.symmetry_defect() <= tol


@dataclass(frozen=True)
class MetricField:
    """A symmetric positive-definite matrix field on a coordinate domain."""

    dim: int
    components: Callable
    first: Optional[Callable] = None
    second: Optional[Callable] = None
    bounds: Optional[tuple] = None
    scales: Optional[tuple] = None

    def steps(self) -> np.ndarray:
        scales = np.ones(self.dim) if self.scales is None else np.asarray(self.scales, float)
        return BASE_STEP * scales


@dataclass(frozen=True)
class ScalarField:
    value: Callable
    gradient: Optional[Callable] = None
    hessian: Optional[Callable] = None


# -- finite differences ------------------------------------------------------


def _check_margin(x, direction, width, bounds):
    if bounds is None:
        return
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in bounds)
    xi = np.atleast_1d(x)[direction]
    if not (xi - width > lo[direction] and xi + width < hi[direction]):
        raise InsufficientMargin(
            f"stencil of half-width {width:g} at coordinate {direction} "
            f"(value {xi:g}) leaves ({lo[direction]:g}, {hi[direction]:g})"
        )


def _shift(x, direction, amount):
    y = np.array(x, dtype=float, copy=True)
    if y.ndim == 0:
        return y + amount
    y[direction] += amount
    return y


# symmetric samples are paired so that constant data cancels exactly
def _d1(f, x, k, h):
    def at(o):
        return np.asarray(f(_shift(x, k, o * h)))

    return (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h)


def _d2(f, x, k, h):
    def at(o):
        return np.asarray(f(_shift(x, k, o * h)))

    return (16.0 * (at(1) + at(-1)) - (at(2) + at(-2)) - 30.0 * at(0)) / (12.0 * h * h)


def _d11(f, x, k, l, hk, hl):
    return _d1(lambda z: _d1(f, z, l, hl), x, k, hk)


def _richardson(coarse, fine):
    diff = (np.asarray(fine) - np.asarray(coarse)) / 15.0
    return FDEstimate(np.asarray(fine) + diff, np.abs(diff))


def partial(f, point, direction, order: int = 1, step=None, bounds=None) -> FDEstimate:
    """Central-difference derivative of ``f`` at ``point``.

    ``direction`` is a coordinate index, or a pair ``(k, l)`` for a mixed
    second derivative.  ``f`` may be scalar or array valued.  The estimate
    combines steps ``h`` and ``h/2`` by one Richardson level; ``error`` is the
    magnitude of that correction.
    """
    x = np.asarray(point, dtype=float)
    if isinstance(direction, tuple):
        k, l = direction
        if k == l:
            return partial(f, x, k, order=2, step=step, bounds=bounds)
        hk = hl = BASE_STEP if step is None else step
        if np.ndim(step) > 0:
            hk, hl = step
        _check_margin(x, k, 2 * hk, bounds)
        _check_margin(x, l, 2 * hl, bounds)
        return _richardson(_d11(f, x, k, l, hk, hl), _d11(f, x, k, l, hk / 2, hl / 2))
    h = BASE_STEP if step is None else float(step)
    _check_margin(x, direction, 2 * h, bounds)
    if order == 1:
        return _richardson(_d1(f, x, direction, h), _d1(f, x, direction, h / 2))
    if order == 2:
        return _richardson(_d2(f, x, direction, h), _d2(f, x, direction, h / 2))
    raise ValueError("order must be 1 or 2")


def first_partials(f, x, steps, bounds=None) -> np.ndarray:
    """Stack ``d f / d x^k`` along a new leading axis."""
    return np.stack([partial(f, x, k, step=steps[k], bounds=bounds).value for k in range(len(x))])


def second_partials(f, x, steps, bounds=None) -> np.ndarray:
    d = len(x)
    out = None
    for k in range(d):
        for l in range(k, d):
            if k == l:
                val = partial(f, x, k, order=2, step=steps[k], bounds=bounds).value
            else:
                val = partial(f, x, (k, l), step=(steps[k], steps[l]), bounds=bounds).value
            if out is None:
                out = np.zeros((d, d) + np.shape(val))
            out[k, l] = val
            out[l, k] = val
    return out


# -- algebra -----------------------------------------------------------------


def condition_number(g) -> float:
    ev = np.linalg.eigvalsh(np.asarray(g, dtype=float))
    if ev[0] <= 0:
        return np.inf
    return float(ev[-1] / ev[0])


def invert_metric(g, max_condition: float = MAX_CONDITION):
    """Inverse of a symmetric positive-definite matrix via Cholesky.

    Returns ``(inverse, condition_number)``; refuses matrices that are not
    positive definite or whose condition number exceeds ``max_condition``.
    """
    g = np.asarray(g, dtype=float)
    cond = condition_number(g)
    if not np.isfinite(cond):
        raise SingularMetricError("metric is not positive definite", cond)
    if cond > max_condition:
        raise SingularMetricError(f"metric condition number {cond:.3g} exceeds {max_condition:.0e}", cond)
    try:
        factor = cho_factor(g)
    except np.linalg.LinAlgError as exc:
        raise SingularMetricError("Cholesky factorisation failed", cond) from exc
    inv = cho_solve(factor, np.eye(g.shape[0]))
    return 0.5 * (inv + inv.T), cond


# -- metric jets and curvature -----------------------------------------------


def metric_jet(field: MetricField, x):
    """Metric with its first and second coordinate partials at ``x``."""
    x = np.asarray(x, dtype=float)
    steps = field.steps()
    g = np.asarray(field.components(x), dtype=float)
    if field.first is not None:
        dg = np.asarray(field.first(x), dtype=float)
    else:
        dg = first_partials(field.components, x, steps, field.bounds)
    if field.second is not None:
        ddg = np.asarray(field.second(x), dtype=float)
    elif field.first is not None:
        ddg = first_partials(field.first, x, steps, field.bounds)
        ddg = 0.5 * (ddg + np.swapaxes(ddg, 0, 1))
    else:
        ddg = second_partials(field.components, x, steps, field.bounds)
    return g, dg, ddg


def christoffel_from_jet(g, dg, ginv=None):
    if ginv is None:
        ginv, _ = invert_metric(g)
    # lowered symbols Gamma_{d,bc}
    low = 0.5 * (np.einsum("bcd->dbc", dg) + np.einsum("cbd->dbc", dg) - dg)
    return np.einsum("ad,dbc->abc", ginv, low)


def christoffel_derivative_from_jet(g, dg, ddg, ginv=None):
    """``out[e, a, b, c]`` is the partial of ``Gamma^a_bc`` along ``x^e``."""
    if ginv is None:
        ginv, _ = invert_metric(g)
    low = 0.5 * (np.einsum("bcd->dbc", dg) + np.einsum("cbd->dbc", dg) - dg)
    dlow = 0.5 * (
        np.einsum("ebcd->edbc", ddg) + np.einsum("ecbd->edbc", ddg) - ddg
    )
    dginv = -np.einsum("ap,epq,qd->ead", ginv, dg, ginv)
    return np.einsum("ead,dbc->eabc", dginv, low) + np.einsum("ad,edbc->eabc", ginv, dlow)


def riemann_from_connection_data(gamma, dgamma):
    """``R^a_bcd`` from Christoffel symbols and their partials."""
    return (
        np.einsum("cadb->abcd", dgamma)
        - np.einsum("dacb->abcd", dgamma)
        + np.einsum("ace,edb->abcd", gamma, gamma)
        - np.einsum("ade,ecb->abcd", gamma, gamma)
    )


_RIEMANN_SYM = (((2, 3), -1),)
_SYM2 = (((0, 1), 1),)


def christoffel(field: MetricField, x) -> TensorValue:
    x = np.asarray(x, dtype=float)
    g = np.asarray(field.components(x), dtype=float)
    if field.first is not None:
        dg = np.asarray(field.first(x), dtype=float)
    else:
        dg = first_partials(field.components, x, field.steps(), field.bounds)
    return TensorValue(christoffel_from_jet(g, dg), 1, 2, (((1, 2), 1),))


def riemann(field: MetricField, x) -> TensorValue:
    g, dg, ddg = metric_jet(field, x)
    ginv, _ = invert_metric(g)
    gamma = christoffel_from_jet(g, dg, ginv)
    dgamma = christoffel_derivative_from_jet(g, dg, ddg, ginv)
    return TensorValue(riemann_from_connection_data(gamma, dgamma), 1, 3, _RIEMANN_SYM)


def ricci(field: MetricField, x) -> TensorValue:
    rm = riemann(field, x).components
    ric = np.einsum("abad->bd", rm)
    return TensorValue(0.5 * (ric + ric.T), 0, 2, _SYM2)


def scalar_curvature(field: MetricField, x) -> float:
    g = np.asarray(field.components(np.asarray(x, dtype=float)), dtype=float)
    ginv, _ = invert_metric(g)
    return float(np.einsum("ab,ab->", ginv, ricci(field, x).components))


def riemann_from_connection(gamma_fn: Callable, y, steps=None, bounds=None) -> TensorValue:
    """Riemann tensor when the connection itself is known pointwise.

    Only first differences of ``gamma_fn`` are taken, so a closed-form
    connection loses one layer of numerical cancellation compared with
    differentiating the metric twice.
    """
    y = np.asarray(y, dtype=float)
    if steps is None:
        steps = np.full(len(y), BASE_STEP)
    gamma = np.asarray(gamma_fn(y), dtype=float)
    dgamma = first_partials(gamma_fn, y, steps, bounds)
    return TensorValue(riemann_from_connection_data(gamma, dgamma), 1, 3, _RIEMANN_SYM)


def ricci_from_connection(gamma_fn: Callable, y, steps=None, bounds=None) -> TensorValue:
    rm = riemann_from_connection(gamma_fn, y, steps, bounds).components
    ric = np.einsum("abad->bd", rm)
    return TensorValue(0.5 * (ric + ric.T), 0, 2, _SYM2)


def lower_first(rm, g) -> np.ndarray:
    """``R_abcd = g_ae R^e_bcd``."""
    return np.einsum("ae,ebcd->abcd", g, rm)


def first_bianchi_defect(rm) -> float:
    rm = np.asarray(rm)
    cyc = rm + np.einsum("acdb->abcd", rm) + np.einsum("adbc->abcd", rm)
    return float(np.max(np.abs(cyc)))


def _scalar_partials(f: ScalarField, x, steps, bounds):
    if f.gradient is not None:
        df = np.asarray(f.gradient(x), dtype=float)
    else:
        df = first_partials(f.value, x, steps, bounds)
    if f.hessian is not None:
        ddf = np.asarray(f.hessian(x), dtype=float)
    elif f.gradient is not None:
        ddf = first_partials(f.gradient, x, steps, bounds)
        ddf = 0.5 * (ddf + ddf.T)
    else:
        ddf = second_partials(f.value, x, steps, bounds)
    return df, ddf


def hessian(field: MetricField, f: ScalarField, x, gamma=None) -> TensorValue:
    """``d_a d_b f - (d_c f) Gamma^c_ab``; ``gamma`` overrides the metric's connection."""
    x = np.asarray(x, dtype=float)
    if gamma is None:
        gamma = christoffel(field, x).components
    df, ddf = _scalar_partials(f, x, field.steps(), field.bounds)
    hess = ddf - np.einsum("c,cab->ab", df, gamma)
    return TensorValue(0.5 * (hess + hess.T), 0, 2, _SYM2)


def gradient(field: MetricField, f: ScalarField, x) -> TensorValue:
    x = np.asarray(x, dtype=float)
    if f.gradient is not None:
        df = np.asarray(f.gradient(x), dtype=float)
    else:
        df = first_partials(f.value, x, field.steps(), field.bounds)
    ginv, _ = invert_metric(field.components(x))
    return TensorValue(ginv @ df, 1, 0)


def laplacian(field: MetricField, f: ScalarField, x) -> float:
    x = np.asarray(x, dtype=float)
    ginv, _ = invert_metric(field.components(x))
    return float(np.einsum("ab,ab->", ginv, hessian(field, f, x).components))
