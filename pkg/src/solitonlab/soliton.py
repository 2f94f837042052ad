"""Space-time soliton metrics built from a reverse Ricci flow.

On ``M x (a, b)`` with coordinates ``y = (tau, x^1, ..., x^n)`` (time first)
a flow ``g(tau)`` and a large parameter ``N`` give two metrics:

* shrinking: ``g_ij / tau`` in space and
  ``N / (2 tau^3) + R / tau - n / (2 tau^2)`` in time, with potential
  ``N / (2 tau)``; soliton residual ``Ric + Hess f - g / 2``;
* steady: ``g_ij`` in space and ``N + R`` in time, with potential
  ``-N tau``; soliton residual ``Ric + Hess f``.

Mixed space-time components vanish.  Residuals are ``O(1/N)`` in general and
zero for Einstein shrinking flows.  The default curvature pipeline assembles
the connection in closed form from the flow's analytic data and differentiates
only the connection numerically.  That avoids double differentiation of the
``O(N)`` time-time entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor
from .errors import (ConvergenceError, DomainError, MissingAnalyticData, PositivityError,
                     TauOutsideInterval)
from .fitting import fit_slope
from .flows import FlowFamily, SpacetimePoint
from .tensor import MetricField, ScalarField, TensorValue

SHRINKING = "shrinking"
STEADY = "steady"
KINDS = (SHRINKING, STEADY)
PIPELINES = ("closed-form", "numeric", "full-fd")

DEFAULT_N = (1e2, 1e3, 1e4, 1e5)
# half-decades: the Cauchy-difference fit needs at least 4 differences
DEFAULT_N_RIEMANN = tuple(10.0 ** (2 + 0.5 * k) for k in range(7))
NUMERIC_MAX_N = 1e4

EINSTEIN_TOL = {"closed-form": 1e-10, "numeric": 1e-7, "full-fd": 1e-7}
NOISE_FLOOR = 1e-10
CAUCHY_NOISE_FLOOR = 1e-9
# lowering an index multiplies connection roundoff (~eps/h) by the O(N) time entry
RIEMANN_NOISE_FACTOR = 10.0
TARGET_SLOPE = -1.0
SLOPE_TOL = 0.1
RIEMANN_SLOPE_TOL = 0.2
MIN_R_SQUARED = 0.98
MONOTONE_SLACK = 0.05

PSI_STEP = 1e-3
PSI_MIN_STEP = 1e-9
PSI_TOL = 1e-9

_SYM2 = (((0, 1), 1),)
_RM_SYM = (((0, 1), -1), ((2, 3), -1))


@dataclass(frozen=True)
class SpacetimeMetric:
    flow: FlowFamily
    N: float
    kind: str = SHRINKING

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not (self.N > 0 and math.isfinite(self.N)):
            raise DomainError(f"N must be a positive finite real, got {self.N!r}")
        if self.kind == SHRINKING and self.flow.interval[0] < 0:
            raise DomainError("shrinking construction needs a time interval inside (0, inf)")
        object.__setattr__(self, "N", float(self.N))

    @property
    def n(self) -> int:
        return self.flow.n

    @property
    def dim(self) -> int:
        return self.flow.n + 1

    @property
    def bounds(self) -> tuple:
        a, b = self.flow.interval
        c = self.flow.chart
        return (a,) + tuple(c.lower), (b,) + tuple(c.upper)

    def with_N(self, N: float) -> "SpacetimeMetric":
        return SpacetimeMetric(self.flow, N, self.kind)


@dataclass(frozen=True)
class _FlowData:
    g: np.ndarray
    dg: np.ndarray
    ginv: np.ndarray
    ric: np.ndarray
    R: float
    dR: np.ndarray
    R_tau: float
    dg_tau: np.ndarray


def _flow_data(flow: FlowFamily, x, tau) -> _FlowData:
    x = np.asarray(x, dtype=float)
    try:
        g = np.asarray(flow.metric(x, tau), dtype=float)
        dg = np.asarray(flow.dmetric(x, tau), dtype=float)
        ric = np.asarray(flow.ricci(x, tau), dtype=float)
        R = float(flow.scalar(x, tau))
        dR = np.asarray(flow.grad_scalar(x, tau), dtype=float)
        R_tau = float(flow.scalar_tau(x, tau))
        dg_tau = np.asarray(flow.dmetric_dtau(x, tau), dtype=float)
    except (TypeError, NotImplementedError) as exc:
        raise MissingAnalyticData(f"{flow.key}: analytic flow data unavailable") from exc
    ginv, _ = tensor.invert_metric(g)
    return _FlowData(g, dg, ginv, ric, R, dR, R_tau, dg_tau)


def time_component(sm: SpacetimeMetric, x, tau: float) -> float:
    """The time-time entry of the space-time metric (no positivity check)."""
    R = float(sm.flow.scalar(np.asarray(x, dtype=float), tau))
    if sm.kind == SHRINKING:
        return sm.N / (2 * tau**3) + R / tau - sm.n / (2 * tau**2)
    return sm.N + R


def minimal_N(sm: SpacetimeMetric, x, tau: float) -> float:
    """Smallest ``N`` making the time-time entry positive at ``(x, tau)``."""
    R = float(sm.flow.scalar(np.asarray(x, dtype=float), tau))
    if sm.kind == SHRINKING:
        return sm.n * tau - 2 * R * tau**2
    return -R


def _checked_time_component(sm: SpacetimeMetric, x, tau: float) -> float:
    a00 = time_component(sm, x, tau)
    if not a00 > 0:
        nmin = minimal_N(sm, x, tau)
        raise PositivityError(
            f"{sm.kind} time component {a00:.6g} <= 0 at tau={tau:g}; N must exceed {nmin:.6g}",
            a00, nmin,
        )
    return a00


def _components(sm: SpacetimeMetric, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    tau, x = float(y[0]), y[1:]
    a00 = _checked_time_component(sm, x, tau)
    g = np.asarray(sm.flow.metric(x, tau), dtype=float)
    out = np.zeros((sm.dim, sm.dim))
    out[0, 0] = a00
    out[1:, 1:] = g / tau if sm.kind == SHRINKING else g
    return out


def _first_partials(sm: SpacetimeMetric, y) -> np.ndarray:
    """``out[c, a, b]``: partial of the space-time metric entry ``ab`` along ``y^c``."""
    y = np.asarray(y, dtype=float)
    tau, x = float(y[0]), y[1:]
    d = _flow_data(sm.flow, x, tau)
    n, N = sm.n, sm.N
    out = np.zeros((sm.dim, sm.dim, sm.dim))
    if sm.kind == SHRINKING:
        out[0, 1:, 1:] = d.dg_tau / tau - d.g / tau**2
        out[1:, 1:, 1:] = d.dg / tau
        out[0, 0, 0] = -1.5 * N / tau**4 + d.R_tau / tau - d.R / tau**2 + n / tau**3
        out[1:, 0, 0] = d.dR / tau
    else:
        out[0, 1:, 1:] = d.dg_tau
        out[1:, 1:, 1:] = d.dg
        out[0, 0, 0] = d.R_tau
        out[1:, 0, 0] = d.dR
    return out


def _check_point(sm: SpacetimeMetric, p: SpacetimePoint, margin: float = 0.0) -> None:
    sm.flow.check(p, margin)


def spacetime_components(sm: SpacetimeMetric, p: SpacetimePoint) -> TensorValue:
    """The block-diagonal space-time metric at ``p``.

    Raises
    ------
    PositivityError
        If the time-time entry is not positive; ``minimal_N`` on the
        exception holds the admissibility threshold.
    """
    _check_point(sm, p)
    return TensorValue(_components(sm, p.coords), 0, 2, _SYM2)


def spacetime_field(sm: SpacetimeMetric, analytic: bool = False) -> MetricField:
    """The space-time metric as a generic field for the tensor module.

    With ``analytic`` the exact first partials are attached; otherwise all
    derivatives are numerical.
    """
    return MetricField(
        dim=sm.dim,
        components=lambda y: _components(sm, y),
        first=(lambda y: _first_partials(sm, y)) if analytic else None,
        bounds=sm.bounds,
    )


# -- closed-form connection --------------------------------------------------


def _gamma_closed(sm: SpacetimeMetric, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    tau, x = float(y[0]), y[1:]
    d = _flow_data(sm.flow, x, tau)
    n, N = sm.n, sm.N
    base = tensor.christoffel_from_jet(d.g, d.dg, d.ginv)
    ric_mixed = d.ginv @ d.ric
    grad_up = d.ginv @ d.dR
    gam = np.zeros((sm.dim, sm.dim, sm.dim))
    gam[1:, 1:, 1:] = base
    gam[1:, 0, 0] = -0.5 * grad_up
    if sm.kind == SHRINKING:
        a00 = _checked_time_component(sm, x, tau)
        mixed = ric_mixed - np.eye(n) / (2 * tau)
        gam[0, 1:, 1:] = (d.g / (2 * tau**2) - d.ric / tau) / a00
        gam[0, 1:, 0] = d.dR / (2 * tau * a00)
        gam[0, 0, 0] = 0.5 / a00 * (-1.5 * N / tau**4 - d.R / tau**2 + d.R_tau / tau + n / tau**3)
    else:
        a00 = _checked_time_component(sm, x, tau)
        mixed = ric_mixed
        gam[0, 1:, 1:] = -d.ric / a00
        gam[0, 1:, 0] = 0.5 * d.dR / a00
        gam[0, 0, 0] = 0.5 * d.R_tau / a00
    gam[1:, 1:, 0] = mixed
    gam[1:, 0, 1:] = mixed
    gam[0, 0, 1:] = gam[0, 1:, 0]
    return gam


def christoffel_closed(sm: SpacetimeMetric, p: SpacetimePoint) -> TensorValue:
    """Connection coefficients ``Gamma^a_bc`` from the closed-form expressions."""
    _check_point(sm, p)
    return TensorValue(_gamma_closed(sm, p.coords), 1, 2, (((1, 2), 1),))


def christoffel_numeric(sm: SpacetimeMetric, p: SpacetimePoint) -> TensorValue:
    """Connection coefficients from finite differences of the metric components."""
    _check_point(sm, p)
    return tensor.christoffel(spacetime_field(sm, analytic=False), p.coords)


def christoffel_crosscheck(sm: SpacetimeMetric, p: SpacetimePoint) -> float:
    """Sup-norm gap between the closed-form and the generic numerical connection."""
    closed = christoffel_closed(sm, p).components
    numeric = christoffel_numeric(sm, p).components
    return float(np.max(np.abs(closed - numeric)))


# -- potential, curvature ----------------------------------------------------


def potential(sm: SpacetimeMetric) -> ScalarField:
    """The soliton potential with exact derivatives: ``N/(2 tau)`` or ``-N tau``."""
    N, dim = sm.N, sm.dim
    if sm.kind == SHRINKING:
        def value(y):
            return N / (2 * y[0])

        def grad(y):
            out = np.zeros(dim)
            out[0] = -N / (2 * y[0] ** 2)
            return out

        def hess(y):
            out = np.zeros((dim, dim))
            out[0, 0] = N / y[0] ** 3
            return out
    else:
        def value(y):
            return -N * y[0]

        def grad(y):
            out = np.zeros(dim)
            out[0] = -N
            return out

        def hess(y):
            return np.zeros((dim, dim))
    return ScalarField(value, grad, hess)


def _steps(sm: SpacetimeMetric) -> np.ndarray:
    return np.full(sm.dim, tensor.BASE_STEP)


def ricci_hessian(sm: SpacetimeMetric, p: SpacetimePoint, pipeline: str = "closed-form"):
    """Numerical Ricci tensor and potential Hessian of the space-time metric.

    ``closed-form``: exact connection, finite differences of the connection
    only.  ``numeric``: the generic metric-to-curvature route of the tensor
    module, fed exact first partials of the metric and differencing them once.
    ``full-fd``: every metric derivative by finite differences; roundoff in
    the second differences of the ``O(N)`` time entry limits it to
    ``N <= 1e4``.  All pipelines use exact potential derivatives.
    """
    _check_point(sm, p)
    y = p.coords
    pot = potential(sm)
    if pipeline == "closed-form":
        gamma_fn = lambda z: _gamma_closed(sm, z)  # noqa: E731
        ric = tensor.ricci_from_connection(gamma_fn, y, _steps(sm), sm.bounds)
        hess = tensor.hessian(spacetime_field(sm), pot, y, gamma=gamma_fn(y))
    elif pipeline in ("numeric", "full-fd"):
        if pipeline == "full-fd" and sm.N > NUMERIC_MAX_N:
            raise DomainError(f"full-fd pipeline is limited to N <= {NUMERIC_MAX_N:g}")
        fld = spacetime_field(sm, analytic=pipeline == "numeric")
        ric = tensor.ricci(fld, y)
        hess = tensor.hessian(fld, pot, y)
    else:
        raise ValueError(f"pipeline must be one of {PIPELINES}")
    return ric, hess


def ricci_hessian_approx(sm: SpacetimeMetric, p: SpacetimePoint):
    """Leading-order Ricci tensor and potential Hessian, accurate to ``O(1/N)``."""
    _check_point(sm, p)
    tau, x = p.tau, np.asarray(p.x)
    d = _flow_data(sm.flow, x, tau)
    n, N, dim = sm.n, sm.N, sm.dim
    ric = np.zeros((dim, dim))
    hess = np.zeros((dim, dim))
    ric[1:, 1:] = d.ric
    ric[0, 1:] = ric[1:, 0] = -0.5 * d.dR
    hess[0, 1:] = hess[1:, 0] = 0.5 * d.dR
    if sm.kind == SHRINKING:
        ric[0, 0] = -0.5 * d.R_tau - d.R / (2 * tau)
        hess[1:, 1:] = d.g / (2 * tau) - d.ric
        hess[0, 0] = N / (4 * tau**3) + d.R / tau - n / (4 * tau**2) + 0.5 * d.R_tau
    else:
        ric[0, 0] = -0.5 * d.R_tau
        hess[1:, 1:] = -d.ric
        hess[0, 0] = 0.5 * d.R_tau
    return TensorValue(ric, 0, 2, _SYM2), TensorValue(hess, 0, 2, _SYM2)


def residual_tensor(sm: SpacetimeMetric, p: SpacetimePoint, pipeline: str = "closed-form") -> TensorValue:
    """Soliton residual: ``Ric + Hess f - g/2`` (shrinking) or ``Ric + Hess f`` (steady)."""
    ric, hess = ricci_hessian(sm, p, pipeline)
    res = ric.components + hess.components
    if sm.kind == SHRINKING:
        res = res - 0.5 * _components(sm, p.coords)
    return TensorValue(0.5 * (res + res.T), 0, 2, _SYM2)


# -- N sweeps ----------------------------------------------------------------


@dataclass
class ResidualReport:
    """Sup-norms of an ``N``-dependent quantity at one point, with a log-log fit.

    ``exact`` marks sweeps where every sup-norm sits below ``noise_floor``;
    then no slope is fitted and the expected behaviour is exactness.
    """

    point: SpacetimePoint
    N_values: list
    sup_norms: list
    fitted_slope: float
    r_squared: float
    passed: bool
    exact: bool = False
    tolerance: Optional[float] = None
    target_slope: float = TARGET_SLOPE
    slope_tol: float = SLOPE_TOL
    noise_floor: float = NOISE_FLOOR
    reasons: list = field(default_factory=list)

    @property
    def pass_(self) -> bool:
        return self.passed

    def as_dict(self) -> dict:
        return {
            "tau": self.point.tau,
            "x": list(self.point.x),
            "N_values": list(self.N_values),
            "sup_norms": list(self.sup_norms),
            "fitted_slope": self.fitted_slope,
            "r_squared": self.r_squared,
            "exact": self.exact,
            "pass": self.passed,
            "reasons": list(self.reasons),
        }


def _validate_N(N_values: Sequence[float], minimum: int = 4) -> list:
    vals = [float(v) for v in N_values]
    if len(vals) < minimum:
        raise ValueError(f"need at least {minimum} N values, got {len(vals)}")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValueError("N values must be strictly increasing")
    return vals


def _assess(point, N_values, norms, *, exact_expected: bool, tolerance: Optional[float],
            target=TARGET_SLOPE, slope_tol=SLOPE_TOL, noise_floor=NOISE_FLOOR,
            check_monotone=True, slope_is_bound=False) -> ResidualReport:
    norms = [float(v) for v in norms]
    floors = np.broadcast_to(np.asarray(noise_floor, dtype=float), (len(norms),))
    below = all(v <= f for v, f in zip(norms, floors))
    noise_floor = float(floors.max())
    reasons = []
    if exact_expected:
        tol = noise_floor if tolerance is None else tolerance
        bad = [v for v in norms if not v < tol]
        if bad:
            reasons.append(f"{len(bad)} sup-norm(s) not below {tol:g}")
        fit_ok = math.nan, math.nan
        if not below:
            try:
                fit = fit_slope(N_values, norms)
                fit_ok = fit.slope, fit.r_squared
            except ValueError:
                pass
        return ResidualReport(point, list(N_values), norms, fit_ok[0], fit_ok[1], not reasons,
                              exact=True, tolerance=tol, target_slope=target, slope_tol=slope_tol,
                              noise_floor=noise_floor, reasons=reasons)
    if below:
        return ResidualReport(point, list(N_values), norms, math.nan, math.nan, True, exact=True,
                              tolerance=tolerance, target_slope=target, slope_tol=slope_tol,
                              noise_floor=noise_floor, reasons=["all values below noise floor"])
    fit = fit_slope(N_values, norms)
    if fit.excluded:
        reasons.append(f"values at indices {list(fit.excluded)} below noise floor")
    if slope_is_bound:
        slope_ok = fit.slope <= target + slope_tol
    else:
        slope_ok = abs(fit.slope - target) <= slope_tol
    if not slope_ok:
        reasons.append(f"slope {fit.slope:.4f} outside {target} +/- {slope_tol}")
    if not fit.r_squared > MIN_R_SQUARED:
        reasons.append(f"r^2 {fit.r_squared:.4f} <= {MIN_R_SQUARED}")
    if check_monotone:
        for a, b in zip(norms, norms[1:]):
            if b > a * (1 + MONOTONE_SLACK):
                reasons.append("sup-norms not monotone non-increasing in N")
                break
    passed = slope_ok and fit.r_squared > MIN_R_SQUARED and not any("monotone" in r for r in reasons)
    return ResidualReport(point, list(N_values), norms, fit.slope, fit.r_squared, passed,
                          exact=False, tolerance=tolerance, target_slope=target,
                          slope_tol=slope_tol, noise_floor=noise_floor, reasons=reasons)


def soliton_residual(sm: SpacetimeMetric, p: SpacetimePoint, N_values=DEFAULT_N,
                     pipeline: str = "closed-form") -> ResidualReport:
    """Sweep the soliton residual over ``N`` at a fixed point.

    ``sm.N`` is ignored; each value in ``N_values`` is used in turn.  Einstein
    shrinking flows must be exact for every ``N``; all other flows must show
    the ``-1`` log-log slope.
    """
    vals = _validate_N(N_values)
    norms = [residual_tensor(sm.with_N(N), p, pipeline).sup_norm() for N in vals]
    exact = sm.kind == SHRINKING and sm.flow.is_einstein_shrinker
    return _assess(p, vals, norms, exact_expected=exact,
                   tolerance=EINSTEIN_TOL[pipeline] if exact else None)


def approx_gap(sm: SpacetimeMetric, p: SpacetimePoint, pipeline: str = "closed-form") -> float:
    ric, hess = ricci_hessian(sm, p, pipeline)
    ric_a, hess_a = ricci_hessian_approx(sm, p)
    return max(
        float(np.max(np.abs(ric.components - ric_a.components))),
        float(np.max(np.abs(hess.components - hess_a.components))),
    )


def approx_vs_numeric_gap(sm: SpacetimeMetric, p: SpacetimePoint, N_values=DEFAULT_N,
                          pipeline: str = "closed-form") -> ResidualReport:
    """Gap between the numerical Ricci/Hessian and their leading-order forms."""
    vals = _validate_N(N_values)
    norms = [approx_gap(sm.with_N(N), p, pipeline) for N in vals]
    exact = sm.kind == SHRINKING and sm.flow.is_einstein_shrinker
    return _assess(p, vals, norms, exact_expected=exact,
                   tolerance=EINSTEIN_TOL[pipeline] if exact else None)


# -- time slices -------------------------------------------------------------


def _require_shrinking(sm: SpacetimeMetric) -> None:
    if sm.kind != SHRINKING:
        raise ValueError("operation is defined for the shrinking construction only")


def mean_curvature_slice(sm: SpacetimeMetric, p: SpacetimePoint) -> float:
    """Mean curvature of the slice ``{tau = const}`` with unit normal along ``+d/dtau``."""
    _require_shrinking(sm)
    _check_point(sm, p)
    a00 = _checked_time_component(sm, p.x, p.tau)
    R = float(sm.flow.scalar(np.asarray(p.x), p.tau))
    return (R - sm.n / (2 * p.tau)) / math.sqrt(a00)


def gradient_identity_residual(sm: SpacetimeMetric, p: SpacetimePoint) -> TensorValue:
    """``-grad f - tau d/dtau - Hvec`` where ``Hvec = -H a00^{-1/2} d/dtau``.

    The potential's gradient is raised with the exact inverse metric, so the
    result vanishes to rounding.
    """
    _require_shrinking(sm)
    _check_point(sm, p)
    y = p.coords
    a00 = _checked_time_component(sm, p.x, p.tau)
    df = potential(sm).gradient(y)
    g = _components(sm, y)
    grad = np.zeros(sm.dim)
    grad[0] = df[0] / a00
    grad[1:] = np.linalg.solve(g[1:, 1:], df[1:])
    H = mean_curvature_slice(sm, p)
    h_vec = np.zeros(sm.dim)
    h_vec[0] = -H / math.sqrt(a00)
    tau_vec = np.zeros(sm.dim)
    tau_vec[0] = p.tau
    return TensorValue(-grad - tau_vec - h_vec, 1, 0)


def slice_identity_defect(sm: SpacetimeMetric, p: SpacetimePoint) -> float:
    """``tau a00 - R + n/(2 tau) - N/(2 tau^2)``, zero by construction."""
    _require_shrinking(sm)
    a00 = _checked_time_component(sm, p.x, p.tau)
    R = float(sm.flow.scalar(np.asarray(p.x), p.tau))
    return p.tau * a00 - R + sm.n / (2 * p.tau) - sm.N / (2 * p.tau**2)


def psi_flow(sm: SpacetimeMetric, tau0: float, s_target: float, x=None) -> float:
    """Integrate ``dtau/ds = N / (2 s tau^2 a00(x, tau))`` from ``tau(1) = tau0``.

    ``x`` defaults to the centre of the chart.  Classic RK4 with step ``1e-3``
    in ``s``; each step is compared against two half steps and halved until
    they agree to ``1e-9``.

    Raises
    ------
    TauOutsideInterval
        If the trajectory leaves the flow's time interval.
    ConvergenceError
        If the step would have to drop below ``1e-9``.
    """
    _require_shrinking(sm)
    if s_target <= 0:
        raise ValueError("s_target must be positive")
    c = sm.flow.chart
    x = 0.5 * (np.asarray(c.lower) + np.asarray(c.upper)) if x is None else np.asarray(x, float)
    a, b = sm.flow.interval
    N = sm.N

    def rhs(s, tau):
        if not (a < tau < b):
            raise TauOutsideInterval(f"psi-flow trajectory reached tau={tau:g} outside ({a}, {b})")
        return N / (2 * s * tau**2 * _checked_time_component(sm, x, tau))

    def rk4(s, tau, h):
        k1 = rhs(s, tau)
        k2 = rhs(s + h / 2, tau + h / 2 * k1)
        k3 = rhs(s + h / 2, tau + h / 2 * k2)
        k4 = rhs(s + h, tau + h * k3)
        return tau + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    s, tau = 1.0, float(tau0)
    rhs(s, tau)
    direction = 1.0 if s_target >= 1.0 else -1.0
    h = PSI_STEP
    while direction * (s_target - s) > 1e-15:
        step = direction * min(h, direction * (s_target - s))
        full = rk4(s, tau, step)
        half = rk4(s + step / 2, rk4(s, tau, step / 2), step / 2)
        if abs(full - half) > PSI_TOL * max(1.0, abs(half)):
            h /= 2
            if h < PSI_MIN_STEP:
                raise ConvergenceError("psi-flow step fell below the minimum", best=half)
            continue
        s, tau = s + step, half
    if not (a < tau < b):
        raise TauOutsideInterval(f"psi-flow trajectory reached tau={tau:g} outside ({a}, {b})")
    return tau


# -- curvature tensor --------------------------------------------------------


def riemann_scaled(sm: SpacetimeMetric, p: SpacetimePoint) -> TensorValue:
    """``tau R_abcd`` of the shrinking metric (all indices lowered)."""
    _require_shrinking(sm)
    _check_point(sm, p)
    y = p.coords
    rm = tensor.riemann_from_connection(lambda z: _gamma_closed(sm, z), y, _steps(sm), sm.bounds)
    low = tensor.lower_first(rm.components, _components(sm, y))
    return TensorValue(p.tau * low, 0, 4, _RM_SYM)


def riemann_scaled_convergence(sm: SpacetimeMetric, p: SpacetimePoint,
                               N_values=DEFAULT_N_RIEMANN) -> ResidualReport:
    """Cauchy differences of ``tau Rm`` across consecutive ``N``.

    The report's ``N_values`` are the left endpoints ``N_k``; ``sup_norms``
    hold ``|tau Rm(N_{k+1}) - tau Rm(N_k)|``.  Passing requires either all
    differences below their roundoff floor (see ``riemann_noise_floor``) or a
    slope of at most ``-1 + 0.2`` (within ``0.2`` of ``-1`` for flows that are
    not Einstein).
    """
    _require_shrinking(sm)
    vals = _validate_N(N_values, minimum=5)
    tensors = [riemann_scaled(sm.with_N(N), p).components for N in vals]
    diffs = [float(np.max(np.abs(b - a))) for a, b in zip(tensors, tensors[1:])]
    floors = [max(CAUCHY_NOISE_FLOOR, riemann_noise_floor(sm.with_N(N), p)) for N in vals[1:]]
    einstein = sm.flow.is_einstein_shrinker
    return _assess(p, vals[:-1], diffs, exact_expected=False, tolerance=None,
                   slope_tol=RIEMANN_SLOPE_TOL, noise_floor=floors,
                   check_monotone=False, slope_is_bound=einstein)


def riemann_noise_floor(sm: SpacetimeMetric, p: SpacetimePoint) -> float:
    """Roundoff scale of ``tau Rm``: ``10 eps tau a00 / h``."""
    a00 = _checked_time_component(sm, p.x, p.tau)
    return RIEMANN_NOISE_FACTOR * np.finfo(float).eps * p.tau * a00 / tensor.BASE_STEP


def riemann_symmetry_defect(sm: SpacetimeMetric, p: SpacetimePoint) -> float:
    """Worst defect of pair antisymmetry, pair exchange and the first Bianchi identity."""
    rm = riemann_scaled(sm, p).components
    scale = max(1.0, float(np.max(np.abs(rm))))
    defects = [
        np.max(np.abs(rm + np.swapaxes(rm, 0, 1))),
        np.max(np.abs(rm + np.swapaxes(rm, 2, 3))),
        np.max(np.abs(rm - np.einsum("abcd->cdab", rm))),
        tensor.first_bianchi_defect(rm),
    ]
    return float(max(defects)) / scale
