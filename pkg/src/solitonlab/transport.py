"""Optimal transport between diffusing measures on evolving circles.

A circle of parameter length ``2 pi`` carries the metric ``r(tau)^2 dtheta^2``.
Measures live on ``M`` equally spaced cells and are stored as cell masses.
The density ``u`` solves ``u_tau = Lap u - (1/2) tr(dg/dtau) u``.  For the cell
mass ``w = u r dtheta`` this becomes ``w_tau = r^-2 w_thetatheta``.  So the
mass-weight evolution is a plain heat equation, and Crank-Nicolson conserves
total mass to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import CFLError, DomainError
from .flows import FlowFamily
from .lgeo import cost_matrix

TWO_PI = 2.0 * math.pi
MASS_TOL = 1e-12
MARGINAL_TOL = 1e-10
CFL_FACTOR = 0.5
DELTA_CONSTANT_MIN = 1.0
DELTA_CONSTANT_MAX = 10.0
# "refines about 4x": a doubled grid must cut violations at least 3x
REFINE_SLACK = 4.0 / 3.0
ROUNDOFF_FLOOR = 1e-12

RICCI_FLOW = "ricci-flow"
SUPER_RICCI_FLOW = "super-ricci-flow"
NOT_SUPER = "not-super"


@dataclass(frozen=True)
class EvolvingMetric1D:
    """``g(tau) = r(tau)^2 dtheta^2`` on the circle."""

    scale: Callable[[float], float]
    dscale: Callable[[float], float]
    kind: str
    interval: tuple = (-math.inf, math.inf)
    name: str = ""

    def r(self, tau: float) -> float:
        return float(self.scale(tau))

    def r_min(self, tau_a: float, tau_b: float, samples: int = 65) -> float:
        lo, hi = min(tau_a, tau_b), max(tau_a, tau_b)
        return min(self.r(t) for t in np.linspace(lo, hi, samples))

    def check_kind(self, tau_a: float, tau_b: float, samples: int = 65) -> None:
        ts = np.linspace(tau_a, tau_b, samples)
        dr = np.array([self.dscale(t) for t in ts])
        if self.kind == RICCI_FLOW and np.any(dr != 0):
            raise DomainError("a 1-D Ricci flow has constant scale (Ric vanishes)")
        if self.kind == SUPER_RICCI_FLOW and np.any(dr > 0):
            raise DomainError("a super Ricci flow on the circle needs a non-increasing scale")

    @property
    def is_super(self) -> bool:
        return self.kind in (RICCI_FLOW, SUPER_RICCI_FLOW)


def static_circle(radius: float = 1.0) -> EvolvingMetric1D:
    return EvolvingMetric1D(lambda t: radius, lambda t: 0.0, RICCI_FLOW, name=f"static(r={radius:g})")


def exponential_circle(rate: float, radius: float = 1.0) -> EvolvingMetric1D:
    """``r(tau) = radius * exp(rate * tau)``: super flow for ``rate <= 0``, not super otherwise."""
    if rate == 0:
        return static_circle(radius)
    kind = SUPER_RICCI_FLOW if rate < 0 else NOT_SUPER
    label = "shrinking" if rate < 0 else "expanding"
    return EvolvingMetric1D(
        lambda t: radius * math.exp(rate * t),
        lambda t: rate * radius * math.exp(rate * t),
        kind,
        name=f"{label}(rate={rate:g})",
    )


def circle_metric(key: str) -> EvolvingMetric1D:
    table = {
        "static": static_circle,
        "shrinking": lambda: exponential_circle(-1.0),
        "expanding": lambda: exponential_circle(1.0),
    }
    if key not in table:
        raise KeyError(f"unknown circle metric {key!r}; choose from {sorted(table)}")
    return table[key]()


@dataclass(frozen=True)
class GridMeasure:
    """Cell masses on ``M`` equal cells of the circle ``[0, 2 pi)``."""

    weights: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise ValueError("weights must be a 1-D array with at least 2 cells")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(math.fsum(w.tolist()) - 1.0) > MASS_TOL:
            raise ValueError(f"weights must sum to 1 (got {math.fsum(w.tolist())!r})")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def M(self) -> int:
        return self.weights.size

    @property
    def grid(self) -> np.ndarray:
        return TWO_PI * np.arange(self.M) / self.M

    @property
    def spacing(self) -> float:
        return TWO_PI / self.M

    def density(self, metric: EvolvingMetric1D) -> np.ndarray:
        """Density with respect to the Riemannian measure ``r dtheta``."""
        return self.weights / (metric.r(self.tau) * self.spacing)

    def at(self, tau: float) -> "GridMeasure":
        return GridMeasure(self.weights, tau)


def _normalise(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return w / math.fsum(w.tolist())


def bump(M: int, center: float, width: float, tau: float = 0.0) -> GridMeasure:
    """Wrapped Gaussian of standard deviation ``width`` (parameter units)."""
    theta = TWO_PI * np.arange(M) / M
    d = np.abs((theta - center + math.pi) % TWO_PI - math.pi)
    return GridMeasure(_normalise(np.exp(-0.5 * (d / width) ** 2)), tau)


def dirac(M: int, center: float, tau: float = 0.0) -> GridMeasure:
    k = int(round(center / TWO_PI * M)) % M
    w = np.zeros(M)
    w[k] = 1.0
    return GridMeasure(w, tau)


def uniform(M: int, tau: float = 0.0) -> GridMeasure:
    return GridMeasure(np.full(M, 1.0 / M), tau)


def random_measure(M: int, seed: int, tau: float = 0.0) -> GridMeasure:
    rng = np.random.default_rng(seed)
    return GridMeasure(_normalise(rng.random(M)), tau)


@dataclass(frozen=True)
class TransportPlan:
    matrix: np.ndarray
    cost: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    @property
    def value(self) -> float:
        return math.fsum((self.matrix * self.cost).ravel().tolist())

    def marginal_defect(self) -> float:
        return max(
            float(np.max(np.abs(self.matrix.sum(axis=1) - self.row_marginal))),
            float(np.max(np.abs(self.matrix.sum(axis=0) - self.col_marginal))),
        )

    def check(self, tol: float = MARGINAL_TOL) -> None:
        if np.any(self.matrix < 0):
            raise ValueError("transport plan has negative entries")
        if self.marginal_defect() > tol:
            raise ValueError(f"transport plan marginals off by {self.marginal_defect():.3g}")


# -- diffusion ---------------------------------------------------------------


@dataclass(frozen=True)
class DiffusionResult:
    measure: GridMeasure
    steps: int
    dtau: float
    mass_drift: float
    clipped: float


def max_time_step(metric: EvolvingMetric1D, M: int, tau_a: float, tau_b: float) -> float:
    """Largest admissible step: ``M^2 dtau <= 0.5 r_min^2``."""
    return CFL_FACTOR * metric.r_min(tau_a, tau_b) ** 2 / M**2


def _plan_steps(metric, M, tau_a, tau_b, steps):
    span = abs(tau_b - tau_a)
    limit = max_time_step(metric, M, tau_a, tau_b)
    if steps is None:
        steps = max(1, math.ceil(span / limit * (1 - 1e-12)))
    elif steps < 1:
        raise ValueError("steps must be positive")
    dtau = span / steps
    if dtau > limit * (1 + 1e-12):
        raise CFLError(
            f"time step {dtau:.3g} exceeds the admissible {limit:.3g} for M={M} "
            f"(need at least {math.ceil(span / limit)} steps)"
        )
    return steps, dtau


def _mu_schedule(metric, M, tau_a, tau_b, steps):
    dtheta = TWO_PI / M
    h = (tau_b - tau_a) / steps
    mids = tau_a + h * (np.arange(steps) + 0.5)
    r = np.array([metric.r(t) for t in mids])
    return abs(h) / (dtheta**2 * r**2)


def diffuse_detailed(measure: GridMeasure, metric: EvolvingMetric1D, tau_from: float,
                     tau_to: float, steps: Optional[int] = None) -> DiffusionResult:
    if not tau_to > tau_from:
        raise DomainError("diffusion runs forward: need tau_to > tau_from")
    a, b = metric.interval
    if not (a <= tau_from and tau_to <= b):
        raise DomainError("diffusion window leaves the metric's interval")
    M = measure.M
    steps, dtau = _plan_steps(metric, M, tau_from, tau_to, steps)
    mu = _mu_schedule(metric, M, tau_from, tau_to, steps)
    w = _kernels.heat_cn_periodic(measure.weights, mu)
    drift = abs(math.fsum(w.tolist()) - math.fsum(measure.weights.tolist()))
    clipped = float(-w[w < 0].sum())
    w = np.where(w < 0, 0.0, w)
    total = math.fsum(w.tolist())
    if abs(total - 1.0) > MASS_TOL:
        raise ArithmeticError(f"diffusion lost mass: total {total!r}")
    # rescale by the (rounding-level) total so the measure invariant holds exactly
    return DiffusionResult(GridMeasure(w / total, tau_to), steps, dtau, drift, clipped)


def diffuse(measure: GridMeasure, metric: EvolvingMetric1D, tau_from: float, tau_to: float,
            steps: Optional[int] = None) -> GridMeasure:
    """Evolve ``measure`` from ``tau_from`` to ``tau_to`` by the density equation.

    The step count defaults to the fewest steps respecting
    ``M^2 dtau <= 0.5 r_min^2``; an explicit ``steps`` that breaks the rule
    raises ``CFLError``.
    """
    return diffuse_detailed(measure, metric, tau_from, tau_to, steps).measure


def backward_heat(f, metric: EvolvingMetric1D, tau_from: float, tau_to: float,
                  steps: Optional[int] = None) -> np.ndarray:
    """Solve ``-f_tau = Lap f`` from ``tau_from`` back down to ``tau_to < tau_from``."""
    if not tau_to < tau_from:
        raise DomainError("backward heat runs toward smaller tau: need tau_to < tau_from")
    f = np.asarray(f, dtype=float)
    M = f.size
    steps, _ = _plan_steps(metric, M, tau_to, tau_from, steps)
    mu = _mu_schedule(metric, M, tau_from, tau_to, steps)
    return _kernels.heat_cn_periodic(f, mu)


def lipschitz_const(f, metric: EvolvingMetric1D, tau: float) -> float:
    """Largest adjacent-cell slope of ``f`` in arc length at time ``tau``."""
    f = np.asarray(f, dtype=float)
    dtheta = TWO_PI / f.size
    return float(np.max(np.abs(np.roll(f, -1) - f))) / (dtheta * metric.r(tau))


# -- Wasserstein distance ----------------------------------------------------


def arc_cost(M: int, radius: float) -> np.ndarray:
    k = np.arange(M)
    steps = np.abs(k[:, None] - k[None, :])
    return radius * (TWO_PI / M) * np.minimum(steps, M - steps)


def _check_pair(m1: GridMeasure, m2: GridMeasure) -> None:
    if m1.M != m2.M:
        raise ValueError(f"measures live on different grids ({m1.M} vs {m2.M} cells)")


def _cdf_parts(m1: GridMeasure, m2: GridMeasure):
    F = np.cumsum(m1.weights - m2.weights)
    c = float(np.median(F))
    return F, c


def w1_cdf(m1: GridMeasure, m2: GridMeasure, radius: float) -> float:
    """``r dtheta * min_c sum |F_k - c|`` with ``F`` the cumulative mass difference."""
    _check_pair(m1, m2)
    F, c = _cdf_parts(m1, m2)
    return radius * m1.spacing * math.fsum(np.abs(F - c).tolist())


def kantorovich_potential(m1: GridMeasure, m2: GridMeasure, radius: float) -> np.ndarray:
    """A 1-Lipschitz potential attaining the dual value.

    Increments are ``r dtheta sign(F_k - c)``; cells where ``F_k == c`` get
    signs that balance the increments around the circle.
    """
    _check_pair(m1, m2)
    F, c = _cdf_parts(m1, m2)
    sign = np.sign(F - c)
    ties = np.flatnonzero(np.isclose(F, c, rtol=0.0, atol=1e-15))
    sign[ties] = 0.0
    imbalance = int(round(sign.sum()))
    for k in ties:
        if imbalance > 0:
            sign[k], imbalance = -1.0, imbalance - 1
        elif imbalance < 0:
            sign[k], imbalance = 1.0, imbalance + 1
        else:
            break
    if imbalance != 0:
        raise ArithmeticError("could not balance the potential increments")
    step = radius * m1.spacing
    phi = np.concatenate(([0.0], np.cumsum(step * sign[:-1])))
    # phi_{k+1} - phi_k multiplies F_k in the summation by parts
    return phi


def w1_lp(m1: GridMeasure, m2: GridMeasure, radius: float, bland: bool = True):
    """Exact LP route: ``(value, TransportPlan, u, v)``."""
    _check_pair(m1, m2)
    cost = arc_cost(m1.M, radius)
    plan, u, v, _ = _kernels.transport_simplex(cost, m1.weights, m2.weights, bland=bland)
    tp = TransportPlan(plan, cost, m1.weights, m2.weights)
    tp.check()
    return tp.value, tp, u, v


@dataclass(frozen=True)
class W1Comparison:
    cdf: float
    lp: float
    dual: float
    duality_gap: float
    plan: TransportPlan

    @property
    def method_gap(self) -> float:
        return abs(self.cdf - self.lp)


def w1_compare(m1: GridMeasure, m2: GridMeasure, metric: EvolvingMetric1D,
               tau: Optional[float] = None) -> W1Comparison:
    tau = m1.tau if tau is None else tau
    r = metric.r(tau)
    cdf = w1_cdf(m1, m2, r)
    lp, plan, _, _ = w1_lp(m1, m2, r)
    phi = kantorovich_potential(m1, m2, r)
    dual = -math.fsum((phi * (m1.weights - m2.weights)).tolist())
    return W1Comparison(cdf, lp, dual, lp - dual, plan)


def w1(m1: GridMeasure, m2: GridMeasure, metric: EvolvingMetric1D, tau: Optional[float] = None,
       method: str = "cdf") -> float:
    """``W1`` under the arc distance of ``g(tau)`` (default ``tau = m1.tau``)."""
    tau = m1.tau if tau is None else tau
    r = metric.r(tau)
    if method == "cdf":
        return w1_cdf(m1, m2, r)
    if method == "lp":
        return w1_lp(m1, m2, r)[0]
    raise ValueError("method must be 'cdf' or 'lp'")


# -- monotonicity suites -----------------------------------------------------


@dataclass
class MonotonicityTrace:
    M: int
    params: list
    values: list
    dtau: float
    delta: float
    max_violation: float

    def as_dict(self) -> dict:
        return {
            "M": self.M,
            "params": list(self.params),
            "values": list(self.values),
            "dtau": self.dtau,
            "delta": self.delta,
            "max_violation": self.max_violation,
        }


@dataclass
class MonotonicityReport:
    """Upward violations of a sequence that should be non-increasing.

    The tolerance is ``delta = C (M^-2 + dtau)``, checked at ``M`` and ``2M``;
    see ``_judge`` for how ``C`` is set.
    """

    suite: str
    coarse: MonotonicityTrace
    fine: MonotonicityTrace
    passed: bool
    strictly_decreasing: bool
    max_refinement_change: float
    extras: dict = field(default_factory=dict)
    reasons: list = field(default_factory=list)

    @property
    def delta_ratio(self) -> float:
        return self.coarse.delta / self.fine.delta

    def as_dict(self) -> dict:
        return {
            "suite": self.suite,
            "coarse": self.coarse.as_dict(),
            "fine": self.fine.as_dict(),
            "delta_ratio": self.delta_ratio,
            "max_refinement_change": self.max_refinement_change,
            "strictly_decreasing": self.strictly_decreasing,
            "pass": self.passed,
            "extras": dict(self.extras),
            "reasons": list(self.reasons),
        }


def _violation(values: Sequence[float]) -> float:
    inc = np.diff(np.asarray(values, dtype=float))
    return float(max(0.0, inc.max())) if inc.size else 0.0


def _delta_base(M: int, dtau: float) -> float:
    return M**-2 + dtau


def _judge(suite, coarse, fine, extras=None):
    """Calibrate ``C`` on the coarse grid, then demand refinement on the fine one.

    ``C = max(1, violation(M) / (M^-2 + dtau))``; ``C`` above 10 means the
    coarse violation is too large to be discretisation error.  The fine grid
    must satisfy ``violation(2M) <= (4/3) C ((2M)^-2 + dtau')``.
    """
    reasons = []
    base_c, base_f = _delta_base(coarse.M, coarse.dtau), _delta_base(fine.M, fine.dtau)
    C = max(DELTA_CONSTANT_MIN, coarse.max_violation / base_c)
    coarse.delta = C * base_c
    fine.delta = C * base_f
    if C > DELTA_CONSTANT_MAX:
        reasons.append(f"M={coarse.M}: violation {coarse.max_violation:.3g} needs C={C:.3g} "
                       f"> {DELTA_CONSTANT_MAX:g}")
    if fine is not coarse and fine.max_violation > max(ROUNDOFF_FLOOR, REFINE_SLACK * fine.delta):
        reasons.append(f"M={fine.M}: violation {fine.max_violation:.3g} does not refine "
                       f"below {REFINE_SLACK * fine.delta:.3g}")
    strict = all(b < a for a, b in zip(fine.values, fine.values[1:]))
    change = float(np.max(np.abs(np.subtract(coarse.values, fine.values))))
    extras = dict(extras or {})
    extras["delta_constant"] = C
    return MonotonicityReport(suite, coarse, fine, not reasons, strict, change, extras, reasons)


def _thm31_trace(metric, m1, m2, taus, steps_per_unit):
    M = m1.M
    values = [w1(m1, m2, metric, taus[0])]
    dts = []
    cur1, cur2 = m1.at(taus[0]), m2.at(taus[0])
    for ta, tb in zip(taus, taus[1:]):
        steps = None if steps_per_unit is None else max(1, math.ceil((tb - ta) * steps_per_unit))
        r1 = diffuse_detailed(cur1, metric, ta, tb, steps)
        r2 = diffuse_detailed(cur2, metric, ta, tb, steps)
        cur1, cur2 = r1.measure, r2.measure
        dts.append(r1.dtau)
        values.append(w1(cur1, cur2, metric, tb))
    dtau = max(dts) if dts else 0.0
    return MonotonicityTrace(M, list(taus), values, dtau, _delta_base(M, dtau), _violation(values))


def thm31_suite(metric: EvolvingMetric1D, m1, m2, taus: Sequence[float], M: int = 64,
                steps_per_unit: Optional[float] = None) -> MonotonicityReport:
    """``tau -> W1(nu1(tau), nu2(tau))`` under ``g(tau)`` for two diffusions.

    ``m1`` and ``m2`` are factories ``M -> GridMeasure`` (so the check can be
    repeated at ``2M``) or fixed measures (then ``M`` is theirs and no
    refinement measure can be built beyond resampling by factory).  The
    time step defaults to the largest admissible one.  A metric that is not
    a super Ricci flow is accepted as a negative control; the report then
    normally fails.
    """
    taus = [float(t) for t in taus]
    if len(taus) < 2 or any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be strictly increasing with at least 2 entries")
    f1 = m1 if callable(m1) else (lambda M_, m=m1: m)
    f2 = m2 if callable(m2) else (lambda M_, m=m2: m)
    if not callable(m1):
        M = m1.M
    coarse = _thm31_trace(metric, f1(M), f2(M), taus, steps_per_unit)
    spu_fine = None if steps_per_unit is None else 4 * steps_per_unit
    if callable(m1) and callable(m2):
        fine = _thm31_trace(metric, f1(2 * M), f2(2 * M), taus, spu_fine)
    else:
        fine = coarse
    lpcheck = w1_compare(f1(M).at(taus[0]), f2(M).at(taus[0]), metric)
    extras = {"metric": metric.name, "kind": metric.kind, "super": metric.is_super,
              "lp_gap_initial": lpcheck.method_gap}
    return _judge("thm31", coarse, fine, extras)


@dataclass(frozen=True)
class DResult:
    D: float
    V: float
    plan: TransportPlan
    dual_bound: float
    additive: float


def d_distance(flow: FlowFamily, m1: GridMeasure, m2: GridMeasure, tau1: Optional[float] = None,
               tau2: Optional[float] = None, bland: bool = True) -> DResult:
    """``inf_pi int Q dpi - n (sqrt tau2 - sqrt tau1)`` on the flat circle.

    The cost comes from the ``Q`` export with periodic lifts of the flat line
    chart; ``V`` is the transport optimum before the additive shift and
    ``dual_bound`` the dual objective of the final potentials (weak duality
    gives ``dual_bound <= V``).
    """
    if flow.n != 1 or not flow.key.startswith("flat"):
        raise ValueError("d_distance needs a flat one-dimensional flow")
    _check_pair(m1, m2)
    tau1 = m1.tau if tau1 is None else float(tau1)
    tau2 = m2.tau if tau2 is None else float(tau2)
    if not (0 < tau1 < tau2):
        raise DomainError("need 0 < tau1 < tau2")
    grid = m1.grid[:, None]
    cost = cost_matrix(flow, grid, grid, tau1, tau2, method="closed", period=TWO_PI)
    plan, u, v, _ = _kernels.transport_simplex(cost, m1.weights, m2.weights, bland=bland)
    tp = TransportPlan(plan, cost, m1.weights, m2.weights)
    tp.check()
    V = tp.value
    dual = math.fsum((u * m1.weights).tolist() + (v * m2.weights).tolist())
    add = flow.n * (math.sqrt(tau2) - math.sqrt(tau1))
    return DResult(V - add, V, tp, dual, add)


def _thm32_trace(flow, metric, m1, m2, tau1bar, tau2bar, s_grid, steps_per_unit):
    M = m1.M
    values, dts = [], []
    for s in s_grid:
        t1, t2 = s * tau1bar, s * tau2bar
        n1, n2 = m1.at(t1), m2.at(t2)
        if s > 1:
            st1 = None if steps_per_unit is None else max(1, math.ceil((t1 - tau1bar) * steps_per_unit))
            st2 = None if steps_per_unit is None else max(1, math.ceil((t2 - tau2bar) * steps_per_unit))
            r1 = diffuse_detailed(m1.at(tau1bar), metric, tau1bar, t1, st1)
            r2 = diffuse_detailed(m2.at(tau2bar), metric, tau2bar, t2, st2)
            n1, n2 = r1.measure, r2.measure
            dts += [r1.dtau, r2.dtau]
        values.append(math.sqrt(s) * d_distance(flow, n1, n2, t1, t2).D)
    dtau = max(dts) if dts else 0.0
    return MonotonicityTrace(M, list(s_grid), values, dtau, _delta_base(M, dtau), _violation(values))


def thm32_suite(flow: FlowFamily, m1, m2, tau1bar: float, tau2bar: float,
                s_grid: Sequence[float] = tuple(1.0 + 0.02 * k for k in range(6)),
                M: int = 32, steps_per_unit: Optional[float] = None) -> MonotonicityReport:
    """``s -> sqrt(s) D(nu1(s tau1bar), s tau1bar; nu2(s tau2bar), s tau2bar)``.

    ``nu_i`` are diffusions on the static flat circle started from ``m_i`` at
    ``tau_ibar``.  ``m1`` and ``m2`` are factories ``M -> GridMeasure`` so the
    suite can repeat at ``2M``.
    """
    s_grid = [float(s) for s in s_grid]
    if not s_grid or s_grid[0] != 1.0 or any(b <= a for a, b in zip(s_grid, s_grid[1:])):
        raise ValueError("s grid must start at 1 and be strictly increasing")
    if not 0 < tau1bar < tau2bar:
        raise DomainError("need 0 < tau1bar < tau2bar")
    metric = static_circle()
    coarse = _thm32_trace(flow, metric, m1(M), m2(M), tau1bar, tau2bar, s_grid, steps_per_unit)
    spu_fine = None if steps_per_unit is None else 4 * steps_per_unit
    fine = _thm32_trace(flow, metric, m1(2 * M), m2(2 * M), tau1bar, tau2bar, s_grid, spu_fine)
    extras = {"tau1bar": tau1bar, "tau2bar": tau2bar}
    return _judge("thm32", coarse, fine, extras)
