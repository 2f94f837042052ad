"""Exact reverse Ricci flows with analytic curvature data.

Every family here solves ``dg/dtau = 2 Ric(g(tau))`` in closed form.  All
callables broadcast: ``x`` has shape ``(..., n)`` and ``tau`` is a scalar or
an array broadcastable against ``x[..., 0]``.  Matrix valued outputs have the
matrix indices last; spatial derivatives are stacked in front of them, so
``dmetric(x, tau)[..., k, i, j]`` is the partial of ``g_ij`` along ``x^k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensor
from .errors import PointOutsideChart, TauOutsideInterval
from .tensor import MetricField, ScalarField, TensorValue

Array = np.ndarray

POLE_MARGIN = 0.1


@dataclass(frozen=True)
class Chart:
    """Axis-aligned open coordinate box."""

    lower: tuple
    upper: tuple
    description: str
    embed: Optional[Callable[[Array], Array]] = None
    from_embedding: Optional[Callable[[Array], Array]] = None

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x, margin: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            np.all(x > np.asarray(self.lower) + margin)
            and np.all(x < np.asarray(self.upper) - margin)
        )


@dataclass(frozen=True)
class SpacetimePoint:
    x: tuple
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def coords(self) -> Array:
        """Space-time coordinates with time first: ``(tau, x^1, ..., x^n)``."""
        return np.array((self.tau,) + self.x)

    @classmethod
    def from_coords(cls, y) -> "SpacetimePoint":
        y = np.asarray(y, dtype=float)
        return cls(tuple(y[1:]), y[0])


def _diag(entries: Array) -> Array:
    """Stack the last axis of ``entries`` into diagonal matrices."""
    n = entries.shape[-1]
    out = np.zeros(entries.shape + (n,))
    idx = np.arange(n)
    out[..., idx, idx] = entries
    return out


@dataclass(frozen=True)
class FlowFamily:
    key: str
    chart: Chart
    interval: tuple
    metric: Callable
    dmetric: Callable
    ricci: Callable
    scalar: Callable
    grad_scalar: Callable
    scalar_tau: Callable
    dmetric_dtau: Callable
    is_einstein_shrinker: bool = False
    sample_interval: tuple = (1.0, 3.0)
    notes: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.chart.dim

    def check(self, p: SpacetimePoint, margin: float = 0.0) -> None:
        if len(p.x) != self.n:
            raise PointOutsideChart(f"{self.key}: expected {self.n} coordinates, got {len(p.x)}")
        if not self.chart.contains(p.x, margin):
            raise PointOutsideChart(f"{self.key}: x={p.x} outside chart {self.chart.description}")
        a, b = self.interval
        if not (a < p.tau < b):
            raise TauOutsideInterval(f"{self.key}: tau={p.tau} outside ({a}, {b})")


# -- built-in families -------------------------------------------------------


def _round_diag(x: Array) -> Array:
    """Diagonal of the round metric in hyperspherical angles."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    s2 = np.sin(x[..., :-1]) ** 2
    out = np.ones(x.shape)
    for k in range(1, n):
        out[..., k] = out[..., k - 1] * s2[..., k - 1]
    return out


def _round_ddiag(x: Array) -> Array:
    """``out[..., l, k]`` is the partial of the k-th diagonal entry along x^l."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = _round_diag(x)
    # the last angle never enters the metric, so only the polar angles need cot
    cot = np.cos(x[..., :-1]) / np.sin(x[..., :-1])
    out = np.zeros(x.shape[:-1] + (n, n))
    for k in range(n):
        for l in range(k):
            out[..., l, k] = 2.0 * cot[..., l] * h[..., k]
    return out


def _hypersphere_embed(x: Array) -> Array:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    p = np.empty(x.shape[:-1] + (n + 1,))
    s = np.ones(x.shape[:-1])
    for k in range(n):
        p[..., k] = s * np.cos(x[..., k])
        s = s * np.sin(x[..., k])
    p[..., n] = s
    return p


def _hypersphere_coords(p: Array) -> Array:
    p = np.asarray(p, dtype=float)
    n = p.shape[-1] - 1
    x = np.empty(p.shape[:-1] + (n,))
    for k in range(n - 1):
        x[..., k] = np.arctan2(np.linalg.norm(p[..., k + 1:], axis=-1), p[..., k])
    x[..., n - 1] = np.arctan2(p[..., n], p[..., n - 1])
    return x


def _sphere_chart(n: int, rotated: bool) -> Chart:
    lower = (POLE_MARGIN,) * (n - 1) + (-np.pi,)
    upper = (np.pi - POLE_MARGIN,) * (n - 1) + (np.pi,)
    if not rotated:
        return Chart(lower, upper, f"polar-S{n}", _hypersphere_embed, _hypersphere_coords)

    # second chart: the same angles after a cyclic shift of ambient axes
    def embed(x):
        return np.roll(_hypersphere_embed(x), -1, axis=-1)

    def coords(p):
        return _hypersphere_coords(np.roll(np.asarray(p, dtype=float), 1, axis=-1))

    return Chart(lower, upper, f"polar-S{n}-rotated", embed, coords)


def sphere_flow(n: int = 2, rotated: bool = False) -> FlowFamily:
    """Shrinking round sphere ``g(tau) = 2(n-1) tau g_round``."""
    if n < 2:
        raise ValueError("sphere_flow needs n >= 2")
    c = 2.0 * (n - 1)

    def metric(x, tau):
        return _diag(c * np.asarray(tau, dtype=float)[..., None] * _round_diag(x))

    def dmetric(x, tau):
        return _diag(c * np.asarray(tau, dtype=float)[..., None, None] * _round_ddiag(x))

    def ricci(x, tau):
        return _diag((n - 1) * _round_diag(x) + 0.0 * np.asarray(tau)[..., None])

    def scalar(x, tau):
        return n / (2.0 * np.asarray(tau, dtype=float)) + 0.0 * np.asarray(x)[..., 0]

    def grad_scalar(x, tau):
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(tau) + (n,)))

    def scalar_tau(x, tau):
        return -n / (2.0 * np.asarray(tau, dtype=float) ** 2) + 0.0 * np.asarray(x)[..., 0]

    def dmetric_dtau(x, tau):
        return _diag(c * _round_diag(x) + 0.0 * np.asarray(tau)[..., None])

    return FlowFamily(
        key=f"sphere{n}" + ("-rot" if rotated else ""),
        chart=_sphere_chart(n, rotated),
        interval=(0.05, 50.0),
        metric=metric,
        dmetric=dmetric,
        ricci=ricci,
        scalar=scalar,
        grad_scalar=grad_scalar,
        scalar_tau=scalar_tau,
        dmetric_dtau=dmetric_dtau,
        is_einstein_shrinker=True,
    )


def flat_flow(n: int = 2, half_width: float = 10.0) -> FlowFamily:
    """Static Euclidean metric, trivially a Ricci flow."""
    if n < 1:
        raise ValueError("flat_flow needs n >= 1")

    def _shape(x, tau):
        return np.broadcast_shapes(np.shape(x)[:-1], np.shape(tau))

    def metric(x, tau):
        return np.broadcast_to(np.eye(n), _shape(x, tau) + (n, n)).copy()

    def zeros_mat(x, tau):
        return np.zeros(_shape(x, tau) + (n, n))

    def dmetric(x, tau):
        return np.zeros(_shape(x, tau) + (n, n, n))

    def zero(x, tau):
        return np.zeros(_shape(x, tau))

    def grad_scalar(x, tau):
        return np.zeros(_shape(x, tau) + (n,))

    return FlowFamily(
        key=f"flat{n}",
        chart=Chart((-half_width,) * n, (half_width,) * n, "cartesian-flat"),
        interval=(0.05, 50.0),
        metric=metric,
        dmetric=dmetric,
        ricci=zeros_mat,
        scalar=zero,
        grad_scalar=grad_scalar,
        scalar_tau=zero,
        dmetric_dtau=zeros_mat,
        is_einstein_shrinker=False,
    )


def hyperbolic_flow(n: int = 2, C: float = 10.0) -> FlowFamily:
    """Expanding hyperbolic space ``g(tau) = 2(n-1)(C - tau) g_hyp`` on the Poincare ball."""
    if n < 2:
        raise ValueError("hyperbolic_flow needs n >= 2")
    c = 2.0 * (n - 1)
    half = 0.85 / np.sqrt(n)

    def conformal(x):
        r2 = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
        return 4.0 / (1.0 - r2) ** 2

    def dconformal(x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x**2, axis=-1)
        return 16.0 * x / ((1.0 - r2) ** 3)[..., None]

    def metric(x, tau):
        lam = c * (C - np.asarray(tau, dtype=float)) * conformal(x)
        return lam[..., None, None] * np.eye(n)

    def dmetric(x, tau):
        lam = c * (C - np.asarray(tau, dtype=float))[..., None] * dconformal(x)
        return lam[..., :, None, None] * np.eye(n)

    def ricci(x, tau):
        return (-(n - 1) * conformal(x) + 0.0 * np.asarray(tau))[..., None, None] * np.eye(n)

    def scalar(x, tau):
        return -n / (2.0 * (C - np.asarray(tau, dtype=float))) + 0.0 * np.asarray(x)[..., 0]

    def grad_scalar(x, tau):
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(tau) + (n,)))

    def scalar_tau(x, tau):
        return -n / (2.0 * (C - np.asarray(tau, dtype=float)) ** 2) + 0.0 * np.asarray(x)[..., 0]

    def dmetric_dtau(x, tau):
        return (-c * conformal(x) + 0.0 * np.asarray(tau))[..., None, None] * np.eye(n)

    return FlowFamily(
        key=f"hyp{n}",
        chart=Chart((-half,) * n, (half,) * n, "poincare-ball"),
        interval=(0.05, C),
        metric=metric,
        dmetric=dmetric,
        ricci=ricci,
        scalar=scalar,
        grad_scalar=grad_scalar,
        scalar_tau=scalar_tau,
        dmetric_dtau=dmetric_dtau,
        is_einstein_shrinker=False,
        notes={"C": C},
    )


def _block(m1: Array, m2: Array) -> Array:
    n1, n2 = m1.shape[-1], m2.shape[-1]
    shape = np.broadcast_shapes(m1.shape[:-2], m2.shape[:-2])
    out = np.zeros(shape + (n1 + n2, n1 + n2))
    out[..., :n1, :n1] = m1
    out[..., n1:, n1:] = m2
    return out


def product_flow(f1: FlowFamily, f2: FlowFamily) -> FlowFamily:
    """Riemannian product; Ricci data split block-diagonally."""
    n1, n2 = f1.n, f2.n
    n = n1 + n2
    lo = max(f1.interval[0], f2.interval[0])
    hi = min(f1.interval[1], f2.interval[1])
    if not lo < hi:
        raise ValueError("product_flow: factor intervals do not overlap")

    def split(x):
        x = np.asarray(x, dtype=float)
        return x[..., :n1], x[..., n1:]

    def metric(x, tau):
        a, b = split(x)
        return _block(f1.metric(a, tau), f2.metric(b, tau))

    def dmetric(x, tau):
        a, b = split(x)
        d1, d2 = f1.dmetric(a, tau), f2.dmetric(b, tau)
        shape = np.broadcast_shapes(d1.shape[:-3], d2.shape[:-3])
        out = np.zeros(shape + (n, n, n))
        out[..., :n1, :n1, :n1] = d1
        out[..., n1:, n1:, n1:] = d2
        return out

    def ricci(x, tau):
        a, b = split(x)
        return _block(f1.ricci(a, tau), f2.ricci(b, tau))

    def scalar(x, tau):
        a, b = split(x)
        return f1.scalar(a, tau) + f2.scalar(b, tau)

    def grad_scalar(x, tau):
        a, b = split(x)
        g1, g2 = f1.grad_scalar(a, tau), f2.grad_scalar(b, tau)
        shape = np.broadcast_shapes(g1.shape[:-1], g2.shape[:-1])
        return np.concatenate(
            [np.broadcast_to(g1, shape + (n1,)), np.broadcast_to(g2, shape + (n2,))], axis=-1
        )

    def scalar_tau(x, tau):
        a, b = split(x)
        return f1.scalar_tau(a, tau) + f2.scalar_tau(b, tau)

    def dmetric_dtau(x, tau):
        a, b = split(x)
        return _block(f1.dmetric_dtau(a, tau), f2.dmetric_dtau(b, tau))

    return FlowFamily(
        key=f"prod:{f1.key}+{f2.key}",
        chart=Chart(
            f1.chart.lower + f2.chart.lower,
            f1.chart.upper + f2.chart.upper,
            f"{f1.chart.description} x {f2.chart.description}",
        ),
        interval=(lo, hi),
        metric=metric,
        dmetric=dmetric,
        ricci=ricci,
        scalar=scalar,
        grad_scalar=grad_scalar,
        scalar_tau=scalar_tau,
        dmetric_dtau=dmetric_dtau,
        # only products of shrinkers with the same Einstein constant 1/(2 tau)
        is_einstein_shrinker=f1.is_einstein_shrinker and f2.is_einstein_shrinker,
        sample_interval=(
            max(f1.sample_interval[0], f2.sample_interval[0]),
            min(f1.sample_interval[1], f2.sample_interval[1]),
        ),
    )


_SIMPLE = {
    "sphere2": lambda: sphere_flow(2),
    "sphere3": lambda: sphere_flow(3),
    "flat1": lambda: flat_flow(1),
    "flat2": lambda: flat_flow(2),
    "flat3": lambda: flat_flow(3),
    "hyp2": lambda: hyperbolic_flow(2),
}

BUILTIN_KEYS = tuple(_SIMPLE) + ("prod:sphere2+flat1",)


def get_flow(key: str, n: Optional[int] = None) -> FlowFamily:
    """Resolve a flow key such as ``"sphere2"`` or ``"prod:sphere2+flat1"``.

    A bare family name (``"flat"``, ``"sphere"``, ``"hyp"``) takes its
    dimension from ``n``.
    """
    key = key.strip()
    if key.startswith("prod:"):
        parts = key[5:].split("+")
        if len(parts) != 2:
            raise KeyError(f"bad product key {key!r}")
        flow = product_flow(get_flow(parts[0]), get_flow(parts[1]))
    elif key in _SIMPLE:
        flow = _SIMPLE[key]()
    elif key in ("flat", "sphere", "hyp") and n is not None:
        flow = {"flat": flat_flow, "sphere": sphere_flow, "hyp": hyperbolic_flow}[key](n)
    else:
        raise KeyError(f"unknown flow key {key!r}")
    if n is not None and flow.n != n:
        raise KeyError(f"flow {key!r} has dimension {flow.n}, not {n}")
    return flow


# -- evaluation --------------------------------------------------------------


def metric_at(flow: FlowFamily, p: SpacetimePoint) -> TensorValue:
    flow.check(p)
    g = np.asarray(flow.metric(np.asarray(p.x), p.tau), dtype=float)
    return TensorValue(g, upper=0, lower=2, symmetries=(((0, 1), 1),))


def base_field(flow: FlowFamily, tau: float, analytic: bool = True) -> MetricField:
    """The spatial metric ``g(tau)`` as a field on the chart."""
    return MetricField(
        dim=flow.n,
        components=lambda x: flow.metric(np.asarray(x), tau),
        first=(lambda x: flow.dmetric(np.asarray(x), tau)) if analytic else None,
        bounds=(flow.chart.lower, flow.chart.upper),
    )


def scalar_field(flow: FlowFamily, tau: float, analytic: bool = True) -> ScalarField:
    return ScalarField(
        value=lambda x: flow.scalar(np.asarray(x), tau),
        gradient=(lambda x: flow.grad_scalar(np.asarray(x), tau)) if analytic else None,
    )


def flow_residual(flow: FlowFamily, p: SpacetimePoint) -> TensorValue:
    """``dg/dtau - 2 Ric`` with both terms evaluated by finite differences."""
    flow.check(p)
    x = np.asarray(p.x)
    dg = tensor.partial(lambda t: flow.metric(x, t), p.tau, 0).value
    ric = tensor.ricci(base_field(flow, p.tau, analytic=False), x).components
    res = dg - 2.0 * ric
    return TensorValue(0.5 * (res + res.T), upper=0, lower=2, symmetries=(((0, 1), 1),))


def scalar_evolution_residual(flow: FlowFamily, p: SpacetimePoint) -> float:
    """``R_tau + Laplacian R + 2|Ric|^2`` from the analytic ``R`` and ``Ric``.

    The time derivative and Laplacian are taken numerically.
    """
    flow.check(p)
    x = np.asarray(p.x)
    r_tau = tensor.partial(lambda t: flow.scalar(x, t), p.tau, 0).value
    field_ = base_field(flow, p.tau)
    lap = tensor.laplacian(field_, scalar_field(flow, p.tau, analytic=False), x)
    g = flow.metric(x, p.tau)
    ginv, _ = tensor.invert_metric(g)
    ric = flow.ricci(x, p.tau)
    ric_sq = float(np.einsum("ik,jl,ij,kl->", ginv, ginv, ric, ric))
    return float(r_tau + lap + 2.0 * ric_sq)


def bianchi_residual(flow: FlowFamily, p: SpacetimePoint) -> TensorValue:
    """``nabla_i R^i_j - (1/2) d_j R`` with numerical derivatives."""
    flow.check(p)
    x = np.asarray(p.x, dtype=float)
    tau = p.tau
    n = flow.n

    def mixed(y):
        g = flow.metric(y, tau)
        return np.linalg.solve(g, flow.ricci(y, tau))

    ric_mixed = mixed(x)
    d_mixed = np.stack([tensor.partial(mixed, x, k).value for k in range(n)])
    gamma = tensor.christoffel(base_field(flow, tau), x).components
    div = (
        np.einsum("iij->j", d_mixed)
        + np.einsum("iik,kj->j", gamma, ric_mixed)
        - np.einsum("kij,ik->j", gamma, ric_mixed)
    )
    d_r = np.array([tensor.partial(lambda y: flow.scalar(y, tau), x, k).value for k in range(n)])
    return TensorValue(div - 0.5 * d_r, upper=0, lower=1)


def analytic_vs_fd(flow: FlowFamily, p: SpacetimePoint) -> dict:
    """Componentwise gaps between the analytic suppliers and numerical values."""
    flow.check(p)
    x = np.asarray(p.x, dtype=float)
    tau = p.tau
    n = flow.n
    out = {}
    fd_dg = np.stack([tensor.partial(lambda y: flow.metric(y, tau), x, k).value for k in range(n)])
    out["dmetric"] = float(np.max(np.abs(fd_dg - flow.dmetric(x, tau))))
    fd_dt = tensor.partial(lambda t: flow.metric(x, t), tau, 0).value
    out["dmetric_dtau"] = float(np.max(np.abs(fd_dt - flow.dmetric_dtau(x, tau))))
    field_fd = base_field(flow, tau, analytic=False)
    ric_fd = tensor.ricci(field_fd, x).components
    out["ricci"] = float(np.max(np.abs(ric_fd - flow.ricci(x, tau))))
    r_fd = tensor.scalar_curvature(field_fd, x)
    out["scalar"] = abs(r_fd - float(flow.scalar(x, tau)))
    fd_grad = np.array([tensor.partial(lambda y: flow.scalar(y, tau), x, k).value for k in range(n)])
    out["grad_scalar"] = float(np.max(np.abs(fd_grad - flow.grad_scalar(x, tau))))
    fd_rt = tensor.partial(lambda t: flow.scalar(x, t), tau, 0).value
    out["scalar_tau"] = abs(float(fd_rt) - float(flow.scalar_tau(x, tau)))
    return out
