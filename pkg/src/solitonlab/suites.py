"""Verification suites: configuration, per-check rows and report assembly.

Each suite turns a ``SuiteConfig`` into a list of ``Row`` objects.  Point
sweeps run on a thread pool, and results are gathered in task order, so
reports do not depend on scheduling.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import flows, lgeo, soliton, transport
from .errors import ConfigError
from .fitting import fit_slope
from .flows import SpacetimePoint
from .sampling import sample_points


@dataclass
class SuiteConfig:
    suite: str
    flow: Optional[str] = None
    n: Optional[int] = None
    N: Optional[tuple] = None
    points: int = 16
    seed: int = 0
    out: Optional[str] = None
    kind: Optional[str] = None
    pipeline: str = "closed-form"
    grid: Optional[int] = None
    steps: Optional[int] = None
    metric: Optional[str] = None
    workers: int = 1
    tolerances: dict = field(default_factory=dict)
    timing: bool = False

    def echo(self) -> dict:
        d = asdict(self)
        # execution details that must not change the report bytes
        for key in ("timing", "out", "workers"):
            d.pop(key)
        if d["N"] is not None:
            d["N"] = list(d["N"])
        d["tolerances"] = dict(sorted(d["tolerances"].items()))
        return d


@dataclass
class Row:
    id: str
    value: float
    tolerance: float
    passed: bool
    target: Optional[float] = None
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "value": _clean(self.value),
            "target": _clean(self.target),
            "tolerance": _clean(self.tolerance),
            "pass": bool(self.passed),
            "note": self.note,
        }


@dataclass
class SuiteReport:
    config: SuiteConfig
    rows: list
    slopes: list
    wall_time: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def as_dict(self) -> dict:
        out = {
            "config": self.config.echo(),
            "rows": [r.as_dict() for r in self.rows],
            "slopes": [{k: _clean(v) for k, v in s.items()} for s in self.slopes],
            "summary": {"rows": len(self.rows), "failed": sum(not r.passed for r in self.rows)},
            "pass": self.passed,
        }
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return out


def _clean(v):
    """JSON-safe scalar (NaN and infinities become strings)."""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _pmap(cfg: SuiteConfig, fn: Callable, items: list) -> list:
    if cfg.workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(fn, items))


def _tol(cfg: SuiteConfig, name: str, default: float) -> float:
    return float(cfg.tolerances.get(name, default))


def _flow(cfg: SuiteConfig, default: str) -> flows.FlowFamily:
    key = cfg.flow or default
    try:
        return flows.get_flow(key, cfg.n)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc


def _N(cfg: SuiteConfig, default, minimum: int = 4) -> list:
    vals = list(default if cfg.N is None else cfg.N)
    if len(vals) < minimum:
        raise ConfigError(f"suite {cfg.suite!r} needs at least {minimum} N values")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("N values must be strictly increasing")
    return [float(v) for v in vals]


def _kind(cfg: SuiteConfig, default: str) -> str:
    kind = cfg.kind or default
    if kind not in soliton.KINDS:
        raise ConfigError(f"kind must be one of {soliton.KINDS}")
    return kind


def _pid(p: SpacetimePoint, i: int) -> str:
    return f"p{i:02d}"


def _report_rows(prefix: str, rep: soliton.ResidualReport, rows: list, slopes: list) -> None:
    if rep.exact:
        tol = rep.tolerance if rep.tolerance is not None else rep.noise_floor
        for N, v in zip(rep.N_values, rep.sup_norms):
            ok = v < tol if rep.tolerance is not None else rep.passed
            rows.append(Row(f"{prefix}/N={N:g}", v, tol, ok, note="exact case"))
        return
    rows.append(Row(f"{prefix}/slope", rep.fitted_slope, rep.slope_tol,
                    abs(rep.fitted_slope - rep.target_slope) <= rep.slope_tol,
                    target=rep.target_slope))
    rows.append(Row(f"{prefix}/r2", rep.r_squared, soliton.MIN_R_SQUARED,
                    rep.r_squared > soliton.MIN_R_SQUARED, note="lower bound"))
    mono = not any("monotone" in r for r in rep.reasons)
    rows.append(Row(f"{prefix}/monotone", float(mono), 1.0, mono))
    slopes.append({"id": prefix, "slope": rep.fitted_slope, "r_squared": rep.r_squared,
                   "N_values": rep.N_values, "values": rep.sup_norms})


# -- soliton suites ----------------------------------------------------------


def _residual_suite(cfg: SuiteConfig, default_flow: str, default_kind: str):
    flow = _flow(cfg, default_flow)
    kind = _kind(cfg, default_kind)
    Ns = _N(cfg, soliton.DEFAULT_N)
    if cfg.pipeline not in soliton.PIPELINES:
        raise ConfigError(f"pipeline must be one of {soliton.PIPELINES}")
    if cfg.pipeline == "full-fd" and Ns[-1] > soliton.NUMERIC_MAX_N:
        raise ConfigError(f"full-fd pipeline is limited to N <= {soliton.NUMERIC_MAX_N:g}")
    pts = sample_points(flow, cfg.points, cfg.seed)
    sm = soliton.SpacetimeMetric(flow, Ns[0], kind)
    reps = _pmap(cfg, lambda p: soliton.soliton_residual(sm, p, Ns, cfg.pipeline), pts)
    rows, slopes = [], []
    for i, (p, rep) in enumerate(zip(pts, reps)):
        if rep.tolerance is not None and "einstein_tol" in cfg.tolerances:
            rep.tolerance = _tol(cfg, "einstein_tol", rep.tolerance)
        _report_rows(f"{flow.key}/{kind}/{_pid(p, i)}", rep, rows, slopes)
    return rows, slopes


def suite_shrinking_residual(cfg):
    return _residual_suite(cfg, "sphere2", soliton.SHRINKING)


def suite_steady_residual(cfg):
    return _residual_suite(cfg, "flat2", soliton.STEADY)


def suite_approx_gap(cfg):
    flow = _flow(cfg, "flat2")
    kind = _kind(cfg, soliton.SHRINKING)
    Ns = _N(cfg, soliton.DEFAULT_N)
    pts = sample_points(flow, cfg.points, cfg.seed)
    sm = soliton.SpacetimeMetric(flow, Ns[0], kind)
    reps = _pmap(cfg, lambda p: soliton.approx_vs_numeric_gap(sm, p, Ns), pts)
    rows, slopes = [], []
    for i, (p, rep) in enumerate(zip(pts, reps)):
        _report_rows(f"{flow.key}/{kind}/gap/{_pid(p, i)}", rep, rows, slopes)
    return rows, slopes


def suite_christoffel(cfg):
    keys = [cfg.flow] if cfg.flow else list(flows.BUILTIN_KEYS)
    N = float(cfg.N[0]) if cfg.N else 1e3
    tol = _tol(cfg, "max", 1e-6)
    rows = []
    for key in keys:
        flow = flows.get_flow(key, cfg.n) if cfg.flow else flows.get_flow(key)
        pts = sample_points(flow, cfg.points, cfg.seed)
        for kind in soliton.KINDS:
            sm = soliton.SpacetimeMetric(flow, N, kind)
            gaps = _pmap(cfg, lambda p: soliton.christoffel_crosscheck(sm, p), pts)
            for i, (p, gap) in enumerate(zip(pts, gaps)):
                rows.append(Row(f"{key}/{kind}/{_pid(p, i)}", gap, tol, gap < tol))
    return rows, []


def suite_gradient_identity(cfg):
    keys = [cfg.flow] if cfg.flow else ["flat2", "sphere2", "hyp2"]
    Ns = _N(cfg, soliton.DEFAULT_N, minimum=1)
    tol = _tol(cfg, "max", 1e-12)
    rows = []
    for key in keys:
        flow = flows.get_flow(key)
        pts = sample_points(flow, cfg.points, cfg.seed)
        tasks = [(i, p, N) for i, p in enumerate(pts) for N in Ns]
        vals = _pmap(cfg, lambda t: soliton.gradient_identity_residual(
            soliton.SpacetimeMetric(flow, t[2]), t[1]).sup_norm(), tasks)
        for (i, p, N), v in zip(tasks, vals):
            rows.append(Row(f"{key}/{_pid(p, i)}/N={N:g}", v, tol, v < tol))
    return rows, []


def suite_psi_flow(cfg):
    flow = _flow(cfg, "sphere2")
    s_target = float(cfg.tolerances.get("s", 1.2))
    rows, slopes = [], []
    if flow.is_einstein_shrinker:
        tol = _tol(cfg, "max", 1e-9)
        Ns = _N(cfg, soliton.DEFAULT_N, minimum=1)
        pts = sample_points(flow, cfg.points, cfg.seed)
        for i, p in enumerate(pts):
            for N in Ns:
                ts = soliton.psi_flow(soliton.SpacetimeMetric(flow, N), p.tau, s_target, p.x)
                err = abs(ts - s_target * p.tau)
                rows.append(Row(f"{flow.key}/{_pid(p, i)}/N={N:g}", err, tol, err <= tol))
        return rows, slopes
    Ns = _N(cfg, (1e3, 1e4, 1e5, 1e6))
    slope_tol = _tol(cfg, "slope_tol", 0.15)
    pts = sample_points(flow, min(cfg.points, 4), cfg.seed)
    for i, p in enumerate(pts):
        errs = [abs(soliton.psi_flow(soliton.SpacetimeMetric(flow, N), p.tau, s_target, p.x)
                    - s_target * p.tau) for N in Ns]
        fit = fit_slope(Ns, errs)
        pid = f"{flow.key}/{_pid(p, i)}"
        rows.append(Row(f"{pid}/slope", fit.slope, slope_tol, abs(fit.slope + 1) <= slope_tol, target=-1.0))
        slopes.append({"id": pid, "slope": fit.slope, "r_squared": fit.r_squared,
                       "N_values": Ns, "values": errs})
    return rows, slopes


def suite_riemann(cfg):
    flow = _flow(cfg, "flat2")
    Ns = _N(cfg, soliton.DEFAULT_N_RIEMANN, minimum=5)
    pts = sample_points(flow, min(cfg.points, 4), cfg.seed)
    sm = soliton.SpacetimeMetric(flow, Ns[0])
    reps = _pmap(cfg, lambda p: soliton.riemann_scaled_convergence(sm, p, Ns), pts)
    rows, slopes = [], []
    sym_tol = _tol(cfg, "symmetry", 1e-6)
    for i, (p, rep) in enumerate(zip(pts, reps)):
        pid = f"{flow.key}/riemann/{_pid(p, i)}"
        if rep.exact:
            rows.append(Row(f"{pid}/cauchy", max(rep.sup_norms), rep.noise_floor, True,
                            note="below noise floor"))
        else:
            ok = rep.passed
            rows.append(Row(f"{pid}/slope", rep.fitted_slope, rep.slope_tol, ok, target=-1.0))
            slopes.append({"id": pid, "slope": rep.fitted_slope, "r_squared": rep.r_squared,
                           "N_values": rep.N_values, "values": rep.sup_norms})
        defect = max(soliton.riemann_symmetry_defect(sm.with_N(N), p) for N in Ns)
        rows.append(Row(f"{pid}/symmetries", defect, sym_tol, defect < sym_tol))
    return rows, slopes


def suite_flow_consistency(cfg):
    keys = [cfg.flow] if cfg.flow else list(flows.BUILTIN_KEYS)
    tol = _tol(cfg, "max", 1e-7)
    rows = []
    for key in keys:
        flow = flows.get_flow(key, cfg.n) if cfg.flow else flows.get_flow(key)
        pts = sample_points(flow, cfg.points, cfg.seed)

        def check(p):
            return (flows.flow_residual(flow, p).sup_norm(),
                    abs(flows.scalar_evolution_residual(flow, p)),
                    flows.bianchi_residual(flow, p).sup_norm())

        for i, (p, vals) in enumerate(zip(pts, _pmap(cfg, check, pts))):
            for name, v in zip(("flow", "scalar-evolution", "bianchi"), vals):
                rows.append(Row(f"{key}/{_pid(p, i)}/{name}", v, tol, v < tol))
    return rows, []


def _test_curves(flow: flows.FlowFamily, tau1: float, tau2: float, K: int = 64):
    lo, hi = np.asarray(flow.chart.lower), np.asarray(flow.chart.upper)
    center = 0.5 * (lo + hi)
    width = np.minimum(hi - lo, 2.0)
    a = center - 0.15 * width
    b = center + 0.2 * width
    return {
        "constant": lgeo.DiscreteCurve.constant(a, tau1, tau2, K),
        "straight": lgeo.DiscreteCurve.straight(a, b, tau1, tau2, K, "linear"),
        "straight-sqrt": lgeo.DiscreteCurve.straight(b, a, tau1, tau2, K, "sqrt"),
        "wiggle": lgeo.DiscreteCurve.from_function(
            lambda t: center + 0.1 * width * np.sin(2.0 * t + np.arange(flow.n)), tau1, tau2, K),
    }


def suite_expansion(cfg):
    flow = _flow(cfg, "flat2")
    kind = _kind(cfg, soliton.SHRINKING)
    Ns = _N(cfg, (1e3, 1e4, 1e5, 1e6))
    sm = soliton.SpacetimeMetric(flow, Ns[0], kind)
    rows, slopes = [], []
    for name, curve in _test_curves(flow, 1.0, 4.0).items():
        rep = lgeo.expansion_check(sm, curve, Ns)
        pid = f"{flow.key}/{kind}/{name}"
        if rep.exact:
            rows.append(Row(f"{pid}/remainder", max(rep.remainders), lgeo.EXPANSION_NOISE_FLOOR,
                            True, note="remainder vanishes identically"))
            continue
        rows.append(Row(f"{pid}/slope", rep.fitted_slope, lgeo.EXPANSION_SLOPE_TOL,
                        abs(rep.fitted_slope - lgeo.EXPANSION_SLOPE) <= lgeo.EXPANSION_SLOPE_TOL,
                        target=lgeo.EXPANSION_SLOPE))
        rows.append(Row(f"{pid}/r2", rep.r_squared, lgeo.MIN_R_SQUARED,
                        rep.r_squared > lgeo.MIN_R_SQUARED, note="lower bound"))
        slopes.append({"id": pid, "slope": rep.fitted_slope, "r_squared": rep.r_squared,
                       "N_values": rep.N_values, "values": rep.remainders})
    return rows, slopes


def flat_instances(n: int, count: int, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        x = rng.uniform(-2, 2, n)
        y = rng.uniform(-2, 2, n)
        t1 = float(rng.uniform(0.5, 2.0))
        t2 = t1 + float(rng.uniform(0.5, 3.0))
        out.append((x, y, t1, t2))
    return out


def suite_geodesic(cfg):
    flow = _flow(cfg, "flat2")
    if not flow.key.startswith("flat"):
        raise ConfigError("the geodesic oracle suite needs a flat flow")
    tol = _tol(cfg, "max", 1e-4)
    inst = flat_instances(flow.n, cfg.points if cfg.points != 16 else 10, cfg.seed)

    def solve(args):
        x, y, t1, t2 = args
        curve, Q = lgeo.minimize_l(flow, x, y, t1, t2, 64)
        exact = lgeo.flat_minimizer(x, y, t1, t2)
        node_err = max(float(np.max(np.abs(g - exact(t))))
                       for t, g in zip(curve.tau_nodes, curve.gamma_nodes))
        return abs(Q - lgeo.flat_Q(x, y, t1, t2)), node_err

    rows = []
    for i, (qerr, nerr) in enumerate(_pmap(cfg, solve, inst)):
        rows.append(Row(f"{flow.key}/instance{i:02d}/Q", qerr, tol, qerr <= tol))
        rows.append(Row(f"{flow.key}/instance{i:02d}/nodes", nerr, tol, nerr <= tol))
    return rows, []


# -- transport suites --------------------------------------------------------


def _grid(cfg: SuiteConfig, default: int) -> int:
    M = default if cfg.grid is None else int(cfg.grid)
    if M < 8:
        raise ConfigError("grid needs at least 8 cells")
    return M


def _mono_rows(prefix: str, rep: transport.MonotonicityReport, expect_pass: bool) -> list:
    rows = [
        Row(f"{prefix}/violation@M={rep.coarse.M}", rep.coarse.max_violation, rep.coarse.delta,
            rep.coarse.max_violation <= rep.coarse.delta),
        Row(f"{prefix}/violation@M={rep.fine.M}", rep.fine.max_violation,
            transport.REFINE_SLACK * rep.fine.delta,
            rep.fine.max_violation <= max(transport.ROUNDOFF_FLOOR, transport.REFINE_SLACK * rep.fine.delta)),
    ]
    if expect_pass:
        return rows + [Row(f"{prefix}/monotone", float(rep.passed), 1.0, rep.passed)]
    # negative control: the suite must detect the violation
    return [Row(f"{prefix}/control-detected", float(not rep.passed), 1.0, not rep.passed,
                note="; ".join(rep.reasons))]


def suite_thm31(cfg):
    M = _grid(cfg, 64)
    levels = 11 if cfg.steps is None else int(cfg.steps)
    if levels < 2:
        raise ConfigError("steps (monitoring levels) must be at least 2")
    taus = np.linspace(0.0, 0.5, levels)
    keys = [cfg.metric] if cfg.metric else ["static", "shrinking", "expanding"]
    rows = []
    for key in keys:
        try:
            metric = transport.circle_metric(key)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        rep = transport.thm31_suite(
            metric, lambda m: transport.bump(m, math.pi / 2, 0.25),
            lambda m: transport.bump(m, 3 * math.pi / 2 - 0.5, 0.25), taus, M=M)
        expect = metric.is_super or cfg.metric is not None
        rows += _mono_rows(f"thm31/{key}", rep, expect)
    return rows, []


def suite_thm32(cfg):
    M = _grid(cfg, 32)
    levels = 6 if cfg.steps is None else int(cfg.steps)
    if levels < 2:
        raise ConfigError("steps (monitoring levels) must be at least 2")
    s_grid = [1.0 + 0.1 * k / (levels - 1) for k in range(levels)]
    flow = flows.get_flow("flat1")
    cases = {
        "bumps": (lambda m: transport.bump(m, 2.0, 0.3), lambda m: transport.bump(m, 4.0, 0.3)),
        "diracs": (lambda m: transport.dirac(m, 2.0), lambda m: transport.dirac(m, 2.0)),
    }
    rows = []
    for name, (f1, f2) in cases.items():
        rep = transport.thm32_suite(flow, f1, f2, 1.0, 4.0, s_grid, M=M)
        rows += _mono_rows(f"thm32/{name}", rep, True)
        ratio = rep.delta_ratio
        rows.append(Row(f"thm32/{name}/delta-ratio", ratio, 1.0, abs(ratio - 4.0) <= 1.0, target=4.0))
    return rows, []


def suite_w1(cfg):
    M = _grid(cfg, 64)
    tol = _tol(cfg, "max", 1e-9)
    metric = transport.static_circle()
    rows = []
    for k in range(max(1, min(cfg.points, 16))):
        m1 = transport.random_measure(M, cfg.seed * 1000 + 2 * k)
        m2 = transport.random_measure(M, cfg.seed * 1000 + 2 * k + 1)
        cmp_ = transport.w1_compare(m1, m2, metric)
        rows.append(Row(f"w1/pair{k:02d}/cdf-vs-lp", cmp_.method_gap, tol, cmp_.method_gap <= tol))
        rows.append(Row(f"w1/pair{k:02d}/duality-gap", abs(cmp_.duality_gap), tol,
                        abs(cmp_.duality_gap) <= tol))
    return rows, []


def suite_diffusion(cfg):
    M = _grid(cfg, 64)
    tol = _tol(cfg, "max", 1e-10)
    rows = []
    for key in ("static", "shrinking"):
        metric = transport.circle_metric(key)
        res = transport.diffuse_detailed(transport.bump(M, 1.0, 0.2), metric, 0.0, 0.5)
        rows.append(Row(f"diffusion/{key}/mass-drift", res.mass_drift, tol, res.mass_drift <= tol))
        rows.append(Row(f"diffusion/{key}/clipped", res.clipped, 1e-12, res.clipped <= 1e-12))
    u = transport.uniform(M)
    drift = float(np.max(np.abs(transport.diffuse(u, transport.static_circle(), 0, 0.5).weights
                                - u.weights)))
    rows.append(Row("diffusion/static/uniform-fixed", drift, 1e-12, drift <= 1e-12))
    return rows, []


VERIFY_SUITES = {
    "shrinking-residual": suite_shrinking_residual,
    "steady-residual": suite_steady_residual,
    "approx-gap": suite_approx_gap,
    "christoffel": suite_christoffel,
    "gradient-identity": suite_gradient_identity,
    "psi-flow": suite_psi_flow,
    "riemann": suite_riemann,
    "flow-consistency": suite_flow_consistency,
    "expansion": suite_expansion,
    "geodesic": suite_geodesic,
}

TRANSPORT_SUITES = {
    "thm31": suite_thm31,
    "thm32": suite_thm32,
    "w1": suite_w1,
    "diffusion": suite_diffusion,
}

ALL_SUITES = {**VERIFY_SUITES, **TRANSPORT_SUITES}

# the default sweep: (suite, overrides)
SWEEP = (
    ("flow-consistency", {}),
    ("shrinking-residual", {"flow": "sphere2"}),
    ("shrinking-residual", {"flow": "sphere3"}),
    ("shrinking-residual", {"flow": "flat2", "points": 4}),
    ("shrinking-residual", {"flow": "hyp2", "points": 4}),
    ("shrinking-residual", {"flow": "prod:sphere2+flat1", "points": 4}),
    ("steady-residual", {"flow": "sphere2", "points": 4}),
    ("steady-residual", {"flow": "flat1", "points": 4}),
    ("steady-residual", {"flow": "flat2", "points": 4}),
    ("steady-residual", {"flow": "flat3", "points": 4}),
    ("christoffel", {"N": (1e3,)}),
    ("approx-gap", {"flow": "flat2", "points": 4}),
    ("approx-gap", {"flow": "sphere2", "points": 4}),
    ("gradient-identity", {}),
    ("expansion", {"flow": "flat2"}),
    ("expansion", {"flow": "sphere2"}),
    ("expansion", {"flow": "flat2", "kind": "steady"}),
    ("geodesic", {"flow": "flat2", "points": 10}),
    ("psi-flow", {"flow": "sphere2", "points": 4}),
    ("psi-flow", {"flow": "flat2", "points": 2}),
    ("riemann", {"flow": "flat2", "points": 2}),
    ("riemann", {"flow": "sphere2", "points": 2}),
    ("thm31", {}),
    ("thm32", {}),
    ("w1", {}),
    ("diffusion", {}),
)


def run_suite(cfg: SuiteConfig) -> SuiteReport:
    """Run one suite; raises ``ConfigError`` for unknown suites or bad settings."""
    if cfg.suite not in ALL_SUITES:
        raise ConfigError(f"unknown suite {cfg.suite!r}; choose from {sorted(ALL_SUITES)}")
    if cfg.points < 1:
        raise ConfigError("points must be positive")
    if cfg.workers < 1:
        raise ConfigError("workers must be positive")
    start = time.perf_counter()
    rows, slopes = ALL_SUITES[cfg.suite](cfg)
    wall = time.perf_counter() - start if cfg.timing else None
    return SuiteReport(cfg, rows, slopes, wall)


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
