"""Reproducible low-discrepancy sample points in a flow's chart."""

import numpy as np
from scipy.stats import qmc

from .flows import FlowFamily, SpacetimePoint

CHART_MARGIN = 0.05


def sample_points(flow: FlowFamily, count: int, seed: int = 0, margin: float = CHART_MARGIN,
                  tau_range=None) -> list:
    """Scrambled Halton points over the chart box (shrunk by ``margin``) times a tau range."""
    if count < 1:
        raise ValueError("count must be positive")
    lo_t, hi_t = flow.sample_interval if tau_range is None else tau_range
    lower = np.array((lo_t,) + tuple(l + margin for l in flow.chart.lower))
    upper = np.array((hi_t,) + tuple(u - margin for u in flow.chart.upper))
    unit = qmc.Halton(d=flow.n + 1, scramble=True, seed=seed).random(count)
    pts = qmc.scale(unit, lower, upper)
    return [SpacetimePoint(row[1:], row[0]) for row in pts]
