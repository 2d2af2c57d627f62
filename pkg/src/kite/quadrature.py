"""Quadrature rules on the unit interval and the unit square."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidInput

__all__ = ["IntegrationPlan", "interval_rule", "square_rule"]

SCHEMES = ("uniform", "gauss-legendre")
_GL_ORDER = 16


@dataclass(frozen=True)
class IntegrationPlan:
    """How integrals over ``[0, 1]^d`` are discretized.

    ``uniform`` is the periodic trapezoid rule on ``resolution`` equispaced
    nodes (spectrally accurate for smooth periodic integrands).
    ``gauss-legendre`` is a composite 16-point rule whose panel edges include
    the breakpoints (kinks) of the integrand.
    """

    scheme: str = "gauss-legendre"
    resolution: int = 2048

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidInput(f"unknown quadrature scheme {self.scheme!r}; use one of {SCHEMES}")
        if int(self.resolution) != self.resolution or self.resolution < 16:
            raise InvalidInput("quadrature resolution must be an integer >= 16")

    def with_resolution(self, resolution: int) -> "IntegrationPlan":
        return IntegrationPlan(self.scheme, int(resolution))


@lru_cache(maxsize=8)
def _gl(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def interval_rule(plan: IntegrationPlan, breakpoints=(), max_frequency: int = 0):
    """Nodes and weights on ``[0, 1]``.

    Parameters
    ----------
    plan : IntegrationPlan
    breakpoints : sequence of float
        Interior points where the integrand is not smooth; Gauss-Legendre
        panels are aligned with them.  Ignored by the uniform rule.
    max_frequency : int
        Highest Fourier frequency the rule must resolve.  The Gauss-Legendre
        rule uses at least two panels per period of ``exp(2 i pi max_frequency x)``.
    """
    if plan.scheme == "uniform":
        n = plan.resolution
        return np.arange(n) / n, np.full(n, 1.0 / n)

    edges = np.unique(np.concatenate([[0.0, 1.0], np.asarray(breakpoints, float)]))
    edges = edges[(edges >= 0.0) & (edges <= 1.0)]
    n_panels = max(plan.resolution // _GL_ORDER, 2 * int(max_frequency), len(edges) - 1)
    t, wt = _gl(_GL_ORDER)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        k = max(1, int(np.ceil(n_panels * (b - a))))
        cuts = np.linspace(a, b, k + 1)
        h = np.diff(cuts)
        xs.append((cuts[:-1, None] + h[:, None] * t[None, :]).ravel())
        ws.append((h[:, None] * wt[None, :]).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def square_rule(plan: IntegrationPlan, breakpoints=((), ()), max_frequency: int = 0):
    """Tensor-product rule on ``[0, 1]^2``; returns per-axis ``(x, w)`` pairs."""
    return tuple(interval_rule(plan, bp, max_frequency) for bp in breakpoints)
