"""Quadrature rules on an interval.

The package measures every "exact" L2 quantity through a quadrature rule, so
rules carry their exactness degree and validate the basic sanity invariants
(strictly increasing nodes, positive weights, weights summing to the interval
length) at construction.

Besides the plain composite trapezoid and Gauss-Legendre rules there is a
composite Gauss rule over caller-supplied panels.  Panel-aligned rules matter
for kernels that are continuous but kinked (Green's functions): aligning the
panel boundaries with the kink locations restores spectral accuracy that a
single global rule loses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import as_vector

__all__ = [
    "Domain",
    "QuadratureRule",
    "composite_trapezoid",
    "gauss_legendre",
    "composite_gauss",
    "aligned_rule",
    "integrate",
]


@dataclass(frozen=True)
class Domain:
    """Closed interval [a, b] with a < b."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise ValueError(f"domain requires a < b, got [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights on a domain, with a known exactness degree.

    Integrates every polynomial up to ``exactness_degree`` exactly; all
    built-in rules integrate constants exactly, so the weights sum to the
    interval length (checked to 1e-12 relative at construction).
    """

    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int
    domain: Domain

    def __post_init__(self):
        nodes = as_vector(self.nodes, "nodes")
        weights = as_vector(self.weights, "weights")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.size == 0 or nodes.size != weights.size:
            raise ValueError("nodes and weights must be nonempty and equal length")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(weights <= 0.0):
            raise ValueError("weights must be positive")
        if nodes[0] < self.domain.a - 1e-12 or nodes[-1] > self.domain.b + 1e-12:
            raise ValueError("nodes must lie inside the domain")
        total = float(np.sum(weights))
        if abs(total - self.domain.length) > 1e-12 * max(1.0, self.domain.length):
            raise ValueError(
                f"weights sum to {total!r}, expected the interval length "
                f"{self.domain.length!r}"
            )

    @property
    def n_points(self) -> int:
        return self.nodes.size

    def inner(self, f_values, g_values) -> float:
        """Discrete L2 inner product of two node-value arrays."""
        f = np.asarray(f_values, dtype=float)
        g = np.asarray(g_values, dtype=float)
        return float(np.sum(self.weights * f * g))

    def norm(self, f_values) -> float:
        f = np.asarray(f_values, dtype=float)
        return float(np.sqrt(max(np.sum(self.weights * f * f), 0.0)))


def composite_trapezoid(n: int, dom: Domain) -> QuadratureRule:
    """Equispaced trapezoid rule with ``n`` nodes including both endpoints."""
    n = int(n)
    if n < 2:
        raise ValueError("composite trapezoid rule needs n >= 2")
    nodes = np.linspace(dom.a, dom.b, n)
    h = dom.length / (n - 1)
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    return QuadratureRule(nodes, weights, exactness_degree=1, domain=dom)


def gauss_legendre(n: int, dom: Domain) -> QuadratureRule:
    """Gauss-Legendre rule with ``n`` nodes mapped to ``dom`` (degree 2n-1)."""
    n = int(n)
    if n < 1:
        raise ValueError("gauss_legendre needs n >= 1")
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * dom.length
    mid = 0.5 * (dom.a + dom.b)
    return QuadratureRule(mid + half * x, half * w, exactness_degree=2 * n - 1, domain=dom)


def composite_gauss(knots, points_per_panel: int) -> QuadratureRule:
    """Gauss-Legendre quadrature applied on each panel between the knots.

    ``knots`` must be strictly increasing; the rule is exact for piecewise
    polynomials of degree ``2 q - 1`` with breakpoints at the knots.
    """
    knots = as_vector(knots, "knots")
    q = int(points_per_panel)
    if knots.size < 2 or np.any(np.diff(knots) <= 0.0):
        raise ValueError("knots must be strictly increasing with at least two entries")
    if q < 1:
        raise ValueError("points_per_panel must be >= 1")
    x, w = np.polynomial.legendre.leggauss(q)
    left = knots[:-1]
    right = knots[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (left + right)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    dom = Domain(float(knots[0]), float(knots[-1]))
    return QuadratureRule(nodes, weights, exactness_degree=2 * q - 1, domain=dom)


def aligned_rule(knots, min_points: int, min_per_panel: int = 4) -> QuadratureRule:
    """Composite Gauss rule aligned with ``knots`` holding >= min_points nodes.

    Used wherever integrands are smooth between known breakpoints (basis
    supports, collocation nodes, kernel kink lines) but not across them.
    """
    knots = np.unique(as_vector(knots, "knots"))
    panels = knots.size - 1
    if panels < 1:
        raise ValueError("need at least two distinct knots")
    q = max(min_per_panel, math.ceil(int(min_points) / panels))
    return composite_gauss(knots, q)


def integrate(rule: QuadratureRule, f) -> float:
    """Apply the rule to a callable or an array of node values."""
    values = f(rule.nodes) if callable(f) else np.asarray(f, dtype=float)
    if values.shape != rule.nodes.shape:
        raise ValueError("value array does not match the rule's nodes")
    return float(np.sum(rule.weights * values))
