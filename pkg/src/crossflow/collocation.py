"""Radau collocation coefficients on the unit interval.

Collocation nodes are the right-endpoint Radau points in (0, 1], which make
the interpolant stiffly accurate: the last node of each interval coincides
with the interval end, so state continuity needs no extra equations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

MAX_DEGREE = 9


@dataclass(frozen=True)
class TranscriptionConfig:
    """Discretization of the horizon: ``intervals`` segments, ``degree`` nodes each."""

    intervals: int = 15
    degree: int = 5
    scheme: str = "radau"

    def __post_init__(self):
        if self.intervals < 1:
            raise ValueError(f"intervals must be >= 1, got {self.intervals}")
        if not 1 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in [1, {MAX_DEGREE}], got {self.degree}")
        if self.scheme != "radau":
            raise ValueError(f"unsupported collocation scheme {self.scheme!r}")


@dataclass(frozen=True)
class CollocationCoefficients:
    """Lagrange-basis operators for one unit interval.

    nodes        : d collocation points in (0, 1], last one exactly 1
    diff_matrix  : (d, d+1) derivative of the interpolant through {0, nodes}
                   evaluated at the collocation points
    end_weights  : (d+1,) interpolant evaluation at tau = 1
    quad_weights : (d,) Radau quadrature weights on the collocation points,
                   exact for polynomials up to degree 2d - 2
    """

    nodes: np.ndarray
    diff_matrix: np.ndarray
    end_weights: np.ndarray
    quad_weights: np.ndarray


def _radau_nodes(degree: int) -> np.ndarray:
    """Right-endpoint Radau points on (0, 1] (roots of P_{d-1} + P_d mapped by x -> (1-x)/2)."""
    coeffs = np.zeros(degree + 1)
    coeffs[degree - 1] += 1.0
    coeffs[degree] += 1.0
    roots = legendre.legroots(coeffs)
    # Newton polish against the recurrence-evaluated polynomial
    for _ in range(3):
        vals = legendre.legval(roots, coeffs)
        derivs = legendre.legval(roots, legendre.legder(coeffs))
        roots = roots - vals / derivs
    nodes = np.sort((1.0 - roots) / 2.0)
    nodes[-1] = 1.0
    return nodes


def _lagrange_derivative_matrix(points: np.ndarray, at: np.ndarray) -> np.ndarray:
    """D[i, j] = d/dtau ell_j(at[i]) for the Lagrange basis on ``points``."""
    n = len(points)
    D = np.zeros((len(at), n))
    for j in range(n):
        others = np.delete(points, j)
        denom = np.prod(points[j] - others)
        for i, t in enumerate(at):
            total = 0.0
            for k_idx in range(len(others)):
                total += np.prod(np.delete(t - others, k_idx))
            D[i, j] = total / denom
    return D


def _lagrange_values(points: np.ndarray, t: float) -> np.ndarray:
    n = len(points)
    vals = np.empty(n)
    for j in range(n):
        others = np.delete(points, j)
        vals[j] = np.prod(t - others) / np.prod(points[j] - others)
    return vals


@lru_cache(maxsize=None)
def _coefficients_cached(degree: int) -> CollocationCoefficients:
    nodes = _radau_nodes(degree)
    support = np.concatenate([[0.0], nodes])
    diff = _lagrange_derivative_matrix(support, nodes)
    end = _lagrange_values(support, 1.0)
    # moments 1/(k+1) on the d nodes pin the weights; Radau theory extends
    # exactness to degree 2d - 2
    V = np.vander(nodes, increasing=True).T
    moments = 1.0 / np.arange(1, degree + 1)
    quad = np.linalg.solve(V, moments)
    for arr in (nodes, diff, end, quad):
        arr.setflags(write=False)
    return CollocationCoefficients(nodes, diff, end, quad)


def collocation_coefficients(degree: int, scheme: str = "radau") -> CollocationCoefficients:
    """Coefficients for the given degree (1..9) of the supported Radau family."""
    if scheme != "radau":
        raise ValueError(f"unsupported collocation scheme {scheme!r}")
    if not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"degree must be in [1, {MAX_DEGREE}], got {degree}")
    return _coefficients_cached(degree)
