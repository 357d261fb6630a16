"""Shared random-geometry helpers for the test suite."""

import numpy as np

from crossflow.geometry import (
    DualCertificate,
    Polytope,
    Pose,
    base_polytope,
    primal_distance,
    transform_polytope,
)


def random_rectangle(rng: np.random.Generator) -> Polytope:
    length = rng.uniform(0.5, 5.0)
    width = rng.uniform(0.5, 5.0)
    pose = Pose(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-np.pi, np.pi))
    return transform_polytope(base_polytope(length, width), pose)


def random_rectangle_pair(rng, disjoint=None):
    """A random rectangle pair; ``disjoint=True/False`` filters by intersection."""
    while True:
        P, Q = random_rectangle(rng), random_rectangle(rng)
        if disjoint is None:
            return P, Q
        d = primal_distance(P, Q)
        if disjoint and d > 1e-6:
            return P, Q
        if not disjoint and d == 0.0:
            return P, Q


def rectangle_cone_multipliers(poly: Polytope, target: np.ndarray) -> np.ndarray:
    """Exact nonnegative row multipliers with A^T lam = target for a rectangle.

    Rectangle rows come in opposed unit pairs, so the decomposition onto the
    two positive-dot rows per axis is closed form.
    """
    lam = np.zeros(poly.n_rows)
    remaining = target.copy()
    used = np.zeros(poly.n_rows, dtype=bool)
    for _ in range(2):
        dots = poly.A @ remaining
        dots[used] = -np.inf
        i = int(np.argmax(dots))
        if dots[i] <= 1e-12:
            break
        lam[i] = dots[i]
        used[i] = True
        remaining = remaining - dots[i] * poly.A[i]
    if np.linalg.norm(poly.A.T @ lam - target) > 1e-9:
        raise AssertionError("cone decomposition failed (non-rectangle input?)")
    return lam


def random_feasible_certificate(rng, P: Polytope, Q: Polytope) -> DualCertificate:
    """A random certificate projected onto the multiplier constraints."""
    phi = rng.uniform(0, 2 * np.pi)
    rho = rng.uniform(0.0, 1.0)
    s = rho * np.array([np.cos(phi), np.sin(phi)])
    lam_p = rectangle_cone_multipliers(P, -s)
    lam_q = rectangle_cone_multipliers(Q, s)
    # opposed-row padding keeps A^T lam fixed while perturbing the multipliers
    for poly, lam in ((P, lam_p), (Q, lam_q)):
        extra = rng.uniform(0.0, 0.2)
        for i in range(poly.n_rows):
            for j in range(i + 1, poly.n_rows):
                if np.linalg.norm(poly.A[i] + poly.A[j]) < 1e-12:
                    lam[i] += extra
                    lam[j] += extra
    return DualCertificate(lam_p, lam_q, s)
