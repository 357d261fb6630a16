"""Planar half-space polytopes: footprints, exact distances, and separation certificates.

Vehicle footprints and road-boundary blocks are convex sets {X : A @ X <= b}.
The minimum distance between two such sets can be evaluated two ways: exactly,
by vertex/edge enumeration (`primal_distance`), or through multiplier
certificates (`dual_objective` / `solve_dual`) whose feasible values
lower-bound the true distance.  A certificate with positive value yields a
separating hyperplane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import SolverFailure

FEASIBILITY_TOL = 1e-8


def rotation(theta: float) -> np.ndarray:
    """World-to-body rotation [[cos, sin], [-sin, cos]] used by the pose transform."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class Pose:
    """Planar pose; heading is continuous (never wrapped)."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x, self.y, self.theta))):
            raise ValueError(f"pose entries must be finite, got {self}")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Polytope:
    """Convex set {X in R^2 : A @ X <= b} in half-space form.

    Rows of ``A`` are outward normal directions (dimensionless), ``b`` the
    matching offsets in meters.
    """

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.ndim != 2 or A.shape[1] != 2:
            raise ValueError(f"A must have exactly 2 columns, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise ValueError(
                f"b must have one entry per row of A: {b.shape} vs {A.shape}"
            )
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValueError("polytope data must be finite")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def contains(self, point, tol: float = 1e-9) -> bool:
        point = np.asarray(point, dtype=float)
        return bool(np.all(self.A @ point <= self.b + tol))

    def vertices(self) -> np.ndarray:
        """Vertices ordered counter-clockwise (raises if empty or unbounded)."""
        return ensure_bounded_nonempty(self)


def base_polytope(length: float, width: float) -> Polytope:
    """Axis-aligned rectangular footprint of the given dimensions, centred at the origin."""
    if not (length > 0 and width > 0):
        raise ValueError(f"footprint dimensions must be positive, got {length} x {width}")
    A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    b = np.array([length / 2, length / 2, width / 2, width / 2])
    return Polytope(A, b)


def box_polytope(xmin: float, xmax: float, ymin: float, ymax: float) -> Polytope:
    """Axis-aligned box [xmin, xmax] x [ymin, ymax] (used for road-boundary blocks)."""
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"degenerate box [{xmin},{xmax}] x [{ymin},{ymax}]")
    A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    b = np.array([xmax, -xmin, ymax, -ymin])
    return Polytope(A, b)


def transform_polytope(base: Polytope, pose: Pose) -> Polytope:
    """Footprint of ``base`` moved to ``pose``: A' = A R(theta), b' = b + A R(theta) [x, y]."""
    R = rotation(pose.theta)
    AR = base.A @ R
    return Polytope(AR, base.b + AR @ pose.position)


def ensure_bounded_nonempty(P: Polytope) -> np.ndarray:
    """Validate that P is bounded and nonempty; return its CCW-ordered vertices."""
    norms = np.linalg.norm(P.A, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("polytope has a zero row normal")
    angles = np.sort(np.arctan2(P.A[:, 1], P.A[:, 0]))
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * math.pi]]))
    if gaps.max() >= math.pi - 1e-12:
        raise ValueError("polytope is unbounded (normals do not positively span the plane)")
    verts = _enumerate_vertices(P)
    if len(verts) == 0:
        raise ValueError("polytope is empty")
    return verts


def _enumerate_vertices(P: Polytope) -> np.ndarray:
    A, b = P.A, P.b
    m = len(b)
    scale = 1.0 + np.abs(b).max()
    pts = []
    for i in range(m):
        for j in range(i + 1, m):
            det = A[i, 0] * A[j, 1] - A[i, 1] * A[j, 0]
            if abs(det) < 1e-12:
                continue
            p = np.array(
                [
                    (b[i] * A[j, 1] - b[j] * A[i, 1]) / det,
                    (A[i, 0] * b[j] - A[j, 0] * b[i]) / det,
                ]
            )
            if np.all(A @ p <= b + 1e-9 * scale):
                pts.append(p)
    if not pts:
        return np.empty((0, 2))
    dedup: list[np.ndarray] = []
    for p in pts:
        if all(np.linalg.norm(p - q) >= 1e-9 * scale for q in dedup):
            dedup.append(p)
    pts = np.array(dedup)
    centre = pts.mean(axis=0)
    order = np.argsort(np.arctan2(pts[:, 1] - centre[1], pts[:, 0] - centre[0]))
    return pts[order]


def _point_segment_distance(p, a, b):
    d = b - a
    L2 = float(d @ d)
    if L2 < 1e-18:
        return float(np.linalg.norm(p - a)), a
    t = min(max(float((p - a) @ d) / L2, 0.0), 1.0)
    proj = a + t * d
    return float(np.linalg.norm(p - proj)), proj


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    # collinear / endpoint touches resolve through distance-zero checks instead
    for (a, b, c, d) in ((q1, q2, p1, d1), (q1, q2, p2, d2), (p1, p2, q1, d3), (p1, p2, q2, d4)):
        if abs(d) < 1e-12 and _point_segment_distance(c, a, b)[0] < 1e-9:
            return True
    return False


def _polygons_intersect(P: Polytope, Q: Polytope, vp: np.ndarray, vq: np.ndarray) -> bool:
    if any(Q.contains(v) for v in vp) or any(P.contains(v) for v in vq):
        return True
    np_, nq = len(vp), len(vq)
    if np_ < 2 or nq < 2:
        return False
    for i in range(np_):
        a, b = vp[i], vp[(i + 1) % np_]
        for j in range(nq):
            c, d = vq[j], vq[(j + 1) % nq]
            if _segments_intersect(a, b, c, d):
                return True
    return False


def closest_points(P: Polytope, Q: Polytope):
    """Exact minimum distance between P and Q with a witness pair (d, x_in_P, y_in_Q).

    Returns (0.0, None, None) when the sets intersect (including boundary touch).
    """
    vp = ensure_bounded_nonempty(P)
    vq = ensure_bounded_nonempty(Q)
    if _polygons_intersect(P, Q, vp, vq):
        return 0.0, None, None
    best = (math.inf, None, None)
    n_edges_q = len(vq) if len(vq) >= 3 else 1
    n_edges_p = len(vp) if len(vp) >= 3 else 1
    for v in vp:
        for j in range(n_edges_q):
            d, proj = _point_segment_distance(v, vq[j], vq[(j + 1) % len(vq)])
            if d < best[0]:
                best = (d, v.copy(), proj.copy())
    for w in vq:
        for i in range(n_edges_p):
            d, proj = _point_segment_distance(w, vp[i], vp[(i + 1) % len(vp)])
            if d < best[0]:
                best = (d, proj.copy(), w.copy())
    return best


def primal_distance(P: Polytope, Q: Polytope) -> float:
    """Minimum Euclidean distance between two bounded nonempty polytopes.

    Evaluated by convex-polygon vertex/edge enumeration; exactly zero when the
    sets intersect.  Serves as the independent oracle for every certificate test.
    """
    return closest_points(P, Q)[0]


@dataclass(frozen=True)
class DualCertificate:
    """Multiplier certificate (lambda_pq, lambda_qp, s) for a polytope pair."""

    lambda_pq: np.ndarray
    lambda_qp: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        lpq = np.atleast_1d(np.asarray(self.lambda_pq, dtype=float))
        lqp = np.atleast_1d(np.asarray(self.lambda_qp, dtype=float))
        s = np.asarray(self.s, dtype=float)
        if s.shape != (2,):
            raise ValueError(f"s must be a 2-vector, got shape {s.shape}")
        if not (np.isfinite(lpq).all() and np.isfinite(lqp).all() and np.isfinite(s).all()):
            raise ValueError("certificate entries must be finite")
        for name, arr in (("lambda_pq", lpq), ("lambda_qp", lqp), ("s", s)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _check_cert_shapes(P: Polytope, Q: Polytope, cert: DualCertificate):
    if len(cert.lambda_pq) != P.n_rows or len(cert.lambda_qp) != Q.n_rows:
        raise ValueError(
            "certificate length mismatch: "
            f"lambda_pq has {len(cert.lambda_pq)} entries for {P.n_rows} rows, "
            f"lambda_qp has {len(cert.lambda_qp)} entries for {Q.n_rows} rows"
        )


def dual_objective(P: Polytope, Q: Polytope, cert: DualCertificate) -> float:
    """Certificate value -b_P . lambda_pq - b_Q . lambda_qp (no feasibility check)."""
    _check_cert_shapes(P, Q, cert)
    return float(-(P.b @ cert.lambda_pq) - (Q.b @ cert.lambda_qp))


def dual_feasible(
    P: Polytope, Q: Polytope, cert: DualCertificate, tol: float = FEASIBILITY_TOL
) -> bool:
    """Whether the certificate satisfies the multiplier constraints within ``tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    _check_cert_shapes(P, Q, cert)
    r_p = np.abs(P.A.T @ cert.lambda_pq + cert.s).max()
    r_q = np.abs(Q.A.T @ cert.lambda_qp - cert.s).max()
    return bool(
        r_p <= tol
        and r_q <= tol
        and np.linalg.norm(cert.s) <= 1.0 + tol
        and cert.lambda_pq.min(initial=0.0) >= -tol
        and cert.lambda_qp.min(initial=0.0) >= -tol
    )


def _cone_coefficients(poly: Polytope, point: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Nonnegative multipliers on the rows active at ``point`` with A_act^T lam = target."""
    resid = poly.A @ point - poly.b
    atol = 1e-7 * (1.0 + np.abs(poly.b).max())
    active = np.where(resid >= -atol)[0]
    if len(active) == 0:
        raise SolverFailure(
            "no active rows at the closest point",
            {"point": point.tolist(), "residual": resid.tolist()},
        )
    coeffs, rnorm = nnls(poly.A[active].T, target)
    if rnorm > 1e-8 * (1.0 + np.linalg.norm(target)):
        raise SolverFailure(
            "target direction is outside the active normal cone",
            {"residual_norm": float(rnorm), "active_rows": active.tolist()},
        )
    lam = np.zeros(poly.n_rows)
    lam[active] = coeffs
    return lam


def solve_dual(P: Polytope, Q: Polytope) -> tuple[DualCertificate, float]:
    """Optimal certificate for the pair, with value equal to the primal distance.

    Built from the primal witness pair: the unit separation direction gives s,
    and nonnegative multipliers are recovered on the active rows of each set.
    Intersecting (or touching) polytopes yield the zero certificate with value 0.
    """
    d, xp, yq = closest_points(P, Q)
    if d < 1e-12:
        cert = DualCertificate(np.zeros(P.n_rows), np.zeros(Q.n_rows), np.zeros(2))
        return cert, 0.0
    s = (xp - yq) / d
    lam_p = _cone_coefficients(P, xp, -s)
    lam_q = _cone_coefficients(Q, yq, s)
    cert = DualCertificate(lam_p, lam_q, s)
    value = dual_objective(P, Q, cert)
    if abs(value - d) > 1e-6 * (1.0 + d) or not dual_feasible(P, Q, cert, 1e-7):
        raise SolverFailure(
            "certificate reconstruction failed strong-duality check",
            {"primal": d, "dual": value},
        )
    return cert, value


@dataclass(frozen=True)
class Hyperplane:
    """Line {x : normal . x = offset} with a unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.shape != (2,):
            raise ValueError(f"normal must be a 2-vector, got shape {n.shape}")
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError(f"normal must be unit length, got |n| = {np.linalg.norm(n)}")
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)

    def side(self, point) -> float:
        """Signed clearance of ``point`` from the plane along the normal."""
        return float(self.normal @ np.asarray(point, dtype=float) - self.offset)


def separating_hyperplane(P: Polytope, Q: Polytope, cert: DualCertificate) -> Hyperplane:
    """Hyperplane strictly between P and Q recovered from a positive-value certificate.

    P lies on the positive side of the normal, Q on the negative side, each
    cleared by at least half the certificate value.
    """
    if not dual_feasible(P, Q, cert):
        raise ValueError("certificate is not feasible")
    value = dual_objective(P, Q, cert)
    if value <= 0:
        raise ValueError(f"certificate value must be positive to separate, got {value}")
    s_norm = float(np.linalg.norm(cert.s))
    if s_norm < 1e-12:
        raise ValueError("certificate direction s is numerically zero")
    lo_P = -float(P.b @ cert.lambda_pq)  # s . x >= lo_P on P
    hi_Q = float(Q.b @ cert.lambda_qp)  # s . x <= hi_Q on Q
    return Hyperplane(cert.s / s_norm, (lo_P + hi_Q) / (2 * s_norm))
