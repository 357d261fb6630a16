"""Footprint polytopes, exact distances, certificates, and separation."""

import math

import numpy as np
import pytest

from crossflow.geometry import (
    DualCertificate,
    Hyperplane,
    Pose,
    base_polytope,
    dual_feasible,
    dual_objective,
    primal_distance,
    rotation,
    separating_hyperplane,
    solve_dual,
    transform_polytope,
)

from util import random_feasible_certificate, random_rectangle_pair


def square_at(x, y, side=1.0, theta=0.0):
    return transform_polytope(base_polytope(side, side), Pose(x, y, theta))


class TestBasePolytope:
    def test_unit_square(self):
        P = base_polytope(1.0, 1.0)
        np.testing.assert_allclose(
            P.A, [[1, 0], [-1, 0], [0, -1], [0, 1]], atol=0
        )
        np.testing.assert_allclose(P.b, [0.5, 0.5, 0.5, 0.5], atol=0)

    def test_halving(self):
        np.testing.assert_allclose(base_polytope(4.0, 2.0).b, [2, 2, 1, 1], atol=0)

    def test_membership(self):
        P = base_polytope(4.5, 2.0)
        assert P.contains([2.24, 0.0])
        assert not P.contains([2.26, 0.0])

    @pytest.mark.parametrize("dims", [(0.0, 1.0), (1.0, -2.0), (-1.0, -1.0)])
    def test_rejects_nonpositive_dims(self, dims):
        with pytest.raises(ValueError):
            base_polytope(*dims)


class TestTransform:
    def test_identity_pose(self):
        base = base_polytope(4.0, 2.0)
        moved = transform_polytope(base, Pose(0.0, 0.0, 0.0))
        np.testing.assert_allclose(moved.A, base.A, atol=1e-15)
        np.testing.assert_allclose(moved.b, base.b, atol=1e-15)

    def test_pure_translation(self):
        moved = transform_polytope(base_polytope(4.0, 2.0), Pose(10.0, 5.0, 0.0))
        np.testing.assert_allclose(moved.b, [12.0, -8.0, -4.0, 6.0], atol=1e-12)

    def test_quarter_turn(self):
        base = base_polytope(4.0, 2.0)
        moved = transform_polytope(base, Pose(0.0, 0.0, math.pi / 2))
        np.testing.assert_allclose(
            moved.A, [[0, 1], [0, -1], [1, 0], [-1, 0]], atol=1e-12
        )
        np.testing.assert_allclose(moved.b, base.b, atol=1e-12)

    def test_membership_consistency(self):
        # X in transformed set  <=>  R(theta) (X - t) in base set
        rng = np.random.default_rng(7)
        base = base_polytope(4.5, 2.0)
        for _ in range(1000):
            pose = Pose(*rng.uniform(-8, 8, size=2), rng.uniform(-4, 4))
            moved = transform_polytope(base, pose)
            X = rng.uniform(-12, 12, size=2)
            back = rotation(pose.theta) @ (X - pose.position)
            assert moved.contains(X) == base.contains(back)


class TestPrimalDistance:
    def test_axis_gap(self):
        assert primal_distance(square_at(0, 0), square_at(3, 0)) == pytest.approx(2.0, abs=1e-12)

    def test_overlap_is_zero(self):
        assert primal_distance(square_at(0, 0), square_at(0.5, 0)) == 0.0

    def test_vertex_to_edge(self):
        expected = 3.0 - 0.5 - math.sqrt(2) / 2
        d = primal_distance(square_at(0, 0), square_at(3, 0, theta=math.pi / 4))
        assert d == pytest.approx(expected, abs=1e-9)

    def test_touching_is_zero(self):
        assert primal_distance(square_at(0, 0), square_at(1.0, 0)) == 0.0

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            P, Q = random_rectangle_pair(rng)
            d0 = primal_distance(P, Q)
            shift = Pose(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3))
            R = rotation(shift.theta).T

            def move(poly):
                # rotate rows back and re-offset: rigid motion x -> R x + t
                from crossflow.geometry import Polytope

                A = poly.A @ R.T
                return Polytope(A, poly.b + A @ shift.position)

            d1 = primal_distance(move(P), move(Q))
            assert abs(d1 - d0) < 1e-9

    def test_unbounded_rejected(self):
        from crossflow.geometry import Polytope

        strip = Polytope(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            primal_distance(strip, square_at(0, 0))

    def test_empty_rejected(self):
        from crossflow.geometry import Polytope

        empty = Polytope(
            np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
            np.array([-1.0, -1.0, 1.0, 1.0]),
        )
        with pytest.raises(ValueError):
            primal_distance(empty, square_at(0, 0))


def hand_certificate():
    """Optimal multipliers for unit squares at (0,0) and (3,0), value 2."""
    lam_pq = np.array([1.0, 0.0, 0.0, 0.0])   # +x row of P
    lam_qp = np.array([0.0, 1.0, 0.0, 0.0])   # -x row of Q
    return DualCertificate(lam_pq, lam_qp, np.array([-1.0, 0.0]))


class TestDualObjective:
    def test_zero_certificate(self):
        P, Q = square_at(0, 0), square_at(3, 0)
        cert = DualCertificate(np.zeros(4), np.zeros(4), np.zeros(2))
        assert dual_objective(P, Q, cert) == 0.0

    def test_hand_value(self):
        P, Q = square_at(0, 0), square_at(3, 0)
        assert dual_objective(P, Q, hand_certificate()) == pytest.approx(2.0, abs=1e-12)

    def test_linearity(self):
        P, Q = square_at(0, 0), square_at(3, 0)
        cert = hand_certificate()
        half = DualCertificate(cert.lambda_pq * 0.5, cert.lambda_qp * 0.5, cert.s * 0.5)
        assert dual_objective(P, Q, half) == pytest.approx(
            0.5 * dual_objective(P, Q, cert), abs=1e-12
        )

    def test_shape_mismatch(self):
        P, Q = square_at(0, 0), square_at(3, 0)
        bad = DualCertificate(np.zeros(3), np.zeros(4), np.zeros(2))
        with pytest.raises(ValueError):
            dual_objective(P, Q, bad)


class TestDualFeasible:
    def test_zero_certificate(self):
        P, Q = square_at(0, 0), square_at(3, 0)
        cert = DualCertificate(np.zeros(4), np.zeros(4), np.zeros(2))
        assert dual_feasible(P, Q, cert)

    def test_hand_certificate(self):
        P, Q = square_at(0, 0), square_at(3, 0)
        assert dual_feasible(P, Q, hand_certificate())

    def test_oversized_s(self):
        P, Q = square_at(0, 0), square_at(3, 0)
        cert = DualCertificate(np.zeros(4), np.zeros(4), np.array([1.5, 0.0]))
        assert not dual_feasible(P, Q, cert, tol=1e-8)

    def test_negative_lambda(self):
        P, Q = square_at(0, 0), square_at(3, 0)
        cert = DualCertificate(np.array([-1e-3, 0, 0, 0]), np.zeros(4), np.zeros(2))
        assert not dual_feasible(P, Q, cert)


class TestSolveDual:
    def test_axis_gap(self):
        P, Q = square_at(0, 0), square_at(3, 0)
        cert, value = solve_dual(P, Q)
        assert value == pytest.approx(2.0, abs=1e-6)
        assert dual_feasible(P, Q, cert)

    def test_overlapping(self):
        P, Q = square_at(0, 0), square_at(0.2, 0.1)
        cert, value = solve_dual(P, Q)
        assert value <= 0.0
        assert dual_feasible(P, Q, cert)

    def test_rotated_case(self):
        P, Q = square_at(0, 0), square_at(3, 0, theta=math.pi / 4)
        _, value = solve_dual(P, Q)
        assert value == pytest.approx(primal_distance(P, Q), abs=1e-6)

    def test_strong_duality_random(self):
        rng = np.random.default_rng(23)
        for _ in range(60):
            P, Q = random_rectangle_pair(rng, disjoint=True)
            _, value = solve_dual(P, Q)
            assert abs(value - primal_distance(P, Q)) <= 1e-6

    def test_weak_duality_random(self):
        rng = np.random.default_rng(29)
        for _ in range(300):
            P, Q = random_rectangle_pair(rng)
            cert = random_feasible_certificate(rng, P, Q)
            assert dual_feasible(P, Q, cert, 1e-9)
            assert dual_objective(P, Q, cert) <= primal_distance(P, Q) + 1e-9


class TestSeparatingHyperplane:
    def test_axis_gap(self):
        P, Q = square_at(0, 0), square_at(3, 0)
        cert, _ = solve_dual(P, Q)
        plane = separating_hyperplane(P, Q, cert)
        assert abs(abs(plane.normal[0]) - 1.0) < 1e-9
        anchor = plane.offset * plane.normal
        assert 0.5 < anchor[0] < 2.5

    def test_vertical_gap(self):
        P, Q = square_at(0, 0), square_at(0, 3)
        cert, _ = solve_dual(P, Q)
        plane = separating_hyperplane(P, Q, cert)
        assert abs(abs(plane.normal[1]) - 1.0) < 1e-9

    def test_intersecting_rejected(self):
        P, Q = square_at(0, 0), square_at(0.3, 0)
        cert, _ = solve_dual(P, Q)
        with pytest.raises(ValueError):
            separating_hyperplane(P, Q, cert)

    def test_certificate_separation_margin(self):
        # value >= delta > 0 implies each side clears the plane by >= delta / 2
        rng = np.random.default_rng(31)
        checked = 0
        while checked < 100:
            P, Q = random_rectangle_pair(rng, disjoint=True)
            cert = random_feasible_certificate(rng, P, Q)
            delta = dual_objective(P, Q, cert)
            if delta <= 1e-6:
                continue
            checked += 1
            plane = separating_hyperplane(P, Q, cert)
            p_clear = min(plane.side(v) for v in P.vertices())
            q_clear = min(-plane.side(v) for v in Q.vertices())
            assert p_clear >= delta / 2 - 1e-9
            assert q_clear >= delta / 2 - 1e-9
            assert p_clear + q_clear >= delta - 1e-9


class TestHyperplane:
    def test_requires_unit_normal(self):
        with pytest.raises(ValueError):
            Hyperplane(np.array([1.0, 1.0]), 0.0)
