"""Bicycle-model terms, dynamics, limits, and the RK4 reference integrator."""

import math

import numpy as np
import pytest

from crossflow.errors import SingularityError
from crossflow.vehicle import (
    ControlInput,
    Limits,
    VehicleParams,
    VehicleState,
    check_limits,
    derived_params,
    dynamics,
    integrate,
    steady_state_cornering,
)

PARAMS = VehicleParams()
LIMITS = Limits()


def straight_state(V=10.0, theta=0.0):
    return VehicleState(r=0.0, beta=0.0, V=V, x=0.0, y=0.0, theta=theta)


class TestDerivedParams:
    def test_symmetric_axles_cancel(self):
        p = VehicleParams(l_f=1.3, l_r=1.3, C_F=-5e4, C_R=-5e4)
        dp = derived_params(p)
        assert dp.N_beta == 0.0
        assert dp.Y_r_tilde == 0.0

    def test_hand_substitution(self):
        p = VehicleParams(l_f=1.0, l_r=2.0, C_F=10.0, C_R=20.0)
        dp = derived_params(p)
        assert dp.N_r_tilde == pytest.approx(90.0)
        assert dp.N_beta == pytest.approx(-30.0)
        assert dp.N_delta == pytest.approx(-10.0)
        assert dp.Y_r_tilde == pytest.approx(-30.0)
        assert dp.Y_beta == pytest.approx(30.0)
        assert dp.Y_delta == pytest.approx(-10.0)

    def test_zero_stiffness(self):
        dp = derived_params(VehicleParams(C_F=0.0, C_R=0.0))
        assert all(
            v == 0.0
            for v in (dp.N_r_tilde, dp.N_beta, dp.N_delta, dp.Y_r_tilde, dp.Y_beta, dp.Y_delta)
        )


class TestDynamics:
    def test_straight_coasting(self):
        ds = dynamics(straight_state(V=10.0), ControlInput(0.0, 0.0), PARAMS)
        np.testing.assert_allclose(ds, [0, 0, 0, 10, 0, 0], atol=1e-15)

    def test_pure_acceleration(self):
        ds = dynamics(straight_state(V=10.0), ControlInput(3.0, 0.0), PARAMS)
        assert ds[2] == 3.0
        np.testing.assert_allclose(ds[3:], [10, 0, 0], atol=1e-15)

    def test_full_state_hand_evaluation(self):
        # independent evaluation of the model equations, term by term
        p = VehicleParams(l_f=1.0, l_r=2.0, C_F=10.0, C_R=20.0, m=100.0, I_z=50.0)
        s = VehicleState(r=0.3, beta=-0.1, V=12.0, x=1.0, y=-2.0, theta=0.4)
        u = ControlInput(a=1.5, delta=0.05)
        N_r, N_b, N_d = 90.0, -30.0, -10.0
        Y_r, Y_b, Y_d = -30.0, 30.0, -10.0
        expected = [
            N_r / (50.0 * 12.0) * 0.3 + N_b / 50.0 * (-0.1) + N_d / 50.0 * 0.05,
            (Y_r / (100.0 * 144.0) - 1.0) * 0.3
            + Y_b / (100.0 * 12.0) * (-0.1)
            + Y_d / (100.0 * 12.0) * 0.05,
            1.5,
            12.0 * math.cos(0.4),
            12.0 * math.sin(0.4),
            0.3,
        ]
        np.testing.assert_allclose(dynamics(s, u, p), expected, rtol=1e-14)

    def test_rejects_zero_speed(self):
        with pytest.raises(ValueError):
            VehicleState(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            VehicleState(0.0, 0.0, -1.0, 0.0, 0.0, 0.0)

    def test_linear_in_input(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            s = VehicleState(
                r=rng.uniform(-0.5, 0.5),
                beta=rng.uniform(-0.3, 0.3),
                V=rng.uniform(1.0, 25.0),
                x=rng.uniform(-10, 10),
                y=rng.uniform(-10, 10),
                theta=rng.uniform(-3, 3),
            )
            u1 = ControlInput(*rng.uniform(-2, 2, 2))
            u2 = ControlInput(*rng.uniform(-2, 2, 2))
            u12 = ControlInput(u1.a + u2.a, u1.delta + u2.delta)
            zero = ControlInput(0.0, 0.0)
            lhs = (
                dynamics(s, u12, PARAMS)
                - dynamics(s, u1, PARAMS)
                - dynamics(s, u2, PARAMS)
                + dynamics(s, zero, PARAMS)
            )
            np.testing.assert_allclose(lhs, np.zeros(6), atol=1e-12)

    def test_pose_equivariance(self):
        # translation leaves the derivative unchanged; heading rotation turns
        # only the position rates
        s = VehicleState(r=0.2, beta=0.05, V=15.0, x=1.0, y=2.0, theta=0.3)
        u = ControlInput(1.0, 0.1)
        base = dynamics(s, u, PARAMS)
        shifted = VehicleState(s.r, s.beta, s.V, 7.0, -4.0, s.theta)
        np.testing.assert_allclose(dynamics(shifted, u, PARAMS), base, atol=1e-14)
        dth = 0.7
        turned = VehicleState(s.r, s.beta, s.V, s.x, s.y, s.theta + dth)
        rotated = dynamics(turned, u, PARAMS)
        R = np.array([[math.cos(dth), -math.sin(dth)], [math.sin(dth), math.cos(dth)]])
        np.testing.assert_allclose(rotated[3:5], R @ base[3:5], atol=1e-12)
        np.testing.assert_allclose(
            [rotated[0], rotated[1], rotated[2], rotated[5]],
            [base[0], base[1], base[2], base[5]],
            atol=1e-14,
        )


class TestCheckLimits:
    def test_nominal_is_clean(self):
        assert check_limits(straight_state(V=10.0), ControlInput(3.0, 0.0), LIMITS) == []

    def test_acceleration_violation(self):
        v = check_limits(straight_state(), ControlInput(3.5, 0.0), LIMITS)
        assert len(v) == 1 and v[0].field == "a" and v[0].value == 3.5

    def test_bounds_inclusive(self):
        assert check_limits(straight_state(V=25.0), ControlInput(0.0, 0.0), LIMITS) == []


class TestIntegrate:
    def test_straight_line(self):
        controls = [ControlInput(0.0, 0.0)] * 100
        states = integrate(straight_state(V=10.0), controls, 0.01, PARAMS)
        assert states[-1].x == pytest.approx(10.0, abs=1e-9)
        assert states[-1].y == pytest.approx(0.0, abs=1e-12)

    def test_constant_acceleration(self):
        controls = [ControlInput(2.0, 0.0)] * 200
        states = integrate(straight_state(V=10.0), controls, 0.01, PARAMS)
        assert states[-1].V == pytest.approx(14.0, abs=1e-9)
        assert states[-1].x == pytest.approx(24.0, abs=1e-9)

    def test_circular_arc(self):
        # steady-state cornering holds r, beta constant, so the path is the
        # circle of radius V / r
        V = 12.0
        delta = 0.05
        r, beta = steady_state_cornering(delta, V, PARAMS)
        s0 = VehicleState(r=r, beta=beta, V=V, x=0.0, y=0.0, theta=0.0)
        T, dt = 3.0, 0.002
        states = integrate(s0, [ControlInput(0.0, delta)] * int(T / dt), dt, PARAMS)
        R = V / r
        expect_x = R * math.sin(r * T)
        expect_y = R * (1 - math.cos(r * T))
        assert states[-1].x == pytest.approx(expect_x, abs=1e-6)
        assert states[-1].y == pytest.approx(expect_y, abs=1e-6)
        assert states[-1].r == pytest.approx(r, abs=1e-10)

    def test_fourth_order_convergence(self):
        # endpoint error against a much finer reference shrinks ~16x per halving
        s0 = VehicleState(r=0.05, beta=0.01, V=12.0, x=0.0, y=0.0, theta=0.2)
        T = 1.0

        def endpoint(n):
            states = integrate(s0, [ControlInput(0.5, 0.08)] * n, T / n, PARAMS)
            return states[-1].as_array()

        ref = endpoint(4096)
        e1 = np.linalg.norm(endpoint(64) - ref)
        e2 = np.linalg.norm(endpoint(128) - ref)
        assert e1 / e2 == pytest.approx(16.0, rel=0.2)

    def test_speed_crossing_zero(self):
        controls = [ControlInput(-3.0, 0.0)] * 500
        with pytest.raises(SingularityError):
            integrate(straight_state(V=1.0), controls, 0.01, PARAMS)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            integrate(straight_state(), [ControlInput(0, 0)], 0.0, PARAMS)
