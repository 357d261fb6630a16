"""Planar bicycle vehicle model: linear-tire yaw/sideslip dynamics plus pose kinematics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import SingularityError


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of one vehicle (SI units).

    Cornering stiffnesses follow the stability-derivative sign convention
    (negative values give stable sideslip dynamics).
    """

    m: float = 1204.0
    I_z: float = 1500.0
    l_f: float = 1.2
    l_r: float = 1.4
    C_F: float = -60000.0
    C_R: float = -60000.0
    body_length: float = 4.5
    body_width: float = 2.0

    def __post_init__(self):
        for name in ("m", "I_z", "l_f", "l_r", "body_length", "body_width"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class DerivedParams:
    """Lumped tire/geometry terms appearing in the yaw and sideslip equations."""

    N_r_tilde: float
    N_beta: float
    N_delta: float
    Y_r_tilde: float
    Y_beta: float
    Y_delta: float


def derived_params(p: VehicleParams) -> DerivedParams:
    """Lumped coefficients from axle positions and cornering stiffnesses."""
    return DerivedParams(
        N_r_tilde=p.l_f**2 * p.C_F + p.l_r**2 * p.C_R,
        N_beta=p.l_f * p.C_F - p.l_r * p.C_R,
        N_delta=-p.l_f * p.C_F,
        Y_r_tilde=p.l_f * p.C_F - p.l_r * p.C_R,
        Y_beta=p.C_F + p.C_R,
        Y_delta=-p.C_F,
    )


@dataclass(frozen=True)
class VehicleState:
    """State vector [r, beta, V, x, y, theta]; V must stay strictly positive."""

    r: float
    beta: float
    V: float
    x: float
    y: float
    theta: float

    def __post_init__(self):
        vals = (self.r, self.beta, self.V, self.x, self.y, self.theta)
        if not all(map(math.isfinite, vals)):
            raise ValueError(f"state entries must be finite, got {self}")
        if not self.V > 0:
            raise ValueError(f"speed must be strictly positive, got V={self.V}")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.beta, self.V, self.x, self.y, self.theta])

    @staticmethod
    def from_array(arr) -> "VehicleState":
        return VehicleState(*map(float, arr))


@dataclass(frozen=True)
class ControlInput:
    """Acceleration (m/s^2) and steering angle (rad)."""

    a: float
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.delta)):
            raise ValueError(f"control entries must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.delta])


@dataclass(frozen=True)
class Limits:
    """Bounds enforced on speed, inputs, yaw rate, and sideslip (all inclusive)."""

    V_min: float = 0.5
    V_max: float = 25.0
    a_max: float = 3.0
    delta_max: float = 0.67
    r_max: float = 0.7
    beta_max: float = 0.5

    def __post_init__(self):
        if not self.V_min > 0:
            raise ValueError(f"V_min must be positive, got {self.V_min}")
        for name in ("V_max", "a_max", "delta_max", "r_max", "beta_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.V_min < self.V_max:
            raise ValueError(f"V_min must be below V_max: {self.V_min} >= {self.V_max}")


def dynamics_rhs(r, beta, V, theta, a, delta, dp: DerivedParams, m: float, I_z: float):
    """State derivative components; generic over numpy arrays and dual numbers.

    Callers guarantee V > 0 (the yaw and sideslip rows divide by V and V^2).
    """
    r_dot = (dp.N_r_tilde / I_z) * (r / V) + (dp.N_beta / I_z) * beta + (dp.N_delta / I_z) * delta
    beta_dot = (
        (dp.Y_r_tilde / m) * (r / (V * V)) - r
        + (dp.Y_beta / m) * (beta / V)
        + (dp.Y_delta / m) * (delta / V)
    )
    x_dot = V * np.cos(theta)
    y_dot = V * np.sin(theta)
    return r_dot, beta_dot, a, x_dot, y_dot, r


def dynamics(s: VehicleState, u: ControlInput, p: VehicleParams) -> np.ndarray:
    """Time derivative of the six-component state for one vehicle."""
    if not s.V > 0:
        raise SingularityError(f"dynamics undefined at V={s.V} (model divides by V)")
    dp = derived_params(p)
    parts = dynamics_rhs(s.r, s.beta, s.V, s.theta, u.a, u.delta, dp, p.m, p.I_z)
    return np.array([float(v) for v in parts])


class LimitViolation(NamedTuple):
    field: str
    value: float
    bound: float


def check_limits(s: VehicleState, u: ControlInput, lim: Limits) -> list[LimitViolation]:
    """Violated bounds, empty when the state/input pair is admissible."""
    out = []
    if s.V < lim.V_min:
        out.append(LimitViolation("V", s.V, lim.V_min))
    if s.V > lim.V_max:
        out.append(LimitViolation("V", s.V, lim.V_max))
    if abs(u.a) > lim.a_max:
        out.append(LimitViolation("a", u.a, lim.a_max))
    if abs(u.delta) > lim.delta_max:
        out.append(LimitViolation("delta", u.delta, lim.delta_max))
    if abs(s.r) > lim.r_max:
        out.append(LimitViolation("r", s.r, lim.r_max))
    if abs(s.beta) > lim.beta_max:
        out.append(LimitViolation("beta", s.beta, lim.beta_max))
    return out


def integrate(
    s0: VehicleState,
    controls: Sequence[ControlInput],
    dt: float,
    p: VehicleParams,
) -> list[VehicleState]:
    """Fixed-step RK4 under piecewise-constant controls; returns all step boundaries.

    Used as the reference propagator when validating transcribed solutions;
    local step error is O(dt^5).
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    dp = derived_params(p)

    def f(state, u, step):
        V = state[2]
        if not V > 0:
            raise SingularityError(f"speed crossed zero during step {step} (V={V})")
        parts = dynamics_rhs(state[0], state[1], V, state[5], u.a, u.delta, dp, p.m, p.I_z)
        return np.array(parts)

    states = [s0]
    y = s0.as_array()
    for k, u in enumerate(controls):
        k1 = f(y, u, k)
        k2 = f(y + 0.5 * dt * k1, u, k)
        k3 = f(y + 0.5 * dt * k2, u, k)
        k4 = f(y + dt * k3, u, k)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not y[2] > 0:
            raise SingularityError(f"speed crossed zero during step {k} (V={y[2]})")
        states.append(VehicleState.from_array(y))
    return states


def steady_state_cornering(delta: float, V: float, p: VehicleParams) -> tuple[float, float]:
    """Equilibrium (r, beta) holding the yaw and sideslip rates at zero for fixed delta, V."""
    dp = derived_params(p)
    M = np.array(
        [
            [dp.N_r_tilde / (p.I_z * V), dp.N_beta / p.I_z],
            [dp.Y_r_tilde / (p.m * V**2) - 1.0, dp.Y_beta / (p.m * V)],
        ]
    )
    rhs = -delta * np.array([dp.N_delta / p.I_z, dp.Y_delta / (p.m * V)])
    r, beta = np.linalg.solve(M, rhs)
    return float(r), float(beta)
