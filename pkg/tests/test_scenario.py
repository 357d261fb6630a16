"""Scenario documents, road-boundary blocks, lower bound, and the fleet generator."""

import json
import math

import numpy as np
import pytest

from crossflow.errors import ScenarioError
from crossflow.geometry import Pose
from crossflow.scenario import (
    IntersectionLayout,
    ObjectiveWeights,
    Scenario,
    VehicleSpec,
    build_road_boundaries,
    generate_scenario,
    generation_capacity,
    load_scenario,
    serialize,
    theoretical_lower_bound,
)
from crossflow.vehicle import Limits, VehicleParams

MINIMAL = {
    "vehicles": [
        {
            "id": "a",
            "initial": {"x": -35.0, "y": -2.5, "theta": 0.0},
            "terminal": {"x": 35.0, "y": -2.5, "theta": 0.0},
        }
    ]
}


class TestLoadScenario:
    def test_minimal_document_gets_defaults(self):
        scn = load_scenario(json.dumps(MINIMAL))
        assert scn.d_min == 0.1
        assert scn.d_rmin == 0.1
        assert scn.limits.V_max == 25.0
        assert scn.limits.a_max == 3.0
        assert scn.limits.delta_max == 0.67
        assert scn.limits.r_max == 0.7
        assert scn.limits.beta_max == 0.5
        assert scn.vehicles[0].initial_speed == 10.0
        assert scn.params.m == 1204.0
        assert scn.transcription.intervals == 15
        assert scn.transcription.degree == 5
        assert scn.weights.gamma == 0.0

    def test_identical_poses_rejected(self):
        doc = json.loads(json.dumps(MINIMAL))
        doc["vehicles"].append(dict(doc["vehicles"][0], id="b"))
        with pytest.raises(ScenarioError, match="overlap"):
            load_scenario(json.dumps(doc))

    def test_gamma_override(self):
        doc = dict(MINIMAL, weights={"gamma": 0.0, "alpha": 2.0})
        scn = load_scenario(json.dumps(doc))
        assert scn.weights.gamma == 0.0
        assert scn.weights.alpha == 2.0

    def test_unknown_top_key_rejected(self):
        with pytest.raises(ScenarioError, match="unknown"):
            load_scenario(json.dumps(dict(MINIMAL, extra=1)))

    def test_unknown_nested_key_rejected(self):
        doc = dict(MINIMAL, limits={"V_max": 20.0, "nope": 1.0})
        with pytest.raises(ScenarioError, match="unknown"):
            load_scenario(json.dumps(doc))

    def test_parse_error_carries_location(self):
        with pytest.raises(ScenarioError, match="line"):
            load_scenario("{bad json")

    def test_duplicate_ids_rejected(self):
        doc = json.loads(json.dumps(MINIMAL))
        other = dict(doc["vehicles"][0])
        other["initial"] = {"x": -35.0, "y": 2.5, "theta": 0.0}
        other["terminal"] = {"x": 35.0, "y": 2.5, "theta": 0.0}
        doc["vehicles"].append(other)
        with pytest.raises(ScenarioError, match="duplicate"):
            load_scenario(json.dumps(doc))

    def test_empty_fleet_rejected(self):
        with pytest.raises(ScenarioError):
            load_scenario(json.dumps({"vehicles": []}))

    def test_pose_inside_block_rejected(self):
        doc = json.loads(json.dumps(MINIMAL))
        doc["vehicles"][0]["terminal"] = {"x": 20.0, "y": 20.0, "theta": 0.0}
        with pytest.raises(ScenarioError, match="boundary block"):
            load_scenario(json.dumps(doc))

    def test_speed_outside_limits_rejected(self):
        doc = json.loads(json.dumps(MINIMAL))
        doc["vehicles"][0]["initial"]["v"] = 30.0
        with pytest.raises(ScenarioError, match="initial speed"):
            load_scenario(json.dumps(doc))

    def test_round_trip(self):
        scn = generate_scenario(4, seed=3)
        text = serialize(scn)
        again = serialize(load_scenario(text))
        assert text == again


class TestBoundaries:
    def test_first_quadrant_block(self):
        blocks = build_road_boundaries(IntersectionLayout(5.0, 40.0))
        b = blocks[0]
        assert b.contains([5.0, 5.0]) and b.contains([40.0, 40.0])
        assert not b.contains([4.9, 6.0]) and not b.contains([41.0, 6.0])

    def test_centre_in_no_block(self):
        blocks = build_road_boundaries(IntersectionLayout(5.0, 40.0))
        assert not any(b.contains([0.0, 0.0]) for b in blocks)

    def test_membership_counts(self):
        blocks = build_road_boundaries(IntersectionLayout(5.0, 40.0))
        assert sum(b.contains([6.0, 6.0]) for b in blocks) == 1
        assert sum(b.contains([6.0, 0.0]) for b in blocks) == 0

    def test_blocks_disjoint_and_symmetric(self):
        from crossflow.geometry import primal_distance

        blocks = build_road_boundaries(IntersectionLayout(5.0, 40.0))
        for i in range(4):
            for j in range(i + 1, 4):
                assert primal_distance(blocks[i], blocks[j]) >= 10.0 - 1e-9
        # quarter-turn symmetry: rotating block k's vertices lands on block k+1
        for k in range(4):
            rot = np.array([[0.0, -1.0], [1.0, 0.0]])
            rotated = sorted(map(tuple, np.round(blocks[k].vertices() @ rot.T, 9)))
            target = sorted(map(tuple, np.round(blocks[(k + 1) % 4].vertices(), 9)))
            assert rotated == target


def scenario_with(vehicles, limits=None):
    return Scenario(
        layout=IntersectionLayout(),
        vehicles=tuple(vehicles),
        params=VehicleParams(),
        limits=limits or Limits(),
    )


class TestLowerBound:
    def test_accelerate_then_cruise(self):
        v = VehicleSpec("a", Pose(-35, -2.5, 0), 10.0, Pose(35, -2.5, 0))
        scn = scenario_with([v])
        expected = (-10 + math.sqrt(100 + 2 * 3 * 70)) / 3
        assert theoretical_lower_bound(scn) == pytest.approx(expected, abs=1e-12)
        assert theoretical_lower_bound(scn) == pytest.approx(4.268, abs=0.001)

    def test_pure_cruise(self):
        v = VehicleSpec("a", Pose(-25, -2.5, 0), 25.0, Pose(25, -2.5, 0))
        scn = scenario_with([v])
        assert theoretical_lower_bound(scn) == pytest.approx(2.0, abs=1e-12)

    def test_two_phase_closed_form(self):
        v = VehicleSpec("a", Pose(-50, -2.5, 0), 10.0, Pose(50, -2.5, 0))
        lim = Limits(V_min=0.5, V_max=12.0, a_max=2.0, delta_max=0.67, r_max=0.7, beta_max=0.5)
        scn = scenario_with([v], limits=lim)
        # 1 s acceleration covers 11 m, 89 m cruise at 12 m/s
        assert theoretical_lower_bound(scn) == pytest.approx(1.0 + 89.0 / 12.0, abs=1e-12)

    def test_max_over_vehicles(self):
        near = VehicleSpec("a", Pose(-10, -2.5, 0), 10.0, Pose(10, -2.5, 0))
        far = VehicleSpec("b", Pose(-35, 2.5, math.pi), 10.0, Pose(35, 2.5, math.pi))
        assert theoretical_lower_bound(scenario_with([near, far])) == pytest.approx(
            theoretical_lower_bound(scenario_with([far])), abs=1e-12
        )

    def test_monotone_in_distance_and_limits(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            d = rng.uniform(5, 100)
            v0 = rng.uniform(1, 20)
            a = rng.uniform(0.5, 5)
            vm = rng.uniform(v0, 30)
            from crossflow.scenario import _accel_cruise_time

            t = _accel_cruise_time(d, v0, a, vm)
            assert _accel_cruise_time(d + 1.0, v0, a, vm) >= t
            assert _accel_cruise_time(d, v0, a * 0.9, vm) >= t
            assert _accel_cruise_time(d, v0, a, max(v0, vm * 0.9)) >= t - 1e-12


class TestGenerator:
    def test_deterministic(self):
        a = serialize(generate_scenario(5, seed=7))
        b = serialize(generate_scenario(5, seed=7))
        assert a == b

    def test_seed_changes_fleet(self):
        a = serialize(generate_scenario(6, seed=1))
        b = serialize(generate_scenario(6, seed=2))
        assert a != b

    def test_prefix_nesting(self):
        big = generate_scenario(8, seed=11)
        small = generate_scenario(3, seed=11)
        for u, v in zip(small.vehicles, big.vehicles):
            assert u == v

    def test_reference_vehicle_and_left_turn(self):
        scn = generate_scenario(2, seed=0)
        v0 = scn.vehicles[0]
        assert v0.initial_pose == Pose(-35.0, -2.5, 0.0)
        assert v0.terminal_pose == Pose(35.0, -2.5, 0.0)
        v1 = scn.vehicles[1]
        turn = v1.terminal_pose.theta - v1.initial_pose.theta
        assert turn == pytest.approx(math.pi / 2)

    @pytest.mark.parametrize("n", [1, 2, 6, 12])
    def test_generated_fleets_validate(self, n):
        # Scenario construction re-runs all semantic checks
        scn = generate_scenario(n, seed=n * 13 + 1)
        assert len(scn.vehicles) == n
        assert theoretical_lower_bound(scn) == pytest.approx(4.268, abs=0.001)

    def test_capacity_enforced(self):
        with pytest.raises(ScenarioError):
            generate_scenario(0, seed=1)
        with pytest.raises(ScenarioError):
            generate_scenario(generation_capacity() + 1, seed=1)


class TestWeights:
    def test_q_must_be_psd(self):
        with pytest.raises(ValueError):
            ObjectiveWeights(Q=np.diag([1.0, -1.0, 0.0]))

    def test_q_must_be_symmetric(self):
        Q = np.array([[1.0, 0.5, 0], [0, 1.0, 0], [0, 0, 1.0]])
        with pytest.raises(ValueError):
            ObjectiveWeights(Q=Q)
