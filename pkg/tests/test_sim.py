import json
import math

import numpy as np
import pytest

from viewcone import (
    AgentState,
    Control,
    ExpertPolicy,
    Outcome,
    Placement,
    ScenarioConfig,
    SensorParams,
    generate_dataset,
    read_dataset,
    rollout,
    sample_scenario,
    write_dataset,
)
from viewcone.errors import DatasetParseError, ScenarioGenerationError, SchemaVersionError
from viewcone.sim import Bounds, replay_error
from viewcone.world import in_cone

from conftest import rng

SENSOR = SensorParams(55.0, 0.392, 0.8)


class TestSampleScenario:
    def test_zero_obstacles(self):
        cfg = ScenarioConfig(n_obstacles=(0, 0))
        sc = sample_scenario(cfg, rng(1))
        assert sc.obstacles == ()

    def test_static_tracks_constant(self):
        cfg = ScenarioConfig(obstacle_speed=(0.0, 0.0))
        sc = sample_scenario(cfg, rng(2))
        for o in sc.obstacles:
            assert o.positions.shape[0] == 1

    def test_same_seed_identical(self):
        cfg = ScenarioConfig(obstacle_speed=(2.0, 6.0))
        assert sample_scenario(cfg, rng(3)) == sample_scenario(cfg, rng(3))

    def test_moving_tracks_stay_in_bounds(self):
        cfg = ScenarioConfig(obstacle_speed=(5.0, 15.0), t_max=300)
        sc = sample_scenario(cfg, rng(4))
        for o in sc.obstacles:
            assert np.all(o.positions[:, 0] >= cfg.bounds.xmin + o.radius - 1e-9)
            assert np.all(o.positions[:, 0] <= cfg.bounds.xmax - o.radius + 1e-9)
            assert np.all(o.positions[:, 1] >= cfg.bounds.ymin + o.radius - 1e-9)
            assert np.all(o.positions[:, 1] <= cfg.bounds.ymax - o.radius + 1e-9)

    def test_start_goal_clearance(self):
        cfg = ScenarioConfig()
        for seed in range(5):
            sc = sample_scenario(cfg, rng(10 + seed))
            for o in sc.obstacles:
                clearance = cfg.clearance_factor * o.radius + cfg.agent_radius
                x, y = o.position_at(0)
                assert math.hypot(x - sc.start.p, y - sc.start.q) >= clearance
                assert math.hypot(x - sc.goal[0], y - sc.goal[1]) >= clearance

    def test_unsatisfiable_raises(self):
        cfg = ScenarioConfig(
            bounds=Bounds(0, 0, 60, 60),
            start=Placement("fixed", (30.0, 30.0)),
            goal=Placement("fixed", (31.0, 30.0)),
            n_obstacles=(40, 40),
            obstacle_radius=(10.0, 12.0),
            min_separation=50.0,
        )
        with pytest.raises(ScenarioGenerationError):
            sample_scenario(cfg, rng(5))

    def test_random_start_heading(self):
        cfg = ScenarioConfig(start_heading="random")
        headings = {round(sample_scenario(cfg, rng(s)).start.phi, 6) for s in range(6)}
        assert len(headings) > 1


class TestRollout:
    def test_zero_obstacles_reaches_goal_monotonically(self):
        cfg = ScenarioConfig(n_obstacles=(0, 0))
        sc = sample_scenario(cfg, rng(6))
        traj = rollout(sc, SENSOR, ExpertPolicy(), rng(7), cfg.t_max)
        assert traj.outcome is Outcome.REACHED_GOAL
        dists = [math.hypot(s.state.p - sc.goal[0], s.state.q - sc.goal[1]) for s in traj.steps]
        # After initial heading alignment, goal distance decreases monotonically.
        assert all(b < a + 1e-9 for a, b in zip(dists[3:], dists[4:]))

    def test_t_max_one(self):
        cfg = ScenarioConfig(n_obstacles=(0, 0))
        sc = sample_scenario(cfg, rng(8))
        traj = rollout(sc, SENSOR, ExpertPolicy(), rng(9), 1)
        assert traj.outcome is Outcome.TIMEOUT
        assert traj.n_controls == 1

    def test_deterministic(self):
        cfg = ScenarioConfig()
        sc = sample_scenario(cfg, rng(10))
        a = rollout(sc, SENSOR, ExpertPolicy(), rng(11), 200)
        b = rollout(sc, SENSOR, ExpertPolicy(), rng(11), 200)
        assert a == b

    def test_error_outcome_on_nonfinite_policy(self):
        cfg = ScenarioConfig(n_obstacles=(0, 0))
        sc = sample_scenario(cfg, rng(12))

        def bad_policy(state, belief, scenario, t):
            return Control(v=math.nan, omega=0.0)

        traj = rollout(sc, SENSOR, bad_policy, rng(13), 50)
        assert traj.outcome is Outcome.ERROR

    def test_terminal_step_has_zero_control(self):
        cfg = ScenarioConfig(n_obstacles=(0, 0))
        sc = sample_scenario(cfg, rng(14))
        traj = rollout(sc, SENSOR, ExpertPolicy(), rng(15), 600)
        last = traj.steps[-1]
        assert (last.control.v, last.control.omega) == (0.0, 0.0)

    def test_detection_legality(self, small_dataset):
        for traj in small_dataset.trajectories:
            for st in traj.steps:
                for oid in st.detections:
                    o = traj.scenario.obstacle_by_id(oid)
                    assert in_cone(
                        (st.state.p, st.state.q),
                        st.state.psi,
                        o.position_at(st.t),
                        SENSOR.r_obs,
                        SENSOR.theta_obs,
                    )


class TestGenerateDataset:
    def test_count_and_meta(self, small_dataset):
        assert len(small_dataset) == 12
        assert small_dataset.meta.mode == "unicycle"
        assert small_dataset.meta.sensor == SENSOR
        assert small_dataset.meta.angle_convention == "half"

    def test_reproducible(self):
        cfg = ScenarioConfig()
        a = generate_dataset(cfg, SENSOR, ExpertPolicy(), 3, seed=5)
        b = generate_dataset(cfg, SENSOR, ExpertPolicy(), 3, seed=5)
        assert a == b

    def test_different_seeds_differ(self):
        cfg = ScenarioConfig()
        a = generate_dataset(cfg, SENSOR, ExpertPolicy(), 2, seed=5)
        b = generate_dataset(cfg, SENSOR, ExpertPolicy(), 2, seed=6)
        assert a != b

    def test_parallel_matches_serial(self):
        cfg = ScenarioConfig()
        a = generate_dataset(cfg, SENSOR, ExpertPolicy(), 4, seed=5)
        b = generate_dataset(cfg, SENSOR, ExpertPolicy(), 4, seed=5, jobs=2)
        assert a == b

    def test_replay_consistency(self, small_dataset):
        for traj in small_dataset.trajectories:
            assert replay_error(traj, "unicycle") < 1e-9

    def test_scenario_ids_assigned(self, small_dataset):
        assert [t.scenario_id for t in small_dataset.trajectories] == list(range(12))

    def test_scenario_reuse_aligns_streams(self, small_dataset):
        cfg = ScenarioConfig()
        scenarios = [t.scenario for t in small_dataset.trajectories]
        again = generate_dataset(
            cfg, SENSOR, ExpertPolicy(), 12, seed=77, scenarios=scenarios
        )
        assert again == small_dataset


class TestDatasetIO:
    def test_round_trip(self, small_dataset, tmp_path):
        path = tmp_path / "d.jsonl"
        write_dataset(small_dataset, path)
        assert read_dataset(path) == small_dataset

    def test_round_trip_empty_obstacles(self, tmp_path):
        cfg = ScenarioConfig(n_obstacles=(0, 0))
        ds = generate_dataset(cfg, SENSOR, ExpertPolicy(), 1, seed=1)
        path = tmp_path / "d.jsonl"
        write_dataset(ds, path)
        assert read_dataset(path) == ds

    def test_line_count(self, small_dataset, tmp_path):
        path = tmp_path / "d.jsonl"
        write_dataset(small_dataset, path)
        assert len(path.read_text().splitlines()) == 13

    def test_unknown_schema_version(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"schema": 999, "mode": "unicycle", "h": 0.1}) + "\n")
        with pytest.raises(SchemaVersionError):
            read_dataset(path)

    def test_malformed_line_names_line_number(self, small_dataset, tmp_path):
        path = tmp_path / "d.jsonl"
        write_dataset(small_dataset, path)
        lines = path.read_text().splitlines()
        lines[3] = lines[3][:40]  # truncate a trajectory object
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetParseError, match=":4:"):
            read_dataset(path)

    def test_bad_mode_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"schema": 1, "mode": "hovercraft", "h": 0.1}) + "\n")
        with pytest.raises(DatasetParseError):
            read_dataset(path)

    def test_write_is_deterministic(self, small_dataset, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_dataset(small_dataset, p1)
        write_dataset(small_dataset, p2)
        assert p1.read_bytes() == p2.read_bytes()
