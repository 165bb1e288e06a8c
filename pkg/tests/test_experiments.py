"""Scenario config, experiment drivers, report files, and the CLI."""
import csv
import json
import math

import numpy as np
import pytest
import yaml

from schoolmpc import cli
from schoolmpc.config import (
    ScenarioConfig,
    builtin_scenario,
    default_scenario,
    load_scenario,
)
from schoolmpc.errors import ConfigError, SchoolError
from schoolmpc.experiments import (
    PARAM_SWEEP_CASES,
    asymptotic_cumulative_error,
    bound_audit_rows,
    grid_compare_rows,
    initialize_school,
    open_loop_rows,
    run_single_trial,
    run_trials,
    sweep_rows,
    timing_rows,
    trial_seeds,
)
from schoolmpc.model import mass_center
from schoolmpc.mpc import ReferenceSphere
from schoolmpc.reporting import (
    canonical_json,
    config_hash,
    write_csv,
    write_manifest,
    write_trajectory,
)


def tiny_scenario(**extra):
    # small school, short run, lean solver: keeps closed-loop tests fast
    values = {
        "model.n": 8,
        "controller.period": 10,
        "controller.horizon": 10,
        "controller.restarts": 1,
        "controller.max_iterations": 8,
        "run.steps": 30,
        "run.trials": 2,
        "run.base_seed": 7,
    }
    values.update(extra)
    return default_scenario().with_values(values)


def read_csv_rows(path):
    with open(path) as fh:
        first = fh.readline()
        assert first.startswith("# generated ")
        return list(csv.DictReader(fh))


def csv_body(path):
    with open(path) as fh:
        lines = fh.readlines()
    assert lines[0].startswith("# generated ")
    return "".join(lines[1:])


class TestScenarioConfig:
    def test_default_round_trip(self):
        d = default_scenario().to_dict()
        again = ScenarioConfig.from_dict(d)
        assert again.to_dict() == d

    def test_defaults(self):
        s = default_scenario()
        assert s.model["n"] == 100
        assert s.model["noise_scale"] == 1.0
        assert s.controller["period"] == 30
        assert s.controller["horizon"] == 60
        assert s.controller["predictor"] == "dynamic"
        assert s.reference["radius"] == 2000.0
        assert s.run == {
            "steps": 1000,
            "trials": 20,
            "base_seed": 2024,
            "init_radius": None,
        }

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"plant": {"n": 10}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"model": {"speeed": 1.0}})

    def test_schema_version_checked(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"schema_version": 99})

    def test_with_values_bad_keys(self):
        s = default_scenario()
        with pytest.raises(ConfigError):
            s.with_values({"model.bogus": 1})
        with pytest.raises(ConfigError):
            s.with_values({"bogus.n": 1})
        with pytest.raises(ConfigError):
            s.with_values({"n": 1})

    def test_with_values_does_not_mutate(self):
        base = default_scenario()
        changed = base.with_values({"model.n": 12})
        assert base.model["n"] == 100
        assert changed.model["n"] == 12

    def test_invalid_values_rejected(self):
        s = default_scenario()
        for bad in (
            {"model.n": 0},
            {"model.tau": -0.1},
            {"controller.period": 0},
            {"controller.predictor": "bogus"},
            {"reference.radius": -5.0},
            {"run.steps": 0},
            {"run.trials": 0},
            {"run.init_radius": -1.0},
        ):
            with pytest.raises(ConfigError):
                s.with_values(bad)

    def test_init_radius_default_is_half_attraction(self):
        s = default_scenario()
        assert s.init_radius == 0.5 * s.model["attraction_radius"]
        explicit = s.with_values({"run.init_radius": 123.0})
        assert explicit.init_radius == 123.0

    def test_builtin_base(self):
        s = builtin_scenario("base")
        assert s.name == "base"
        assert s.to_dict()["model"] == default_scenario().to_dict()["model"]

    def test_builtin_missing_raises(self):
        with pytest.raises(ConfigError):
            builtin_scenario("no_such_scenario")

    def test_load_scenario_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / "nope.yaml")

    def test_load_scenario_round_trip(self, tmp_path):
        s = tiny_scenario()
        path = tmp_path / "s.yaml"
        path.write_text(yaml.safe_dump(s.to_dict()))
        loaded = load_scenario(path)
        assert loaded.to_dict() == s.to_dict()

    def test_partial_file_fills_defaults(self, tmp_path):
        path = tmp_path / "s.yaml"
        path.write_text("model:\n  n: 17\n")
        loaded = load_scenario(path)
        assert loaded.model["n"] == 17
        assert loaded.controller["period"] == 30


class TestInitializeSchool:
    def test_mass_center_on_reference(self):
        ref = ReferenceSphere([10.0, -5.0, 3.0], 1500.0)
        rng = np.random.default_rng(3)
        state = initialize_school(40, ref, rng, 500.0)
        c = mass_center(state)
        assert abs(np.linalg.norm(c - ref.center) - ref.radius) < 1e-9
        assert ref.distance(c) < 1e-9

    def test_spread_bounded_by_init_radius(self):
        ref = ReferenceSphere([0.0, 0.0, 0.0], 2000.0)
        rng = np.random.default_rng(4)
        state = initialize_school(60, ref, rng, 400.0)
        c = mass_center(state)
        dists = np.linalg.norm(state.positions - c, axis=1)
        assert dists.max() <= 800.0 + 1e-9

    def test_unit_headings(self):
        ref = ReferenceSphere([0.0, 0.0, 0.0], 2000.0)
        rng = np.random.default_rng(5)
        state = initialize_school(25, ref, rng, 500.0)
        norms = np.linalg.norm(state.headings, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-12)

    def test_deterministic_given_generator_seed(self):
        ref = ReferenceSphere([0.0, 0.0, 0.0], 2000.0)
        a = initialize_school(30, ref, np.random.default_rng(9), 500.0)
        b = initialize_school(30, ref, np.random.default_rng(9), 500.0)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.headings, b.headings)


class TestTrialSeeds:
    def test_count_and_determinism(self):
        a = trial_seeds(2024, 5)
        b = trial_seeds(2024, 5)
        assert len(a) == 5
        for sa, sb in zip(a, b):
            ga = np.random.Generator(np.random.PCG64(sa))
            gb = np.random.Generator(np.random.PCG64(sb))
            assert ga.integers(0, 2**63) == gb.integers(0, 2**63)

    def test_streams_distinct(self):
        seqs = trial_seeds(11, 4)
        draws = {
            int(np.random.Generator(np.random.PCG64(s)).integers(0, 2**63))
            for s in seqs
        }
        assert len(draws) == 4

    def test_prefix_stable(self):
        # trial t sees the same seed no matter how many trials run
        few = trial_seeds(2024, 2)
        many = trial_seeds(2024, 8)
        for s_few, s_many in zip(few, many):
            ga = np.random.Generator(np.random.PCG64(s_few))
            gb = np.random.Generator(np.random.PCG64(s_many))
            assert ga.integers(0, 2**63) == gb.integers(0, 2**63)


class TestAsymptoticCumulativeError:
    def test_constant_error_long_run(self):
        mean = np.full(1001, 3.0)
        got = asymptotic_cumulative_error(mean, 0.1)
        assert got == pytest.approx(50.0 * 3.0, rel=1e-12)

    def test_settled_window_ignores_transient(self):
        mean = np.full(1001, 2.0)
        noisy = mean.copy()
        noisy[:500] = 1e6
        assert asymptotic_cumulative_error(noisy, 0.1) == pytest.approx(
            asymptotic_cumulative_error(mean, 0.1), rel=1e-12
        )

    def test_short_run_uses_second_half(self):
        mean = np.arange(41, dtype=float)
        # trapezoid of a linear ramp over [20, 40] with dx = 0.1
        expect = 0.1 * (20 + 40) / 2 * 20
        assert asymptotic_cumulative_error(mean, 0.1) == pytest.approx(expect, rel=1e-12)

    def test_too_short_raises(self):
        with pytest.raises(SchoolError):
            asymptotic_cumulative_error(np.array([1.0]), 0.1)


class TestTrialRuns:
    def test_run_trials_shapes_and_mean(self):
        res = run_trials(tiny_scenario())
        assert res.errors.shape == (2, 31)
        assert np.array_equal(res.mean_errors, res.errors.mean(axis=0))
        assert res.cumulative_error == pytest.approx(
            asymptotic_cumulative_error(res.mean_errors, 0.1), rel=1e-12
        )
        assert res.predictor == "dynamic"

    def test_run_trials_deterministic(self):
        a = run_trials(tiny_scenario())
        b = run_trials(tiny_scenario())
        assert np.array_equal(a.errors, b.errors)
        assert a.cumulative_error == b.cumulative_error

    def test_predictors_paired_until_first_applied_block(self):
        # same trial seeds: identical plant until the first solved block
        # lands at k = period, so error columns 0..period agree bitwise
        stc = run_trials(tiny_scenario(), predictor="static")
        dyn = run_trials(tiny_scenario(), predictor="dynamic")
        assert stc.predictor == "static"
        assert np.array_equal(stc.errors[:, :11], dyn.errors[:, :11])

    def test_single_trial_predictor_override(self):
        seq = trial_seeds(7, 1)[0]
        res = run_single_trial(tiny_scenario(), seq, predictor="orig")
        assert res.predictor == "orig"
        assert res.errors.shape == (31,)


class TestTimingRows:
    def test_rows_and_budget(self):
        rows = timing_rows(tiny_scenario(), [8, 10], ["static"])
        assert len(rows) == 2
        row = rows[0]
        assert set(row) == {
            "n", "predictor", "period", "horizon", "windows",
            "mean_solve_time", "max_solve_time", "budget", "over_budget",
            "wall_time",
        }
        assert row["n"] == 8 and rows[1]["n"] == 10
        assert row["windows"] == 2
        assert row["mean_solve_time"] <= row["max_solve_time"]
        assert row["budget"] == pytest.approx(10 * 0.1)
        assert row["over_budget"] == int(row["mean_solve_time"] > row["budget"])
        assert row["wall_time"] > 0

    def test_no_solve_events_raises(self):
        short = tiny_scenario(**{"run.steps": 5})
        with pytest.raises(SchoolError):
            timing_rows(short, [8], ["static"])


class TestGridAndSweep:
    def test_grid_rows(self):
        rows = grid_compare_rows(tiny_scenario(), [8], [1500.0, 2500.0])
        assert len(rows) == 2
        for row, radius in zip(rows, [1500.0, 2500.0]):
            assert row["case"] == "base"
            assert row["n"] == 8
            assert row["reference_radius"] == radius
            assert row["trials"] == 2
            ratio = row["cumulative_error_dynamic"] / row["cumulative_error_static"]
            assert row["ratio_dynamic_over_static"] == pytest.approx(ratio)
            assert row["dynamic_wins"] == int(
                row["cumulative_error_dynamic"] <= row["cumulative_error_static"]
            )

    def test_sweep_case_labels(self):
        rows = sweep_rows(tiny_scenario(), ["a"], [8], [1500.0])
        assert len(rows) == 1
        assert rows[0]["case"] == "a"

    def test_sweep_unknown_case(self):
        with pytest.raises(SchoolError):
            sweep_rows(tiny_scenario(), ["z"], [8], [1500.0])

    def test_sweep_case_table(self):
        assert list(PARAM_SWEEP_CASES) == list("abcdefghij")
        assert PARAM_SWEEP_CASES["a"] == {"model.sensitivity": 15.0}
        assert PARAM_SWEEP_CASES["b"] == {"model.sensitivity": 5.0}
        assert PARAM_SWEEP_CASES["c"] == {"model.turning_rate": 0.92}
        assert PARAM_SWEEP_CASES["d"] == {"model.turning_rate": 0.23}
        assert PARAM_SWEEP_CASES["e"]["model.view_half_angle"] == pytest.approx(
            0.875 * math.pi
        )
        assert PARAM_SWEEP_CASES["f"]["model.view_half_angle"] == pytest.approx(
            0.625 * math.pi
        )
        assert PARAM_SWEEP_CASES["g"] == {"model.orientation_radius": 875.0}
        assert PARAM_SWEEP_CASES["h"] == {"model.orientation_radius": 625.0}
        assert PARAM_SWEEP_CASES["i"] == {"model.attraction_radius": 1125.0}
        assert PARAM_SWEEP_CASES["j"] == {"model.attraction_radius": 875.0}
        # every case must name real keys
        base = default_scenario()
        for overrides in PARAM_SWEEP_CASES.values():
            base.with_values(overrides)


class TestOpenLoop:
    def test_rows_and_states(self):
        scenario = tiny_scenario(**{"run.steps": 25})
        rows, initial, final = open_loop_rows(scenario)
        assert len(rows) == 26
        assert [r["k"] for r in rows] == list(range(26))
        assert initial.k == 0
        assert final.k == 25
        for r in rows:
            assert 0.0 <= r["polarization"] <= 1.0 + 1e-12
            assert r["reference_error"] >= 0.0
        assert set(rows[0]) == {
            "k", "center_x", "center_y", "center_z", "polarization",
            "reference_error",
        }

    def test_seed_argument_controls_rollout(self):
        scenario = tiny_scenario(**{"run.steps": 10})
        rows_a, _, _ = open_loop_rows(scenario, seed=1)
        rows_b, _, _ = open_loop_rows(scenario, seed=1)
        rows_c, _, _ = open_loop_rows(scenario, seed=2)
        assert rows_a == rows_b
        assert rows_a != rows_c

    def test_constant_stimulus_shifts_school(self):
        scenario = tiny_scenario(**{"run.steps": 40, "model.noise_scale": 0.0})
        _, _, plain = open_loop_rows(scenario, seed=3)
        _, _, pushed = open_loop_rows(
            scenario, seed=3, stimulus=np.array([1.0, 0.0, 0.0])
        )
        assert not np.allclose(mass_center(plain), mass_center(pushed))


class TestBoundAudit:
    def test_no_violations_on_sampled_states(self):
        rows, summary = bound_audit_rows(45, seed=11)
        assert summary == {
            "states": 45,
            "violations": 0,
            "centrality_rows": sum(r["strongly_connected"] for r in rows),
            "tolerance": 1e-9,
        }
        assert len(rows) == 45
        for row in rows:
            assert row["ok"] == 1
            assert row["worst_margin"] >= -1e-9
            assert row["margin_static"] == pytest.approx(
                row["bound_static"] - row["residual_static"]
            )
            if row["strongly_connected"]:
                assert isinstance(row["margin_centrality"], float)
            else:
                assert row["margin_centrality"] == ""

    def test_size_and_spread_cycle(self):
        rows, _ = bound_audit_rows(6, seed=1)
        assert [r["n"] for r in rows] == [6, 10, 16, 6, 10, 16]
        assert [r["stimulated"] for r in rows] == [0, 1, 0, 1, 0, 1]


class TestReporting:
    def test_write_csv_layout_and_float_round_trip(self, tmp_path):
        path = tmp_path / "deep" / "rows.csv"
        write_csv(path, ["a", "b"], [{"a": 1, "b": 0.1}, {"a": 2, "b": 1e-17}])
        rows = read_csv_rows(path)
        assert rows[0]["a"] == "1"
        assert float(rows[0]["b"]) == 0.1
        assert float(rows[1]["b"]) == 1e-17

    def test_csv_body_stable(self, tmp_path):
        rows = [{"k": i, "v": float(i) / 3.0} for i in range(5)]
        p1 = write_csv(tmp_path / "a.csv", ["k", "v"], rows)
        p2 = write_csv(tmp_path / "b.csv", ["k", "v"], rows)
        assert csv_body(p1) == csv_body(p2)

    def test_canonical_json_key_order(self):
        assert canonical_json({"b": 2, "a": 1}) == '{"a":1,"b":2}'
        assert config_hash({"b": 2, "a": 1}) == config_hash({"a": 1, "b": 2})

    def test_manifest_contents(self, tmp_path):
        scenario = tiny_scenario().to_dict()
        path = write_manifest(
            tmp_path / "manifest.json", "trials", scenario, 7,
            extras={"predictor": "static"},
        )
        payload = json.loads(path.read_text())
        assert payload["command"] == "trials"
        assert payload["seed"] == 7
        assert payload["scenario"] == scenario
        assert payload["config_hash"] == config_hash(scenario)
        assert payload["predictor"] == "static"
        assert "version" in payload and "generated" in payload

    def test_trajectory_round_trip(self, tmp_path):
        ref = ReferenceSphere([0.0, 0.0, 0.0], 100.0)
        state = initialize_school(4, ref, np.random.default_rng(0), 50.0)
        path = write_trajectory(tmp_path / "traj.json", [state, state])
        data = json.loads(path.read_text())
        assert len(data) == 2
        assert data[0]["k"] == 0
        assert np.array(data[0]["x"]).shape == (4, 3)
        assert np.array(data[0]["V"]).shape == (4, 3)


class TestCli:
    @pytest.fixture()
    def config_file(self, tmp_path):
        path = tmp_path / "tiny.yaml"
        path.write_text(yaml.safe_dump(tiny_scenario().to_dict()))
        return path

    def test_simulate(self, config_file, tmp_path, capsys):
        out = tmp_path / "sim"
        code = cli.main([
            "simulate", "--config", str(config_file), "--out-dir", str(out),
            "--steps", "12",
        ])
        assert code == 0
        rows = read_csv_rows(out / "steps.csv")
        assert len(rows) == 13
        assert (out / "trajectory.json").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["scenario"]["run"]["steps"] == 12
        assert "simulate: 12 steps" in capsys.readouterr().out

    def test_mpc(self, config_file, tmp_path):
        out = tmp_path / "mpc"
        code = cli.main([
            "mpc", "--config", str(config_file), "--out-dir", str(out),
            "--predictor", "static", "--save-trajectory",
        ])
        assert code == 0
        errors = read_csv_rows(out / "errors.csv")
        assert len(errors) == 31
        events = read_csv_rows(out / "events.csv")
        assert len(events) == 2
        assert events[0]["observed_k"] == "0"
        assert events[0]["apply_start"] == "10"
        traj = json.loads((out / "trajectory.json").read_text())
        assert len(traj) == 31
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["predictor"] == "static"

    def test_trials(self, config_file, tmp_path):
        out = tmp_path / "trials"
        code = cli.main([
            "trials", "--config", str(config_file), "--out-dir", str(out),
        ])
        assert code == 0
        rows = read_csv_rows(out / "errors.csv")
        assert len(rows) == 31
        assert set(rows[0]) == {"k", "mean_error", "trial_0", "trial_1"}
        mean = float(rows[3]["mean_error"])
        trials = (float(rows[3]["trial_0"]) + float(rows[3]["trial_1"])) / 2
        assert mean == pytest.approx(trials, rel=1e-12)
        solves = read_csv_rows(out / "solves.csv")
        assert len(solves) == 1
        assert solves[0]["trials"] == "2"

    def test_timing(self, config_file, tmp_path):
        out = tmp_path / "timing"
        code = cli.main([
            "timing", "--config", str(config_file), "--out-dir", str(out),
            "--sizes", "8", "--predictors", "static",
        ])
        assert code == 0
        rows = read_csv_rows(out / "timings.csv")
        assert len(rows) == 1
        assert rows[0]["n"] == "8"

    def test_sweep_base(self, config_file, tmp_path, capsys):
        out = tmp_path / "sweep"
        code = cli.main([
            "sweep", "--config", str(config_file), "--out-dir", str(out),
            "--cases", "base", "--sizes", "8", "--radii", "1500",
        ])
        assert code == 0
        rows = read_csv_rows(out / "comparisons.csv")
        assert len(rows) == 1
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["cells"] == 1
        assert manifest["dynamic_wins"] in (0, 1)
        assert "sweep:" in capsys.readouterr().out

    def test_audit_bounds(self, tmp_path):
        out = tmp_path / "audit"
        code = cli.main([
            "audit-bounds", "--states", "12", "--seed", "5",
            "--out-dir", str(out),
        ])
        assert code == 0
        rows = read_csv_rows(out / "bounds.csv")
        assert len(rows) == 12
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["summary"]["violations"] == 0

    def test_bad_config_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("model:\n  bogus: 1\n")
        code = cli.main([
            "simulate", "--config", str(path), "--out-dir", str(tmp_path / "o"),
        ])
        assert code == 2
        assert "configuration error" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path):
        code = cli.main([
            "simulate", "--config", str(tmp_path / "none.yaml"),
            "--out-dir", str(tmp_path / "o"),
        ])
        assert code == 2

    def test_csv_reproducible_for_fixed_seed(self, config_file, tmp_path):
        out_a = tmp_path / "runA"
        out_b = tmp_path / "runB"
        for out in (out_a, out_b):
            assert cli.main([
                "simulate", "--config", str(config_file),
                "--out-dir", str(out), "--steps", "15",
            ]) == 0
        assert csv_body(out_a / "steps.csv") == csv_body(out_b / "steps.csv")
        hash_a = json.loads((out_a / "manifest.json").read_text())["config_hash"]
        hash_b = json.loads((out_b / "manifest.json").read_text())["config_hash"]
        assert hash_a == hash_b

    def test_seed_override_changes_rollout(self, config_file, tmp_path):
        out_a = tmp_path / "seedA"
        out_b = tmp_path / "seedB"
        assert cli.main([
            "simulate", "--config", str(config_file), "--out-dir", str(out_a),
            "--steps", "15", "--seed", "1",
        ]) == 0
        assert cli.main([
            "simulate", "--config", str(config_file), "--out-dir", str(out_b),
            "--steps", "15", "--seed", "2",
        ]) == 0
        assert csv_body(out_a / "steps.csv") != csv_body(out_b / "steps.csv")

    def test_override_flags_reach_scenario(self, config_file, tmp_path):
        out = tmp_path / "ovr"
        assert cli.main([
            "mpc", "--config", str(config_file), "--out-dir", str(out),
            "--n", "6", "--radius", "1200", "--steps", "20",
        ]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["scenario"]["model"]["n"] == 6
        assert manifest["scenario"]["reference"]["radius"] == 1200.0
        assert manifest["scenario"]["run"]["steps"] == 20
