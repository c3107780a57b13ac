import json

import pytest

from viewcone.cli import main
from viewcone.sim import read_dataset


def run(argv):
    return main([str(a) for a in argv])


GEN = ["generate", "--r-obs", 55, "--theta-obs", 0.392, "--p-obs", 0.8, "--seed", 7]


class TestGenerate:
    def test_writes_header_plus_n_lines(self, tmp_path):
        out = tmp_path / "d.jsonl"
        assert run(GEN + ["--n", 5, "--out", out]) == 0
        assert len(out.read_text().splitlines()) == 6
        assert out.with_suffix(".jsonl.manifest.json").exists()

    def test_zero_n_usage_error(self, tmp_path):
        out = tmp_path / "d.jsonl"
        assert run(GEN + ["--n", 0, "--out", out]) == 1

    def test_missing_required_flag_exit_2(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["generate", "--n", "5", "--out", tmp_path / "d.jsonl"])
        assert exc.value.code == 2

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run(GEN + ["--n", 4, "--out", a])
        run(GEN + ["--n", 4, "--out", b])
        assert a.read_bytes() == b.read_bytes()

    def test_scenarios_from_reuses_geometry(self, tmp_path):
        src = tmp_path / "src.jsonl"
        out = tmp_path / "out.jsonl"
        run(GEN + ["--n", 3, "--out", src])
        assert run(GEN + ["--n", 3, "--out", out, "--scenarios-from", src]) == 0
        d_src = read_dataset(src)
        d_out = read_dataset(out)
        for a, b in zip(d_src.trajectories, d_out.trajectories):
            assert a.scenario == b.scenario


class TestEstimate:
    def test_missing_file_exit_1_names_path(self, tmp_path, capsys):
        code = run(
            ["estimate-obs", "--data", tmp_path / "nope.jsonl", "--p-obs", 0.8,
             "--out", tmp_path / "r.jsonl"]
        )
        assert code == 1
        assert "nope.jsonl" in capsys.readouterr().err

    def test_estimate_pobs_runs(self, tmp_path, capsys):
        data = tmp_path / "d.jsonl"
        run(GEN + ["--n", 4, "--out", data])
        out = tmp_path / "p.jsonl"
        code = run(
            ["estimate-pobs", "--data", data, "--r-obs", 55, "--theta-obs", 0.392,
             "--init-points", 3, "--iterations", 3, "--out", out]
        )
        assert code == 0
        header = json.loads(out.read_text().splitlines()[0])
        assert header["kind"] == "estimation_report"

    def test_mode_mismatch_exit_1(self, tmp_path, capsys):
        data = tmp_path / "p.jsonl"
        lines = [
            json.dumps({"schema": 1, "mode": "pointmass", "angle_convention": "half",
                        "h": 0.05, "sensor": None, "seed": None}),
            json.dumps({
                "scenario": {"goal": [50.0, 0.0], "bounds": [-10, -10, 100, 100],
                             "obstacles": [], "L": None},
                "steps": [
                    {"t": 0, "s": [0, 0, 0, 0, 0], "u": [1.0, 0.0, 0.0], "z": []},
                    {"t": 1, "s": [1, 0, 0, 0, 0], "u": [0.0, 0.0, 0.0], "z": []},
                ],
                "outcome": "timeout",
            }),
        ]
        data.write_text("\n".join(lines) + "\n")
        code = run(
            ["estimate-obs", "--data", data, "--p-obs", 0.8, "--out", tmp_path / "r.jsonl"]
        )
        assert code == 1
        assert "unicycle" in capsys.readouterr().err


class TestEvalSafety:
    def test_eval_self_is_zero(self, tmp_path, capsys):
        data = tmp_path / "d.jsonl"
        run(GEN + ["--n", 4, "--out", data])
        out = tmp_path / "e.jsonl"
        assert run(["eval", "--actual", data, "--predicted", data, "--out", out]) == 0
        header = json.loads(out.read_text().splitlines()[0])
        assert header["mean"] == 0.0
        assert header["n"] == 4

    def test_safety_rate_in_unit_interval(self, tmp_path):
        data = tmp_path / "d.jsonl"
        run(GEN + ["--n", 4, "--out", data])
        out = tmp_path / "s.jsonl"
        assert run(["safety", "--data", data, "--threshold", 20, "--out", out]) == 0
        header = json.loads(out.read_text().splitlines()[0])
        assert 0.0 <= header["mean"] <= 1.0
        rows = [json.loads(s) for s in out.read_text().splitlines()[1:]]
        assert len(rows) == 4
        assert all(0.0 <= r["proximity_rate"] <= 1.0 for r in rows)


class TestBcCommands:
    def test_train_and_rollout(self, tmp_path):
        data = tmp_path / "d.jsonl"
        run(GEN + ["--n", 4, "--out", data, "--memory-horizon", 12])
        model = tmp_path / "m.pdif"
        assert run(["train-bc", "--data", data, "--epochs", 2, "--out", model]) == 0
        out = tmp_path / "bc.jsonl"
        code = run(
            ["rollout-bc", "--model", model, "--scenarios-from", data,
             "--r-obs", 55, "--theta-obs", 0.392, "--p-obs", 0.8,
             "--t-max", 40, "--out", out]
        )
        assert code == 0
        ds = read_dataset(out)
        assert ds.meta.mode == "pointmass"
        assert len(ds) == 4
        assert [t.scenario_id for t in ds.trajectories] == [0, 1, 2, 3]

    def test_rollout_reproducible(self, tmp_path):
        data = tmp_path / "d.jsonl"
        run(GEN + ["--n", 2, "--out", data])
        model = tmp_path / "m.pdif"
        run(["train-bc", "--data", data, "--epochs", 1, "--out", model])
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        args = ["rollout-bc", "--model", model, "--scenarios-from", data,
                "--r-obs", 55, "--theta-obs", 0.392, "--p-obs", 0.8,
                "--t-max", 30, "--seed", 3]
        run(args + ["--out", a])
        run(args + ["--out", b])
        assert a.read_bytes() == b.read_bytes()
