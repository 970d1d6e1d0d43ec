import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sdemoments.cli import EXIT_CONFIG, EXIT_DEGENERATE, EXIT_NUMERICAL, EXIT_OK, JSON_SCHEMA, main
from sdemoments.config import RunConfig
from sdemoments.errors import ConfigError
from sdemoments.propagation import CSV_VERSION


def _config(tmp_path, **overrides):
    data = {
        "model": "polynomial",
        "model_params": {"drift": [0.0, -1.0, 0.0, -0.5], "diffusion": [0.3]},
        "init": {"kind": "fixed", "x0": [1.0]},
        "h": 0.01,
        "tn": 0.5,
        "N": 3,
        "mc_samples": 2000,
        "seed": 7,
        "grid": {"points": 101, "width_sigmas": 6.0},
        "output_dir": str(tmp_path / "out"),
    }
    data.update(overrides)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(data))
    return path


def _run(path, *args):
    return main([args[0], "--config", str(path), "--quiet", *args[1:]])


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = RunConfig.load(_config(tmp_path))
        again = RunConfig.from_dict(json.loads(cfg.dumps()))
        assert again == cfg

    @pytest.mark.parametrize(
        "overrides",
        [
            {"N": 0}, {"N": 11}, {"h": -1.0}, {"tn": 0.0}, {"truncation": "total"},
            {"model": "lorenz"}, {"bogus": 1}, {"noise": {"kind": "levy"}},
            {"init": {"kind": "fixed", "x0": [1.0, 2.0]}},
            {"init": {"kind": "gaussian", "mean": [1.0], "covariance": [[-1.0]]}},
            {"init": {"kind": "gaussian", "mean": [1.0], "covariance": [[1.0]]}, "N_PCE": 3, "N_s": 2},
            {"grid": {"points": 1}}, {"engine": "gpu"}, {"seed": -1},
        ],
    )
    def test_invalid(self, tmp_path, overrides):
        with pytest.raises(ConfigError):
            RunConfig.load(_config(tmp_path, **overrides))

    def test_missing_key(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"model": "linear", "h": 0.1, "tn": 1.0, "N": 2})

    def test_default_sample_count(self, tmp_path):
        cfg = RunConfig.load(_config(tmp_path, init={"kind": "gaussian", "mean": [1.0], "covariance": [[0.1]]}, N_PCE=3))
        assert cfg.N_s == 8

    def test_examples_load(self):
        from pathlib import Path

        for path in sorted(Path(__file__).parents[1].joinpath("configs").glob("*.example")):
            cfg = RunConfig.load(path)
            assert cfg.model == "kepler"


class TestCommands:
    def test_moments_outputs(self, tmp_path):
        path = _config(tmp_path)
        assert _run(path, "moments", "--trajectory-stride", "10") == EXIT_OK
        out = tmp_path / "out"
        lines = (out / "moments.csv").read_text().splitlines()
        assert lines[0] == CSV_VERSION and lines[1] == "multiindex,value"
        assert [l.split(",")[0] for l in lines[2:]] == ["0", "1", "2", "3"]
        cov = json.loads((out / "covariance.json").read_text())
        assert cov["schema"] == JSON_SCHEMA and cov["n_steps"] == 50
        assert (out / "trajectory_moments.csv").exists()
        timing = json.loads((out / "timings.json").read_text())
        assert timing["total_seconds"] >= 0

    def test_density_integrates_to_one(self, tmp_path):
        path = _config(tmp_path)
        assert _run(path, "density") == EXIT_OK
        rows = np.loadtxt(tmp_path / "out" / "density_0.csv", delimiter=",", skiprows=2)
        assert_allclose(np.trapezoid(rows[:, 2], rows[:, 1]), 1.0, atol=1e-6)
        report = json.loads((tmp_path / "out" / "density_report.json").read_text())
        assert report["components"][0]["status"] == "ok"

    def test_compare_produces_everything(self, tmp_path):
        path = _config(tmp_path)
        assert _run(path, "compare") == EXIT_OK
        cmp = json.loads((tmp_path / "out" / "compare.json").read_text())
        summary = json.loads((tmp_path / "out" / "baseline_summary.json").read_text())
        se = (summary["covariance"][0][0] / summary["n_paths"]) ** 0.5
        assert cmp["mean"]["absolute"][0] < 4 * se
        assert cmp["tvd"][0] < 0.1
        for name in ("ensemble.csv", "baseline_summary.json", "kde_0.csv", "density_0.csv"):
            assert (tmp_path / "out" / name).exists()

    def test_compare_no_run_requires_artifacts(self, tmp_path):
        assert _run(_config(tmp_path), "compare", "--no-run") == EXIT_CONFIG

    def test_seed_and_out_overrides(self, tmp_path):
        path = _config(tmp_path)
        assert _run(path, "baseline", "--seed", "3", "--out", str(tmp_path / "other")) == EXIT_OK
        summary = json.loads((tmp_path / "other" / "baseline_summary.json").read_text())
        assert summary["seed"] == 3 and summary["n_paths"] == 2000

    def test_gaussian_init(self, tmp_path):
        path = _config(
            tmp_path,
            init={"kind": "gaussian", "mean": [1.0], "covariance": [[0.01]]},
            N_PCE=2, N_s=10, N_s_density=2000,
        )
        assert _run(path, "density") == EXIT_OK
        assert _run(path, "moments") == EXIT_OK
        cov = json.loads((tmp_path / "out" / "covariance.json").read_text())
        assert cov["pce"]["basis_size"] == 3

    def test_clip(self, tmp_path):
        path = _config(tmp_path)
        assert _run(path, "density", "--clip-nonnegative") == EXIT_OK
        rows = np.loadtxt(tmp_path / "out" / "density_0.csv", delimiter=",", skiprows=2)
        assert rows[:, 2].min() >= 0.0


class TestExitCodes:
    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["moments", "--config", str(tmp_path / "none.json"), "--quiet"]) == EXIT_CONFIG
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["exit_code"] == EXIT_CONFIG

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        assert main(["moments", "--config", str(path), "--quiet"]) == EXIT_CONFIG

    def test_numerical_failure(self, tmp_path):
        path = _config(tmp_path, model_params={"drift": [0, 0, 0, 1.0], "diffusion": [0.1]},
                       init={"kind": "fixed", "x0": [10.0]}, h=1.0, tn=30.0)
        assert _run(path, "baseline") == EXIT_NUMERICAL

    def test_degenerate_density_reported(self, tmp_path):
        # zero diffusion: every component is degenerate, recorded without failing
        path = _config(tmp_path, model_params={"drift": [0, -1.0], "diffusion": [0.0]})
        assert _run(path, "density") == EXIT_OK
        report = json.loads((tmp_path / "out" / "density_report.json").read_text())
        assert report["components"][0]["status"] == "degenerate"

    def test_rank_deficient_pce(self, tmp_path, monkeypatch):
        from sdemoments import pce

        monkeypatch.setattr(pce, "MAX_CONDITION", 1.0)
        monkeypatch.setattr(pce.fit_least_squares, "__defaults__", (1.0,))
        path = _config(tmp_path, init={"kind": "gaussian", "mean": [1.0], "covariance": [[0.01]]}, N_PCE=2, N_s=6)
        assert _run(path, "moments") == EXIT_DEGENERATE


def test_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for target in (a, b):
        path = _config(tmp_path, output_dir=str(target))
        assert _run(path, "compare") == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        if "timings" not in name:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
