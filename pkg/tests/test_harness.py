import json

import numpy as np
import pytest

from sgdmlab.cli import ConfigError, load_config, main
from sgdmlab.seeding import rng_for, seed_split


class TestSeedSplit:
    def test_identical_inputs_identical_streams(self):
        a = rng_for(123, 7).standard_normal(5)
        b = rng_for(123, 7).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_index_collision_scan(self):
        states = {tuple(seed_split(42, i).generate_state(2)) for i in range(10_000)}
        assert len(states) == 10_000

    def test_master_collision_scan_at_index_zero(self):
        states = {tuple(seed_split(s, 0).generate_state(2)) for s in range(10_000)}
        assert len(states) == 10_000

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            seed_split(-1, 0)
        with pytest.raises(ValueError):
            seed_split(0, -1)


class TestConfig:
    def test_defaults_resolve(self):
        cfg = load_config("run", None, {})
        assert cfg["problem"] == "quadratic"
        assert cfg["steps"] == 1000

    def test_file_sections_and_flag_precedence(self, tmp_path):
        path = tmp_path / "lab.ini"
        path.write_text(
            "[common]\nsteps = 50\nseed = 3\n\n[run]\nsteps = 80\n"
        )
        cfg = load_config("run", str(path), {"seed": 9})
        assert cfg["steps"] == 80  # subcommand section beats [common]
        assert cfg["seed"] == 9  # flag beats file
        cfg2 = load_config("smoothness", str(path), {})
        assert cfg2["steps"] == 50

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "lab.ini"
        path.write_text("[common]\nstepz = 50\n")
        with pytest.raises(ConfigError, match="stepz"):
            load_config("run", str(path), {})

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigError, match="beta"):
            load_config("verify-anytime", None, {"beta": 1.5})
        with pytest.raises(ConfigError):
            load_config("run", None, {"steps": 0})
        with pytest.raises(ConfigError, match="invalid"):
            load_config("run", None, {"steps": "many"})

    def test_missing_config_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("run", "/nonexistent/lab.ini", {})


def run_cli(args):
    return main(args)


class TestCliSubcommands:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert main(["frobnicate"]) == 2

    def test_config_error_exits_2(self, tmp_path, capsys):
        code = main(["verify-anytime", "--beta", "2.0", "--out", str(tmp_path)])
        assert code == 2
        assert "beta" in capsys.readouterr().err

    def test_run_single_trajectory_one_row(self, tmp_path):
        out = tmp_path / "o"
        code = main(["run", "--out", str(out), "--steps", "1", "--runs", "1"])
        assert code == 0
        lines = (out / "trajectory.csv").read_text().strip().splitlines()
        assert len(lines) == 2  # header + one step
        verdict = json.loads((out / "verdict.json").read_text())
        assert verdict["subcommand"] == "run"
        assert verdict["passed"] is True
        assert all({"name", "passed", "value", "threshold"} <= set(c) for c in verdict["checks"])

    def test_run_ensemble_csv(self, tmp_path):
        out = tmp_path / "o"
        assert main(["run", "--out", str(out), "--steps", "20", "--runs", "3"]) == 0
        header = (out / "ensemble.csv").read_text().splitlines()[0]
        assert header == "k,mean,stderr,q10,q50,q90"

    def test_verify_descent_default_config(self, tmp_path):
        out = tmp_path / "o"
        code = main(["verify-descent", "--out", str(out), "--steps", "200",
                     "--runs", "3"])
        assert code == 0
        verdict = json.loads((out / "verdict.json").read_text())
        assert verdict["checks"][0]["name"] == "max_descent_residual"
        assert verdict["checks"][0]["value"] <= 1e-10

    def test_verify_expectation(self, tmp_path):
        out = tmp_path / "o"
        assert main(["verify-expectation", "--out", str(out), "--steps", "300",
                     "--runs", "30"]) == 0

    def test_verify_anytime(self, tmp_path):
        out = tmp_path / "o"
        assert main(["verify-anytime", "--out", str(out), "--steps", "300",
                     "--runs", "20"]) == 0

    def test_ode_compare(self, tmp_path):
        out = tmp_path / "o"
        code = main(["ode-compare", "--out", str(out), "--runs", "20",
                     "--t", "3.0", "--dt", "0.002"])
        assert code == 0
        assert (out / "ode.csv").exists()
        assert (out / "l2_table.csv").read_text().splitlines()[0] == \
            "eta,mean_sq_dist,stderr,runs"

    def test_concentration(self, tmp_path):
        out = tmp_path / "o"
        assert main(["concentration", "--out", str(out)]) == 0
        verdict = json.loads((out / "verdict.json").read_text())
        names = [c["name"] for c in verdict["checks"]]
        assert any(n.startswith("mgf_lambda") for n in names)
        assert any(n.startswith("tail_omega") for n in names)

    def test_smoothness(self, tmp_path):
        out = tmp_path / "o"
        assert main(["smoothness", "--out", str(out), "--steps", "400",
                     "--runs", "6"]) == 0

    def test_constants(self, tmp_path):
        out = tmp_path / "o"
        assert main(["constants", "--out", str(out)]) == 0
        verdict = json.loads((out / "verdict.json").read_text())
        widths = {c["name"]: c["value"] for c in verdict["checks"]}
        assert widths["gamma1_width"] <= 1e-4
        assert widths["gamma2_width"] <= 1e-4

    def test_resolved_config_echoed(self, tmp_path):
        out = tmp_path / "o"
        main(["run", "--out", str(out), "--steps", "5"])
        cfg = json.loads((out / "config_resolved.json").read_text())
        assert cfg["steps"] == 5
        assert cfg["subcommand"] == "run"


class TestReproducibility:
    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["run", "--out", str(out), "--steps", "50", "--runs", "4",
                         "--seed", "11"]) == 0
        assert (a / "ensemble.csv").read_bytes() == (b / "ensemble.csv").read_bytes()
        assert (a / "verdict.json").read_bytes() == (b / "verdict.json").read_bytes()

    def test_serial_vs_parallel_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--out", str(a), "--steps", "40", "--runs", "6",
                     "--workers", "1"]) == 0
        assert main(["run", "--out", str(b), "--steps", "40", "--runs", "6",
                     "--workers", "3"]) == 0
        assert (a / "ensemble.csv").read_bytes() == (b / "ensemble.csv").read_bytes()
