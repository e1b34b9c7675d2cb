import json
import os

import numpy as np
import pytest

from junctionflow import _toml
from junctionflow.cli import EXIT_AUDIT, EXIT_CONFIG, EXIT_OK, canonical_config, main

from conftest import H_OF_P, P_SLOPE


def write_config(tmp_path, cfg, name="exp.toml"):
    path = tmp_path / name
    path.write_text(_toml.dump(cfg))
    return str(path)


def solve_config(nx=41, nt=13, tmax=2.0):
    return dict(
        model=dict(
            left=dict(kind="quadratic", kappa=1.0, R=1.0),
            right=dict(kind="quadratic", kappa=1.0, R=1.0),
        ),
        initial_data=dict(breakpoints=[], slopes=[-0.8]),
        control=dict(times=[0.0, tmax], values=[-0.25]),
        mesh=dict(xmin=-1.0, xmax=1.0, nx=nx, tmin=0.0, tmax=tmax, nt=nt),
        run=dict(command="solve", out_dir="out", workers=1),
    )


class TestTomlRoundTrip:
    def test_canonical_round_trips(self):
        cfg = canonical_config()
        assert _toml.parse(_toml.dump(cfg)) == cfg

    def test_mixed_types(self):
        cfg = dict(
            a=dict(name="x y", flag=True, nums=[1, 2.5, -3.0], empty=[]),
            b=dict(nested=dict(v=1)),
            top=7,
        )
        assert _toml.parse(_toml.dump(cfg)) == cfg

    def test_comments_and_errors(self):
        parsed = _toml.parse('# header\n[a]\nk = 1 # trailing\n')
        assert parsed == dict(a=dict(k=1))
        with pytest.raises(_toml.ConfigSyntaxError):
            _toml.parse("[a\nk=1")
        with pytest.raises(_toml.ConfigSyntaxError):
            _toml.parse("just words")


class TestSolve:
    def test_golden_field_and_outputs(self, tmp_path):
        cfg = write_config(tmp_path, solve_config())
        out = tmp_path / "out"
        assert main(["solve", "--config", cfg, "--out", str(out)]) == EXIT_OK
        for name in ("u.csv", "rho_hj.csv", "trace.csv", "summary.json"):
            assert (out / name).exists()
        rows = (out / "u.csv").read_text().splitlines()
        assert rows[0] == "x,t,u"
        data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        expect = P_SLOPE * data[:, 0] - H_OF_P * data[:, 1]
        assert np.abs(data[:, 2] - expect).max() <= 1e-9
        # the t = 0 block equals the datum
        first = data[data[:, 1] == 0.0]
        assert np.abs(first[:, 2] - P_SLOPE * first[:, 0]).max() <= 1e-12
        summary = json.loads((out / "summary.json").read_text())
        assert summary["gradient_audit"]["ok"]

    def test_missing_control_block_reported(self, tmp_path, capsys):
        cfg_dict = solve_config()
        del cfg_dict["control"]
        cfg = write_config(tmp_path, cfg_dict)
        rc = main(["solve", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "[control]" in err

    def test_exhaustive_validation(self, tmp_path, capsys):
        cfg_dict = solve_config()
        del cfg_dict["control"]
        del cfg_dict["mesh"]
        cfg = write_config(tmp_path, cfg_dict)
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "[control]" in err and "[mesh]" in err

    def test_requires_config(self, capsys):
        assert main(["solve"]) == EXIT_CONFIG


class TestCost:
    def test_cost_report(self, tmp_path):
        cfg_dict = solve_config(tmax=6.0, nt=25)
        cfg_dict["mesh"] = dict(xmin=0.08, xmax=0.2, nx=41, tmin=0.9, tmax=5.1, nt=161)
        cfg_dict["control"] = dict(times=[0.0, 1.5, 6.0], values=[0.0, -0.25])
        cfg_dict["functional"] = dict(
            box=dict(x1=0.1, x2=0.18, t1=1.0, t2=1.5, t3=4.5, t4=5.0, delta=0.015),
            linear_coeff=0.0,
        )
        cfg = write_config(tmp_path, cfg_dict)
        out = tmp_path / "out"
        assert main(["cost", "--config", cfg, "--out", str(out)]) == EXIT_OK
        rep = json.loads((out / "cost_report.json").read_text())
        assert rep["J"] == pytest.approx(-0.042089678530786, rel=1e-9)
        assert rep["J_linear_term"] == 0.0
        assert rep["J"] == pytest.approx(rep["J_field_term"] + rep["J_linear_term"])

    def test_mesh_must_cover_support(self, tmp_path, capsys):
        cfg_dict = solve_config(tmax=6.0)
        cfg_dict["control"] = dict(times=[0.0, 6.0], values=[-0.25])
        cfg_dict["mesh"] = dict(xmin=0.12, xmax=0.3, nx=21, tmin=0.0, tmax=6.0, nt=31)
        cfg_dict["functional"] = dict(
            box=dict(x1=0.1, x2=0.18, t1=1.0, t2=1.5, t3=4.5, t4=5.0, delta=0.015)
        )
        cfg = write_config(tmp_path, cfg_dict)
        assert main(["cost", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "support" in capsys.readouterr().err


class TestCrosscheck:
    def test_small_run(self, tmp_path):
        cfg_dict = solve_config(tmax=2.0)
        cfg_dict["crosscheck"] = dict(xmin=-2.0, xmax=2.0, cells=100, cfl=0.9,
                                      slices=5, l1_tol=0.05)
        cfg = write_config(tmp_path, cfg_dict)
        out = tmp_path / "out"
        assert main(["crosscheck", "--config", cfg, "--out", str(out)]) == EXIT_OK
        rep = json.loads((out / "crosscheck.json").read_text())
        assert rep["ok"]
        assert rep["l1_density_error"] <= 0.05
        assert (out / "rho_cl.csv").exists() and (out / "rho_hj.csv").exists()


class TestOptimize:
    def test_optimize_writes_result(self, tmp_path):
        cfg_dict = solve_config(tmax=6.0)
        del cfg_dict["control"]
        cfg_dict["mesh"] = dict(xmin=0.08, xmax=0.2, nx=21, tmin=0.9, tmax=5.1, nt=81)
        cfg_dict["functional"] = dict(
            box=dict(x1=0.1, x2=0.18, t1=1.0, t2=1.5, t3=4.5, t4=5.0, delta=0.015)
        )
        cfg_dict["optimizer"] = dict(method="bangbang", k_max=1, budget=60, horizon=6.0)
        cfg = write_config(tmp_path, cfg_dict)
        out = tmp_path / "out"
        assert main(["optimize", "--config", cfg, "--out", str(out)]) == EXIT_OK
        res = json.loads((out / "result.json").read_text())
        assert res["method"] == "bangbang"
        assert "int_A" in res and "int_sA" in res
        hist = (out / "history.csv").read_text().splitlines()
        assert hist[0] == "evals,best_cost"
        assert len(hist) > 2
