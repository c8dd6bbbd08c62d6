import json

import pytest

from homlab.cli import main
from homlab.numerics import SolverError

STEP_1D = {"type": "periodic_step", "subdivisions": 2, "values": [1.5, 3.5],
           "dim": 1}


def spec_file(tmp_path, tree, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(tree), encoding="utf-8")
    return str(path)


class TestValidateCommand:
    def test_valid_spec(self, tmp_path, capsys):
        path = spec_file(tmp_path, {"kind": "counterexamples"})
        assert main(["validate", "--spec", path]) == 0
        assert "valid counterexamples spec" in capsys.readouterr().out

    def test_invalid_spec_lists_all_violations(self, tmp_path, capsys):
        tree = {"kind": "cell", "bogus": 1,
                "field": {"type": "constant", "alpha": 4.0, "beta": 1.0},
                "resolution": 64}
        path = spec_file(tmp_path, tree)
        assert main(["validate", "--spec", path]) == 2
        out = capsys.readouterr().out
        assert "field.bounds" in out
        assert "bogus" in out

    def test_missing_file(self, tmp_path):
        assert main(["validate", "--spec", str(tmp_path / "nope.json")]) == 2


class TestRunCommand:
    def test_kind_mismatch(self, tmp_path, capsys):
        path = spec_file(tmp_path, {"kind": "counterexamples"})
        assert main(["cell", "--spec", path]) == 2
        assert "does not match" in capsys.readouterr().err

    def test_cell_run_writes_table_and_plot(self, tmp_path):
        tree = {"kind": "cell", "field": {"type": "constant", "value": 2,
                                          "dim": 1},
                "resolutions": [8, 16]}
        path = spec_file(tmp_path, tree)
        out = tmp_path / "artifacts"
        assert main(["cell", "--spec", path, "--out", str(out)]) == 0
        table = (out / "cell.csv").read_text()
        assert table == "resolution,a_11\n8,2\n16,2\n"
        assert (out / "cell.svg").exists()
        assert (out / "run.log").exists()

    def test_no_plots_skips_svg(self, tmp_path):
        tree = {"kind": "cell", "field": {"type": "constant", "value": 2,
                                          "dim": 1},
                "resolutions": [8, 16]}
        path = spec_file(tmp_path, tree)
        out = tmp_path / "noplots"
        assert main(["cell", "--spec", path, "--out", str(out),
                     "--no-plots"]) == 0
        assert (out / "cell.csv").exists()
        assert not (out / "cell.svg").exists()

    def test_threads_do_not_change_artifacts(self, tmp_path):
        tree = {"kind": "cell", "field": STEP_1D, "resolutions": [8, 16]}
        path = spec_file(tmp_path, tree)
        out1, out2 = tmp_path / "t1", tmp_path / "t2"
        assert main(["cell", "--spec", path, "--out", str(out1)]) == 0
        assert main(["cell", "--spec", path, "--out", str(out2),
                     "--threads", "4"]) == 0
        assert ((out1 / "cell.csv").read_bytes()
                == (out2 / "cell.csv").read_bytes())
        assert ((out1 / "cell.svg").read_bytes()
                == (out2 / "cell.svg").read_bytes())

    def test_stability_self_pair_psi_all_zero(self, tmp_path):
        tree = {"kind": "stability", "field": STEP_1D, "field_g": STEP_1D,
                "hom_resolution": 16, "label": "self"}
        path = spec_file(tmp_path, tree)
        out = tmp_path / "stab"
        assert main(["stability", "--spec", path, "--out", str(out)]) == 0
        lines = (out / "stability.csv").read_text().splitlines()
        assert lines[0] == "R,psi"
        assert [ln.split(",")[1] for ln in lines[1:]] == ["0", "0", "0", "0"]
        summary = json.loads((out / "stability_summary.json").read_text())
        assert summary["conclusion"] == "ConditionHoldsLimitsAgree"
        log = (out / "run.log").read_text()
        assert "conclusion" in log

    def test_counterexamples_run_emits_four_reports(self, tmp_path):
        path = spec_file(tmp_path, {"kind": "counterexamples"})
        out = tmp_path / "cx"
        assert main(["counterexamples", "--spec", path, "--out",
                     str(out)]) == 0
        reports = sorted(p.name for p in out.glob("counterexample_*.csv"))
        assert reports == ["counterexample_half-space.csv",
                           "counterexample_swapped-1d.csv",
                           "counterexample_swapped-layered.csv",
                           "counterexample_weak-mean-only.csv"]
        summary = json.loads((out / "counterexamples_summary.json")
                             .read_text())
        conclusions = {name: s["conclusion"] for name, s in summary.items()}
        assert conclusions["swapped-1d"] == "ConditionFailsLimitsAgree"

    def test_runtime_value_error_exits_2(self, tmp_path, capsys):
        tree = {"kind": "cell", "resolution": 16,
                "field": {"type": "trig", "offset": 2.0, "beta": 3.5,
                          "terms": [[0.5, [1.4142135623730951], 0.0]],
                          "dim": 1}}
        path = spec_file(tmp_path, tree)
        out = tmp_path / "bad"
        assert main(["cell", "--spec", path, "--out", str(out)]) == 2
        assert "invalid parameters" in capsys.readouterr().err
        assert "invalid-parameters" in (out / "run.log").read_text()

    def test_soundness_guard_exits_3(self, tmp_path, capsys, monkeypatch):
        def tripped():
            raise RuntimeError("catalog no longer matches the analysis")

        monkeypatch.setattr("homlab.cli.counterexample_suite", tripped)
        path = spec_file(tmp_path, {"kind": "counterexamples"})
        out = tmp_path / "guard"
        assert main(["counterexamples", "--spec", path, "--out",
                     str(out)]) == 3
        assert "soundness guard" in capsys.readouterr().err
        assert "soundness-guard" in (out / "run.log").read_text()

    def test_solver_failure_exits_4(self, tmp_path, capsys, monkeypatch):
        def stalled(*args, **kwargs):
            raise SolverError("cg stalled at iteration 3")

        monkeypatch.setattr("homlab.cli.run_stability_pair", stalled)
        tree = {"kind": "stability", "field": STEP_1D, "field_g": STEP_1D}
        path = spec_file(tmp_path, tree)
        out = tmp_path / "solv"
        assert main(["stability", "--spec", path, "--out", str(out)]) == 4
        assert "solver failure" in capsys.readouterr().err
        assert "solver-failure" in (out / "run.log").read_text()

    def test_seed_flag_overrides_spec(self, tmp_path):
        tree = {"kind": "stochastic", "seed": 5,
                "family": {"type": "checkerboard_family",
                           "values": [1.0, 4.0]},
                "family_g": {"type": "checkerboard_family",
                             "values": [1.0, 4.0]},
                "trials": 8, "torus_size": 2, "resolution_per_unit": 2,
                "statistic_sizes": [8, 16, 32]}
        path = spec_file(tmp_path, tree)
        out = tmp_path / "st"
        assert main(["stochastic", "--spec", path, "--out", str(out),
                     "--seed", "7"]) == 0
        summary = json.loads((out / "stochastic_summary.json").read_text())
        assert summary["seed"] == 7
        assert summary["intervals_overlap"] is True

    def test_perforation_run_penalized_sandwich(self, tmp_path):
        tree = {"kind": "perforation", "radius": 0.25, "resolution": 64,
                "n_list": [4, 16]}
        path = spec_file(tmp_path, tree)
        out = tmp_path / "perf"
        assert main(["perforation", "--spec", path, "--out", str(out),
                     "--threads", "2"]) == 0
        lines = (out / "perforation.csv").read_text().splitlines()
        assert lines[0] == "n,penalized,masked"
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
        masked = rows[0][2]
        assert rows[0][1] > rows[1][1] >= masked
        assert (out / "perforation.svg").exists()

    def test_perforation_lambda_table(self, tmp_path):
        tree = {"kind": "perforation", "radius": 0.25, "resolution": 64,
                "n_list": [4, 16], "eps_list": [0.5],
                "lambda_resolution": 64, "cell_resolution": 32}
        path = spec_file(tmp_path, tree)
        out = tmp_path / "lam"
        assert main(["perforation", "--spec", path, "--out", str(out),
                     "--no-plots"]) == 0
        lines = (out / "lambda.csv").read_text().splitlines()
        assert lines[0] == "epsilon,l2_distance"
        assert float(lines[1].split(",")[1]) > 0.0
        summary = json.loads((out / "perforation_summary.json").read_text())
        assert 0.0 < summary["theta"] < 1.0

    def test_rve_run_reports_window_verdict(self, tmp_path):
        tree = {"kind": "rve",
                "field": {"type": "half_space", "gamma": 2.0, "c": 0.5,
                          "dim": 1},
                "center": [-4.0], "windows": [2, 4, 8],
                "resolution_per_unit": 8}
        path = spec_file(tmp_path, tree)
        out = tmp_path / "rve"
        assert main(["rve", "--spec", path, "--out", str(out)]) == 0
        table = (out / "rve.csv").read_text()
        assert table == "R,value\n2,1.5\n4,1.5\n8,1.5\n"
        summary = json.loads((out / "rve_summary.json").read_text())
        assert summary["limit_estimate"] == pytest.approx(1.5, abs=1e-12)
        assert summary["homogenizable_at_center"] is True

    def test_rerun_is_byte_identical(self, tmp_path):
        tree = {"kind": "stability", "field": STEP_1D, "field_g": STEP_1D,
                "hom_resolution": 16}
        path = spec_file(tmp_path, tree)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["stability", "--spec", path, "--out", str(out1)]) == 0
        assert main(["stability", "--spec", path, "--out", str(out2)]) == 0
        for name in ("stability.csv", "stability_summary.json",
                     "stability.svg"):
            assert ((out1 / name).read_bytes()
                    == (out2 / name).read_bytes()), name
