import csv
import json

import pytest

from tcsk import checks
from tcsk.checks import CriterionResult
from tcsk.cli import LOG_COLUMNS, main
from tcsk.config import OUTPUT_ENV
from tcsk.fieldio import read_field, write_field
from tcsk.grid import TorusGrid, random_band_limited

SMALL = "[grid]\nsizes = [16, 16]\n"
PERTURBED = SMALL + '[chi]\npsi = { kind = "cosines", terms = [{ amplitude = 0.3, k = [1, 0] }] }\n'


def run_cli(tmp_path, command, text=None, extra=(), name="run.toml"):
    argv = [command, "-o", str(tmp_path / "out")]
    if text is not None:
        cfg = tmp_path / name
        cfg.write_text(text)
        argv += ["-c", str(cfg)]
    return main(argv + list(extra))


def summary(tmp_path):
    return json.loads((tmp_path / "out" / "summary.json").read_text())


def log_rows(tmp_path):
    with open(tmp_path / "out" / "run_log.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == LOG_COLUMNS
    return rows[1:]


class TestContinue:
    def test_flat(self, tmp_path):
        assert run_cli(tmp_path, "continue", SMALL) == 0
        s = summary(tmp_path)
        assert s["status"] == "completed" and s["r_chi"] == 1.0 and s["exit_code"] == 0
        assert "wall_time_s" in s and s["tolerances"]["tol_outer"] == 1e-9
        assert read_field(tmp_path / "out" / "phi_final.tcsk").sup_norm() <= 1e-10
        rows = log_rows(tmp_path)
        assert [float(r[1]) for r in rows] == s["accepted_t"]
        assert len(rows) == 21

    def test_stall_exit_code(self, tmp_path):
        text = PERTURBED + "[solver]\nmax_newton = 1\n"
        assert run_cli(tmp_path, "continue", text) == 3
        assert summary(tmp_path)["status"] == "stalled"

    def test_deterministic_summary(self, tmp_path):
        outs = []
        for i in range(2):
            sub = tmp_path / str(i)
            sub.mkdir()
            assert run_cli(sub, "continue", PERTURBED + "[path]\nschedule = [0.0, 0.5, 1.0]\n") == 0
            s = summary(sub)
            s.pop("wall_time_s")
            outs.append(json.dumps(s, sort_keys=True))
        assert outs[0] == outs[1]


class TestFlows:
    @pytest.mark.parametrize("command", ["jflow", "calabi"])
    def test_converges(self, tmp_path, command):
        assert run_cli(tmp_path, command, PERTURBED) == 0
        s = summary(tmp_path)
        assert s["status"] == "converged" and s["final_residual"] <= 1e-9
        rows = log_rows(tmp_path)
        assert len(rows) == s["steps"] + 1
        assert [int(r[0]) for r in rows] == list(range(s["steps"] + 1))
        energies = [float(r[5]) for r in rows]
        assert all(b < a for a, b in zip(energies, energies[1:]))

    def test_underflow_exit_code(self, tmp_path):
        text = PERTURBED + "[flow]\ntol = 1e-30\ndt = 16.0\ndt_min = 1.0\n"
        assert run_cli(tmp_path, "jflow", text) == 4
        assert summary(tmp_path)["status"] == "step-underflow"

    def test_max_steps_exit_code(self, tmp_path):
        assert run_cli(tmp_path, "jflow", PERTURBED + "[flow]\nmax_steps = 2\n") == 3


class TestGeodesic:
    def test_run(self, tmp_path):
        text = SMALL + '[geodesic]\neps = 0.01\nn_t = 9\nphi1 = { kind = "cosines", terms = [{ amplitude = 0.3, k = [1, 0] }] }\n'
        assert run_cli(tmp_path, "geodesic", text) == 0
        s = summary(tmp_path)
        assert s["residual"] <= 1e-8 and s["n_t"] == 9
        assert s["min_second_difference"]["j_chi"] >= -5 * 0.01
        manifest = json.loads((tmp_path / "out" / s["manifest"]).read_text())
        assert len(manifest["files"]) == 9

    def test_n2_without_flag(self, tmp_path):
        assert run_cli(tmp_path, "geodesic", "[grid]\nn = 2\nsizes = [8, 8, 8, 8]\n") == 2


class TestEnergy:
    def test_stored_field(self, tmp_path, capsys):
        g = TorusGrid.square(1, 16)
        write_field(tmp_path / "phi.tcsk", random_band_limited(g, 2, 0.1, 3))
        assert run_cli(tmp_path, "energy", SMALL, ["--field", str(tmp_path / "phi.tcsk")]) == 0
        report = json.loads((tmp_path / "out" / "energy.json").read_text())
        assert report["k_energy"] == pytest.approx(report["entropy"], rel=1e-7)
        assert json.loads(capsys.readouterr().out) == report

    def test_missing_field_file(self, tmp_path):
        assert run_cli(tmp_path, "energy", SMALL, ["--field", str(tmp_path / "absent.tcsk")]) == 5


class TestCheck:
    def test_single_criterion(self, tmp_path, capsys):
        assert run_cli(tmp_path, "check", "[check]\ncriteria = [5]\n") == 0
        out = capsys.readouterr().out
        assert "[PASS]  5" in out and "1/1 criteria passed" in out
        assert summary(tmp_path)["criteria"][0]["passed"] is True

    def test_failure_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setitem(checks.CRITERIA, 5, ("always fails", 5.0, lambda: (False, {}, "forced")))
        assert run_cli(tmp_path, "check", "[check]\ncriteria = [5]\n") == 1
        assert summary(tmp_path)["status"] == "failed"

    def test_crash_is_failure(self, monkeypatch):
        def boom():
            raise RuntimeError("bad")

        monkeypatch.setitem(checks.CRITERIA, 5, ("crash", 5.0, boom))
        res = checks.run_criterion(5)
        assert isinstance(res, CriterionResult) and not res.passed and "RuntimeError" in res.detail


class TestConfigHandling:
    def test_non_hermitian(self, tmp_path, capsys):
        text = "[grid]\nn = 2\nsizes = [8, 8, 8, 8]\n[chi]\nmatrix = [[1.0, 0.2], [0.0, 1.0]]\n"
        assert run_cli(tmp_path, "continue", text) == 2
        assert "chi.matrix[0][1]" in capsys.readouterr().err

    def test_command_mismatch(self, tmp_path):
        assert run_cli(tmp_path, "jflow", 'command = "continue"\n' + SMALL) == 2

    def test_negative_seed(self, tmp_path):
        assert run_cli(tmp_path, "check", None, ["--seed", "-3"]) == 2

    def test_field_only_for_energy(self, tmp_path):
        assert run_cli(tmp_path, "continue", SMALL, ["--field", "x.tcsk"]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["continue", "-c", str(tmp_path / "absent.toml")]) == 5

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as err:
            main(["plot"])
        assert err.value.code == 2

    def test_output_precedence(self, tmp_path, monkeypatch):
        cfg = tmp_path / "run.toml"
        cfg.write_text(f'output_dir = "{tmp_path / "from_config"}"\n' + SMALL + "[path]\nschedule = [0.0, 1.0]\n")
        assert main(["continue", "-c", str(cfg)]) == 0
        assert (tmp_path / "from_config" / "summary.json").exists()
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "from_env"))
        assert main(["continue", "-c", str(cfg)]) == 0
        assert (tmp_path / "from_env" / "summary.json").exists()
        assert main(["continue", "-c", str(cfg), "-o", str(tmp_path / "from_flag")]) == 0
        assert (tmp_path / "from_flag" / "summary.json").exists()

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["continue", "-o", str(blocker / "sub")]) == 5
