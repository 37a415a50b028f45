import numpy as np
import pytest
from hypothesis import given, strategies as st

from tcsk.config import COMMANDS, build_chi, build_field, load_config, parse_config
from tcsk.exceptions import ConfigError
from tcsk.fieldio import write_field
from tcsk.grid import TorusGrid, random_band_limited


def error_key(text):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    return err.value.key


class TestDefaults:
    def test_minimal_check(self):
        cfg = parse_config('command = "check"')
        assert cfg.command == "check" and cfg.n == 1 and cfg.sizes == (64, 64) and cfg.seed == 0
        assert np.array_equal(cfg.chi_matrix, np.eye(1))

    def test_empty_document(self):
        cfg = parse_config("")
        assert cfg.command == "check" and not cfg.command_set

    def test_n2_default_sizes(self):
        assert parse_config("[grid]\nn = 2").sizes == (16, 16, 16, 16)

    def test_full_document(self):
        cfg = parse_config('''
command = "continue"
seed = 4
output_dir = "out"
[grid]
n = 2
sizes = [8, 8, 16, 16]
[chi]
matrix = [[2.0, 0.5], [0.5, 1.0]]
matrix_imag = [[0.0, 0.25], [-0.25, 0.0]]
psi = { kind = "random", max_mode = 2, amplitude = 0.05, seed = 3 }
[path]
t = 0.25
schedule = [0.0, 0.5, 1.0]
predictor = "secant"
[solver]
tol_outer = 1e-10
max_newton = 12
[flow]
dt = 0.5
max_steps = 100
initial = { kind = "cosines", terms = [{ amplitude = 0.1, k = [1, 0, 0, 0] }] }
[geodesic]
eps = 0.05
n_t = 9
allow_n2 = true
[energy]
t = 0.75
k = 2
[check]
criteria = [1, 5]
''')
        assert cfg.command == "continue" and cfg.seed == 4 and cfg.output_dir == "out"
        assert cfg.sizes == (8, 8, 16, 16)
        assert cfg.chi_matrix[0, 1] == 0.5 + 0.25j
        assert cfg.schedule == [0.0, 0.5, 1.0] and cfg.predictor == "secant"
        assert cfg.solver == {"tol_outer": 1e-10, "max_newton": 12}
        assert cfg.geodesic["allow_n2"] is True and cfg.energy["k"] == 2
        assert cfg.check["criteria"] == [1, 5]
        chi = build_chi(cfg)
        assert chi.grid == TorusGrid(2, (8, 8, 16, 16))
        assert cfg.to_dict()["chi"]["matrix_imag"][0][1] == 0.25


class TestErrors:
    def test_non_hermitian_names_entry(self):
        key = error_key("[grid]\nn = 2\n[chi]\nmatrix = [[1.0, 0.3], [0.0, 1.0]]")
        assert key == "chi.matrix[0][1]"

    def test_schedule_out_of_range(self):
        assert error_key("[path]\nschedule = [0.0, 0.5, 1.2]") == "path.schedule[2]"

    @pytest.mark.parametrize("text, key", [
        ("colour = 1", "colour"),
        ("[solver]\ntolerance = 1", "solver.tolerance"),
        ("[grid]\nsizes = [64, 48]", "grid.sizes[1]"),
        ("[grid]\nn = 3", "grid.n"),
        ("[grid]\nsizes = [64]", "grid.sizes"),
        ('command = "plot"', "command"),
        ("[chi]\nmatrix = [[-1.0]]", "chi.matrix"),
        ("[path]\nschedule = [0.1, 0.5]", "path.schedule[0]"),
        ("[path]\nschedule = [0.0, 0.5, 0.4]", "path.schedule[2]"),
        ("[path]\nt = 1.5", "path.t"),
        ('[path]\npredictor = "cubic"', "path.predictor"),
        ("[solver]\ndamping = 1.0", "solver.damping"),
        ("[solver]\nmax_newton = 2.5", "solver.max_newton"),
        ("[flow]\ndt = -1", "flow.dt"),
        ("[geodesic]\nn_t = 10", "geodesic.n_t"),
        ("[geodesic]\nallow_n2 = 1", "geodesic.allow_n2"),
        ("[energy]\nk = 2", "energy.k"),
        ("[check]\ncriteria = [11]", "check.criteria[0]"),
        ('[chi]\npsi = { kind = "spline" }', "chi.psi.kind"),
        ('[chi]\npsi = { kind = "random", amplitude = 0.1 }', "chi.psi.max_mode"),
        ('[chi]\npsi = { kind = "cosines", terms = [{ amplitude = 1.0 }] }', "chi.psi.terms[0]"),
        ('[chi]\npsi = { kind = "zero", scale = 2 }', "chi.psi.scale"),
        ("seed = -1", "seed"),
        ("grid = 3", "grid"),
    ])
    def test_key_paths(self, text, key):
        assert error_key(text) == key

    def test_invalid_toml(self):
        with pytest.raises(ConfigError, match="invalid TOML"):
            parse_config("[grid\n")

    @given(t=st.floats(allow_nan=False).filter(lambda v: not 0.0 <= v <= 1.0))
    def test_schedule_values_outside_unit_interval(self, t):
        with pytest.raises(ConfigError):
            parse_config(f"[path]\nschedule = [0.0, {t!r}]")

    @given(size=st.integers(1, 4096).filter(lambda s: s < 8 or s & (s - 1)))
    def test_sizes_must_be_powers_of_two(self, size):
        with pytest.raises(ConfigError):
            parse_config(f"[grid]\nsizes = [{size}, 64]")


class TestFields:
    def test_cosines(self):
        g = TorusGrid.square(1, 16)
        f = build_field(g, {"kind": "cosines", "terms": [{"amplitude": 0.5, "k": [1, 0]}, {"amplitude": 0.2, "k": [0, 2], "phase": np.pi / 2}]})
        x, y = g.coordinates()
        np.testing.assert_allclose(f.values, 0.5 * np.cos(x) + 0.2 * np.cos(2 * y + np.pi / 2), atol=1e-15)

    def test_cosines_wrong_rank(self):
        with pytest.raises(ConfigError):
            build_field(TorusGrid.square(1, 16), {"kind": "cosines", "terms": [{"amplitude": 0.5, "k": [1]}]}, "f")

    def test_random_matches_generator(self):
        g = TorusGrid.square(1, 16)
        f = build_field(g, {"kind": "random", "max_mode": 3, "amplitude": 0.2, "seed": 5})
        assert f == random_band_limited(g, 3, 0.2, 5)

    def test_file_relative_to_config(self, tmp_path):
        g = TorusGrid.square(1, 16)
        write_field(tmp_path / "psi.tcsk", random_band_limited(g, 2, 0.1, 1))
        (tmp_path / "run.toml").write_text('[grid]\nsizes = [16, 16]\n[chi]\npsi = { kind = "file", path = "psi.tcsk" }\n')
        cfg = load_config(tmp_path / "run.toml")
        assert build_chi(cfg).potential == random_band_limited(g, 2, 0.1, 1)

    def test_file_grid_mismatch(self, tmp_path):
        write_field(tmp_path / "psi.tcsk", random_band_limited(TorusGrid.square(1, 32), 2, 0.1, 1))
        with pytest.raises(ConfigError):
            build_field(TorusGrid.square(1, 16), {"kind": "file", "path": "psi.tcsk"}, "chi.psi", tmp_path)

    def test_non_positive_chi(self):
        cfg = parse_config('[chi]\npsi = { kind = "cosines", terms = [{ amplitude = 8.0, k = [1, 0] }] }')
        with pytest.raises(ConfigError) as err:
            build_chi(cfg)
        assert err.value.key == "chi.psi"


def test_command_list():
    assert COMMANDS == ("continue", "jflow", "calabi", "geodesic", "energy", "check")
