import json

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from tcsk.fieldio import read_field
from tcsk.geodesic import (
    convexity_profile,
    geodesic_settings,
    second_derivative_identity_check,
    second_derivative_terms,
    solve_geodesic,
)
from tcsk.grid import ScalarField, TorusGrid, random_band_limited
from tcsk.kahler import HermitianFormField

from oracles import cos_field

EPS = 1e-2


@pytest.fixture(scope="module")
def g32():
    return TorusGrid.square(1, 32)


@pytest.fixture(scope="module")
def bump(g32):
    return cos_field(g32, [(0.3, (1, 0))])


@pytest.fixture(scope="module")
def path(g32, bump):
    return solve_geodesic(ScalarField.zeros(g32), bump, EPS)


@pytest.fixture(scope="module")
def flat_path(g32):
    z = ScalarField.zeros(g32)
    return solve_geodesic(z, z, EPS)


def parabola(path):
    return [0.5 * path.eps * s * (s - 1) for s in path.times]


class TestSolve:
    def test_spatially_constant(self, flat_path):
        for s, c in zip(flat_path.slices, parabola(flat_path)):
            assert np.max(np.abs(s.values - c)) < 1e-10

    @hsettings(max_examples=5)
    @given(eps=st.floats(1e-4, 1.0))
    def test_spatially_constant_any_eps(self, eps):
        g = TorusGrid.square(1, 8)
        z = ScalarField.zeros(g)
        p = solve_geodesic(z, z, eps, n_t=9)
        for s, c in zip(p.slices, parabola(p)):
            assert np.max(np.abs(s.values - c)) < 1e-10

    def test_vanishing_eps(self, g32):
        z = ScalarField.zeros(g32)
        p = solve_geodesic(z, z, 1e-14)
        assert max(s.sup_norm() for s in p.slices) < 1e-14

    def test_generic_path(self, path, bump):
        assert path.residual <= 1e-8
        assert path.n_t == 17
        assert path.slices[0] is path.phi0 and path.slices[-1] is bump
        assert np.array_equal(path.slices[-1].values, bump.values)

    def test_endpoint_symmetry(self, g32, bump, path):
        back = solve_geodesic(bump, ScalarField.zeros(g32), EPS).reversed()
        for a, b in zip(path.slices, back.slices):
            assert np.max(np.abs(a.values - b.values)) < 1e-8

    def test_deflection_monotone_in_eps(self, g32, bump):
        d = [solve_geodesic(ScalarField.zeros(g32), bump, e).deflection() for e in (1e-1, 1e-2, 1e-3)]
        assert d[0] > d[1] > d[2]

    def test_n2_gated(self, grid2):
        z = ScalarField.zeros(grid2)
        with pytest.raises(ValueError):
            solve_geodesic(z, z, EPS)
        p = solve_geodesic(z, random_band_limited(grid2, 1, 0.1, 1), EPS, n_t=9, allow_n2=True)
        assert p.residual <= 1e-8

    @pytest.mark.parametrize("kw", [{"eps": 0.0}, {"eps": -1.0}, {"n_t": 8}, {"n_t": 16}, {"n_t": 7}])
    def test_bad_arguments(self, g32, kw):
        z = ScalarField.zeros(g32)
        args = {"eps": EPS, "n_t": 17, **kw}
        with pytest.raises(ValueError):
            solve_geodesic(z, z, args["eps"], args["n_t"])

    def test_settings(self):
        assert geodesic_settings().tol_outer == 1e-8
        assert geodesic_settings(max_newton=3).max_newton == 3


class TestConvexity:
    def test_flat_path_j_chi(self, flat_path):
        assert convexity_profile(flat_path, "j_chi").minimum >= -1e-10

    @pytest.mark.parametrize("functional", ["j_chi", "twisted", "k_energy"])
    def test_generic_path(self, path, g32, functional):
        chi = HermitianFormField.identity(g32, cos_field(g32, [(0.2, (0, 1))]))
        prof = convexity_profile(path, functional, chi, t=0.5)
        assert prof.second_differences.shape == (path.n_t - 2,)
        assert prof.minimum >= -5 * EPS
        assert prof.slack_constant <= 5

    def test_values_start_at_zero(self, path):
        assert convexity_profile(path, "j_chi").values[0] == 0.0

    def test_monge_ampere_is_affine_up_to_eps(self, path):
        # d^2/dt^2 of the Monge-Ampere energy is eps * Vol along an eps-geodesic
        prof = convexity_profile(path, "monge_ampere")
        np.testing.assert_allclose(prof.second_differences, EPS * (2 * np.pi) ** 2, rtol=2e-2)

    def test_unknown_functional(self, path):
        with pytest.raises(ValueError):
            convexity_profile(path, "volume")


class TestIdentity:
    def test_flat_path(self, flat_path, g32):
        chi = HermitianFormField.identity(g32)
        terms = second_derivative_terms(flat_path, chi)
        expected = EPS * 1.0 * (2 * np.pi) ** 2
        assert np.max(np.abs(terms.lhs - expected)) < 1e-9
        assert np.max(np.abs(terms.rhs - expected)) < 1e-9

    def test_gap_and_refinement(self, g32, bump):
        chi = HermitianFormField.identity(g32, cos_field(g32, [(0.2, (0, 1))]))
        gaps = []
        for n_t in (17, 33):
            p = solve_geodesic(ScalarField.zeros(g32), bump, EPS, n_t=n_t)
            gaps.append(second_derivative_identity_check(p, chi))
        assert gaps[0] <= 1e-3
        assert 3.0 <= gaps[0] / gaps[1] <= 5.0

    def test_linear_in_chi(self, path, g32):
        chi = HermitianFormField.identity(g32, cos_field(g32, [(0.2, (0, 1))]))
        one = second_derivative_terms(path, chi)
        two = second_derivative_terms(path, chi.scaled(2.0))
        np.testing.assert_allclose(two.lhs, 2 * one.lhs, rtol=1e-9)
        np.testing.assert_allclose(two.rhs, 2 * one.rhs, rtol=1e-12)


class TestExport:
    def test_manifest_and_slices(self, path, tmp_path):
        manifest = path.export(tmp_path / "out")
        meta = json.loads(manifest.read_text())
        assert meta["n_t"] == 17 and meta["eps"] == EPS and meta["residual"] == path.residual
        assert len(meta["files"]) == 17
        for name, s in zip(meta["files"], path.slices):
            assert read_field(manifest.parent / name) == s
