import numpy as np
import pytest
from hypothesis import given, strategies as st

from tcsk.exceptions import GridMismatchError, NonFiniteFieldError
from tcsk.grid import (
    ScalarField,
    TorusGrid,
    complex_hessian,
    complex_second,
    dealias,
    integrate,
    partial,
    project_mean_zero,
    random_band_limited,
)

from oracles import cos_field, fd4_second, quarter_laplacian

seeds = st.integers(min_value=0, max_value=2**31 - 1)


class TestTorusGrid:
    def test_square_grid(self):
        g = TorusGrid.square(2, 8)
        assert g.sizes == (8, 8, 8, 8)
        assert g.ndim == 4
        assert g.npoints == 8**4

    @pytest.mark.parametrize("n, sizes", [(1, (12, 16)), (1, (4, 4)), (1, (16,)), (3, (8,) * 6)])
    def test_rejects_bad_shapes(self, n, sizes):
        with pytest.raises(ValueError):
            TorusGrid(n, sizes)

    def test_axis_names(self):
        g = TorusGrid.square(2, 8)
        assert [g.axis_index(a) for a in ("x1", "y1", "x2", "y2")] == [0, 1, 2, 3]
        with pytest.raises(ValueError):
            g.axis_index("x3")


class TestScalarField:
    def test_rejects_non_finite(self, grid1):
        vals = np.zeros(grid1.shape)
        vals[3, 4] = np.nan
        with pytest.raises(NonFiniteFieldError):
            ScalarField(grid1, vals)

    def test_rejects_wrong_size(self, grid1):
        with pytest.raises(ValueError):
            ScalarField(grid1, np.zeros(10))

    def test_is_immutable(self, grid1):
        f = ScalarField.zeros(grid1)
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0
        with pytest.raises(AttributeError):
            f.values = None

    def test_grid_mismatch(self, grid1):
        other = TorusGrid.square(1, 16)
        with pytest.raises(GridMismatchError):
            ScalarField.zeros(grid1) + ScalarField.zeros(other)


class TestPartial:
    def test_cosine_first_derivative(self, grid1):
        f = cos_field(grid1, [(1.0, (1, 0))])
        x, _ = grid1.coordinates()
        d = partial(f, "x1")
        np.testing.assert_allclose(d.values, np.broadcast_to(-np.sin(x), grid1.shape), atol=1e-13)

    def test_constant(self, grid1):
        assert partial(ScalarField.constant(grid1, 3.0), "y1").sup_norm() < 1e-14

    def test_second_derivative_matches_finite_differences(self):
        errs = []
        for size in (32, 64):
            g = TorusGrid.square(1, size)
            f = random_band_limited(g, 3, 1.0, seed=5)
            exact = partial(f, "x1", order=2).values
            errs.append(np.max(np.abs(fd4_second(f.values, 0, 2 * np.pi / size) - exact)))
        assert errs[1] < errs[0] / 12.0  # fourth order: 16x per halving, with margin

    @given(k=st.integers(1, 10), axis=st.integers(0, 3))
    def test_exact_on_fourier_modes(self, k, axis):
        g = TorusGrid.square(2, 32)
        wave = [0, 0, 0, 0]
        wave[axis] = k
        f = cos_field(g, [(1.0, wave)])
        x = g.coordinates()[axis]
        expected = np.broadcast_to(-k * np.sin(k * x), g.shape)
        assert np.max(np.abs(partial(f, axis).values - expected)) <= 1e-12 * k

    @given(seed=seeds)
    def test_first_derivative_integrates_to_zero(self, seed):
        g = TorusGrid.square(1, 16)
        f = ScalarField(g, np.random.default_rng(seed).standard_normal(g.shape))
        assert abs(integrate(partial(f, 0))) < 1e-11

    def test_bad_axis_and_order(self, grid1):
        f = ScalarField.zeros(grid1)
        with pytest.raises(ValueError):
            partial(f, 2)
        with pytest.raises(ValueError):
            partial(f, 0, order=3)


class TestComplexSecond:
    def test_n1_cosine(self, grid1):
        f = cos_field(grid1, [(1.0, (1, 0))])
        re, im = complex_second(f, 0, 0)
        np.testing.assert_allclose(re.values, -0.25 * f.values, atol=1e-14)
        assert im.sup_norm() == 0.0

    def test_n1_matches_quarter_laplacian(self, grid1):
        f = random_band_limited(grid1, 5, 1.0, seed=3)
        np.testing.assert_allclose(complex_second(f, 0, 0)[0].values, quarter_laplacian(f.values), atol=1e-13)

    def test_n2_off_diagonal_real(self):
        g = TorusGrid.square(2, 8)
        x1, _, x2, _ = g.coordinates()
        f = ScalarField(g, np.broadcast_to(np.cos(x1) * np.cos(x2), g.shape))
        re, im = complex_second(f, 0, 1)
        # d_z1 d_zbar2 = (d_x1 - i d_y1)(d_x2 + i d_y2) / 4
        np.testing.assert_allclose(re.values, np.broadcast_to(0.25 * np.sin(x1) * np.sin(x2), g.shape), atol=1e-14)
        assert im.sup_norm() < 1e-14

    def test_n2_off_diagonal_imaginary(self):
        g = TorusGrid.square(2, 8)
        x1, _, _, y2 = g.coordinates()
        f = ScalarField(g, np.broadcast_to(np.cos(x1 + y2), g.shape))
        re, im = complex_second(f, 0, 1)
        assert re.sup_norm() < 1e-14
        np.testing.assert_allclose(im.values, np.broadcast_to(-0.25 * np.cos(x1 + y2), g.shape), atol=1e-14)

    def test_constant_is_zero(self, grid2):
        re, im = complex_second(ScalarField.constant(grid2, 2.0), 1, 0)
        assert re.sup_norm() == 0.0 and im.sup_norm() == 0.0

    @given(seed=seeds)
    def test_hermitian(self, seed):
        g = TorusGrid.square(2, 8)
        vals = np.random.default_rng(seed).standard_normal(g.shape)
        h = complex_hessian(g, vals)
        assert np.max(np.abs(h - np.conj(np.swapaxes(h, 0, 1)))) < 1e-12
        re01, im01 = complex_second(ScalarField(g, vals), 0, 1)
        re10, im10 = complex_second(ScalarField(g, vals), 1, 0)
        assert np.max(np.abs(re01.values - re10.values)) < 1e-12
        assert np.max(np.abs(im01.values + im10.values)) < 1e-12

    def test_index_range(self, grid1):
        with pytest.raises(ValueError):
            complex_second(ScalarField.zeros(grid1), 0, 1)


class TestIntegrate:
    def test_unit(self, grid2):
        assert integrate(ScalarField.constant(grid2, 1.0)) == pytest.approx((2 * np.pi) ** 4, rel=1e-14)

    def test_zero_mean_mode(self, grid1):
        assert abs(integrate(cos_field(grid1, [(1.0, (1, 0))]))) < 1e-13

    def test_cos_squared(self, grid1):
        f = cos_field(grid1, [(1.0, (1, 0))])
        assert integrate(f, f) == pytest.approx(0.5 * (2 * np.pi) ** 2, rel=1e-14)

    def test_grid_mismatch(self, grid1):
        with pytest.raises(GridMismatchError):
            integrate(ScalarField.zeros(grid1), ScalarField.zeros(TorusGrid.square(1, 16)))


class TestProjectMeanZero:
    def test_removes_constant(self, grid1):
        c = cos_field(grid1, [(1.0, (1, 0))])
        np.testing.assert_allclose(project_mean_zero(c + 5.0).values, c.values, atol=1e-13)

    def test_idempotent(self, grid1):
        f = random_band_limited(grid1, 4, 1.0, seed=1)
        np.testing.assert_allclose(project_mean_zero(f).values, f.values, atol=1e-15)

    @given(seed=seeds)
    def test_weighted(self, seed):
        g = TorusGrid.square(1, 16)
        rng = np.random.default_rng(seed)
        f = ScalarField(g, rng.standard_normal(g.shape))
        w = ScalarField(g, 0.1 + rng.random(g.shape))
        out = project_mean_zero(f, w)
        assert abs(integrate(out, w)) < 1e-12 * max(1.0, f.sup_norm()) * g.volume
        diff = out.values - f.values
        assert np.ptp(diff) < 1e-14

    def test_rejects_non_positive_weight(self, grid1):
        with pytest.raises(ValueError):
            project_mean_zero(ScalarField.zeros(grid1), ScalarField.constant(grid1, -1.0))


class TestDealias:
    def test_band_limited_unchanged(self, grid1):
        f = random_band_limited(grid1, 5, 1.0, seed=0)
        np.testing.assert_allclose(dealias(f).values, f.values, atol=1e-14)

    def test_highest_mode_removed(self, grid1):
        f = cos_field(grid1, [(1.0, (16, 0))])
        assert dealias(f).sup_norm() < 1e-14

    @given(seed=seeds)
    def test_idempotent(self, seed):
        g = TorusGrid.square(1, 16)
        f = dealias(ScalarField(g, np.random.default_rng(seed).standard_normal(g.shape)))
        np.testing.assert_allclose(dealias(f).values, f.values, atol=1e-14)


class TestRandomBandLimited:
    def test_zero_amplitude(self, grid1):
        assert random_band_limited(grid1, 3, 0.0, seed=1).sup_norm() == 0.0

    def test_deterministic(self, grid1):
        assert random_band_limited(grid1, 3, 0.5, seed=7) == random_band_limited(grid1, 3, 0.5, seed=7)

    def test_seeds_differ(self, grid1):
        a = random_band_limited(grid1, 3, 0.5, seed=1)
        b = random_band_limited(grid1, 3, 0.5, seed=2)
        assert np.max(np.abs(a.values - b.values)) > 1e-3

    @given(seed=seeds, amp=st.floats(0.01, 10.0), mode=st.integers(1, 7))
    def test_mean_zero_and_bounded(self, seed, amp, mode):
        g = TorusGrid.square(1, 16)
        f = random_band_limited(g, mode, amp, seed)
        assert abs(f.mean()) < 1e-14 * amp
        assert f.sup_norm() <= amp * (1 + 1e-14)
        spec = np.abs(np.fft.fftn(f.values))
        k = np.abs(np.fft.fftfreq(16, 1 / 16))
        assert np.all(spec[k > mode, :] < 1e-10) and np.all(spec[:, k > mode] < 1e-10)

    def test_mode_at_nyquist_rejected(self, grid1):
        with pytest.raises(ValueError):
            random_band_limited(grid1, 16, 1.0, seed=0)
