"""Periodic spectral arithmetic on flat complex tori.

Every real axis has period 2*pi. Axes are ordered ``(x1, y1, x2, y2, ...)``
with ``z_a = x_a + i y_a``; arrays are row-major with the last axis fastest.
Complex derivatives follow ``d/dz = (d/dx - i d/dy)/2`` and
``d/dzbar = (d/dx + i d/dy)/2``, so ``d2/dz dzbar = (d2/dx2 + d2/dy2)/4``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from numbers import Real

import numpy as np
from scipy import fft as sfft

from .exceptions import GridMismatchError, NonFiniteFieldError

TWO_PI = 2.0 * np.pi


def _is_power_of_two(m):
    return m > 0 and (m & (m - 1)) == 0


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic lattice on ``(R/2piZ)^(2n)``.

    Parameters
    ----------
    n : int
        Complex dimension, 1 or 2.
    sizes : tuple of int
        Sample count per real axis, ``2n`` entries, each a power of two >= 8.
    """

    n: int
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if self.n not in (1, 2):
            raise ValueError(f"complex dimension must be 1 or 2, got {self.n}")
        if len(sizes) != 2 * self.n:
            raise ValueError(f"need {2 * self.n} axis sizes for n={self.n}, got {len(sizes)}")
        for s in sizes:
            if s < 8 or not _is_power_of_two(s):
                raise ValueError(f"axis size {s} is not a power of two >= 8")

    @classmethod
    def square(cls, n, size):
        return cls(n, (size,) * (2 * n))

    @property
    def shape(self):
        return self.sizes

    @property
    def ndim(self):
        return 2 * self.n

    @property
    def npoints(self):
        return int(np.prod(self.sizes))

    @property
    def volume(self):
        return TWO_PI ** self.ndim

    @property
    def cell_volume(self):
        return self.volume / self.npoints

    def axis_index(self, name):
        """Map ``'x1'``, ``'y2'`` ... to the array axis."""
        if isinstance(name, int):
            return name
        kind, idx = name[0], int(name[1:]) - 1
        if kind not in "xy" or not 0 <= idx < self.n:
            raise ValueError(f"unknown axis {name!r} for n={self.n}")
        return 2 * idx + (kind == "y")

    def coordinates(self):
        """Sample coordinates, one broadcastable array per real axis."""
        axes = [np.arange(s) * (TWO_PI / s) for s in self.sizes]
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    def _broadcast(self, vec, axis):
        shape = [1] * self.ndim
        shape[axis] = vec.size
        return vec.reshape(shape)

    @cached_property
    def wavenumbers(self):
        """Integer wavenumbers per axis (Nyquist kept, negative sign)."""
        return tuple(
            self._broadcast(sfft.fftfreq(s, 1.0 / s), a) for a, s in enumerate(self.sizes)
        )

    @cached_property
    def derivative_wavenumbers(self):
        """Wavenumbers for odd derivatives: the Nyquist mode is annihilated."""
        out = []
        for a, s in enumerate(self.sizes):
            k = sfft.fftfreq(s, 1.0 / s)
            k[s // 2] = 0.0
            out.append(self._broadcast(k, a))
        return tuple(out)

    @cached_property
    def dz_symbols(self):
        k = self.derivative_wavenumbers
        return tuple(0.5 * (1j * k[2 * a] + k[2 * a + 1]) for a in range(self.n))

    @cached_property
    def dzbar_symbols(self):
        k = self.derivative_wavenumbers
        return tuple(0.5 * (1j * k[2 * a] - k[2 * a + 1]) for a in range(self.n))

    @cached_property
    def flat_laplacian_symbol(self):
        """Symbol of the flat Laplacian ``sum_a d2/dz_a dzbar_a`` (non-positive)."""
        return sum((self.dz_symbols[a] * self.dzbar_symbols[a]).real for a in range(self.n))

    @cached_property
    def dealias_mask(self):
        """True on modes kept by the 2/3 rule: ``|k_a| <= N_a // 3`` on every axis."""
        mask = np.ones(self.sizes, dtype=bool)
        for k, s in zip(self.wavenumbers, self.sizes):
            mask = mask & (np.abs(k) <= s // 3)
        return mask

    # FFT helpers on raw arrays; real inputs yield complex spectra.
    def fft(self, values):
        return sfft.fftn(values, axes=range(self.ndim))

    def ifft(self, spectrum):
        return sfft.ifftn(spectrum, axes=range(-self.ndim, 0))


class ScalarField:
    """Real samples of a function on a :class:`TorusGrid`.

    The sample array is copied on construction and marked read-only, so a
    field is a value: it can be shared freely between threads and caches.
    """

    __slots__ = ("grid", "values")
    __array_priority__ = 1000

    def __init__(self, grid, values):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim == 0:
            arr = np.full(grid.shape, float(arr))
        if arr.size != grid.npoints:
            raise ValueError(f"expected {grid.npoints} samples, got {arr.size}")
        arr = arr.reshape(grid.shape)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteFieldError("field contains non-finite samples")
        arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("ScalarField is immutable")

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(x1, y1, ...)`` on the grid."""
        vals = np.broadcast_to(func(*grid.coordinates()), grid.shape)
        return cls(grid, vals)

    def __repr__(self):
        return f"ScalarField(n={self.grid.n}, sizes={self.grid.sizes}, sup={self.sup_norm():.3e})"

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def mean(self):
        return float(np.mean(self.values))

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        if isinstance(other, Real):
            return float(other)
        return np.asarray(other, dtype=np.float64)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._other(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __eq__(self, other):
        return (
            isinstance(other, ScalarField)
            and other.grid == self.grid
            and np.array_equal(other.values, self.values)
        )

    __hash__ = None


def _require_same_grid(*fields):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("fields live on different grids")
    return grid


def partial(f, axis, order=1):
    """Spectral derivative of ``f`` along one real axis.

    ``order=1`` differentiates with the Nyquist mode annihilated (the exact
    derivative of the real band-limited interpolant at the nodes);
    ``order=2`` keeps the Nyquist mode.
    """
    grid = f.grid
    ax = grid.axis_index(axis)
    if not 0 <= ax < grid.ndim:
        raise ValueError(f"axis {axis} out of range for n={grid.n}")
    if order == 1:
        symbol = 1j * grid.derivative_wavenumbers[ax]
    elif order == 2:
        symbol = -(grid.wavenumbers[ax] ** 2)
    else:
        raise ValueError("order must be 1 or 2")
    return ScalarField(grid, grid.ifft(symbol * grid.fft(f.values)).real)


def holomorphic_gradient(grid, values, spectrum=None):
    """``d f / d z_a`` for every a, shape ``(n, *grid.shape)``, complex."""
    fh = grid.fft(values) if spectrum is None else spectrum
    return np.stack([grid.ifft(s * fh) for s in grid.dz_symbols])


def complex_hessian(grid, values, spectrum=None):
    """Matrix field ``f_{a bbar}``, shape ``(n, n, *grid.shape)``, complex.

    Built as products of first-order symbols so the matrix is exactly
    Hermitian and the discrete integration-by-parts identities hold.
    """
    n = grid.n
    fh = grid.fft(values) if spectrum is None else spectrum
    out = np.empty((n, n) + grid.shape, dtype=np.complex128)
    for a in range(n):
        out[a, a] = grid.ifft(grid.dz_symbols[a] * grid.dzbar_symbols[a] * fh).real
        for b in range(a + 1, n):
            out[a, b] = grid.ifft(grid.dz_symbols[a] * grid.dzbar_symbols[b] * fh)
            out[b, a] = np.conj(out[a, b])
    return out


def complex_second(f, alpha, beta):
    """The entry ``f_{alpha betabar}`` of the complex Hessian.

    Returns ``(real_part, imag_part)`` as two fields; the imaginary part is
    identically zero on the diagonal.
    """
    n = f.grid.n
    if not (0 <= alpha < n and 0 <= beta < n):
        raise ValueError(f"complex indices must be < {n}")
    fh = f.grid.fft(f.values)
    entry = f.grid.ifft(f.grid.dz_symbols[alpha] * f.grid.dzbar_symbols[beta] * fh)
    if alpha == beta:
        return ScalarField(f.grid, entry.real), ScalarField.zeros(f.grid)
    return ScalarField(f.grid, entry.real), ScalarField(f.grid, entry.imag)


def integrate(f, weight=None):
    """Trapezoid quadrature ``sum f * weight * cell_volume``."""
    if weight is None:
        return float(np.sum(f.values) * f.grid.cell_volume)
    _require_same_grid(f, weight)
    return float(np.sum(f.values * weight.values) * f.grid.cell_volume)


def project_mean_zero(f, weight=None):
    """Subtract the constant making ``integrate(result, weight) == 0``."""
    total = integrate(ScalarField.constant(f.grid, 1.0), weight)
    if not total > 0:
        raise ValueError("weight must have positive total integral")
    return f - integrate(f, weight) / total


def dealias(f):
    """Zero every mode outside the 2/3-rule band; idempotent."""
    grid = f.grid
    return ScalarField(grid, dealias_array(grid, f.values))


def dealias_array(grid, values):
    return grid.ifft(grid.dealias_mask * grid.fft(values)).real


def random_band_limited(grid, max_mode, amplitude, seed):
    """Seeded real field with modes ``|k_a| <= max_mode``, mean zero.

    The field is rescaled so its sup-norm on the grid equals ``amplitude``.
    """
    if any(max_mode >= s // 2 for s in grid.sizes):
        raise ValueError("max_mode must be below the Nyquist mode on every axis")
    if amplitude == 0:
        return ScalarField.zeros(grid)
    rng = np.random.default_rng(seed)
    mask = np.ones(grid.shape, dtype=bool)
    for k in grid.wavenumbers:
        mask = mask & (np.abs(k) <= max_mode)
    coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    coef = np.where(mask, coef, 0.0)
    coef.flat[0] = 0.0
    vals = grid.ifft(coef).real
    vals -= vals.mean()
    peak = np.max(np.abs(vals))
    return ScalarField(grid, vals * (amplitude / peak))
