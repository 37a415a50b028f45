"""Pointwise geometry of ``omega_phi = omega_0 + i dd^c phi`` on a flat torus.

Matrix-valued fields are arrays of shape ``(n, n, *grid.shape)`` whose entry
``[a, b]`` holds the component ``A_{a bbar}``. With that layout the usual
contractions become matrix products taken pointwise:

* ``tr_phi A = g^{a bbar} A_{a bbar} = tr(G^{-1} A)``
* ``<A, B>_phi = g^{a dbar} g^{c bbar} A_{a bbar} B_{c dbar} = tr(G^{-1} A G^{-1} B)``
* ``|du|^2_phi = g^{a bbar} u_a u_bbar = v^H G^{-1} v`` with ``v_a = du/dz_a``.

The background metric is the identity, so ``Ric omega_0 = 0``.
"""

from __future__ import annotations

from functools import cached_property
from math import factorial

import numpy as np

from .exceptions import GridMismatchError, InvalidMetricError
from .grid import ScalarField, complex_hessian, dealias_array, holomorphic_gradient

DELTA_POS = 1e-8


# -- pointwise n x n Hermitian algebra (n <= 2, closed forms) ---------------

def matmul(a, b):
    n = a.shape[0]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.complex128)
    for i in range(n):
        for k in range(n):
            out[i, k] = sum(a[i, j] * b[j, k] for j in range(n))
    return out


def trace_product(a, b):
    """``Re tr(a b)`` pointwise."""
    n = a.shape[0]
    return sum((a[i, j] * b[j, i]).real for i in range(n) for j in range(n))


def det_h(m):
    if m.shape[0] == 1:
        return m[0, 0].real.copy()
    return (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]).real


def adjugate(m):
    if m.shape[0] == 1:
        return np.ones_like(m)
    out = np.empty_like(m)
    out[0, 0] = m[1, 1]
    out[1, 1] = m[0, 0]
    out[0, 1] = -m[0, 1]
    out[1, 0] = -m[1, 0]
    return out


def min_eigenvalue(m):
    if m.shape[0] == 1:
        return m[0, 0].real.copy()
    a, d = m[0, 0].real, m[1, 1].real
    return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + np.abs(m[0, 1]) ** 2)


def identity_field(n, shape):
    eye = np.zeros((n, n) + tuple(shape), dtype=np.complex128)
    for a in range(n):
        eye[a, a] = 1.0
    return eye


def hermitian_defect(m):
    return float(np.max(np.abs(m - np.conj(np.swapaxes(m, 0, 1)))))


def sigma_k(m, k):
    """Elementary symmetric function of the eigenvalues of a pointwise matrix."""
    n = m.shape[0]
    if k == 1:
        return np.einsum("ii...->...", m).real
    if k == 2 and n == 2:
        return det_h(m)
    raise ValueError(f"k={k} out of range for n={n}")


# -- twist forms ------------------------------------------------------------

class HermitianFormField:
    """A closed (1,1)-form ``chi = chi_H + i dd^c psi``.

    Parameters
    ----------
    grid : TorusGrid
    constant_part : array_like, shape (n, n)
        Hermitian matrix representing the class.
    potential : ScalarField, optional
        The potential ``psi``; zero when omitted.
    positive : bool
        When true, require the smallest pointwise eigenvalue to be positive.
    """

    def __init__(self, grid, constant_part, potential=None, positive=True):
        const = np.array(constant_part, dtype=np.complex128).reshape(grid.n, grid.n)
        if np.max(np.abs(const - const.conj().T)) > 1e-12:
            raise ValueError("constant part of the form is not Hermitian")
        if potential is None:
            potential = ScalarField.zeros(grid)
        if potential.grid != grid:
            raise GridMismatchError("form potential lives on a different grid")
        self.grid = grid
        self.constant_part = const
        self.potential = potential
        mat = const.reshape((grid.n, grid.n) + (1,) * grid.ndim) + complex_hessian(
            grid, potential.values
        )
        mat.setflags(write=False)
        self.matrix = mat
        self.positive = positive
        if positive and not self.min_eigenvalue() > 0:
            raise ValueError(
                f"form is not positive: min eigenvalue {self.min_eigenvalue():.3e}"
            )

    @classmethod
    def identity(cls, grid, potential=None):
        return cls(grid, np.eye(grid.n), potential)

    def __repr__(self):
        return (
            f"HermitianFormField(n={self.grid.n}, constant_part={self.constant_part.tolist()}, "
            f"psi_sup={self.potential.sup_norm():.3e})"
        )

    def min_eigenvalue(self):
        return float(np.min(min_eigenvalue(self.matrix)))

    def scaled(self, c):
        return HermitianFormField(self.grid, c * self.constant_part, c * self.potential, self.positive)

    def mean_sigma(self, k):
        """Average of ``sigma_k(chi)`` against the background volume."""
        return float(np.mean(sigma_k(self.matrix, k)))


# -- Kahler states ----------------------------------------------------------

class KahlerState:
    """Cached geometry of ``g = I + phi_{a bbar}``.

    Build with :func:`assemble`. Curvature quantities are computed once, on
    first access. ``valid`` is False when the smallest pointwise eigenvalue
    of ``g`` is at or below the positivity threshold.
    """

    def __init__(self, phi, delta_pos=DELTA_POS, hessian=None):
        grid = phi.grid
        self.grid = grid
        self.phi = phi
        self.delta_pos = delta_pos
        self.hessian = complex_hessian(grid, phi.values) if hessian is None else hessian
        self.g = identity_field(grid.n, grid.shape) + self.hessian
        self.min_eig = float(np.min(min_eigenvalue(self.g)))
        self.valid = self.min_eig > delta_pos
        self.det_g = det_h(self.g)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.g_inv = adjugate(self.g) / self.det_g

    def require_valid(self):
        if not self.valid:
            raise InvalidMetricError(
                f"metric not positive: min eigenvalue {self.min_eig:.3e} <= {self.delta_pos:.1e}",
                self.min_eig,
            )

    @property
    def volume_form(self):
        """``det g`` as a field: the density of ``omega_phi^[n]`` w.r.t. ``omega_0^[n]``."""
        return ScalarField(self.grid, self.det_g)

    @cached_property
    def log_det(self):
        self.require_valid()
        return np.log(self.det_g)

    @cached_property
    def ricci(self):
        """``R_{a bbar} = -d_a d_bbar log det g`` with the log dealiased first."""
        return -complex_hessian(self.grid, dealias_array(self.grid, self.log_det))

    @cached_property
    def scalar(self):
        return trace_product(self.g_inv, self.ricci)

    def trace(self, mat):
        return trace_product(self.g_inv, mat)

    def pairing_forms(self, a, b):
        """``<A, B>_phi`` pointwise."""
        return trace_product(matmul(self.g_inv, a), matmul(self.g_inv, b))

    def laplacian(self, values):
        return trace_product(self.g_inv, complex_hessian(self.grid, values))

    def grad_norm_sq(self, values):
        v = holomorphic_gradient(self.grid, values)
        return np.einsum("a...,ab...,b...->...", np.conj(v), self.g_inv, v).real


def assemble(phi, delta_pos=DELTA_POS, strict=True, hessian=None):
    """Build the :class:`KahlerState` of ``phi``.

    Raises :class:`InvalidMetricError` when ``strict`` and the metric fails
    the positivity test; otherwise the state is returned flagged invalid.
    ``hessian`` may carry a precomputed ``complex_hessian`` of ``phi``.
    """
    state = KahlerState(phi, delta_pos, hessian)
    if strict:
        state.require_valid()
    return state


def _field(state, values):
    return ScalarField(state.grid, values)


def _check_form(state, chi):
    if chi.grid != state.grid:
        raise GridMismatchError("form and state live on different grids")


def scalar_curvature(state):
    state.require_valid()
    return _field(state, state.scalar)


def trace_form(state, chi):
    """``tr_phi chi = g^{a bbar} chi_{a bbar}``."""
    state.require_valid()
    _check_form(state, chi)
    return _field(state, state.trace(chi.matrix))


def metric_laplacian(state, u):
    """``Delta_phi u = g^{a bbar} u_{a bbar}``."""
    state.require_valid()
    if u.grid != state.grid:
        raise GridMismatchError("field and state live on different grids")
    return _field(state, state.laplacian(u.values))


def christoffel(state):
    """``Gamma^c_{ab} = g^{c dbar} d_a g_{b dbar}``, array indexed ``[a, b, c]``."""
    grid = state.grid
    n = grid.n
    ph = grid.fft(state.phi.values)
    dg = np.empty((n, n, n) + grid.shape, dtype=np.complex128)  # [a, b, d] = d_a g_{b dbar}
    for a in range(n):
        for b in range(n):
            for d in range(n):
                sym = grid.dz_symbols[a] * grid.dz_symbols[b] * grid.dzbar_symbols[d]
                dg[a, b, d] = grid.ifft(sym * ph)
    return np.einsum("abd...,dc...->abc...", dg, state.g_inv)


def covariant_hessian_02(state, u):
    """``u_{,abar bbar} = d_abar d_bbar u - conj(Gamma)^cbar_{abar bbar} d_cbar u``.

    Returned as a complex array of shape ``(n, n, *grid.shape)``; symmetric
    in its two indices.
    """
    state.require_valid()
    grid = state.grid
    n = grid.n
    uh = grid.fft(u.values)
    hol = np.empty((n, n) + grid.shape, dtype=np.complex128)
    for a in range(n):
        for b in range(n):
            hol[a, b] = grid.ifft(grid.dz_symbols[a] * grid.dz_symbols[b] * uh)
    grad = np.stack([grid.ifft(s * uh) for s in grid.dz_symbols])
    cov = hol - np.einsum("abc...,c...->ab...", christoffel(state), grad)
    return np.conj(cov)


def residual_twisted(state, chi, t, chi_bar=None, r_bar=0.0):
    """``F(phi, t) = t (R_phi - Rbar) - (1 - t)(tr_phi chi - chibar)``."""
    state.require_valid()
    _check_form(state, chi)
    if chi_bar is None:
        chi_bar = chi.mean_sigma(1)
    vals = t * (state.scalar - r_bar) - (1.0 - t) * (state.trace(chi.matrix) - chi_bar)
    return _field(state, vals)


def jmu_density(state, chi, k):
    """``chi^k ^ omega_phi^[n-k] / omega_phi^[n] = k! sigma_k(G^{-1} chi)``."""
    n = state.grid.n
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    if k == 1:
        return state.trace(chi.matrix)
    # k == n == 2
    return factorial(k) * det_h(chi.matrix) / state.det_g


def residual_jmu(state, chi, k, c_k=None):
    """Euler-Lagrange residual of the ``J_{chi^k}`` functional."""
    state.require_valid()
    _check_form(state, chi)
    if c_k is None:
        c_k = factorial(k) * chi.mean_sigma(k)
    return _field(state, jmu_density(state, chi, k) - c_k)
