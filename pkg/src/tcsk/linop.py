"""Linearization of the twisted residual and its spectral probes.

For ``F(phi, t) = t (R_phi - Rbar) - (1 - t)(tr_phi chi - chibar)`` the
derivative in the direction ``u`` is::

    L u = -t Delta_phi D(Delta_phi u) - t <i dd^c u, Ric_phi>_phi + (1 - t) <i dd^c u, chi>_phi

where ``D`` is the same 2/3-rule projection applied to ``log det g`` when the
Ricci form is assembled. With ``D`` in place, ``L`` is the exact Frechet
derivative of the discrete residual, not merely a consistent approximation.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .exceptions import GridMismatchError
from .grid import ScalarField, complex_hessian, dealias_array, holomorphic_gradient
from .kahler import covariant_hessian_02, matmul, trace_product

PROBE_MAX_MODE = 2


class LinearizedOperator:
    """``L_{(phi, t)}`` frozen at one state.

    Parameters
    ----------
    state : KahlerState
        Must be a valid metric.
    chi : HermitianFormField
    t : float
        Path parameter in ``[0, 1]``.
    """

    def __init__(self, state, chi, t):
        state.require_valid()
        if chi.grid != state.grid:
            raise GridMismatchError("form and state live on different grids")
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {t}")
        self.state = state
        self.chi = chi
        self.t = float(t)
        self.grid = state.grid
        # <Hess u, eta>_phi = tr(G^-1 Hess u G^-1 eta); fold the second factor once
        eta = (1.0 - self.t) * chi.matrix
        if self.t > 0:
            eta = eta - self.t * state.ricci
        self._coef = matmul(matmul(state.g_inv, eta), state.g_inv)

    def __repr__(self):
        return f"LinearizedOperator(n={self.grid.n}, sizes={self.grid.sizes}, t={self.t})"

    def apply_array(self, values):
        """Action on a raw sample array; returns a raw array."""
        grid = self.grid
        st = self.state
        uh = grid.fft(values)
        hess = complex_hessian(grid, None, spectrum=uh)
        out = trace_product(self._coef, hess)
        if self.t > 0:
            lap = trace_product(st.g_inv, hess)
            out = out - self.t * trace_product(
                st.g_inv, complex_hessian(grid, dealias_array(grid, lap))
            )
        return out

    def apply(self, u):
        if u.grid != self.grid:
            raise GridMismatchError("field and operator live on different grids")
        return ScalarField(self.grid, self.apply_array(u.values))

    __call__ = apply


def apply(op, u):
    return op.apply(u)


def pairing(state, u, v):
    """``int u v omega_phi^[n]``; symmetric because the product commutes pointwise."""
    state.require_valid()
    if u.grid != state.grid or v.grid != state.grid:
        raise GridMismatchError("fields and state live on different grids")
    return float(np.sum(u.values * v.values * state.det_g) * state.grid.cell_volume)


def gradient_energy(state, u):
    """``int |du|^2_phi omega_phi^[n]``."""
    return float(np.sum(state.grad_norm_sq(u.values) * state.det_g) * state.grid.cell_volume)


# -- probe basis --------------------------------------------------------------

def _half_space_modes(n, max_mode):
    """Integer wavevectors with ``1 <= |k|_inf <= max_mode``, one of each +-k pair."""
    axis = np.arange(-max_mode, max_mode + 1)
    grids = np.stack(np.meshgrid(*([axis] * (2 * n)), indexing="ij"), -1)
    out = []
    for k in grids.reshape(-1, 2 * n):
        nz = np.flatnonzero(k)
        if nz.size and k[nz[0]] > 0:
            out.append(tuple(int(c) for c in k))
    return out


def probe_basis(grid, max_mode=PROBE_MAX_MODE, samples=0, seed=0):
    """Deterministic probe fields: trigonometric modes plus seeded random fields.

    The modes are ``cos(k.x)`` and ``sin(k.x)`` for every wavevector with
    ``1 <= |k|_inf <= max_mode``. Random fields use every mode inside the
    2/3 band, so they also reach the high end of the spectrum.
    """
    coords = grid.coordinates()
    fields = []
    for k in _half_space_modes(grid.n, max_mode):
        phase = sum(c * x for c, x in zip(k, coords))
        fields.append(np.broadcast_to(np.cos(phase), grid.shape))
        fields.append(np.broadcast_to(np.sin(phase), grid.shape))
    rng = np.random.default_rng(seed)
    mask = grid.dealias_mask.copy()
    mask.flat[0] = False
    for _ in range(samples):
        coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        vals = grid.ifft(np.where(mask, coef, 0.0)).real
        fields.append(vals / np.max(np.abs(vals)))
    return [ScalarField(grid, f) for f in fields]


def self_adjoint_defect(op, max_mode=PROBE_MAX_MODE, samples=2, seed=0):
    """``max |<Lu, v> - <u, Lv>| / (|u| |v|)`` over the probe basis.

    Norms and pairings use ``omega_phi^[n]``. The operator is symmetric for
    this pairing only where ``tR - (1 - t) tr chi`` is constant, so away
    from solutions the value is a diagnostic, not a pass/fail quantity.
    """
    basis = probe_basis(op.grid, max_mode, samples, seed)
    st = op.state
    w = st.det_g * st.grid.cell_volume
    U = np.stack([b.values.ravel() for b in basis])
    LU = np.stack([op.apply_array(b.values).ravel() for b in basis])
    gram = (LU * w.ravel()) @ U.T  # [i, j] = <L u_i, u_j>
    norms = np.sqrt(np.einsum("ij,ij,j->i", U, U, w.ravel()))
    defect = np.abs(gram - gram.T) / np.outer(norms, norms)
    return float(np.max(defect))


def coercivity_probe(op, samples=4, seed=0, max_mode=PROBE_MAX_MODE, rcond=1e-10):
    """Rayleigh-Ritz infimum of ``-<u, L u> / int |du|^2_phi`` over mean-zero probes.

    The probes are projected to ``omega_phi``-mean zero, the quadratic form
    is symmetrized, and the generalized eigenproblem is solved on the
    numerically independent part of the probe span.
    """
    st = op.state
    grid = op.grid
    w = (st.det_g * grid.cell_volume).ravel()
    vol = w.sum()
    basis = []
    for b in probe_basis(grid, max_mode, samples, seed):
        vals = b.values.ravel()
        basis.append(vals - np.dot(vals, w) / vol)
    U = np.stack(basis)
    LU = np.stack([op.apply_array(u.reshape(grid.shape)).ravel() for u in U])
    A = -(U * w) @ LU.T
    A = 0.5 * (A + A.T)
    grads = [holomorphic_gradient(grid, u.reshape(grid.shape)) for u in U]
    # B[i, j] = Re int v_i^H G^-1 v_j det g
    m = len(U)
    B = np.empty((m, m))
    ginv_v = [np.einsum("ab...,b...->a...", st.g_inv, v) for v in grads]
    for i in range(m):
        vi = np.conj(grads[i])
        for j in range(i, m):
            val = np.sum((vi * ginv_v[j]).real.sum(axis=0).ravel() * w)
            B[i, j] = B[j, i] = val
    evals, evecs = linalg.eigh(B)
    keep = evals > rcond * evals.max()
    T = evecs[:, keep] / np.sqrt(evals[keep])
    reduced = T.T @ A @ T
    return float(linalg.eigvalsh(0.5 * (reduced + reduced.T))[0])


# -- the integration-by-parts identity ----------------------------------------

def quadratic_form(op, u):
    """``int u L u omega_phi^[n]``."""
    return pairing(op.state, u, op.apply(u))


def integration_by_parts_form(op, u):
    """Right-hand side of the integrated identity for ``int u L u``::

        int ( -t |u_{,abar bbar}|^2 - (1 - t) chi(du, du)
              + u * <dbar u, d(t R - (1 - t) tr chi)>_phi ) omega_phi^[n]

    The Hessian term uses the covariant (0,2) Hessian; no term is
    discretized through ``L`` itself, so agreement is a genuine check.
    """
    st = op.state
    grid = op.grid
    t = op.t
    g_inv = st.g_inv
    v = holomorphic_gradient(grid, u.values)
    w = np.einsum("ab...,b...->a...", g_inv, v)
    chi_term = np.einsum("a...,ab...,b...->...", np.conj(w), op.chi.matrix, w).real
    dens = -(1.0 - t) * chi_term
    if t > 0:
        s = covariant_hessian_02(st, u)
        hess_sq = np.einsum("ac...,bd...,ab...,cd...->...", g_inv, g_inv, s, np.conj(s)).real
        dens = dens - t * hess_sq
    f = t * st.scalar - (1.0 - t) * st.trace(op.chi.matrix)
    df = holomorphic_gradient(grid, f)
    first = np.einsum("a...,ab...,b...->...", np.conj(v), g_inv, df).real
    dens = dens + u.values * first
    return float(np.sum(dens * st.det_g) * grid.cell_volume)
