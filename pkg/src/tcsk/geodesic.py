"""Epsilon-geodesics in the space of potentials and convexity along them.

The regularized geodesic equation is taken in the form::

    det g_phi * (phi_tt - g^{a bbar} d_a phi_t d_bbar phi_t) = eps

with ``eps`` multiplying the background density ``det g_0 = 1``. Time is
discretized by central differences on ``N_t`` equispaced slices with both
ends fixed; space is plain collocation on the torus grid. The interior
slices are found by damped Newton-GMRES on the whole space-time system.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .exceptions import ConvergenceError, InvalidMetricError, KrylovBreakdown
from .fieldio import write_field, write_json
from .functionals import class_constants, path_integral
from .grid import ScalarField, complex_hessian, holomorphic_gradient
from .kahler import (
    DELTA_POS,
    HermitianFormField,
    adjugate,
    assemble,
    det_h,
    identity_field,
    min_eigenvalue,
    trace_product,
)
from .solver import NewtonSettings

GEODESIC_TOL = 1e-8
FUNCTIONALS = ("j_chi", "k_energy", "twisted", "monge_ampere")


def geodesic_settings(**overrides):
    base = {"tol_outer": GEODESIC_TOL}
    base.update(overrides)
    return NewtonSettings(**base)


@dataclass
class GeodesicPath:
    """A discrete epsilon-geodesic.

    ``slices[0]`` and ``slices[-1]`` are the endpoints exactly; the
    ``residual`` is the sup-norm of the discrete geodesic equation over the
    interior slices.
    """

    phi0: ScalarField
    phi1: ScalarField
    eps: float
    slices: list
    residual: float = float("nan")
    iterations: int = 0
    history: list = field(default_factory=list)

    @property
    def n_t(self):
        return len(self.slices)

    @property
    def dt(self):
        return 1.0 / (self.n_t - 1)

    @property
    def times(self):
        return np.linspace(0.0, 1.0, self.n_t)

    @property
    def grid(self):
        return self.phi0.grid

    def reversed(self):
        return GeodesicPath(self.phi1, self.phi0, self.eps, self.slices[::-1], self.residual, self.iterations)

    def deflection(self):
        """Space-time mean of ``(linear interpolation) - phi``; nonnegative for convex paths."""
        lin = [(1 - s) * self.phi0.values + s * self.phi1.values for s in self.times]
        return float(np.mean([np.mean(a - b.values) for a, b in zip(lin, self.slices)]))

    def export(self, directory, prefix="slice"):
        """Write every slice as a TCSK file plus ``manifest.json``; returns the manifest path."""
        directory = Path(directory)
        names = []
        for j, s in enumerate(self.slices):
            name = f"{prefix}_{j:03d}.tcsk"
            write_field(directory / name, s)
            names.append(name)
        manifest = {
            "eps": self.eps,
            "n_t": self.n_t,
            "residual": self.residual,
            "newton_iterations": self.iterations,
            "grid": {"n": self.grid.n, "sizes": list(self.grid.sizes)},
            "times": self.times.tolist(),
            "files": names,
        }
        path = directory / "manifest.json"
        write_json(path, manifest)
        return path


class _SpaceTime:
    """Residual, Jacobian and preconditioner of the discrete system."""

    def __init__(self, phi0, phi1, eps, n_t):
        self.grid = phi0.grid
        self.eps = eps
        self.m = n_t - 2
        self.dt = 1.0 / (n_t - 1)
        self.ends = (phi0.values, phi1.values)
        shape = self.grid.shape
        self.shape = (self.m,) + shape
        # Dirichlet second difference: sine eigenbasis
        p = np.arange(1, self.m + 1)
        j = np.arange(1, self.m + 1)
        self.sine = np.sqrt(2.0 / (self.m + 1)) * np.sin(np.outer(j, p) * np.pi / (self.m + 1))
        self.mu = -(4.0 / self.dt**2) * np.sin(p * np.pi / (2 * (self.m + 1))) ** 2
        self.q = -self.grid.flat_laplacian_symbol

    def full(self, interior):
        return np.concatenate([self.ends[0][None], interior, self.ends[1][None]])

    def linearize(self, interior):
        """Pointwise coefficients at the current iterate; flags invalid slices."""
        grid = self.grid
        full = self.full(interior)
        dt = self.dt
        acc = (full[2:] - 2.0 * full[1:-1] + full[:-2]) / dt**2
        vel = (full[2:] - full[:-2]) / (2.0 * dt)
        n = grid.n
        eye = identity_field(n, grid.shape)
        coef = []
        res = np.empty(self.shape)
        min_eig = np.inf
        for j in range(self.m):
            g = eye + complex_hessian(grid, full[j + 1])
            min_eig = min(min_eig, float(np.min(min_eigenvalue(g))))
            adj = adjugate(g)
            det = det_h(g)
            v = holomorphic_gradient(grid, vel[j])
            av = np.einsum("ab...,b...->a...", adj, v)
            quad = np.einsum("a...,a...->...", np.conj(v), av).real
            res[j] = det * acc[j] - quad - self.eps
            coef.append((adj, det, acc[j], v, av))
        return res, coef, min_eig

    def jacobian(self, coef):
        grid = self.grid
        dt = self.dt
        n = grid.n

        def matvec(x):
            x = x.reshape(self.shape)
            xf = np.concatenate([np.zeros((1,) + grid.shape), x, np.zeros((1,) + grid.shape)])
            d_acc = (xf[2:] - 2.0 * xf[1:-1] + xf[:-2]) / dt**2
            d_vel = (xf[2:] - xf[:-2]) / (2.0 * dt)
            out = np.empty(self.shape)
            for j, (adj, det, acc, v, av) in enumerate(coef):
                h = complex_hessian(grid, x[j])
                dv = holomorphic_gradient(grid, d_vel[j])
                d_det = trace_product(adj, h)
                term = d_det * acc + det * d_acc[j] - 2.0 * np.einsum("a...,a...->...", np.conj(av), dv).real
                if n == 2:
                    term = term - np.einsum("a...,ab...,b...->...", np.conj(v), adjugate(h), v).real
                out[j] = term
            return out.ravel()

        return matvec

    def preconditioner(self, a_bar):
        grid = self.grid
        denom = self.mu[:, None] - max(a_bar, 0.0) * self.q.ravel()[None, :]

        def apply(r):
            r = r.reshape(self.m, -1)
            coef = np.stack([grid.fft(row.reshape(grid.shape)).ravel() for row in r])
            coef = self.sine.T @ coef
            coef = coef / denom
            coef = self.sine @ coef
            return np.stack([grid.ifft(row.reshape(grid.shape)).real for row in coef]).ravel()

        return apply


def solve_geodesic(phi0, phi1, eps, n_t=17, settings=None, delta_pos=DELTA_POS, allow_n2=False):
    """Solve the epsilon-geodesic boundary-value problem between two potentials.

    Parameters
    ----------
    phi0, phi1 : ScalarField
        Endpoints; both must be metrics.
    eps : float
        Regularization, strictly positive.
    n_t : int
        Number of time slices including the endpoints; odd and at least 9.
    settings : NewtonSettings, optional
        ``tol_outer`` defaults to 1e-8 here.
    allow_n2 : bool
        Complex dimension 2 is expensive and must be requested explicitly.

    Returns
    -------
    GeodesicPath
    """
    if phi0.grid != phi1.grid:
        raise ValueError("endpoints live on different grids")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if n_t < 9 or n_t % 2 == 0:
        raise ValueError(f"n_t must be odd and >= 9, got {n_t}")
    if phi0.grid.n == 2 and not allow_n2:
        raise ValueError("n=2 geodesics are gated; pass allow_n2=True")
    for end in (phi0, phi1):
        assemble(end, delta_pos)
    settings = settings or geodesic_settings()
    sys = _SpaceTime(phi0, phi1, eps, n_t)
    times = np.linspace(0.0, 1.0, n_t)[1:-1]
    interior = np.stack(
        [(1 - s) * phi0.values + s * phi1.values + 0.5 * eps * s * (s - 1) for s in times]
    )
    res, coef, min_eig = sys.linearize(interior)
    if not min_eig > delta_pos:
        raise InvalidMetricError("initial interpolation leaves the Kahler cone", min_eig)
    norm = float(np.max(np.abs(res)))
    history = [norm]
    size = res.size
    it = 0
    while norm > settings.tol_outer:
        if it >= settings.max_newton:
            raise ConvergenceError(
                f"geodesic Newton did not reach {settings.tol_outer:.1e} in {it} iterations (residual {norm:.3e})",
                history,
            )
        it += 1
        A = LinearOperator((size, size), matvec=sys.jacobian(coef), dtype=np.float64)
        a_bar = float(np.mean([c[2] for c in coef]))
        M = LinearOperator((size, size), matvec=sys.preconditioner(a_bar), dtype=np.float64)
        rhs = -res.ravel()
        rtol = settings.krylov_forcing * min(1.0, norm)
        du, info = gmres(A, rhs, rtol=rtol, atol=0.0, restart=settings.max_krylov, maxiter=1, M=M)
        lin_res = np.linalg.norm(rhs - A.matvec(du)) / np.linalg.norm(rhs)
        if info < 0 or not np.all(np.isfinite(du)) or lin_res > 0.5:
            raise KrylovBreakdown(
                f"GMRES failed at geodesic Newton iteration {it} (relative residual {lin_res:.2e})", history
            )
        du = du.reshape(sys.shape)
        lam = 1.0
        for _ in range(settings.max_halvings + 1):
            trial = interior + lam * du
            t_res, t_coef, t_min = sys.linearize(trial)
            if t_min > delta_pos:
                t_norm = float(np.max(np.abs(t_res)))
                if t_norm <= (1.0 - 1e-4 * lam) * norm or t_norm <= settings.tol_outer:
                    break
            lam *= settings.damping
        else:
            if not t_min > delta_pos:
                raise InvalidMetricError(
                    f"damped geodesic step left the Kahler cone at iteration {it}", t_min
                )
            raise ConvergenceError(f"geodesic line search stalled at iteration {it}", history)
        interior, res, coef, norm = trial, t_res, t_coef, t_norm
        history.append(norm)
    slices = [phi0] + [ScalarField(phi0.grid, s) for s in interior] + [phi1]
    return GeodesicPath(phi0, phi1, float(eps), slices, norm, it, history)


# -- convexity ----------------------------------------------------------------

@dataclass
class ConvexityProfile:
    functional: str
    values: np.ndarray
    second_differences: np.ndarray
    eps: float

    @property
    def minimum(self):
        return float(np.min(self.second_differences))

    @property
    def slack_constant(self):
        """Smallest ``C`` with every second difference ``>= -C eps``."""
        return max(0.0, -self.minimum / self.eps)


def _density(name, chi, t, constants, centered=True):
    shift_chi = constants.chi_bar if centered else 0.0
    if name == "j_chi":
        return lambda st: st.trace(chi.matrix) - shift_chi
    if name == "k_energy":
        return lambda st: -(st.scalar - constants.r_bar)
    if name == "twisted":
        return lambda st: (1.0 - t) * (st.trace(chi.matrix) - shift_chi) - t * (st.scalar - constants.r_bar)
    if name == "monge_ampere":
        return lambda st: np.ones_like(st.det_g)
    raise ValueError(f"unknown functional {name!r}; expected one of {FUNCTIONALS}")


def functional_along(path, density, rtol=1e-11):
    """Values of a functional on every slice, normalized to 0 at ``slices[0]``.

    Increments are integrated along the segments between successive slices.
    """
    out = [0.0]
    for a, b in zip(path.slices[:-1], path.slices[1:]):
        out.append(out[-1] + path_integral([a, b], density, rtol=rtol))
    return np.array(out)


def second_differences(values, dt):
    return (values[2:] - 2.0 * values[1:-1] + values[:-2]) / dt**2


def convexity_profile(path, functional="j_chi", chi=None, t=0.5):
    """Centered second differences in ``t`` of a functional along the path.

    ``functional`` is one of ``'j_chi'``, ``'k_energy'``, ``'twisted'``
    (``(1 - t) J_chi + t E``) or ``'monge_ampere'``. Functionals involving
    ``chi`` default to the identity form.
    """
    if chi is None:
        chi = HermitianFormField.identity(path.grid)
    constants = class_constants(chi)
    vals = functional_along(path, _density(functional, chi, t, constants))
    return ConvexityProfile(functional, vals, second_differences(vals, path.dt), path.eps)


@dataclass
class IdentityCheck:
    slices: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def gaps(self):
        return np.abs(self.lhs - self.rhs) / np.maximum(np.abs(self.rhs), 1e-300)

    @property
    def max_gap(self):
        return float(np.max(self.gaps))


def second_derivative_terms(path, chi):
    """Both sides of the second-variation formula of ``J_sigma``.

    ``J_sigma(phi) = int_0^1 int phidot tr chi omega^[n]`` is ``J_chi`` without
    the ``chibar`` centering. The left side is its centered second difference
    along the path. The right side::

        int (phi_tt - |d phi_t|^2) tr chi omega^[n] + int chi(d phi_t, d phi_t) omega^[n]

    uses fourth-order time stencils, so the gap measures the O(dt^2)
    truncation of the left side. Only slices ``2 .. N_t - 3`` carry the
    five-point stencil.
    """
    constants = class_constants(chi)
    values = functional_along(path, _density("j_chi", chi, 0.0, constants, centered=False))
    lhs = second_differences(values, path.dt)[1:-1]
    grid = path.grid
    f = np.stack([s.values for s in path.slices])
    dt = path.dt
    idx = np.arange(2, path.n_t - 2)
    rhs = []
    for j in idx:
        st = assemble(path.slices[j])
        acc = (-f[j + 2] + 16.0 * f[j + 1] - 30.0 * f[j] + 16.0 * f[j - 1] - f[j - 2]) / (12.0 * dt**2)
        vel = (-f[j + 2] + 8.0 * f[j + 1] - 8.0 * f[j - 1] + f[j - 2]) / (12.0 * dt)
        v = holomorphic_gradient(grid, vel)
        w = np.einsum("ab...,b...->a...", st.g_inv, v)
        grad_sq = np.einsum("a...,a...->...", np.conj(v), w).real
        chi_vv = np.einsum("a...,ab...,b...->...", np.conj(w), chi.matrix, w).real
        dens = (acc - grad_sq) * st.trace(chi.matrix) + chi_vv
        rhs.append(float(np.sum(dens * st.det_g) * grid.cell_volume))
    return IdentityCheck(idx, lhs, np.array(rhs))


def second_derivative_identity_check(path, chi):
    """Max relative gap between the two sides of the second-variation formula."""
    return second_derivative_terms(path, chi).max_gap
