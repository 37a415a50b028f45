"""Energy functionals on the space of Kahler potentials.

Functionals defined through their first variation are evaluated by
Gauss-Legendre quadrature along a path from ``phi = 0``::

    F(phi) = int_0^1 int_M  dphi/ds * G(phi_s) * det g_s  dV ds

where ``G`` is the functional's L^2 gradient density. All volumes are taken
against ``omega^[n] = omega^n / n!``, whose density is ``det g``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import ScalarField, complex_hessian, holomorphic_gradient, integrate
from .kahler import adjugate, assemble, jmu_density

DEFAULT_NODES = 16
PATH_RTOL = 1e-9
MAX_NODES = 256


@dataclass(frozen=True)
class ClassConstants:
    """Cohomological constants of a twist form on a flat torus.

    ``chi_bar`` and ``r_bar`` are volume averages at the background metric.
    """

    chi_bar: float
    r_bar: float
    c_k_values: tuple

    def c_t(self, t):
        return (1.0 - t) * self.chi_bar - t * self.r_bar

    def c_k(self, k):
        return self.c_k_values[k - 1]


def class_constants(chi):
    if chi.min_eigenvalue() <= 0:
        raise ValueError("twist form must be positive")
    flat = assemble(ScalarField.zeros(chi.grid))
    vol = chi.grid.volume
    chi_bar = integrate(ScalarField(chi.grid, flat.trace(chi.matrix)), flat.volume_form) / vol
    r_bar = integrate(ScalarField(chi.grid, flat.scalar), flat.volume_form) / vol
    c_k = tuple(
        integrate(ScalarField(chi.grid, jmu_density(flat, chi, k)), flat.volume_form) / vol
        for k in range(1, chi.grid.n + 1)
    )
    return ClassConstants(chi_bar, r_bar, c_k)


def _gauss_legendre(m):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def _segment_sum(start, stop, density, m):
    """Quadrature of one linear segment; returns (value, L1 magnitude)."""
    grid = start.grid
    velocity = stop.values - start.values
    h0 = complex_hessian(grid, start.values)
    dh = complex_hessian(grid, velocity)
    total = 0.0
    magnitude = 0.0
    for s, w in zip(*_gauss_legendre(m)):
        state = assemble(ScalarField(grid, start.values + s * velocity), hessian=h0 + s * dh)
        integrand = velocity * density(state) * state.det_g
        total += w * np.sum(integrand)
        magnitude += w * np.sum(np.abs(integrand))
    return total * grid.cell_volume, magnitude * grid.cell_volume


def path_integral(points, density, nodes=DEFAULT_NODES, rtol=PATH_RTOL, max_nodes=MAX_NODES):
    """Integrate a first-variation density along a piecewise-linear path.

    Parameters
    ----------
    points : sequence of ScalarField
        Path vertices; the first is usually zero.
    density : callable
        Maps a :class:`~tcsk.kahler.KahlerState` to the gradient density array.
    nodes : int
        Initial Gauss-Legendre nodes per segment; doubled until two successive
        rules agree to ``rtol`` relative to the integrand's L1 magnitude.

    Returns
    -------
    float
    """
    value = 0.0
    for start, stop in zip(points[:-1], points[1:]):
        m = nodes
        coarse, _ = _segment_sum(start, stop, density, m)
        while True:
            fine, mag = _segment_sum(start, stop, density, 2 * m)
            if abs(fine - coarse) <= rtol * max(abs(fine), mag) or 2 * m >= max_nodes:
                break
            coarse, m = fine, 2 * m
        value += fine
    return float(value)


def _linear_path(phi):
    return [ScalarField.zeros(phi.grid), phi]


# -- gradient densities ------------------------------------------------------

def j_chi_density(chi, chi_bar):
    return lambda state: state.trace(chi.matrix) - chi_bar


def k_energy_density(r_bar=0.0):
    return lambda state: -(state.scalar - r_bar)


def jmu_density_fn(chi, k, c_k):
    return lambda state: jmu_density(state, chi, k) - c_k


# -- functionals -------------------------------------------------------------

def j_chi(phi, chi, path=None, constants=None):
    """``J_chi`` with ``dJ = int phidot (tr_phi chi - chibar) omega_phi^[n]``, ``J(0) = 0``."""
    constants = constants or class_constants(chi)
    return path_integral(path or _linear_path(phi), j_chi_density(chi, constants.chi_bar))


def entropy(phi):
    """``int log(omega_phi^n / omega_0^n) omega_phi^[n]``."""
    state = assemble(phi)
    return integrate(ScalarField(phi.grid, state.log_det), state.volume_form)


def k_energy(phi, path=None, r_bar=0.0):
    """Mabuchi K-energy via ``dE = -int phidot (R_phi - Rbar) omega_phi^[n]``."""
    return path_integral(path or _linear_path(phi), k_energy_density(r_bar))


def twisted_energy(phi, chi, t, constants=None):
    """``E_{chi,t} = (1 - t) J_chi + t E``."""
    constants = constants or class_constants(chi)
    j = j_chi(phi, chi, constants=constants) if t < 1 else 0.0
    e = k_energy(phi, r_bar=constants.r_bar) if t > 0 else 0.0
    return (1.0 - t) * j + t * e


def monge_ampere_energy(phi, path=None):
    """``int_0^1 int phidot omega_{phi_s}^[n] ds``; affine along geodesics up to eps."""
    return path_integral(path or _linear_path(phi), lambda state: 1.0)


def aubin_I_J(phi):
    """Aubin-type functionals, returned as ``(I, J)``.

    ``J = int phi (omega_0^[n] - omega_phi^[n])`` is the nonnegative quantity
    that equals ``int i dphi ^ dbar phi ^ sum omega_0^k ^ omega_phi^(n-1-k)``.
    ``I = int_0^1 int phi (omega_0^[n] - omega_{s phi}^[n]) ds`` is its
    path-averaged companion, with ``J/(n+1) <= I <= n J/(n+1)``.
    """
    state = assemble(phi)
    j_val = integrate(phi, ScalarField(phi.grid, 1.0 - state.det_g))
    i_val = path_integral(_linear_path(phi), lambda s: 1.0 / s.det_g - 1.0)
    return i_val, j_val


def j_mu(phi, chi, k, path=None, constants=None):
    """``J_{chi^k}`` with gradient ``chi^k ^ omega_phi^[n-k] / omega_phi^[n] - c_k``."""
    n = phi.grid.n
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}")
    constants = constants or class_constants(chi)
    return path_integral(path or _linear_path(phi), jmu_density_fn(chi, k, constants.c_k(k)))


# -- first variations ----------------------------------------------------------

def gradient_pairing(density, phi, u):
    """``int u * density(phi) * det g dV``: the directional derivative at ``phi``."""
    state = assemble(phi)
    return integrate(u, ScalarField(phi.grid, density(state) * state.det_g))


def j_chi_derivative(phi, chi, u, constants=None):
    constants = constants or class_constants(chi)
    return gradient_pairing(j_chi_density(chi, constants.chi_bar), phi, u)


def k_energy_derivative(phi, u, r_bar=0.0):
    return gradient_pairing(k_energy_density(r_bar), phi, u)


def j_mu_derivative(phi, chi, k, u, constants=None):
    constants = constants or class_constants(chi)
    return gradient_pairing(jmu_density_fn(chi, k, constants.c_k(k)), phi, u)


# -- monotone chain for mu_k = omega_0^k ---------------------------------------

def chain_integrands(phi, s):
    """Pointwise densities of ``i dphi ^ dbar phi ^ omega_0^j ^ omega_{s phi}^(n-1-j)``.

    One array per ``j = 0..n-1``, normalized against ``omega_0^[n]``. Each is
    nonnegative whenever ``omega_{s phi} > 0``.
    """
    grid = phi.grid
    v = holomorphic_gradient(grid, phi.values)
    grad_sq = np.sum(np.abs(v) ** 2, axis=0)
    if grid.n == 1:
        return [grad_sq]
    state = assemble(ScalarField(grid, s * phi.values))
    mixed = np.einsum("a...,ab...,b...->...", np.conj(v), adjugate(state.g), v).real
    return [mixed, grad_sq]


# -- reports --------------------------------------------------------------------

@dataclass
class EnergyReport:
    j_chi: float
    entropy: float
    k_energy: float
    twisted: float
    aubin_I: float
    aubin_J: float
    j_mu_k: float
    t: float
    k: int
    grid: dict = field(default_factory=dict)
    seed: int | None = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def energy_report(phi, chi, t=0.5, k=1, seed=None):
    constants = class_constants(chi)
    jc = j_chi(phi, chi, constants=constants)
    ke = k_energy(phi, r_bar=constants.r_bar)
    ai, aj = aubin_I_J(phi)
    jm = j_mu(phi, chi, k, constants=constants)
    return EnergyReport(
        j_chi=jc,
        entropy=entropy(phi),
        k_energy=ke,
        twisted=(1.0 - t) * jc + t * ke,
        aubin_I=ai,
        aubin_J=aj,
        j_mu_k=jm,
        t=t,
        k=k,
        grid={"n": phi.grid.n, "sizes": list(phi.grid.sizes)},
        seed=seed,
    )
