"""J-flow and twisted Calabi flow with energy-decrease step control.

Both flows are the downward gradient flow ``dphi/ds = F(phi, t)`` of the
twisted energy (``t = 0`` gives the J-flow and ``J_chi``). A step treats
the flat linear part implicitly, mode by mode::

    phi+ = phi + dt (1 + dt P(k))^-1 D F(phi)

where ``P(k) = t (|k|^2/4)^2 + (1 - t) (chibar / n) |k|^2/4`` and ``D``
keeps the 2/3 band. Energy increments are integrated along the straight
segment ``phi -> phi+`` with Gauss-Legendre nodes, so a step is accepted
only when its own energy change is negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .functionals import _gauss_legendre, class_constants, j_chi, k_energy
from .grid import ScalarField, complex_hessian
from .kahler import DELTA_POS, assemble, residual_twisted

FLOW_KINDS = ("j-flow", "twisted-calabi")
ENERGY_NODES = 4
GROW_AFTER = 10
GROW_FACTOR = 1.2


def _flow_t(kind, t):
    if kind == "j-flow":
        return 0.0
    if kind == "twisted-calabi":
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must lie in [0, 1], got {t}")
        return float(t)
    raise ValueError(f"unknown flow kind {kind!r}; expected one of {FLOW_KINDS}")


class _Stepper:
    def __init__(self, chi, t, constants):
        grid = chi.grid
        self.grid = grid
        self.chi = chi
        self.t = t
        self.constants = constants
        mask = grid.dealias_mask.copy()
        mask.flat[0] = False
        self.mask = mask
        q = -grid.flat_laplacian_symbol
        self.symbol = t * q**2 + (1.0 - t) * (constants.chi_bar / grid.n) * q

    def velocity(self, state):
        c = self.constants
        return residual_twisted(state, self.chi, self.t, c.chi_bar, c.r_bar).values

    def advance(self, phi, velocity, dt):
        g = self.grid
        vh = np.where(self.mask, g.fft(velocity), 0.0) / (1.0 + dt * self.symbol)
        return ScalarField(g, phi.values + dt * g.ifft(vh).real)

    def increments(self, start, stop):
        """``(dJ_chi, dE)`` along the segment, from the first-variation formulas."""
        g = self.grid
        c = self.constants
        vel = stop.values - start.values
        h0 = complex_hessian(g, start.values)
        dh = complex_hessian(g, vel)
        dj = dk = 0.0
        for s, w in zip(*_gauss_legendre(ENERGY_NODES)):
            st = assemble(ScalarField(g, start.values + s * vel), hessian=h0 + s * dh)
            wvel = w * vel * st.det_g
            dj += np.sum(wvel * (st.trace(self.chi.matrix) - c.chi_bar))
            if self.t > 0:
                dk -= np.sum(wvel * (st.scalar - c.r_bar))
        return dj * g.cell_volume, dk * g.cell_volume


def step(state, kind, dt, chi, t=0.5, constants=None):
    """One semi-implicit step; returns the new ``KahlerState``.

    Raises :class:`~tcsk.exceptions.InvalidMetricError` when the result is
    not a metric, so the caller can retry with a smaller ``dt``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    state.require_valid()
    t = _flow_t(kind, t)
    stepper = _Stepper(chi, t, constants or class_constants(chi))
    phi = stepper.advance(state.phi, stepper.velocity(state), dt)
    return assemble(phi, state.delta_pos)


@dataclass
class FlowRecord:
    step: int
    time: float
    dt: float
    residual_sup: float
    j_chi: float
    k_energy: float
    energy: float


@dataclass
class FlowRun:
    """Trajectory of :func:`run_flow`.

    ``records[0]`` describes the initial state; every later record is an
    accepted step. ``stop_reason`` is ``'converged'``, ``'step-underflow'``
    or ``'max-steps'``.
    """

    kind: str
    chi: object
    t: float
    dt_initial: float
    dt_min: float
    dt_max: float
    records: list = field(default_factory=list)
    state: object = None
    stop_reason: str = ""
    rejected: int = 0

    @property
    def steps(self):
        return len(self.records) - 1

    @property
    def energies(self):
        return [r.energy for r in self.records]

    @property
    def converged(self):
        return self.stop_reason == "converged"


def run_flow(
    phi_init,
    kind,
    chi,
    t=0.5,
    tol=1e-9,
    max_steps=5000,
    dt=0.25,
    dt_min=1e-8,
    dt_max=16.0,
    delta_pos=DELTA_POS,
    callback=None,
):
    """Integrate a flow until the residual sup-norm drops to ``tol``.

    Parameters
    ----------
    phi_init : ScalarField
    kind : {'j-flow', 'twisted-calabi'}
    chi : HermitianFormField
    t : float
        Path parameter of the twisted Calabi flow; ignored for the J-flow.
    tol : float
        Stop once ``sup |F| <= tol``.
    max_steps : int
        Budget of accepted steps.
    dt, dt_min, dt_max : float
        Initial step and its bounds. ``dt`` halves on a rejected step and
        grows by 1.2 after every 10 consecutive accepted steps.
    callback : callable, optional
        Called with each new :class:`FlowRecord`.

    Returns
    -------
    FlowRun
    """
    if not 0 < dt_min <= dt <= dt_max:
        raise ValueError("need 0 < dt_min <= dt <= dt_max")
    t = _flow_t(kind, t)
    constants = class_constants(chi)
    stepper = _Stepper(chi, t, constants)
    grid = chi.grid
    # stay in the same band as the Newton solver
    mask = grid.dealias_mask.copy()
    mask.flat[0] = False
    phi = ScalarField(grid, grid.ifft(np.where(mask, grid.fft(phi_init.values), 0.0)).real)
    state = assemble(phi, delta_pos)
    run = FlowRun(kind, chi, t, dt, dt_min, dt_max)

    jc = j_chi(phi, chi, constants=constants)
    ke = k_energy(phi, r_bar=constants.r_bar) if t > 0 else 0.0
    vel = stepper.velocity(state)
    res = float(np.max(np.abs(vel)))
    time = 0.0

    def record(k, d):
        rec = FlowRecord(k, time, d, res, jc, ke, (1.0 - t) * jc + t * ke)
        run.records.append(rec)
        if callback is not None:
            callback(rec)

    record(0, 0.0)
    streak = 0
    while True:
        if res <= tol:
            run.stop_reason = "converged"
            break
        if run.steps >= max_steps:
            run.stop_reason = "max-steps"
            break
        if dt < dt_min:
            run.stop_reason = "step-underflow"
            break
        trial = stepper.advance(phi, vel, dt)
        t_state = assemble(trial, delta_pos, strict=False)
        ok = t_state.valid
        if ok:
            dj, dk = stepper.increments(phi, trial)
            ok = (1.0 - t) * dj + t * dk < 0.0
        if not ok:
            run.rejected += 1
            dt *= 0.5
            streak = 0
            continue
        phi, state = trial, t_state
        jc += dj
        ke += dk
        time += dt
        vel = stepper.velocity(state)
        res = float(np.max(np.abs(vel)))
        record(run.steps + 1, dt)
        streak += 1
        if streak >= GROW_AFTER:
            dt = min(dt * GROW_FACTOR, dt_max)
            streak = 0
    run.state = state
    return run
