"""Newton-Krylov solves of the twisted equation and continuation in ``t``.

The unknown is kept in the 2/3-rule band with zero mean, and Newton drives
the band-projected residual to zero (a Galerkin discretization). The
convergence test is applied to the full residual on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .exceptions import ConvergenceError, InvalidMetricError, KrylovBreakdown
from .functionals import class_constants
from .grid import ScalarField
from .kahler import DELTA_POS, assemble, residual_twisted
from .linop import LinearizedOperator

T_STEP_HALVINGS = 4


@dataclass(frozen=True)
class NewtonSettings:
    """Tolerances and budgets for :func:`newton_solve`.

    Attributes
    ----------
    tol_outer : float
        Sup-norm target for the residual.
    max_newton : int
    damping : float
        Backtracking factor in ``(0, 1)``.
    max_halvings : int
        Backtracking steps per Newton iteration.
    krylov_forcing : float
        The inner relative tolerance is ``krylov_forcing * min(1, |F|)``.
    max_krylov : int
        Krylov basis size (GMRES is run without restarts).
    """

    tol_outer: float = 1e-9
    max_newton: int = 30
    damping: float = 0.5
    max_halvings: int = 8
    krylov_forcing: float = 1e-3
    max_krylov: int = 400
    delta_pos: float = DELTA_POS

    def __post_init__(self):
        for name in ("tol_outer", "max_newton", "max_halvings", "krylov_forcing", "max_krylov", "delta_pos"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie in (0, 1)")


@dataclass
class NewtonReport:
    state: object
    iterations: int
    residual_history: list
    halvings: list
    krylov_iterations: list

    @property
    def residual(self):
        return self.residual_history[-1]


class _BandSpace:
    """Projection onto mean-zero fields inside the 2/3 band, and the flat preconditioner."""

    def __init__(self, grid, chi, t):
        self.grid = grid
        mask = grid.dealias_mask.copy()
        mask.flat[0] = False
        self.mask = mask
        lam = float(np.linalg.eigvalsh(chi.constant_part).min())
        q = -grid.flat_laplacian_symbol  # |k|^2 / 4
        symbol = t * q**2 + (1.0 - t) * lam * q
        with np.errstate(divide="ignore"):
            self.inv_symbol = np.where(mask, -1.0 / np.where(symbol > 0, symbol, 1.0), 0.0)

    def project(self, values):
        g = self.grid
        return g.ifft(np.where(self.mask, g.fft(values), 0.0)).real

    def precondition(self, values):
        g = self.grid
        return g.ifft(self.inv_symbol * g.fft(values)).real


def _sup(values):
    return float(np.max(np.abs(values)))


def _residual(phi, chi, t, constants, delta_pos):
    state = assemble(phi, delta_pos, strict=False)
    if not state.valid:
        return state, None
    res = residual_twisted(state, chi, t, constants.chi_bar, constants.r_bar).values
    return state, res


def newton_iterate(phi_init, chi, t, settings=None, constants=None):
    """Run damped Newton-GMRES and return a :class:`NewtonReport`.

    Raises
    ------
    InvalidMetricError
        ``phi_init`` is not a metric, or every damped step left the cone.
    ConvergenceError
        The iteration budget ran out or the line search stalled.
    KrylovBreakdown
        GMRES made no progress on the Newton system.
    """
    settings = settings or NewtonSettings()
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if phi_init.grid != chi.grid:
        raise ValueError("initial potential and form live on different grids")
    constants = constants or class_constants(chi)
    grid = chi.grid
    band = _BandSpace(grid, chi, t)
    phi = ScalarField(grid, band.project(phi_init.values))
    state, res = _residual(phi, chi, t, constants, settings.delta_pos)
    if res is None:
        raise InvalidMetricError(
            f"initial potential is not a metric (min eigenvalue {state.min_eig:.3e})", state.min_eig
        )
    norm = _sup(res)
    history, halvings, kry = [norm], [], []
    size = grid.npoints
    shape = grid.shape
    it = 0
    while norm > settings.tol_outer:
        if it >= settings.max_newton:
            raise ConvergenceError(
                f"Newton did not reach {settings.tol_outer:.1e} in {it} iterations (residual {norm:.3e})",
                history,
            )
        it += 1
        op = LinearizedOperator(state, chi, t)
        matvec = lambda v: band.project(op.apply_array(band.project(v.reshape(shape)))).ravel()
        A = LinearOperator((size, size), matvec=matvec, dtype=np.float64)
        M = LinearOperator((size, size), matvec=lambda v: band.precondition(v.reshape(shape)).ravel(), dtype=np.float64)
        rhs = -band.project(res).ravel()
        rhs_norm = np.linalg.norm(rhs)
        if rhs_norm == 0.0:
            break
        counter = [0]
        rtol = settings.krylov_forcing * min(1.0, norm)
        du, info = gmres(
            A, rhs, rtol=rtol, atol=0.0, restart=settings.max_krylov, maxiter=1, M=M,
            callback=lambda _: counter.__setitem__(0, counter[0] + 1), callback_type="pr_norm",
        )
        kry.append(counter[0])
        du = band.project(du.reshape(shape))
        lin_res = np.linalg.norm(rhs - matvec(du.ravel())) / rhs_norm
        if info < 0 or not np.all(np.isfinite(du)) or lin_res > 0.5:
            raise KrylovBreakdown(
                f"GMRES failed at Newton iteration {it} (info={info}, relative residual {lin_res:.2e})",
                history,
            )
        lam = 1.0
        for h in range(settings.max_halvings + 1):
            trial = ScalarField(grid, phi.values + lam * du)
            t_state, t_res = _residual(trial, chi, t, constants, settings.delta_pos)
            if t_res is not None:
                t_norm = _sup(t_res)
                if t_norm <= (1.0 - 1e-4 * lam) * norm or t_norm <= settings.tol_outer:
                    break
            lam *= settings.damping
        else:
            if t_res is None:
                raise InvalidMetricError(
                    f"every damped step left the Kahler cone at Newton iteration {it} "
                    f"(last step length {lam / settings.damping:.3e}, min eigenvalue {t_state.min_eig:.3e})",
                    t_state.min_eig,
                )
            raise ConvergenceError(
                f"line search stalled at Newton iteration {it} (residual {norm:.3e})", history
            )
        halvings.append(h)
        phi, state, res, norm = trial, t_state, t_res, t_norm
        history.append(norm)
    return NewtonReport(state, it, history, halvings, kry)


def newton_solve(phi_init, chi, t, settings=None, constants=None):
    """Solve ``F(phi, t) = 0`` from ``phi_init``; returns the solution's ``KahlerState``.

    The result is normalized to zero mean against the background volume.
    """
    return newton_iterate(phi_init, chi, t, settings, constants).state


def solve_j_equation(chi, settings=None, phi_init=None):
    """The ``t = 0`` endpoint ``tr_phi chi = chibar``."""
    if phi_init is None:
        phi_init = ScalarField.zeros(chi.grid)
    return newton_solve(phi_init, chi, 0.0, settings)


# -- continuation --------------------------------------------------------------

@dataclass
class StepRecord:
    t: float
    newton_iterations: int
    residual_sup: float
    halvings: int
    residual_history: list = field(default_factory=list)


@dataclass
class ContinuationRun:
    """Outcome of :func:`continue_path`.

    ``status`` is ``'completed'`` or ``'stalled'``; when stalled,
    ``stalled_at`` is the last accepted ``t`` and ``failure`` the message
    of the solve that could not be recovered by step halving.
    """

    chi: object
    schedule: list
    ts: list = field(default_factory=list)
    states: list = field(default_factory=list)
    records: list = field(default_factory=list)
    status: str = "running"
    stalled_at: float | None = None
    failure: str | None = None

    @property
    def r_estimate(self):
        """Empirical ``R(chi)``: the last accepted ``t``."""
        return self.ts[-1] if self.ts else None

    @property
    def completed(self):
        return self.status == "completed"


def default_schedule():
    return [round(0.05 * i, 10) for i in range(21)]


def _check_schedule(schedule):
    sched = [float(s) for s in schedule]
    if not sched or sched[0] != 0.0:
        raise ValueError("schedule must start at t = 0")
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise ValueError("schedule must be strictly increasing")
    if sched[-1] > 1.0:
        raise ValueError("schedule must lie in [0, 1]")
    return sched


def continue_path(chi, schedule=None, settings=None, predictor="previous", callback=None):
    """March ``t`` along ``schedule`` with Newton corrections.

    Parameters
    ----------
    chi : HermitianFormField
    schedule : sequence of float, optional
        Increasing values starting at 0; defaults to ``0, 0.05, ..., 1``.
    settings : NewtonSettings, optional
    predictor : {'previous', 'secant'}
        Initial guess at a new ``t``.
    callback : callable, optional
        Called with each accepted :class:`StepRecord`.

    Returns
    -------
    ContinuationRun
    """
    sched = _check_schedule(default_schedule() if schedule is None else schedule)
    if predictor not in ("previous", "secant"):
        raise ValueError(f"unknown predictor {predictor!r}")
    if chi.min_eigenvalue() <= 0:
        raise ValueError("twist form must be positive")
    settings = settings or NewtonSettings()
    constants = class_constants(chi)
    run = ContinuationRun(chi=chi, schedule=sched)

    def accept(t, report, halvings):
        rec = StepRecord(t, report.iterations, report.residual, halvings, report.residual_history)
        run.ts.append(t)
        run.states.append(report.state)
        run.records.append(rec)
        if callback is not None:
            callback(rec)

    try:
        report = newton_iterate(ScalarField.zeros(chi.grid), chi, 0.0, settings, constants)
    except (ConvergenceError, InvalidMetricError) as exc:
        run.status, run.stalled_at, run.failure = "stalled", None, str(exc)
        return run
    accept(0.0, report, 0)

    for target in sched[1:]:
        step = target - run.ts[-1]
        halvings = 0
        while run.ts[-1] < target:
            t_prev = run.ts[-1]
            t_try = min(t_prev + step, target)
            guess = run.states[-1].phi
            if predictor == "secant" and len(run.ts) > 1:
                slope = (guess.values - run.states[-2].phi.values) / (t_prev - run.ts[-2])
                guess = ScalarField(chi.grid, guess.values + (t_try - t_prev) * slope)
            try:
                report = newton_iterate(guess, chi, t_try, settings, constants)
            except (ConvergenceError, InvalidMetricError) as exc:
                halvings += 1
                if halvings > T_STEP_HALVINGS:
                    run.status, run.stalled_at, run.failure = "stalled", t_prev, str(exc)
                    return run
                step *= 0.5
                continue
            accept(t_try, report, halvings)
    run.status = "completed"
    return run
