"""Estimator-style wrappers: hyperparameters in ``__init__``, work in ``fit``.

These follow the scikit-learn conventions (``get_params``/``set_params``,
fitted attributes with a trailing underscore, ``transform`` for feature
maps) so solver settings can be swept and cloned like any estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .flows import FLOW_KINDS, run_flow
from .functionals import class_constants, energy_report
from .geodesic import FUNCTIONALS, convexity_profile, solve_geodesic, geodesic_settings
from .grid import ScalarField
from .solver import NewtonSettings, continue_path, newton_iterate
from .validation import check_field, check_fields, check_form, check_positive, check_t


class TwistedCscK(BaseEstimator):
    """Solve the twisted equation at one ``t``.

    Parameters
    ----------
    t : float
    tol : float
        Residual sup-norm target.
    max_newton, max_krylov : int
    """

    def __init__(self, t=0.5, tol=1e-9, max_newton=30, max_krylov=400):
        self.t = t
        self.tol = tol
        self.max_newton = max_newton
        self.max_krylov = max_krylov

    def _settings(self):
        return NewtonSettings(tol_outer=self.tol, max_newton=self.max_newton, max_krylov=self.max_krylov)

    def fit(self, chi, phi_init=None):
        check_form(chi)
        t = check_t(self.t)
        phi0 = ScalarField.zeros(chi.grid) if phi_init is None else check_field(phi_init, chi.grid, "phi_init")
        report = newton_iterate(phi0, chi, t, self._settings())
        self.state_ = report.state
        self.phi_ = report.state.phi
        self.n_iter_ = report.iterations
        self.residual_history_ = report.residual_history
        return self

    def residual(self):
        check_is_fitted(self, "state_")
        return self.residual_history_[-1]


class PathContinuation(BaseEstimator):
    """Continuation from the J-equation (``t = 0``) toward cscK (``t = 1``)."""

    def __init__(self, schedule=None, predictor="previous", tol=1e-9, max_newton=30):
        self.schedule = schedule
        self.predictor = predictor
        self.tol = tol
        self.max_newton = max_newton

    def fit(self, chi):
        check_form(chi)
        settings = NewtonSettings(tol_outer=self.tol, max_newton=self.max_newton)
        run = continue_path(chi, self.schedule, settings, predictor=self.predictor)
        self.run_ = run
        self.ts_ = np.array(run.ts)
        self.states_ = run.states
        self.r_estimate_ = run.r_estimate
        self.status_ = run.status
        return self


class GradientFlow(BaseEstimator):
    """J-flow or twisted Calabi flow run to a residual tolerance."""

    def __init__(self, kind="j-flow", t=0.5, dt=0.25, dt_max=16.0, tol=1e-9, max_steps=5000):
        self.kind = kind
        self.t = t
        self.dt = dt
        self.dt_max = dt_max
        self.tol = tol
        self.max_steps = max_steps

    def fit(self, chi, phi_init=None):
        check_form(chi)
        if self.kind not in FLOW_KINDS:
            raise ValueError(f"kind must be one of {FLOW_KINDS}, got {self.kind!r}")
        check_positive(self.dt, "dt")
        phi0 = ScalarField.zeros(chi.grid) if phi_init is None else check_field(phi_init, chi.grid, "phi_init")
        run = run_flow(
            phi0, self.kind, chi, t=check_t(self.t), tol=self.tol, max_steps=self.max_steps,
            dt=self.dt, dt_max=self.dt_max,
        )
        self.run_ = run
        self.state_ = run.state
        self.phi_ = run.state.phi
        self.n_steps_ = run.steps
        self.stop_reason_ = run.stop_reason
        return self


class EpsilonGeodesic(BaseEstimator):
    """Epsilon-geodesic between two potentials."""

    def __init__(self, eps=1e-2, n_t=17, tol=1e-8):
        self.eps = eps
        self.n_t = n_t
        self.tol = tol

    def fit(self, phi0, phi1):
        phi0 = check_field(phi0, name="phi0")
        phi1 = check_field(phi1, phi0.grid, "phi1")
        check_positive(self.eps, "eps")
        self.path_ = solve_geodesic(phi0, phi1, self.eps, self.n_t, geodesic_settings(tol_outer=self.tol))
        self.slices_ = self.path_.slices
        self.residual_ = self.path_.residual
        return self

    def convexity(self, functional="j_chi", chi=None, t=0.5):
        """Second differences of a functional along the fitted path."""
        check_is_fitted(self, "path_")
        if functional not in FUNCTIONALS:
            raise ValueError(f"functional must be one of {FUNCTIONALS}")
        return convexity_profile(self.path_, functional, chi, t).second_differences


class EnergyFeatures(TransformerMixin, BaseEstimator):
    """Map potentials to their energy functionals, one row per potential.

    Parameters
    ----------
    chi : HermitianFormField
        Twist form; fixes the grid.
    t : float
        Weight of the twisted energy column.
    k : int
        Degree of the ``J_{chi^k}`` column.
    """

    feature_names = ("j_chi", "entropy", "k_energy", "twisted", "aubin_I", "aubin_J", "j_mu_k")

    def __init__(self, chi=None, t=0.5, k=1):
        self.chi = chi
        self.t = t
        self.k = k

    def fit(self, X, y=None):
        fields, grid = check_fields(X)
        check_form(self.chi, grid)
        check_t(self.t)
        if not 1 <= self.k <= grid.n:
            raise ValueError(f"k must lie in 1..{grid.n}")
        self.constants_ = class_constants(self.chi)
        self.grid_ = grid
        return self

    def transform(self, X):
        check_is_fitted(self, "constants_")
        fields = [check_field(f, self.grid_, f"X[{i}]") for i, f in enumerate(X)]
        rows = []
        for phi in fields:
            rep = energy_report(phi, self.chi, t=self.t, k=self.k)
            rows.append([getattr(rep, name) for name in self.feature_names])
        return np.array(rows, dtype=np.float64).reshape(len(fields), len(self.feature_names))

    def get_feature_names_out(self, input_features=None):
        return np.array(self.feature_names, dtype=object)
