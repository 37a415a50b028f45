"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

from numbers import Real

import numpy as np

from .exceptions import GridMismatchError, NonFiniteFieldError
from .grid import ScalarField
from .kahler import HermitianFormField


def check_field(f, grid=None, name="field"):
    """Return ``f`` as a :class:`ScalarField`, optionally pinned to ``grid``.

    Raw arrays are accepted when ``grid`` is given and have the right size.
    """
    if isinstance(f, ScalarField):
        if grid is not None and f.grid != grid:
            raise GridMismatchError(f"{name} lives on {f.grid.sizes}, expected {grid.sizes}")
        return f
    if grid is None:
        raise TypeError(f"{name} must be a ScalarField, got {type(f).__name__}")
    arr = np.asarray(f, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteFieldError(f"{name} contains non-finite samples")
    return ScalarField(grid, arr)


def check_fields(X, name="X"):
    """A non-empty sequence of fields on one grid; returns ``(fields, grid)``."""
    fields = list(X)
    if not fields:
        raise ValueError(f"{name} is empty")
    first = check_field(fields[0], name=f"{name}[0]")
    return [first] + [check_field(f, first.grid, f"{name}[{i}]") for i, f in enumerate(fields[1:], 1)], first.grid


def check_t(t, name="t"):
    if isinstance(t, bool) or not isinstance(t, Real) or not 0.0 <= float(t) <= 1.0:
        raise ValueError(f"{name} must be a number in [0, 1], got {t!r}")
    return float(t)


def check_positive(value, name):
    if isinstance(value, bool) or not isinstance(value, Real) or not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


def check_hermitian(m, tol=1e-12, name="matrix"):
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    defect = np.max(np.abs(m - m.conj().T))
    if defect > tol:
        raise ValueError(f"{name} is not Hermitian (defect {defect:.2e})")
    return m


def check_form(chi, grid=None, name="chi"):
    if not isinstance(chi, HermitianFormField):
        raise TypeError(f"{name} must be a HermitianFormField, got {type(chi).__name__}")
    if grid is not None and chi.grid != grid:
        raise GridMismatchError(f"{name} lives on {chi.grid.sizes}, expected {grid.sizes}")
    if not chi.min_eigenvalue() > 0:
        raise ValueError(f"{name} must be positive")
    return chi
