"""Run configuration: TOML documents validated into a :class:`RunConfig`.

Every key is listed in ``SCHEMA``; anything else is rejected with its
dotted path. Field specifications (``chi.psi``, ``flow.initial``,
``geodesic.phi0``/``phi1``, ``energy.field``) share one format::

    {kind = "zero"}
    {kind = "cosines", terms = [{amplitude = 0.3, k = [1, 0]}, ...]}
    {kind = "random", max_mode = 2, amplitude = 0.1, seed = 3}
    {kind = "file", path = "phi.tcsk"}

A cosine term is ``amplitude * cos(k . x + phase)`` with one integer
wavenumber per real axis, ordered ``x1, y1, x2, y2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import ConfigError
from .grid import ScalarField, TorusGrid, random_band_limited

COMMANDS = ("continue", "jflow", "calabi", "geodesic", "energy", "check")
OUTPUT_ENV = "TCSK_OUTPUT_DIR"

SCHEMA = {
    "command": None,
    "seed": None,
    "output_dir": None,
    "grid": {"n": None, "sizes": None},
    "chi": {"matrix": None, "matrix_imag": None, "psi": "field"},
    "path": {"t": None, "schedule": None, "predictor": None},
    "solver": {
        "tol_outer": None,
        "max_newton": None,
        "damping": None,
        "max_halvings": None,
        "krylov_forcing": None,
        "max_krylov": None,
    },
    "flow": {
        "dt": None,
        "dt_min": None,
        "dt_max": None,
        "max_steps": None,
        "tol": None,
        "initial": "field",
    },
    "geodesic": {"eps": None, "n_t": None, "tol": None, "allow_n2": None, "phi0": "field", "phi1": "field"},
    "energy": {"t": None, "k": None, "field": "field"},
    "check": {"criteria": None},
}

FIELD_KEYS = {
    "zero": {"kind"},
    "cosines": {"kind", "terms"},
    "random": {"kind", "max_mode", "amplitude", "seed"},
    "file": {"kind", "path"},
}
TERM_KEYS = {"amplitude", "k", "phase"}

DEFAULT_SIZES = {1: 64, 2: 16}


@dataclass
class RunConfig:
    """Validated run configuration with defaults filled in."""

    command: str = "check"
    n: int = 1
    sizes: tuple = (64, 64)
    chi_matrix: np.ndarray = None
    chi_psi: dict = field(default_factory=lambda: {"kind": "zero"})
    t: float = 0.5
    schedule: list = None
    predictor: str = "previous"
    solver: dict = field(default_factory=dict)
    flow: dict = field(default_factory=dict)
    geodesic: dict = field(default_factory=dict)
    energy: dict = field(default_factory=dict)
    check: dict = field(default_factory=dict)
    output_dir: str = "tcsk-output"
    seed: int = 0
    base_dir: str = "."
    command_set: bool = False

    @property
    def grid(self):
        return TorusGrid(self.n, self.sizes)

    def to_dict(self):
        """JSON-ready echo of the configuration."""
        m = self.chi_matrix
        return {
            "command": self.command,
            "n": self.n,
            "sizes": list(self.sizes),
            "chi": {"matrix": m.real.tolist(), "matrix_imag": m.imag.tolist(), "psi": self.chi_psi},
            "t": self.t,
            "schedule": self.schedule,
            "predictor": self.predictor,
            "solver": self.solver,
            "flow": self.flow,
            "geodesic": self.geodesic,
            "energy": self.energy,
            "check": self.check,
            "seed": self.seed,
        }


def _check_keys(doc, schema, prefix):
    for key, val in doc.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError("unknown key", path)
        sub = schema[key]
        if isinstance(sub, dict):
            if not isinstance(val, dict):
                raise ConfigError("expected a table", path)
            _check_keys(val, sub, path + ".")
        elif sub == "field":
            _check_field_spec(val, path)


def _check_field_spec(spec, path):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("field spec needs a 'kind'", path)
    kind = spec["kind"]
    if kind not in FIELD_KEYS:
        raise ConfigError(f"unknown field kind {kind!r}", path + ".kind")
    for key in spec:
        if key not in FIELD_KEYS[kind]:
            raise ConfigError("unknown key", f"{path}.{key}")
    if kind == "cosines":
        terms = spec.get("terms", [])
        if not isinstance(terms, list):
            raise ConfigError("expected a list of terms", path + ".terms")
        for i, term in enumerate(terms):
            tp = f"{path}.terms[{i}]"
            if not isinstance(term, dict):
                raise ConfigError("expected a table", tp)
            for key in term:
                if key not in TERM_KEYS:
                    raise ConfigError("unknown key", f"{tp}.{key}")
            if "amplitude" not in term or "k" not in term:
                raise ConfigError("cosine term needs 'amplitude' and 'k'", tp)
    elif kind == "random":
        for key in ("max_mode", "amplitude"):
            if key not in spec:
                raise ConfigError("missing key", f"{path}.{key}")
    elif kind == "file" and "path" not in spec:
        raise ConfigError("missing key", path + ".path")


def _number(value, path, kind=float, positive=False, low=None, high=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if kind is int and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", path)
    value = kind(value)
    if positive and not value > 0:
        raise ConfigError(f"must be positive, got {value}", path)
    if low is not None and value < low:
        raise ConfigError(f"must be >= {low}, got {value}", path)
    if high is not None and value > high:
        raise ConfigError(f"must be <= {high}, got {value}", path)
    return value


def _matrix(doc, n):
    real = doc.get("matrix", np.eye(n).tolist())
    imag = doc.get("matrix_imag", np.zeros((n, n)).tolist())
    mats = []
    for key, raw in (("chi.matrix", real), ("chi.matrix_imag", imag)):
        if not isinstance(raw, list) or len(raw) != n or any(not isinstance(r, list) or len(r) != n for r in raw):
            raise ConfigError(f"expected a {n}x{n} array", key)
        mats.append(
            np.array([[_number(x, f"{key}[{i}][{j}]") for j, x in enumerate(row)] for i, row in enumerate(raw)])
        )
    m = mats[0] + 1j * mats[1]
    for i in range(n):
        for j in range(n):
            if abs(m[i, j] - np.conj(m[j, i])) > 1e-12:
                key = "chi.matrix" if abs(m[i, j].real - m[j, i].real) > 1e-12 else "chi.matrix_imag"
                raise ConfigError(f"not Hermitian: entry [{i}][{j}] differs from conj of [{j}][{i}]", f"{key}[{i}][{j}]")
    if not np.linalg.eigvalsh(m).min() > 0:
        raise ConfigError("constant part must be positive definite", "chi.matrix")
    return m


def parse_config(text, base_dir="."):
    """Parse and validate a TOML run configuration.

    Raises
    ------
    ConfigError
        On the first problem found, naming the dotted key path.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    _check_keys(doc, SCHEMA, "")
    cfg = RunConfig(base_dir=str(base_dir))
    command = doc.get("command", "check")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}", "command")
    cfg.command = command
    cfg.command_set = "command" in doc
    cfg.seed = _number(doc.get("seed", 0), "seed", int, low=0)
    out = doc.get("output_dir", cfg.output_dir)
    if not isinstance(out, str) or not out:
        raise ConfigError("expected a non-empty string", "output_dir")
    cfg.output_dir = out

    grid = doc.get("grid", {})
    cfg.n = _number(grid.get("n", 1), "grid.n", int)
    if cfg.n not in (1, 2):
        raise ConfigError(f"complex dimension must be 1 or 2, got {cfg.n}", "grid.n")
    sizes = grid.get("sizes", [DEFAULT_SIZES[cfg.n]] * (2 * cfg.n))
    if not isinstance(sizes, list) or len(sizes) != 2 * cfg.n:
        raise ConfigError(f"expected {2 * cfg.n} axis sizes", "grid.sizes")
    for i, s in enumerate(sizes):
        s = _number(s, f"grid.sizes[{i}]", int)
        if s < 8 or s & (s - 1):
            raise ConfigError(f"axis size {s} is not a power of two >= 8", f"grid.sizes[{i}]")
    cfg.sizes = tuple(int(s) for s in sizes)

    chi = doc.get("chi", {})
    cfg.chi_matrix = _matrix(chi, cfg.n)
    cfg.chi_psi = chi.get("psi", {"kind": "zero"})

    path = doc.get("path", {})
    cfg.t = _number(path.get("t", 0.5), "path.t", low=0.0, high=1.0)
    if "schedule" in path:
        sched = path["schedule"]
        if not isinstance(sched, list) or not sched:
            raise ConfigError("expected a non-empty list", "path.schedule")
        vals = [_number(v, f"path.schedule[{i}]", low=0.0, high=1.0) for i, v in enumerate(sched)]
        if vals[0] != 0.0:
            raise ConfigError("schedule must start at 0", "path.schedule[0]")
        for i in range(1, len(vals)):
            if vals[i] <= vals[i - 1]:
                raise ConfigError("schedule must be strictly increasing", f"path.schedule[{i}]")
        cfg.schedule = vals
    predictor = path.get("predictor", "previous")
    if predictor not in ("previous", "secant"):
        raise ConfigError(f"unknown predictor {predictor!r}", "path.predictor")
    cfg.predictor = predictor

    solver = doc.get("solver", {})
    ints = {"max_newton", "max_halvings", "max_krylov"}
    for key, val in solver.items():
        cfg.solver[key] = _number(val, f"solver.{key}", int if key in ints else float, positive=True)
    if "damping" in cfg.solver and not cfg.solver["damping"] < 1:
        raise ConfigError("must lie in (0, 1)", "solver.damping")

    flow = doc.get("flow", {})
    for key, val in flow.items():
        if key == "initial":
            cfg.flow[key] = val
        else:
            cfg.flow[key] = _number(val, f"flow.{key}", int if key == "max_steps" else float, positive=True)

    geo = doc.get("geodesic", {})
    for key, val in geo.items():
        if key in ("phi0", "phi1"):
            cfg.geodesic[key] = val
        elif key == "allow_n2":
            if not isinstance(val, bool):
                raise ConfigError("expected true or false", "geodesic.allow_n2")
            cfg.geodesic[key] = val
        elif key == "n_t":
            n_t = _number(val, "geodesic.n_t", int)
            if n_t < 9 or n_t % 2 == 0:
                raise ConfigError("must be odd and >= 9", "geodesic.n_t")
            cfg.geodesic[key] = n_t
        else:
            cfg.geodesic[key] = _number(val, f"geodesic.{key}", positive=True)

    energy = doc.get("energy", {})
    for key, val in energy.items():
        if key == "field":
            cfg.energy[key] = val
        elif key == "k":
            k = _number(val, "energy.k", int)
            if not 1 <= k <= cfg.n:
                raise ConfigError(f"must lie in 1..{cfg.n}", "energy.k")
            cfg.energy[key] = k
        else:
            cfg.energy[key] = _number(val, f"energy.{key}", low=0.0, high=1.0)

    check = doc.get("check", {})
    if "criteria" in check:
        crit = check["criteria"]
        if not isinstance(crit, list) or not crit:
            raise ConfigError("expected a non-empty list", "check.criteria")
        for i, c in enumerate(crit):
            c = _number(c, f"check.criteria[{i}]", int)
            if not 1 <= c <= 10:
                raise ConfigError("criteria are numbered 1..10", f"check.criteria[{i}]")
        cfg.check["criteria"] = [int(c) for c in crit]
    return cfg


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def build_field(grid, spec, key="field", base_dir="."):
    """Materialize a field spec on ``grid``."""
    from .fieldio import read_field

    kind = spec["kind"]
    if kind == "zero":
        return ScalarField.zeros(grid)
    if kind == "cosines":
        coords = grid.coordinates()
        vals = np.zeros(grid.shape)
        for i, term in enumerate(spec.get("terms", [])):
            k = term["k"]
            if not isinstance(k, list) or len(k) != grid.ndim:
                raise ConfigError(f"expected {grid.ndim} integer wavenumbers", f"{key}.terms[{i}].k")
            amp = _number(term["amplitude"], f"{key}.terms[{i}].amplitude")
            phase = _number(term.get("phase", 0.0), f"{key}.terms[{i}].phase")
            arg = sum(_number(c, f"{key}.terms[{i}].k", int) * x for c, x in zip(k, coords))
            vals = vals + amp * np.cos(arg + phase)
        return ScalarField(grid, vals)
    if kind == "random":
        max_mode = _number(spec["max_mode"], f"{key}.max_mode", int, positive=True)
        amp = _number(spec["amplitude"], f"{key}.amplitude", low=0.0)
        seed = _number(spec.get("seed", 0), f"{key}.seed", int, low=0)
        try:
            return random_band_limited(grid, max_mode, amp, seed)
        except ValueError as exc:
            raise ConfigError(str(exc), f"{key}.max_mode") from None
    path = Path(spec["path"])
    if not path.is_absolute():
        path = Path(base_dir) / path
    f = read_field(path)
    if f.grid != grid:
        raise ConfigError(f"field file grid {f.grid.sizes} does not match the configured grid", f"{key}.path")
    return f


def build_chi(cfg):
    from .kahler import HermitianFormField

    grid = cfg.grid
    psi = build_field(grid, cfg.chi_psi, "chi.psi", cfg.base_dir)
    try:
        return HermitianFormField(grid, cfg.chi_matrix, psi)
    except ValueError as exc:
        raise ConfigError(str(exc), "chi.psi") from None
