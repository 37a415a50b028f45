"""The invariant suite behind ``tcsk check`` and the acceptance tests.

Each criterion runs a fixed, seeded experiment and compares the measured
quantity with a pinned tolerance. Wall time is part of the verdict: a
criterion that exceeds its budget fails even if the numbers are right.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .flows import run_flow
from .functionals import (
    aubin_I_J,
    class_constants,
    entropy,
    j_chi,
    j_chi_derivative,
    j_mu,
    k_energy,
    k_energy_derivative,
)
from .geodesic import convexity_profile, second_derivative_terms, solve_geodesic
from .grid import ScalarField, TorusGrid, integrate, random_band_limited
from .kahler import HermitianFormField, assemble, residual_twisted
from .linop import LinearizedOperator, coercivity_probe
from .solver import continue_path, newton_solve, solve_j_equation

ORDER_MIN = 1.9
ROUNDOFF = 1e-10


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    budget: float
    runtime: float = 0.0
    metrics: dict = field(default_factory=dict)
    detail: str = ""

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.number:2d} {self.name:<28s} {self.runtime:7.2f}s / {self.budget:g}s  {self.detail}"

    def to_dict(self):
        return {
            "number": self.number,
            "name": self.name,
            "passed": self.passed,
            "budget_s": self.budget,
            "runtime_s": self.runtime,
            "metrics": self.metrics,
            "detail": self.detail,
        }


def _order(err_coarse, err_fine, ratio=10.0):
    """Observed order from errors at ``h`` and ``h / ratio``; infinite when already at roundoff."""
    if err_coarse <= ROUNDOFF:
        return float("inf")
    return float(np.log(err_coarse / max(err_fine, 1e-300)) / np.log(ratio))


def _cos_field(grid, terms):
    coords = grid.coordinates()
    vals = sum(a * np.cos(sum(c * x for c, x in zip(k, coords))) for a, k in terms)
    return ScalarField(grid, np.broadcast_to(vals, grid.shape))


# -- criteria ----------------------------------------------------------------

def flat_fixed_point():
    grid = TorusGrid.square(1, 64)
    run = continue_path(HermitianFormField.identity(grid))
    res = max(r.residual_sup for r in run.records)
    sup = max(s.phi.sup_norm() for s in run.states)
    ok = run.completed and len(run.ts) == 21 and res < 1e-10 and sup < 1e-10
    return ok, {"steps": len(run.ts), "max_residual": res, "max_phi": sup}, (
        f"{run.status}, {len(run.ts)} steps, residual {res:.1e}, |phi| {sup:.1e}"
    )


def round_trip_to_flat():
    grid = TorusGrid.square(1, 64)
    psi = _cos_field(grid, [(0.3, (1, 0)), (0.2, (0, 2))])
    run = continue_path(HermitianFormField.identity(grid, psi))
    end = run.states[-1]
    phi1 = end.phi.sup_norm()
    r1 = float(np.max(np.abs(end.scalar)))
    ok = run.completed and run.ts[-1] == 1.0 and phi1 < 1e-6 and r1 < 1e-8
    return ok, {"r_estimate": run.r_estimate, "phi1_sup": phi1, "scalar_sup": r1}, (
        f"{run.status}, R(chi)={run.r_estimate}, |phi(1)| {phi1:.1e}, |R| {r1:.1e}"
    )


def _gradient_case(phi, u, fn, dfn):
    d = dfn(phi, u)
    errs = {}
    for h in (1e-2, 1e-3, 1e-4):
        fd = (fn(phi + h * u) - fn(phi - h * u)) / (2 * h)
        errs[h] = abs(fd - d) / abs(d)
    return errs[1e-4], _order(errs[1e-2], errs[1e-3])


def gradient_checks():
    worst_err, worst_order, cases = 0.0, float("inf"), 0
    plans = [(1, 32, 10, 2), (2, 16, 3, 1)]
    for n, size, count, mode in plans:
        grid = TorusGrid.square(n, size)
        const = np.eye(n) * 2.0
        if n == 2:
            const = const + np.array([[0.0, 0.3j], [-0.3j, 0.0]])
        chi = HermitianFormField(grid, const, random_band_limited(grid, 1, 0.1, 100 + n))
        c = class_constants(chi)
        for seed in range(count):
            phi = random_band_limited(grid, mode, 0.2, 2 * seed)
            u = random_band_limited(grid, mode, 1.0, 2 * seed + 1)
            for fn, dfn in (
                (lambda p: j_chi(p, chi, constants=c), lambda p, v: j_chi_derivative(p, chi, v, c)),
                (lambda p: k_energy(p), lambda p, v: k_energy_derivative(p, v)),
            ):
                err, order = _gradient_case(phi, u, fn, dfn)
                worst_err = max(worst_err, err)
                worst_order = min(worst_order, order)
                cases += 1
    ok = worst_err <= 1e-6 and worst_order >= ORDER_MIN
    return ok, {"cases": cases, "max_rel_error": worst_err, "min_order": worst_order}, (
        f"{cases} cases, max rel err {worst_err:.1e}, min order {worst_order:.2f}"
    )


def linearization():
    grid = TorusGrid.square(1, 64)
    chi = HermitianFormField(grid, [[1.5]], random_band_limited(grid, 2, 0.1, 11))
    c = class_constants(chi)
    worst = float("inf")
    for seed in range(5):
        phi = random_band_limited(grid, 2, 0.1, 20 + seed)
        u = random_band_limited(grid, 2, 1.0, 40 + seed)
        st = assemble(phi)
        for t in (0.0, 0.3, 0.7, 1.0):
            lu = LinearizedOperator(st, chi, t).apply(u).values
            errs = []
            for h in (1e-2, 1e-3):
                fp = residual_twisted(assemble(phi + h * u), chi, t, c.chi_bar, c.r_bar).values
                fm = residual_twisted(assemble(phi - h * u), chi, t, c.chi_bar, c.r_bar).values
                errs.append(float(np.max(np.abs((fp - fm) / (2 * h) - lu))))
            worst = min(worst, _order(*errs))
    return worst >= ORDER_MIN, {"min_order": worst}, f"20 cases, min order {worst:.3f}"


def coercivity():
    grid = TorusGrid.square(1, 64)
    op = LinearizedOperator(assemble(ScalarField.zeros(grid)), HermitianFormField.identity(grid), 0.5)
    val = coercivity_probe(op)
    err = abs(val - 0.625)
    return err <= 1e-6, {"infimum": val, "error": err}, f"infimum {val:.12f} (target 0.625)"


def flow_newton_agreement():
    grid = TorusGrid.square(1, 64)
    chi = HermitianFormField.identity(grid, _cos_field(grid, [(0.3, (1, 0))]))
    start = random_band_limited(grid, 3, 0.1, 7)
    out = {}
    ok = True
    for label, kind, t, ref in (
        ("jflow", "j-flow", 0.0, lambda: solve_j_equation(chi, phi_init=start)),
        ("calabi", "twisted-calabi", 0.5, lambda: newton_solve(start, chi, 0.5)),
    ):
        run = run_flow(start, kind, chi, t=t, tol=1e-9)
        diff = float(np.max(np.abs(run.state.phi.values - ref().phi.values)))
        mono = bool(np.all(np.diff(run.energies) < 0))
        res = run.records[-1].residual_sup
        out[label] = {"steps": run.steps, "residual": res, "newton_gap": diff, "monotone": mono}
        ok = ok and run.converged and res <= 1e-8 and diff <= 1e-6 and mono
    detail = ", ".join(f"{k}: gap {v['newton_gap']:.1e} res {v['residual']:.1e}" for k, v in out.items())
    return ok, out, detail


def geodesic_convexity():
    grid = TorusGrid.square(1, 32)
    eps = 1e-2
    zero = ScalarField.zeros(grid)
    flat = solve_geodesic(zero, zero, eps, 17)
    const_err = max(
        float(np.max(np.abs(s.values - 0.5 * eps * t * (t - 1)))) for s, t in zip(flat.slices, flat.times)
    )
    chi = HermitianFormField.identity(grid, _cos_field(grid, [(0.3, (0, 1))]))
    phi1 = _cos_field(grid, [(0.3, (1, 0))])
    path = solve_geodesic(zero, phi1, eps, 17)
    j_min = convexity_profile(path, "j_chi", chi).minimum
    tw_min = convexity_profile(path, "twisted", chi, t=0.5).minimum
    gap17 = second_derivative_terms(path, chi).max_gap
    gap33 = second_derivative_terms(solve_geodesic(zero, phi1, eps, 33), chi).max_gap
    ratio = gap17 / gap33
    ok = const_err <= 1e-10 and j_min >= -5 * eps and tw_min >= -5 * eps and 3.0 <= ratio <= 5.0
    return ok, {
        "constant_path_error": const_err,
        "min_d2_j_chi": j_min,
        "min_d2_twisted": tw_min,
        "identity_gap_17": gap17,
        "identity_gap_33": gap33,
        "gap_ratio": ratio,
    }, f"const {const_err:.1e}, min d2 J {j_min:.3f}, E_1/2 {tw_min:.3f}, gap ratio {ratio:.2f}"


def monotone_chain():
    grid = TorusGrid.square(2, 16)
    omega = HermitianFormField.identity(grid)
    c = class_constants(omega)
    m1 = m2 = float("inf")
    for seed in range(20):
        phi = random_band_limited(grid, 1 + seed % 2, 0.3, seed)
        j2 = j_mu(phi, omega, 2, constants=c)
        j1 = j_mu(phi, omega, 1, constants=c)
        _, aubin_j = aubin_I_J(phi)
        m1 = min(m1, j2 - j1)
        m2 = min(m2, j1 - aubin_j / 3.0)
    ok = m1 >= -1e-9 and m2 >= -1e-9
    return ok, {"min_margin_j2_j1": m1, "min_margin_j1_aubin": m2}, f"margins {m1:.3e}, {m2:.3e}"


def structural_identities():
    metrics = {}
    for n, size, mode in ((1, 64, 2), (2, 16, 1)):
        grid = TorusGrid.square(n, size)
        const = np.eye(n) * 2.0
        chi = HermitianFormField(grid, const, random_band_limited(grid, 1, 0.1, 5))
        c = class_constants(chi)
        vol = grid.volume
        drift_vol = drift_tr = mean_f = ke_gap = path_gap = 0.0
        for seed in range(3):
            phi = random_band_limited(grid, mode, 0.2, 60 + seed)
            st = assemble(phi)
            w = st.volume_form
            drift_vol = max(drift_vol, abs(integrate(ScalarField.constant(grid, 1.0), w) - vol) / vol)
            tr = ScalarField(grid, st.trace(chi.matrix))
            drift_tr = max(drift_tr, abs(integrate(tr, w) - c.chi_bar * vol) / (c.chi_bar * vol))
            for t in (0.0, 0.5, 1.0):
                f = residual_twisted(st, chi, t, c.chi_bar, c.r_bar)
                mean_f = max(mean_f, abs(integrate(f, w)) / vol)
            ke, ent = k_energy(phi), entropy(phi)
            ke_gap = max(ke_gap, abs(ke - ent) / abs(ent))
            mid = random_band_limited(grid, mode, 0.15, 80 + seed)
            direct = j_chi(phi, chi, constants=c)
            detour = j_chi(phi, chi, path=[ScalarField.zeros(grid), mid, phi], constants=c)
            path_gap = max(path_gap, abs(direct - detour))
        metrics[f"n{n}"] = {
            "volume_drift": drift_vol,
            "trace_drift": drift_tr,
            "residual_mean": mean_f,
            "k_energy_vs_entropy": ke_gap,
            "path_independence": path_gap,
        }
    ok = all(
        m["volume_drift"] < 1e-9
        and m["trace_drift"] < 1e-9
        and m["residual_mean"] < 1e-9
        and m["k_energy_vs_entropy"] < 1e-7
        and m["path_independence"] < 1e-8
        for m in metrics.values()
    )
    worst = {k: max(m[k] for m in metrics.values()) for k in next(iter(metrics.values()))}
    return ok, metrics, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


def uniqueness():
    grid = TorusGrid.square(1, 64)
    chi = HermitianFormField.identity(grid, _cos_field(grid, [(0.3, (1, 0)), (0.2, (0, 2))]))
    a = newton_solve(ScalarField.zeros(grid), chi, 0.5)
    b = newton_solve(random_band_limited(grid, 3, 0.15, 9) + 4.0, chi, 0.5)
    diff = float(np.max(np.abs(a.phi.values - b.phi.values)))
    return diff <= 1e-7, {"state_gap": diff}, f"state gap {diff:.1e}"


CRITERIA = {
    1: ("flat fixed point", 5.0, flat_fixed_point),
    2: ("round trip to flat", 60.0, round_trip_to_flat),
    3: ("gradient checks", 120.0, gradient_checks),
    4: ("linearization order", 30.0, linearization),
    5: ("coercivity at flat", 5.0, coercivity),
    6: ("flow/Newton agreement", 120.0, flow_newton_agreement),
    7: ("geodesic convexity", 300.0, geodesic_convexity),
    8: ("monotone chain", 60.0, monotone_chain),
    9: ("structural identities", 60.0, structural_identities),
    10: ("uniqueness", 30.0, uniqueness),
}


def run_criterion(number):
    name, budget, fn = CRITERIA[number]
    start = time.perf_counter()
    try:
        ok, metrics, detail = fn()
    except Exception as exc:  # a crash is a failed criterion, reported as such
        ok, metrics, detail = False, {}, f"raised {type(exc).__name__}: {exc}"
    runtime = time.perf_counter() - start
    if ok and runtime > budget:
        ok, detail = False, detail + f" (over budget {budget:g}s)"
    return CriterionResult(number, name, bool(ok), budget, runtime, metrics, detail)


def run_suite(numbers=None, echo=None):
    """Run the selected criteria (all by default); ``echo`` receives each result line."""
    results = []
    for num in numbers or sorted(CRITERIA):
        res = run_criterion(num)
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results
