"""Linear response of the fixed density to the coupling strength.

At a fixed density rho(t) the one-step operator linearizes into the
frozen-coupling part P Q_{t,rho} plus the mean-field sensitivity term.
The derivative of the fixed density solves, on the mean-zero mode block,

    (1 - PQ_{t,rho} + t * P S_t) v = -P S_t(rho),

where S_t (``mean_field_sensitivity``) maps a density perturbation g to
(((rho / Phi') A_g) o Phi^{-1})'.  An independent central-difference
solve validates the formula.
"""

from __future__ import annotations

from dataclasses import dataclass
import csv
import json

import numpy as np

from .errors import SctlabError
from .periodic import Density, PeriodicFn
from .system import CouplingKernel, ExpandingMap, make_diffeo, mean_field
from .transfer import (
    SolverConfig,
    _apply_coupling_fixed,
    apply_transfer,
    fourier_modes,
    operator_matrix,
    solve_fixed_density,
    solve_mean_zero,
    transfer_matrix,
)


def _require_fixed(emap, kernel, t, rho, tol=1e-9):
    from .transfer import self_consistent_apply

    nxt = self_consistent_apply(emap, kernel, t, rho)
    res = float(np.max(np.abs(nxt.fn.values - rho.fn.values)))
    if res > tol:
        raise ValueError(
            f"rho is not the fixed density at t={t} (residual {res:.3e} > {tol:.1e})"
        )


def mean_field_sensitivity(
    kernel: CouplingKernel,
    t: float,
    rho: Density,
    g: PeriodicFn,
    diffeo=None,
    inv_pts=None,
) -> PeriodicFn:
    """Derivative of the coupled push-forward with respect to a
    mean-field perturbation g:  (((rho/Phi') A_g) o Phi^{-1})'.

    The output is exactly mean-zero (it is a derivative).
    """
    if diffeo is None:
        diffeo = make_diffeo(kernel, rho.fn, t)
    a_g = mean_field(kernel, g)
    phi1 = PeriodicFn(1.0 + diffeo.t * diffeo.meanfield_d1.values)
    w = (rho.fn / phi1) * a_g
    if diffeo.is_identity:
        comp = w
    else:
        if inv_pts is None:
            inv_pts = diffeo.inverse(rho.fn.grid)
        comp = PeriodicFn(w.eval_at(inv_pts))
    return comp.derivative(1)


def linearized_matrix(emap: ExpandingMap, kernel: CouplingKernel, t: float, rho: Density,
                      check: bool = True) -> np.ndarray:
    """Fourier-mode matrix of the frozen-coupling operator P Q_{t,rho}."""
    if check:
        _require_fixed(emap, kernel, t, rho)
    diffeo = make_diffeo(kernel, rho.fn, t)
    inv_pts = None if diffeo.is_identity else diffeo.inverse(rho.fn.grid)
    return operator_matrix(
        lambda fn: apply_transfer(emap, _apply_coupling_fixed(diffeo, fn, inv_pts)),
        rho.resolution,
    )


def sensitivity_matrix(emap: ExpandingMap, kernel: CouplingKernel, t: float, rho: Density,
                       check: bool = True) -> np.ndarray:
    """Fourier-mode matrix of g -> P(S_t(g)); its mode-0 row vanishes."""
    if check:
        _require_fixed(emap, kernel, t, rho)
    diffeo = make_diffeo(kernel, rho.fn, t)
    inv_pts = None if diffeo.is_identity else diffeo.inverse(rho.fn.grid)
    return operator_matrix(
        lambda g: apply_transfer(
            emap, mean_field_sensitivity(kernel, t, rho, g, diffeo, inv_pts)
        ),
        rho.resolution,
    )


def _solve_response(emap, kernel, t_hat, rho):
    n = rho.resolution
    m = n // 2 - 1
    diffeo = make_diffeo(kernel, rho.fn, t_hat)
    inv_pts = None if diffeo.is_identity else diffeo.inverse(rho.fn.grid)
    mat_p = operator_matrix(
        lambda fn: apply_transfer(emap, _apply_coupling_fixed(diffeo, fn, inv_pts)),
        n,
    )
    rhs_fn = apply_transfer(
        emap, mean_field_sensitivity(kernel, t_hat, rho, rho.fn, diffeo, inv_pts)
    )
    b = -fourier_modes(rhs_fn, m)
    system = np.eye(2 * m + 1, dtype=complex) - mat_p
    if t_hat != 0.0:
        system = system + t_hat * operator_matrix(
            lambda g: apply_transfer(
                emap, mean_field_sensitivity(kernel, t_hat, rho, g, diffeo, inv_pts)
            ),
            n,
        )
    return solve_mean_zero(system, b, n)


def linear_response(emap: ExpandingMap, kernel: CouplingKernel, t_hat: float, rho: Density) -> PeriodicFn:
    """Derivative of the fixed density with respect to the coupling
    strength at t_hat, solved in coefficient space on the mean-zero
    block.  `rho` must be the fixed density at t_hat (checked)."""
    _require_fixed(emap, kernel, t_hat, rho)
    drho, _ = _solve_response(emap, kernel, t_hat, rho)
    return drho


def response_at_zero(emap: ExpandingMap, kernel: CouplingKernel, rho0: Density) -> PeriodicFn:
    """Dedicated uncoupled-point formula: -(1-P)^{-1} P (rho0 * A_rho0)'."""
    n = rho0.resolution
    m = n // 2 - 1
    a = mean_field(kernel, rho0.fn)
    rhs_fn = apply_transfer(emap, (rho0.fn * a).derivative(1))
    b = -fourier_modes(rhs_fn, m)
    system = np.eye(2 * m + 1, dtype=complex) - transfer_matrix(emap, n)
    drho, _ = solve_mean_zero(system, b, n)
    return drho


def fd_response(emap: ExpandingMap, kernel: CouplingKernel, t_hat: float, delta: float,
                config: SolverConfig | None = None, initial=None) -> PeriodicFn:
    """Independent central-difference estimate of the response from two
    fixed-point solves at t_hat +- delta."""
    cfg = config or SolverConfig()
    hi = solve_fixed_density(emap, kernel, t_hat + delta, cfg, initial=initial).rho
    lo = solve_fixed_density(emap, kernel, t_hat - delta, cfg, initial=initial).rho
    return PeriodicFn((hi.fn.values - lo.fn.values) / (2.0 * delta))


@dataclass
class ResponseReport:
    t_hat: float
    drho: PeriodicFn
    fd_drho: PeriodicFn
    fd_delta: float
    sup_error: float
    solver_residual: float

    def to_json_dict(self) -> dict:
        return {
            "t_hat": self.t_hat,
            "fd_delta": self.fd_delta,
            "sup_error": self.sup_error,
            "solver_residual": self.solver_residual,
            "drho_integral": self.drho.integral(),
            "drho": self.drho.to_json_dict(),
            "fd_drho": self.fd_drho.to_json_dict(),
        }

    def comparison_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "drho_formula", "drho_fd"])
            for x, a, b in zip(self.drho.grid, self.drho.values, self.fd_drho.values):
                w.writerow([f"{x:.17g}", f"{a:.17g}", f"{b:.17g}"])


def response_report(emap: ExpandingMap, kernel: CouplingKernel, t_hat: float,
                    config: SolverConfig | None = None, delta: float = 1e-4) -> ResponseReport:
    """Formula response plus the central-difference validation at t_hat."""
    cfg = config or SolverConfig()
    rho = solve_fixed_density(emap, kernel, t_hat, cfg).rho
    drho, resid = _solve_response(emap, kernel, t_hat, rho)
    fd = fd_response(emap, kernel, t_hat, delta, cfg)
    sup_error = float(np.max(np.abs(drho.values - fd.values)))
    if abs(drho.integral()) > 1e-11:
        raise SctlabError(f"response is not mean-zero: {drho.integral():.3e}")
    return ResponseReport(
        t_hat=float(t_hat),
        drho=drho,
        fd_drho=fd,
        fd_delta=float(delta),
        sup_error=sup_error,
        solver_residual=resid,
    )


# --------------------------------------------------------------------------
# parameter sweep


@dataclass
class SweepPoint:
    t: float
    rho: Density | None = None
    drho: PeriodicFn | None = None
    fd_drho: PeriodicFn | None = None
    iterations: int = 0
    error: str | None = None


@dataclass
class SweepResult:
    points: list[SweepPoint]
    c1_errors: list[tuple[float, float]]
    largest_solved_t: float | None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "rho", "drho", "fd_drho"])
            for p in self.points:
                if p.error is not None:
                    continue
                fd = p.fd_drho.values if p.fd_drho is not None else [""] * p.rho.resolution
                for x, r, d, f in zip(p.rho.fn.grid, p.rho.fn.values, p.drho.values, fd):
                    w.writerow(
                        [f"{p.t:.17g}", f"{x:.17g}", f"{r:.17g}", f"{d:.17g}",
                         f"{f:.17g}" if f != "" else ""]
                    )

    def summary_json_dict(self) -> dict:
        return {
            "points": [
                {
                    "t": p.t,
                    "error": p.error,
                    "iterations": p.iterations,
                    "drho_sup": p.drho.sup_norm() if p.drho is not None else None,
                }
                for p in self.points
            ],
            "c1_consistency_errors": [
                {"t": t, "error": e} for t, e in self.c1_errors
            ],
            "largest_solved_abs_t": self.largest_solved_t,
        }

    def summary_to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary_json_dict(), fh, sort_keys=True, indent=2)


def response_sweep(emap: ExpandingMap, kernel: CouplingKernel, t_grid,
                   config: SolverConfig | None = None, delta: float | None = None) -> SweepResult:
    """Fixed point and response at each coupling value.

    Per-point failures are recorded and the sweep continues.  For each
    consecutive pair of successful points a first-order consistency
    error || rho(t_{i+1}) - rho(t_i) - drho(t_i) dt || is reported; it
    should shrink quadratically with the grid spacing.
    """
    cfg = config or SolverConfig()
    points: list[SweepPoint] = []
    for t in t_grid:
        point = SweepPoint(t=float(t))
        try:
            rep = solve_fixed_density(emap, kernel, t, cfg)
            point.rho = rep.rho
            point.iterations = rep.iterations
            point.drho, _ = _solve_response(emap, kernel, t, rep.rho)
            if delta is not None:
                point.fd_drho = fd_response(emap, kernel, t, delta, cfg)
        except SctlabError as exc:
            point.error = f"{type(exc).__name__}: {exc}"
        points.append(point)
    c1 = []
    for a, b in zip(points, points[1:]):
        if a.error is None and b.error is None:
            dt = b.t - a.t
            err = float(
                np.max(np.abs(b.rho.fn.values - a.rho.fn.values - dt * a.drho.values))
            )
            c1.append((a.t, err))
    solved = [abs(p.t) for p in points if p.error is None]
    return SweepResult(
        points=points,
        c1_errors=c1,
        largest_solved_t=max(solved) if solved else None,
    )
