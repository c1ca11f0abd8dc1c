"""Transfer operators and the fixed-density solver.

`apply_transfer` is the usual push-forward on densities for the
uncoupled expanding map; `apply_coupling` is the push-forward under the
mean-field diffeomorphism built from a reference density psi; their
composition with psi set to the evolved density itself is the
self-consistent (nonlinear) one-step operator.  The fixed density is
found by direct iteration, which the cone structure makes geometrically
convergent for small coupling; contraction is measured, not assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConeMembershipError, NonConvergence, SingularSystem
from .periodic import ConeParams, Density, PeriodicFn, circle_grid, hilbert_distance
from .system import CoupledDiffeo, CouplingKernel, ExpandingMap, TensorTrigKernel, make_diffeo

_TWO_PI = 2.0 * np.pi

_ZERO_KERNEL = TensorTrigKernel([(0.0, 0, "cos", 0, "cos")])


@dataclass
class SolverConfig:
    resolution: int = 256
    tol: float = 1e-12
    max_iter: int = 500
    cone_a: float | None = None  # None: derived from the first iterate
    record_contraction: bool = True


def apply_transfer(emap: ExpandingMap, fn: PeriodicFn) -> PeriodicFn:
    """Push-forward under f: sum over inverse branches of fn/|f'|."""
    xb, w = emap.branch_table(fn.resolution)
    vals = np.zeros(fn.resolution)
    for i in range(emap.degree):
        vals += fn.eval_at(xb[i]) * w[i]
    return PeriodicFn(vals)


def _apply_coupling_fixed(diffeo: CoupledDiffeo, phi: PeriodicFn, inv_pts=None) -> PeriodicFn:
    if diffeo.is_identity:
        return phi
    denom = PeriodicFn(1.0 + diffeo.t * diffeo.meanfield_d1.values)
    w = phi / denom
    if inv_pts is None:
        inv_pts = diffeo.inverse(phi.grid)
    return PeriodicFn(w.eval_at(inv_pts))


def apply_coupling(kernel: CouplingKernel, t: float, psi: PeriodicFn, phi: PeriodicFn) -> PeriodicFn:
    """Push-forward of phi under the diffeomorphism driven by psi.

    (phi / (1 + t A_psi')) composed with the Newton inverse of
    x + t A_psi(x); preserves the integral of phi.
    """
    return _apply_coupling_fixed(make_diffeo(kernel, psi, t), phi)


def self_consistent_apply(emap: ExpandingMap, kernel: CouplingKernel, t: float, rho: Density) -> Density:
    """One step of the nonlinear evolution, renormalized to unit mass.

    The renormalization only absorbs quadrature drift; the exact
    operator preserves mass.
    """
    q = _apply_coupling_fixed(make_diffeo(kernel, rho.fn, t), rho.fn)
    p = apply_transfer(emap, q)
    return Density(p / p.integral())


# --------------------------------------------------------------------------
# fixed-point solve


@dataclass
class FixedPointReport:
    t: float
    rho: Density
    residual_history: list[float]
    iterations: int
    hilbert_contraction_samples: list[float]
    log_lip_history: list[float]
    final_residual: float
    tolerance: float

    def to_json_dict(self) -> dict:
        return {
            "t": self.t,
            "resolution": self.rho.resolution,
            "iterations": self.iterations,
            "tolerance": self.tolerance,
            "final_residual": self.final_residual,
            "residual_history": [float(r) for r in self.residual_history],
            "log_lip_history": [float(v) for v in self.log_lip_history],
            "hilbert_contraction_samples": [
                float(v) for v in self.hilbert_contraction_samples
            ],
            "strictly_positive": self.rho.strictly_positive(),
        }

    def rho_to_csv(self, path) -> None:
        self.rho.fn.to_csv(path)


def solve_fixed_density(
    emap: ExpandingMap,
    kernel: CouplingKernel,
    t: float,
    config: SolverConfig | None = None,
    initial: Density | None = None,
) -> FixedPointReport:
    """Iterate the self-consistent operator from `initial` (uniform by
    default) until successive iterates differ by less than the tolerance
    in sup norm.

    Residuals, log-Lipschitz constants and (optionally) ratios of
    successive Hilbert distances are recorded per iteration.  The fixed
    point is verified a posteriori to within ten times the tolerance.
    """
    cfg = config or SolverConfig()
    phi = initial if initial is not None else Density.uniform(cfg.resolution)
    residuals: list[float] = []
    loglips: list[float] = []
    contraction: list[float] = []
    a_record = cfg.cone_a
    theta_prev = None
    converged = False
    iterations = 0
    for _ in range(cfg.max_iter):
        nxt = self_consistent_apply(emap, kernel, t, phi)
        iterations += 1
        res = float(np.max(np.abs(nxt.fn.values - phi.fn.values)))
        residuals.append(res)
        try:
            llc = nxt.fn.log_lip_constant()
        except ConeMembershipError:
            llc = float("nan")
        loglips.append(llc)
        if cfg.record_contraction:
            if a_record is None:
                a_record = max(2.0, 4.0 * llc) if np.isfinite(llc) else 2.0
            theta = None
            try:
                theta = hilbert_distance(phi.fn, nxt.fn, ConeParams(a_record))
            except ConeMembershipError:
                pass
            if theta is not None and theta_prev is not None and theta_prev > 1e-10:
                contraction.append(theta / theta_prev)
            theta_prev = theta
        phi = nxt
        if res < cfg.tol:
            converged = True
            break
    if not converged:
        raise NonConvergence(
            f"no fixed density after {cfg.max_iter} iterations at t={t} "
            f"(last residual {residuals[-1]:.3e}); increase resolution or reduce t",
            residual_history=residuals,
        )
    check = self_consistent_apply(emap, kernel, t, phi)
    final_residual = float(np.max(np.abs(check.fn.values - phi.fn.values)))
    if final_residual > 10.0 * cfg.tol:
        raise NonConvergence(
            f"a-posteriori residual {final_residual:.3e} exceeds 10*tol",
            residual_history=residuals,
        )
    return FixedPointReport(
        t=float(t),
        rho=phi,
        residual_history=residuals,
        iterations=iterations,
        hilbert_contraction_samples=contraction,
        log_lip_history=loglips,
        final_residual=final_residual,
        tolerance=cfg.tol,
    )


def default_cone_a(
    emap: ExpandingMap,
    kernel: CouplingKernel | None = None,
    t: float = 0.0,
    config: SolverConfig | None = None,
    floor: float = 2.0,
) -> float:
    """Design rule for the cone parameter.

    Four times the log-Lipschitz constant of the uncoupled fixed
    density, but at least four times the fixed point of the measured
    affine log-Lipschitz budget of L_t (the coupling *produces*
    log-Lipschitz variation, so the cone must be wide enough to absorb
    it), with an absolute floor for maps whose invariant density is
    constant.
    """
    rho0 = solve_fixed_density(emap, _ZERO_KERNEL, 0.0, config).rho
    a = max(4.0 * rho0.fn.log_lip_constant(), floor)
    if kernel is not None and t != 0.0:
        cfg = config or SolverConfig()
        uniform = Density.uniform(cfg.resolution)
        produced = self_consistent_apply(emap, kernel, t, uniform).fn.log_lip_constant()
        lam = 1.0 / (make_diffeo(kernel, uniform.fn, t).min_deriv * emap.omega)
        if lam >= 1.0:
            raise NonConvergence(
                f"cone budget does not close: contraction factor {lam:.3f} >= 1"
            )
        a = max(a, 4.0 * produced / (1.0 - lam))
    return a


# --------------------------------------------------------------------------
# random cone densities and the contraction probe


def random_cone_density(rng, resolution: int = 256, llc: float = 1.0, modes: int = 6) -> Density:
    """exp of a random trig polynomial, scaled to the requested
    log-Lipschitz constant and normalized to unit mass.

    Positivity is automatic; coefficients decay like 1/k^2 so the
    samples stay well resolved.
    """
    g = circle_grid(resolution)
    p = np.zeros(resolution)
    for k in range(1, modes + 1):
        a, b = rng.standard_normal(2) / k**2
        p += a * np.cos(_TWO_PI * k * g) + b * np.sin(_TWO_PI * k * g)
    pfn = PeriodicFn(p)
    slope = pfn.derivative(1).sup_norm()
    if slope > 0:
        pfn = pfn * (llc / slope)
    return Density.normalized(PeriodicFn(np.exp(pfn.values)))


@dataclass
class ProbeResult:
    theta_ratios: list[float] = field(default_factory=list)
    loglip_ratios: list[float] = field(default_factory=list)
    skipped: int = 0


def contraction_probe(
    emap: ExpandingMap,
    kernel: CouplingKernel,
    t: float,
    cone: ConeParams,
    trials: int,
    rng=None,
    resolution: int = 256,
    llc_range: tuple[float, float] = (0.45, 0.85),
) -> ProbeResult:
    """Hilbert-distance contraction ratios over random cone pairs.

    For each pair (phi, psi) of random densities inside the cone, the
    ratio theta(L phi, L psi) / theta(phi, psi) is recorded, together
    with the ratio of log-Lipschitz constants.  Samples sit in the
    upper band of the cone (llc_range fractions of a): per-sample
    contraction of the log-Lipschitz constant is only meaningful above
    the additive log-Lipschitz production of the coupling, which the
    cone-parameter design rule budgets for.  Samples that leave the
    cone (before or after the step) are skipped and counted.
    """
    rng = np.random.default_rng(rng)
    out = ProbeResult()
    for _ in range(trials):
        lo, hi = llc_range
        phi = random_cone_density(rng, resolution, llc=cone.a * rng.uniform(lo, hi))
        psi = random_cone_density(rng, resolution, llc=cone.a * rng.uniform(lo, hi))
        try:
            theta0 = hilbert_distance(phi.fn, psi.fn, cone)
        except ConeMembershipError:
            out.skipped += 1
            continue
        if theta0 < 1e-12:
            out.skipped += 1
            continue
        lphi = self_consistent_apply(emap, kernel, t, phi)
        lpsi = self_consistent_apply(emap, kernel, t, psi)
        try:
            theta1 = hilbert_distance(lphi.fn, lpsi.fn, cone)
        except ConeMembershipError:
            out.skipped += 1
            continue
        out.theta_ratios.append(theta1 / theta0)
        out.loglip_ratios.append(
            lphi.fn.log_lip_constant() / phi.fn.log_lip_constant()
        )
    return out


# --------------------------------------------------------------------------
# spectral matrices


def fourier_modes(fn: PeriodicFn, m: int) -> np.ndarray:
    """Modes -m..m of the interpolant as a complex vector (index k + m)."""
    c = fn.coefficients
    if m > fn.resolution // 2 - 1:
        raise ValueError("mode cutoff exceeds the resolution")
    v = np.empty(2 * m + 1, dtype=complex)
    v[m] = c[0]
    v[m + 1 :] = c[1 : m + 1]
    v[:m] = np.conj(c[1 : m + 1][::-1])
    return v


def fn_from_modes(v: np.ndarray, resolution: int, sym_tol: float = 1e-9) -> PeriodicFn:
    """Rebuild a real function from a mode vector on -m..m."""
    m = (v.size - 1) // 2
    scale = max(float(np.max(np.abs(v))), 1e-300)
    sym_err = float(np.max(np.abs(v[:m][::-1] - np.conj(v[m + 1 :]))))
    if sym_err > sym_tol * scale:
        raise ValueError(f"mode vector is not Hermitian-symmetric (error {sym_err:.3e})")
    pos = 0.5 * (v[m + 1 :] + np.conj(v[:m][::-1]))
    c = np.zeros(resolution // 2 + 1, dtype=complex)
    c[0] = v[m].real
    c[1 : m + 1] = pos
    return PeriodicFn(np.fft.irfft(c * resolution, resolution))


def operator_matrix(apply_fn, resolution: int) -> np.ndarray:
    """Matrix of a real linear operator on Fourier modes |k| <= m,
    m = resolution/2 - 1, column k holding the modes of the image of
    e^{2 pi i k x}.

    Columns for negative k follow from conjugation symmetry, so only
    cosine/sine images are computed.
    """
    m = resolution // 2 - 1
    dim = 2 * m + 1
    out = np.zeros((dim, dim), dtype=complex)
    g = circle_grid(resolution)
    for k in range(m + 1):
        pc = apply_fn(PeriodicFn(np.cos(_TWO_PI * k * g)))
        col = fourier_modes(pc, m).astype(complex)
        if k:
            ps = apply_fn(PeriodicFn(np.sin(_TWO_PI * k * g)))
            col = col + 1j * fourier_modes(ps, m)
        out[:, m + k] = col
        if k:
            out[:, m - k] = np.conj(col[::-1])
    return out


def transfer_matrix(emap: ExpandingMap, resolution: int) -> np.ndarray:
    """Fourier-mode matrix of the uncoupled transfer operator."""
    return operator_matrix(lambda fn: apply_transfer(emap, fn), resolution)


def solve_mean_zero(system: np.ndarray, rhs: np.ndarray, resolution: int):
    """Solve `system v = rhs` restricted to the mean-zero mode block.

    Mode 0 is removed (the full system is singular there; on the
    complement the spectral gap makes it invertible).  Returns the
    reconstructed zero-mean function and the relative solve residual.
    """
    m = (rhs.size - 1) // 2
    keep = np.arange(rhs.size) != m
    s_red = system[np.ix_(keep, keep)]
    b_red = rhs[keep]
    try:
        v_red = np.linalg.solve(s_red, b_red)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"mean-zero system solve failed: {exc}") from None
    scale = max(float(np.max(np.abs(b_red))), 1e-300)
    resid = float(np.max(np.abs(s_red @ v_red - b_red))) / scale
    if resid > 1e-10:
        raise SingularSystem(f"mean-zero solve residual {resid:.3e} too large")
    v = np.zeros(rhs.size, dtype=complex)
    v[keep] = v_red
    return fn_from_modes(v, resolution), resid
