"""Quantitative hypotheses and derivative-control constants.

The one-step operator applied to a density phi is a sum over inverse
branches of (phi/F') o F_i^{-1} with F the coupled map.  Differentiating
k times gives

    d^k/dy^k [(phi/F') o F_i^{-1}] = sum_j (phi^(j) g_j) o F_i^{-1}

where each g_j is a sum of monomials in F'', .., F^(5) over powers of
F'.  Bounding the monomials with the coupled-map derivative bounds and
using ||phi|| <= 1 + ||phi'|| for densities yields the derivative
inequalities  ||(L phi)^(k)|| <= sigma_k ||phi^(k)|| + sum_j R_k^(j) ...
with sigma_k < 1 for small coupling.  The g_j are derived mechanically
(symbolic monomials) rather than transcribed, so third and fourth order
follow the same pattern as the first two.

The module also carries the order-4 jet calculus (Leibniz, Faa di
Bruno, inverse-function derivatives) and an audit of the C^4 norm
inequalities used by the derivative control.
"""

from __future__ import annotations

from dataclasses import dataclass
import json

import numpy as np

from .errors import Inadmissible
from .periodic import PeriodicFn, circle_grid
from .system import CoupledDiffeo, CouplingKernel, ExpandingMap

_TWO_PI = 2.0 * np.pi


# --------------------------------------------------------------------------
# expansion / distortion condition


def expansion_condition(emap: ExpandingMap) -> float:
    """N (max|f''| / omega^3 + 1 / omega^2); admissible maps keep it < 1."""
    m2 = emap.deriv_sup(2)
    w = emap.omega
    return emap.degree * (m2 / w**3 + 1.0 / w**2)


def measured_coupling_bound(kernel: CouplingKernel, max_order: int = 5, samples: int = 256) -> float:
    """Sampled sup over the torus of |d^k h / dx^k| for k = 1..max_order.

    This is the measured surrogate for the generic coupling constant in
    the derivative bounds: the mean field of a unit-mass density obeys
    |A^(k)| <= sup |d1^k h|.
    """
    return max(kernel.d1_sup(order, samples) for order in range(1, max_order + 1))


# --------------------------------------------------------------------------
# coupled-map derivative bounds
#
# Phi = x + t A with |A^(k)| <= K, so |Phi'| in [1 - K|t|, 1 + K|t|] and
# |Phi^(k)| <= K|t| for k >= 2.  Faa di Bruno on f o Phi then gives the
# bounds below; at t = 0 they reduce to the bare f-derivative sups.


def coupled_derivative_bounds(emap: ExpandingMap, coupling_K: float, t: float) -> tuple:
    u = abs(t) * coupling_K
    a1 = 1.0 + u
    m = [emap.deriv_sup(k) for k in range(1, 6)]
    fb1 = emap.omega * (1.0 - u)
    fb2 = m[1] * a1**2 + m[0] * u
    fb3 = m[2] * a1**3 + 3.0 * m[1] * a1 * u + m[0] * u
    fb4 = m[3] * a1**4 + 6.0 * m[2] * a1**2 * u + m[1] * (3.0 * u**2 + 4.0 * a1 * u) + m[0] * u
    fb5 = (
        m[4] * a1**5
        + 10.0 * m[3] * a1**3 * u
        + m[2] * (15.0 * a1 * u**2 + 10.0 * a1**2 * u)
        + m[1] * (10.0 * u**2 + 5.0 * a1 * u)
        + m[0] * u
    )
    return fb1, fb2, fb3, fb4, fb5


# --------------------------------------------------------------------------
# mechanical derivation of the branch-term coefficients
#
# A monomial is (coef, p, e2, e3, e4, e5) standing for
#   coef * (F'')^e2 (F''')^e3 (F'''')^e4 (F^(5))^e5 / (F')^p.


def branch_term_monomials(k: int) -> dict[int, dict[tuple, float]]:
    """Coefficients g_j of the k-th derivative of (phi/F') o F_i^{-1}.

    Returns {j: {(p, e2, e3, e4, e5): coef}} with j the order of the
    phi-derivative each monomial multiplies.
    """
    if not 1 <= k <= 4:
        raise ValueError("derivative order must be 1..4")
    state: dict[int, dict[tuple, float]] = {0: {(1, 0, 0, 0, 0): 1.0}}
    for _ in range(k):
        new: dict[int, dict[tuple, float]] = {}

        def add(j, mono, coef):
            bucket = new.setdefault(j, {})
            bucket[mono] = bucket.get(mono, 0.0) + coef

        for j, monos in state.items():
            for (p, e2, e3, e4, e5), coef in monos.items():
                # phi picks up one derivative; the whole term divides by F'
                add(j + 1, (p + 1, e2, e3, e4, e5), coef)
                # product rule on the monomial itself, then divide by F'
                if p:
                    add(j, (p + 2, e2 + 1, e3, e4, e5), -p * coef)
                if e2:
                    add(j, (p + 1, e2 - 1, e3 + 1, e4, e5), e2 * coef)
                if e3:
                    add(j, (p + 1, e2, e3 - 1, e4 + 1, e5), e3 * coef)
                if e4:
                    add(j, (p + 1, e2, e3, e4 - 1, e5 + 1), e4 * coef)
                if e5:
                    raise AssertionError("F^(6) required; order > 4 not supported")
        state = new
    return state


def _monomial_bound(monos: dict[tuple, float], fb: tuple) -> float:
    fb1, fb2, fb3, fb4, fb5 = fb
    total = 0.0
    for (p, e2, e3, e4, e5), coef in monos.items():
        total += abs(coef) * fb2**e2 * fb3**e3 * fb4**e4 * fb5**e5 / fb1**p
    return total


# --------------------------------------------------------------------------
# the report


@dataclass
class LyReport:
    t: float
    measured_K: float
    sigma: list[float]
    remainders: list[list[float]]
    c_bounds: list[float] | None
    assum_value: float
    f_bounds: tuple[float, float, float]
    admissible: bool

    def to_json_dict(self) -> dict:
        return {
            "t": self.t,
            "measured_K": self.measured_K,
            "sigma": [float(s) for s in self.sigma],
            "remainders": [[float(r) for r in row] for row in self.remainders],
            "c_bounds": None if self.c_bounds is None else [float(c) for c in self.c_bounds],
            "assum_value": self.assum_value,
            "f_bounds": {
                "min_F1": self.f_bounds[0],
                "max_F2": self.f_bounds[1],
                "max_F3": self.f_bounds[2],
            },
            "admissible": self.admissible,
        }


def lasota_yorke_constants(emap: ExpandingMap, kernel: CouplingKernel, t: float,
                           measured_K: float | None = None) -> LyReport:
    """Derivative-control constants sigma_i, R_i^(j) and admissible C_i.

    sigma_i multiplies the top derivative; the remaining coefficients
    come from the lower-order g_j, with the order-zero one absorbed via
    ||phi|| <= 1 + ||phi'||.  Raises Inadmissible when any sigma_i >= 1
    (the partially filled report rides on the exception).
    """
    K = measured_coupling_bound(kernel) if measured_K is None else float(measured_K)
    fb = coupled_derivative_bounds(emap, K, t)
    if fb[0] <= 0.0:
        raise Inadmissible(f"coupled expansion lower bound {fb[0]:.4g} <= 0 at t={t}")
    N = emap.degree
    sigma: list[float] = []
    remainders: list[list[float]] = []
    for k in range(1, 5):
        g = branch_term_monomials(k)
        b = {j: N * _monomial_bound(monos, fb) for j, monos in g.items()}
        if k == 1:
            sigma.append(b[1] + b[0])
            remainders.append([b[0]])
        else:
            row = [b[k - j] for j in range(1, k - 1)]
            row.append(b[1] + b[0])  # coefficient of ||phi'||
            row.append(b[0])  # constant term
            sigma.append(b[k])
            remainders.append(row)
    report = LyReport(
        t=float(t),
        measured_K=K,
        sigma=sigma,
        remainders=remainders,
        c_bounds=None,
        assum_value=expansion_condition(emap),
        f_bounds=(fb[0], fb[1], fb[2]),
        admissible=all(s < 1.0 for s in sigma),
    )
    if not report.admissible:
        raise Inadmissible(
            f"sigma = {sigma} not all < 1 at t={t}; coupling too strong", report=report
        )
    c1 = remainders[0][0] / (1.0 - sigma[0])
    c2 = (remainders[1][0] * c1 + remainders[1][1]) / (1.0 - sigma[1])
    c3 = (remainders[2][0] * c2 + remainders[2][1] * c1 + remainders[2][2]) / (1.0 - sigma[2])
    c4 = (
        remainders[3][0] * c3
        + remainders[3][1] * c2
        + remainders[3][2] * c1
        + remainders[3][3]
    ) / (1.0 - sigma[3])
    report.c_bounds = [c1, c2, c3, c4]
    return report


def empirical_ly_slack(emap: ExpandingMap, kernel: CouplingKernel, t: float,
                       report: LyReport, n_samples: int = 50, rng=None,
                       resolution: int = 256) -> float:
    """Worst slack of ||(L phi)'|| <= sigma_1 ||phi'|| + R_1 over random
    densities (nonnegative means the inequality held on every sample).

    Samples respect ||phi'|| <= C_1 when C_1 > 0; the degenerate C_1 = 0
    case (linear maps at zero coupling) is checked on unrestricted
    densities, which only strengthens the test.
    """
    from .transfer import self_consistent_apply
    from .periodic import Density

    rng = np.random.default_rng(rng)
    cap = None
    if report.c_bounds is not None and report.c_bounds[0] > 0:
        cap = report.c_bounds[0]
    worst = np.inf
    g = circle_grid(resolution)
    for _ in range(n_samples):
        p = np.zeros(resolution)
        for k in range(1, 6):
            a, b = rng.standard_normal(2) / k**3
            p += a * np.cos(_TWO_PI * k * g) + b * np.sin(_TWO_PI * k * g)
        pfn = PeriodicFn(p)
        slope = pfn.derivative(1).sup_norm()
        target = cap * rng.uniform(0.2, 1.0) if cap is not None else rng.uniform(0.5, 6.0)
        if slope > 0:
            pfn = pfn * (target / slope)
        amp = pfn.sup_norm()
        if amp >= 0.95:
            pfn = pfn * (0.9 / amp)  # keep the density positive
        phi = Density.normalized(PeriodicFn(1.0 + pfn.values))
        lhs = self_consistent_apply(emap, kernel, t, phi).fn.derivative(1).sup_norm()
        rhs = report.sigma[0] * phi.fn.derivative(1).sup_norm() + report.remainders[0][0]
        worst = min(worst, rhs - lhs)
    return float(worst)


# --------------------------------------------------------------------------
# order-4 jets
#
# A jet is an ndarray of shape (5, ...) holding the value and the first
# four derivatives at a point (or on a grid for function-level jets).


def function_jet(fn: PeriodicFn) -> np.ndarray:
    """Value and first four spectral derivatives on the grid."""
    return np.stack([fn.values] + [fn.derivative(i).values for i in range(1, 5)])


def jet_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Leibniz rule through order four."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[0] = a[0] * b[0]
    out[1] = a[1] * b[0] + a[0] * b[1]
    out[2] = a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2]
    out[3] = a[3] * b[0] + 3.0 * a[2] * b[1] + 3.0 * a[1] * b[2] + a[0] * b[3]
    out[4] = (
        a[4] * b[0]
        + 4.0 * a[3] * b[1]
        + 6.0 * a[2] * b[2]
        + 4.0 * a[1] * b[3]
        + a[0] * b[4]
    )
    return out


def jet_compose(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Faa di Bruno through order four.

    `outer` must be the jet of the outer function taken at the inner
    value, i.e. outer[0] = f(g(x)) and outer[i] = f^(i)(g(x)).
    """
    g1, g2, g3, g4 = inner[1], inner[2], inner[3], inner[4]
    out = np.empty(np.broadcast_shapes(outer.shape, inner.shape))
    out[0] = outer[0]
    out[1] = outer[1] * g1
    out[2] = outer[2] * g1**2 + outer[1] * g2
    out[3] = outer[3] * g1**3 + 3.0 * outer[2] * g1 * g2 + outer[1] * g3
    out[4] = (
        outer[4] * g1**4
        + 6.0 * outer[3] * g1**2 * g2
        + outer[2] * (3.0 * g2**2 + 4.0 * g1 * g3)
        + outer[1] * g4
    )
    return out


def jet_inverse(j: np.ndarray, value=None) -> np.ndarray:
    """Jet of the inverse function at the image point.

    Input is the jet of Phi at x; the output derivatives are those of
    Phi^{-1} at Phi(x).  The order-zero entry is the preimage x, which
    the jet alone does not determine: pass it as `value` (NaN when
    omitted).
    """
    d1 = np.asarray(j[1], dtype=float)
    if np.any(d1 == 0.0):
        raise ZeroDivisionError("inverse jet requires a nonvanishing first derivative")
    d2, d3, d4 = j[2], j[3], j[4]
    out = np.empty_like(np.asarray(j, dtype=float))
    out[0] = np.nan if value is None else value
    out[1] = 1.0 / d1
    out[2] = -d2 / d1**3
    out[3] = 3.0 * d2**2 / d1**5 - d3 / d1**4
    out[4] = -d4 / d1**5 + 10.0 * d2 * d3 / d1**6 - 15.0 * d2**3 / d1**7
    return out


# --------------------------------------------------------------------------
# the C^4 norm-inequality audit


@dataclass
class InequalityStats:
    samples: int
    max_ratio: float
    violations: int

    def to_json_dict(self) -> dict:
        return {
            "samples": self.samples,
            "max_ratio": self.max_ratio,
            "violations": self.violations,
        }


@dataclass
class AuditReport:
    product: InequalityStats
    composition: InequalityStats
    inverse: InequalityStats

    def to_json_dict(self) -> dict:
        return {
            "product": self.product.to_json_dict(),
            "composition": self.composition.to_json_dict(),
            "inverse": self.inverse.to_json_dict(),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True, indent=2)


def _random_trig(rng, resolution, modes=5, scale=1.0):
    g = circle_grid(resolution)
    p = np.zeros(resolution)
    for k in range(1, modes + 1):
        a, b = rng.standard_normal(2) / k**2
        p += a * np.cos(_TWO_PI * k * g) + b * np.sin(_TWO_PI * k * g)
    return PeriodicFn(rng.standard_normal() + scale * p)


def _c4_from_sups(sups) -> float:
    return float(sum(sups))


def norm_inequality_audit(rng=None, n_product: int = 200, n_compose: int = 200,
                          n_inverse: int = 50, resolution: int = 256) -> AuditReport:
    """Check the three C^4 norm inequalities on random samples.

    product:      ||f g||_C4 <= 16 ||f||_C4 ||g||_C4
    composition:  ||f o g||_C4 <= ||f||_C4 max_{l<=4} ||g||_C4^l
    inverse:      ||Phi^{-1}||_C4 <= 23 max_{k<=7} (min Phi')^{-k}
                                        max_{l<=3} ||Phi||_C4^l
    Violations are reported, never raised.
    """
    rng = np.random.default_rng(rng)
    grid = circle_grid(resolution)

    def stats() -> dict:
        return {"samples": 0, "max_ratio": 0.0, "violations": 0}

    prod_s, comp_s, inv_s = stats(), stats(), stats()

    def record(s, lhs, rhs):
        s["samples"] += 1
        ratio = lhs / rhs
        s["max_ratio"] = max(s["max_ratio"], ratio)
        if ratio > 1.0:
            s["violations"] += 1

    for _ in range(n_product):
        f = _random_trig(rng, resolution)
        g = _random_trig(rng, resolution)
        # the true product is band-limited at twice the cutoff, so its
        # samples on the doubled grid represent it exactly
        prod = PeriodicFn(f._refined() * g._refined())
        record(prod_s, prod.ck_norm(4), 16.0 * f.ck_norm(4) * g.ck_norm(4))

    for _ in range(n_compose):
        f = _random_trig(rng, resolution)
        g = _random_trig(rng, resolution)
        inner = function_jet(g)
        outer = np.stack(
            [f.eval_at(g.values)]
            + [f.derivative(i).eval_at(g.values) for i in range(1, 5)]
        )
        comp = jet_compose(outer, inner)
        lhs = _c4_from_sups(np.max(np.abs(comp), axis=1))
        g_c4 = g.ck_norm(4)
        rhs = f.ck_norm(4) * max(g_c4**l for l in range(1, 5))
        record(comp_s, lhs, rhs)

    for _ in range(n_inverse):
        p = _random_trig(rng, resolution, scale=0.3)
        p = p - p.integral()
        slope = p.derivative(1).sup_norm()
        if slope > 0.5:
            p = p * (0.5 / slope)  # keep Phi a diffeomorphism
        diffeo = CoupledDiffeo(1.0, p)
        phi_jet = np.stack([
            grid + p.values,
            1.0 + p.derivative(1).values,
            p.derivative(2).values,
            p.derivative(3).values,
            p.derivative(4).values,
        ])
        inv_jet = jet_inverse(phi_jet, value=diffeo.inverse(grid))
        lhs = _c4_from_sups(np.max(np.abs(inv_jet), axis=1))
        min_d1 = float(np.min(phi_jet[1]))
        phi_c4 = _c4_from_sups(np.max(np.abs(phi_jet), axis=1))
        rhs = (
            23.0
            * max(min_d1 ** (-k) for k in range(1, 8))
            * max(phi_c4**l for l in range(1, 4))
        )
        record(inv_s, lhs, rhs)

    return AuditReport(
        product=InequalityStats(**prod_s),
        composition=InequalityStats(**comp_s),
        inverse=InequalityStats(**inv_s),
    )
