"""Dynamical ingredients: the expanding map, the interaction kernel,
the mean field and the coupling diffeomorphism.

The coupled one-step map is f(Phi(x)) where Phi(x) = x + t*A(x) and
A(x) = integral of h(x, y) psi(y) dy is the mean field felt at x when
the population has density psi.
"""

from __future__ import annotations

import numpy as np

from . import periodic
from ._accel import USE_NUMBA
from ._kernels import pair_field_difference, pair_field_tensor
from .errors import ConfigError, DiffeoViolation, NonConvergence
from .periodic import PeriodicFn, circle_grid

_TWO_PI = 2.0 * np.pi
_SUP_SAMPLES = 1 << 14


def _vectorized(f, x):
    x = np.asarray(x, dtype=float)
    try:
        out = np.asarray(f(x), dtype=float)
        if out.shape != x.shape:
            raise TypeError
        return out
    except (TypeError, ValueError):
        flat = np.array([float(f(v)) for v in x.ravel()])
        return flat.reshape(x.shape)


class ExpandingMap:
    """Uniformly expanding, orientation-preserving circle map.

    `lift` is the lift to the real line with lift(x+1) = lift(x) + degree;
    `omega` is a certified lower bound on f' (> 1).  Derivatives beyond
    the third are optional; when absent, their sampled sup bounds are
    obtained by spectral differentiation of the sampled third derivative.
    Instances are immutable after construction and reentrant.
    """

    def __init__(self, lift, deriv1, deriv2, deriv3, degree, omega,
                 deriv4=None, deriv5=None):
        if int(degree) < 2:
            raise ValueError("degree must be an integer >= 2")
        if not omega > 1.0:
            raise ValueError("expansion bound omega must exceed 1")
        self.lift = lift
        self.degree = int(degree)
        self.omega = float(omega)
        self._derivs = {1: deriv1, 2: deriv2, 3: deriv3}
        if deriv4 is not None:
            self._derivs[4] = deriv4
        if deriv5 is not None:
            self._derivs[5] = deriv5
        self._sup_cache: dict[int, float] = {}
        self._branch_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._validate()

    def _validate(self):
        top = float(self.lift(1.0) - self.lift(0.0))
        if abs(top - self.degree) > 1e-9:
            raise ValueError(f"lift increment {top} does not match degree {self.degree}")
        xs = circle_grid(4096)
        d1 = _vectorized(self._derivs[1], xs)
        if np.min(d1) <= 0.0:
            raise ValueError("orientation-reversing maps are not supported")
        if np.min(d1) < self.omega - 1e-9:
            raise ValueError(
                f"sampled min f' = {np.min(d1):.12g} violates claimed omega = {self.omega}"
            )

    # -- evaluation ----------------------------------------------------------

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        out = _vectorized(self.lift, x) % 1.0
        out = np.where(out >= 1.0, 0.0, out)  # fp wrap of tiny negatives
        if x.ndim == 0:
            return float(out)
        return out

    def deriv(self, x, order: int = 1):
        fn = self._derivs.get(order)
        if fn is None:
            raise ValueError(f"derivative of order {order} not available")
        x = np.asarray(x, dtype=float)
        out = _vectorized(fn, x)
        if x.ndim == 0:
            return float(out)
        return out

    def deriv_sup(self, order: int) -> float:
        """Sampled sup of |f^(order)| on a 2^14 grid, one Newton polish step.

        The polish solves g' = 0 from the grid argmax when the next two
        derivatives are available.
        """
        if order in self._sup_cache:
            return self._sup_cache[order]
        xs = circle_grid(_SUP_SAMPLES)
        if order in self._derivs:
            g = _vectorized(self._derivs[order], xs)
            best = float(np.max(np.abs(g)))
            d1 = self._derivs.get(order + 1)
            d2 = self._derivs.get(order + 2)
            if d1 is not None and d2 is not None:
                x0 = float(xs[int(np.argmax(np.abs(g)))])
                curv = float(d2(x0))
                if curv != 0.0:
                    x1 = x0 - float(d1(x0)) / curv
                    best = max(best, abs(float(self._derivs[order](x1))))
        else:
            # spectral bound from the sampled top available derivative
            top = max(self._derivs)
            fn = periodic.PeriodicFn(_vectorized(self._derivs[top], circle_grid(8192)))
            best = fn.derivative(order - top).sup_norm()
        self._sup_cache[order] = best
        return best

    # -- inverse branches ------------------------------------------------------

    def inverse_branches(self, y, tol: float = 1e-12, max_iter: int = 60):
        """All N preimages of y under f, ordered by position in [0, 1).

        Newton on the lift restricted to each monotone branch, seeded at
        the linear-map preimage, with a bisection safeguard.  Residuals
        satisfy |f(x_i) - y| <= tol (circle distance).
        """
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        ys = np.atleast_1d(y).astype(float)
        base = float(self.lift(0.0))
        r = (ys - base) % 1.0
        # branch targets on the lift: base + r + i, i = 0..N-1
        targets = base + r[None, :] + np.arange(self.degree)[:, None]
        x = (targets - base) / self.degree
        lo = np.zeros_like(x)
        hi = np.ones_like(x)
        for _ in range(max_iter):
            fx = _vectorized(self.lift, x)
            res = fx - targets
            if np.max(np.abs(res)) <= tol:
                break
            above = res > 0
            hi = np.where(above, np.minimum(hi, x), hi)
            lo = np.where(~above, np.maximum(lo, x), lo)
            step = res / _vectorized(self._derivs[1], x)
            xn = x - step
            bad = (xn <= lo) | (xn >= hi)
            x = np.where(bad, 0.5 * (lo + hi), xn)
        else:
            raise NonConvergence("branch inversion did not reach tolerance")
        x = np.where(x >= 1.0, x - 1.0, x)
        if scalar:
            return x[:, 0]
        return x.reshape((self.degree,) + y.shape)

    def branch_table(self, resolution: int):
        """Preimages and 1/f' weights of the grid, cached per resolution."""
        entry = self._branch_cache.get(resolution)
        if entry is None:
            xb = self.inverse_branches(circle_grid(resolution))
            w = 1.0 / np.abs(self.deriv(xb, 1))
            xb.setflags(write=False)
            w.setflags(write=False)
            entry = (xb, w)
            self._branch_cache[resolution] = entry
        return entry


def perturbed_linear(degree: int, alpha: float) -> ExpandingMap:
    """The built-in family f(x) = degree*x + alpha*sin(2 pi x) mod 1."""
    degree = int(degree)
    alpha = float(alpha)
    omega = degree - _TWO_PI * abs(alpha)
    if not omega > 1.0:
        raise ValueError(
            f"perturbation alpha={alpha} destroys uniform expansion (omega={omega:.6g})"
        )
    w = _TWO_PI
    return ExpandingMap(
        lift=lambda x: degree * x + alpha * np.sin(w * x),
        deriv1=lambda x: degree + alpha * w * np.cos(w * x),
        deriv2=lambda x: -alpha * w**2 * np.sin(w * x),
        deriv3=lambda x: -alpha * w**3 * np.cos(w * x),
        deriv4=lambda x: alpha * w**4 * np.sin(w * x),
        deriv5=lambda x: alpha * w**5 * np.cos(w * x),
        degree=degree,
        omega=omega,
    )


def coupled_map(emap: ExpandingMap, diffeo: "CoupledDiffeo", x):
    """One step of the coupled dynamics: f(Phi(x)) mod 1."""
    return emap.apply(diffeo.forward(x))


# --------------------------------------------------------------------------
# interaction kernels


class CouplingKernel:
    """Interaction h(x, y), periodic (degree zero) in both arguments.

    Subclasses supply vectorized `h` and the partial derivatives in the
    first argument.  The grid table h(x_i, y_j) used by the mean-field
    quadrature is cached per resolution.
    """

    def __init__(self):
        self._h_cache: dict[int, np.ndarray] = {}

    def h(self, x, y):
        raise NotImplementedError

    def d1(self, x, y, order: int = 1):
        raise NotImplementedError

    def h_matrix(self, resolution: int) -> np.ndarray:
        tab = self._h_cache.get(resolution)
        if tab is None:
            g = circle_grid(resolution)
            tab = np.asarray(self.h(g[:, None], g[None, :]), dtype=float)
            tab.setflags(write=False)
            self._h_cache[resolution] = tab
        return tab

    def d1_sup(self, order: int, samples: int = 256) -> float:
        """Sampled sup of |d^order h / dx^order| over the torus."""
        g = circle_grid(samples)
        vals = self.d1(g[:, None], g[None, :], order)
        return float(np.max(np.abs(vals)))

    def abs_mean_sup(self, samples: int = 512) -> float:
        """Sampled sup over x of the mean of |h(x, .)|."""
        g = circle_grid(samples)
        return float(np.max(np.mean(np.abs(self.h(g[:, None], g[None, :])), axis=1)))

    def pair_encoding(self):
        """Arrays consumed by the compiled all-to-all field kernel, or None."""
        return None

    def mean_field_at(self, x_eval: np.ndarray, x_src: np.ndarray) -> np.ndarray:
        """(1/M) sum_j h(x_i, x_j), literal pairwise accumulation."""
        enc = self.pair_encoding()
        if enc is not None and USE_NUMBA:
            kind, arrays = enc
            if kind == "tensor":
                return pair_field_tensor(x_eval, *arrays)
            return pair_field_difference(x_eval, *arrays)
        M = x_src.size
        out = np.zeros(x_eval.size)
        chunk = max(1, (1 << 22) // max(M, 1))
        for start in range(0, x_eval.size, chunk):
            stop = min(start + chunk, x_eval.size)
            out[start:stop] = np.mean(
                self.h(x_eval[start:stop, None], x_src[None, :]), axis=1
            )
        return out


_TRIG = {"cos": 0, "sin": 1}


def _trig_eval_code(code: int, arg):
    return np.cos(arg) if code == 0 else np.sin(arg)


def _trig_deriv(code: int, k: int, order: int, arg):
    # d^order/dx^order of trig(2 pi k x): amplitude (2 pi k)^order, phase shift
    w = (_TWO_PI * k) ** order
    shifted = arg + order * (np.pi / 2.0)
    return w * (np.cos(shifted) if code == 0 else np.sin(shifted))


class TensorTrigKernel(CouplingKernel):
    """h(x, y) = sum_r c_r trig(2 pi kx_r x) trig(2 pi ky_r y)."""

    def __init__(self, terms):
        super().__init__()
        self.terms = []
        for c, kx, fx, ky, fy in terms:
            if fx not in _TRIG or fy not in _TRIG:
                raise ValueError(f"trig factors must be 'cos' or 'sin', got {fx!r}/{fy!r}")
            self.terms.append((float(c), int(kx), _TRIG[fx], int(ky), _TRIG[fy]))
        if not self.terms:
            raise ValueError("kernel needs at least one term")

    def h(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape, y.shape))
        for c, kx, fx, ky, fy in self.terms:
            out = out + c * _trig_eval_code(fx, _TWO_PI * kx * x) * _trig_eval_code(
                fy, _TWO_PI * ky * y
            )
        return out

    def d1(self, x, y, order: int = 1):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape, y.shape))
        for c, kx, fx, ky, fy in self.terms:
            out = out + c * _trig_deriv(fx, kx, order, _TWO_PI * kx * x) * _trig_eval_code(
                fy, _TWO_PI * ky * y
            )
        return out

    def pair_encoding(self):
        c = np.array([t[0] for t in self.terms])
        kx = np.array([float(t[1]) for t in self.terms])
        fx = np.array([t[2] for t in self.terms], dtype=np.int64)
        ky = np.array([float(t[3]) for t in self.terms])
        fy = np.array([t[4] for t in self.terms], dtype=np.int64)
        return "tensor", (c, kx, fx, ky, fy)


class DifferenceKernel(CouplingKernel):
    """h(x, y) = g(y - x) with g a trig polynomial.

    Modes are (k, a, b) for a*cos(2 pi k u) + b*sin(2 pi k u).
    """

    def __init__(self, modes):
        super().__init__()
        self.modes = [(int(k), float(a), float(b)) for k, a, b in modes]
        if not self.modes:
            raise ValueError("kernel needs at least one mode")

    def _g(self, u, order: int = 0):
        out = np.zeros(np.shape(u))
        for k, a, b in self.modes:
            w = (_TWO_PI * k) ** order
            arg = _TWO_PI * k * np.asarray(u) + order * (np.pi / 2.0)
            out = out + w * (a * np.cos(arg) + b * np.sin(arg))
        return out

    def h(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self._g(y - x)

    def d1(self, x, y, order: int = 1):
        # d/dx g(y - x) = -g'(y - x)
        return (-1.0) ** order * self._g(np.asarray(y) - np.asarray(x), order)

    def pair_encoding(self):
        k = np.array([float(m[0]) for m in self.modes])
        ga = np.array([m[1] for m in self.modes])
        gb = np.array([m[2] for m in self.modes])
        return "difference", (k, ga, gb)


class CallableKernel(CouplingKernel):
    """Wrap an arbitrary vectorized h(x, y); partials optional.

    When partial-derivative callables are not supplied, `d1` and the
    derivative sup bounds fall back to spectral differentiation of the
    grid table in the first argument.
    """

    def __init__(self, h, partials=None):
        super().__init__()
        self._h = h
        self._partials = dict(partials or {})

    def h(self, x, y):
        return np.asarray(self._h(np.asarray(x, dtype=float), np.asarray(y, dtype=float)), dtype=float)

    def d1(self, x, y, order: int = 1):
        fn = self._partials.get(order)
        if fn is not None:
            return np.asarray(fn(np.asarray(x), np.asarray(y)), dtype=float)
        raise ValueError(f"partial derivative of order {order} not provided")

    def d1_sup(self, order: int, samples: int = 256) -> float:
        if order in self._partials:
            return super().d1_sup(order, samples)
        tab = self.h_matrix(samples)
        k = np.arange(samples // 2 + 1)
        ck = np.fft.rfft(tab, axis=0) * (2j * np.pi * k[:, None]) ** order
        if order % 2 == 1:
            ck[-1] = 0.0
        return float(np.max(np.abs(np.fft.irfft(ck, samples, axis=0))))


ZERO_KERNEL = TensorTrigKernel([(0.0, 0, "cos", 0, "cos")])


# --------------------------------------------------------------------------
# mean field and coupling diffeomorphism


def mean_field(kernel: CouplingKernel, psi: PeriodicFn) -> PeriodicFn:
    """A_psi(x_j): trapezoidal quadrature of h(x_j, .) * psi over the grid."""
    n = psi.resolution
    tab = kernel.h_matrix(n)
    return PeriodicFn(tab @ psi.values / n)


class CoupledDiffeo:
    """Phi(x) = x + t*A(x) with A a periodic mean field.

    Construction checks min(1 + t*A') > 0, the diffeomorphism condition;
    `inverse` is a Newton solve seeded at the target point.
    """

    def __init__(self, t: float, meanfield: PeriodicFn):
        self.t = float(t)
        self.meanfield = meanfield
        self.meanfield_d1 = meanfield.derivative(1)
        self.meanfield_d2 = meanfield.derivative(2)
        self.meanfield_d3 = meanfield.derivative(3)
        phi1 = 1.0 + self.t * self.meanfield_d1.values
        self.min_deriv = float(np.min(phi1))
        if self.min_deriv <= 0.0:
            raise DiffeoViolation(
                f"min(1 + t A') = {self.min_deriv:.6g} <= 0 at t = {self.t}"
            )
        self.is_identity = bool(np.all(self.t * meanfield.values == 0.0))

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_identity:
            return x + 0.0
        return x + self.t * self.meanfield.eval_at(x)

    def deriv(self, x, order: int = 1):
        if not 1 <= order <= 3:
            raise ValueError("diffeo derivative order must be 1..3")
        d = (self.meanfield_d1, self.meanfield_d2, self.meanfield_d3)[order - 1]
        val = self.t * d.eval_at(x)
        if order == 1:
            val = val + 1.0
        return val

    def inverse(self, y, tol: float = 1e-12, max_iter: int = 50):
        """Solve Phi(x) = y by Newton from x0 = y; |Phi(x) - y| <= tol."""
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        ys = np.atleast_1d(y).astype(float)
        if self.is_identity:
            out = ys % 1.0
        else:
            x = ys.copy()
            for _ in range(max_iter):
                r = x + self.t * self.meanfield.eval_at(x) - ys
                if np.max(np.abs(r)) <= tol:
                    break
                x = x - r / (1.0 + self.t * self.meanfield_d1.eval_at(x))
            else:
                raise NonConvergence(
                    "diffeomorphism inversion stalled; coupling close to critical"
                )
            out = x % 1.0
        if scalar:
            return float(out[0])
        return out.reshape(y.shape)


def make_diffeo(kernel: CouplingKernel, psi: PeriodicFn, t: float) -> CoupledDiffeo:
    """Assemble Phi from the mean field of psi at coupling strength t."""
    return CoupledDiffeo(t, mean_field(kernel, psi))


# --------------------------------------------------------------------------
# config-driven factories (CLI surface)


def make_map(spec: dict) -> ExpandingMap:
    if not isinstance(spec, dict):
        raise ConfigError("map: expected an object")
    kind = spec.get("type")
    if kind != "perturbed_linear":
        raise ConfigError(f"map.type: unknown map family {kind!r}")
    try:
        degree = int(spec["degree"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError("map.degree: required integer") from None
    try:
        alpha = float(spec.get("alpha", 0.0))
    except (TypeError, ValueError):
        raise ConfigError("map.alpha: must be a real number") from None
    try:
        return perturbed_linear(degree, alpha)
    except ValueError as exc:
        raise ConfigError(f"map: {exc}") from None


def make_kernel(spec: dict) -> CouplingKernel:
    if not isinstance(spec, dict):
        raise ConfigError("kernel: expected an object")
    kind = spec.get("type")
    coeffs = spec.get("coefficients")
    if not isinstance(coeffs, list) or not coeffs:
        raise ConfigError("kernel.coefficients: required non-empty list")
    try:
        if kind == "tensor_trig":
            return TensorTrigKernel(
                [(c["c"], c["kx"], c["fx"], c["ky"], c["fy"]) for c in coeffs]
            )
        if kind == "difference":
            return DifferenceKernel([(c["k"], c.get("a", 0.0), c.get("b", 0.0)) for c in coeffs])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"kernel.coefficients: {exc}") from None
    raise ConfigError(f"kernel.type: unknown kernel family {kind!r}")
