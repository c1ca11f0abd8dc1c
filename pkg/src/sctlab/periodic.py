"""Algebra of smooth real periodic functions on the unit circle.

A function is held as equispaced samples on x_j = j/n (n a power of
two) together with cached spectral coefficients.  Differentiation and
integration are spectral, evaluation at arbitrary points uses the
trigonometric interpolant, and products/quotients are formed on a grid
of doubled resolution before truncation (dealiasing).

The module also provides the cone diagnostics used throughout: the
log-Lipschitz constant, the projective gauge `hilbert_alpha` and the
Hilbert distance between positive functions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from ._kernels import hilbert_alpha_scan, trig_eval
from .errors import ConeMembershipError

MIN_RESOLUTION = 16

_TWO_PI = 2.0 * np.pi
_grid_cache: dict[int, np.ndarray] = {}


def circle_grid(resolution: int) -> np.ndarray:
    """Equispaced points j/resolution, cached and read-only."""
    g = _grid_cache.get(resolution)
    if g is None:
        g = np.arange(resolution) / resolution
        g.setflags(write=False)
        _grid_cache[resolution] = g
    return g


def _check_resolution(n: int) -> None:
    if n < MIN_RESOLUTION or (n & (n - 1)) != 0:
        raise ValueError(
            f"resolution must be a power of two >= {MIN_RESOLUTION}, got {n}"
        )


class PeriodicFn:
    """Real periodic function on [0, 1) stored as equispaced samples.

    Samples are treated as immutable; the rfft-based coefficients
    (normalized by the resolution, so they are the coefficients of the
    trigonometric interpolant) are cached on first use.  All operations
    return new objects, so instances are safe to share across threads.
    """

    __slots__ = ("resolution", "values", "_coeffs", "_pair", "_anti")

    def __init__(self, values):
        values = np.array(values, dtype=float)
        _check_resolution(values.size)
        if not np.all(np.isfinite(values)):
            raise ValueError("samples must be finite")
        values.setflags(write=False)
        self.resolution = values.size
        self.values = values
        self._coeffs = None
        self._pair = None
        self._anti = None

    # -- spectral representation ------------------------------------------

    @property
    def coefficients(self) -> np.ndarray:
        """rfft(values)/n; modes 0..n/2 of the trig interpolant."""
        if self._coeffs is None:
            c = np.fft.rfft(self.values) / self.resolution
            c.setflags(write=False)
            self._coeffs = c
        return self._coeffs

    def _spectral_pair(self):
        if self._pair is None:
            c = self.coefficients
            cr = np.ascontiguousarray(c.real)
            ci = np.ascontiguousarray(c.imag)
            self._pair = (cr, ci)
        return self._pair

    @property
    def grid(self) -> np.ndarray:
        return circle_grid(self.resolution)

    # -- evaluation --------------------------------------------------------

    def eval_at(self, x):
        """Trigonometric-interpolant value at arbitrary real points.

        Periodic in x with period 1; exact at grid points.
        """
        xs = np.asarray(x, dtype=float)
        scalar = xs.ndim == 0
        cr, ci = self._spectral_pair()
        out = trig_eval(cr, ci, np.ascontiguousarray(xs.ravel()))
        if scalar:
            return float(out[0])
        return out.reshape(xs.shape)

    __call__ = eval_at

    # -- calculus ----------------------------------------------------------

    def derivative(self, order: int = 1) -> "PeriodicFn":
        """Spectral derivative: mode k is multiplied by (2 pi i k)^order."""
        if not 1 <= order <= 4:
            raise ValueError(f"derivative order must be in 1..4, got {order}")
        n = self.resolution
        k = np.arange(n // 2 + 1)
        c = self.coefficients * (2j * np.pi * k) ** order
        if order % 2 == 1:
            c[-1] = 0.0  # Nyquist mode has no odd-order derivative
        return PeriodicFn(np.fft.irfft(c * n, n))

    def integral(self) -> float:
        """Mean of the samples: the trapezoid rule on the circle."""
        return float(np.mean(self.values))

    def cumulative(self, x):
        """Antiderivative from 0: integral of the interpolant over [0, x]."""
        if self._anti is None:
            c = self.coefficients
            n = self.resolution
            m = n // 2
            ac = np.zeros(m + 1, dtype=complex)
            k = np.arange(1, m)
            ac[1:m] = c[1:m] / (2j * np.pi * k)
            osc = PeriodicFn(np.fft.irfft(ac * n, n))
            self._anti = (float(c[0].real), osc, float(c[m].real), osc.eval_at(0.0))
        mean, osc, cny, osc0 = self._anti
        xs = np.asarray(x, dtype=float)
        m = self.resolution // 2
        val = mean * xs + (osc.eval_at(xs) - osc0)
        val = val + cny * np.sin(_TWO_PI * m * xs) / (_TWO_PI * m)
        if xs.ndim == 0:
            return float(val)
        return val

    # -- norms and cone diagnostics ----------------------------------------

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def ck_norm(self, k: int) -> float:
        """Sum of the sup norms of derivatives 0..k (grid maxima).

        The grid max undershoots the true sup by O(n^-2) for smooth
        functions.
        """
        if not 0 <= k <= 4:
            raise ValueError(f"ck_norm order must be in 0..4, got {k}")
        total = self.sup_norm()
        for i in range(1, k + 1):
            total += self.derivative(i).sup_norm()
        return total

    def log_lip_constant(self) -> float:
        """Grid sup of |f'/f|: the smallest cone parameter containing f."""
        if np.min(self.values) <= 0.0:
            raise ConeMembershipError(
                "log-Lipschitz constant requires strictly positive samples"
            )
        return float(np.max(np.abs(self.derivative(1).values / self.values)))

    # -- arithmetic ---------------------------------------------------------

    def _refined(self) -> np.ndarray:
        """Samples of the interpolant on the doubled grid."""
        n = self.resolution
        m = n // 2
        c = self.coefficients
        big = np.zeros(n + 1, dtype=complex)
        big[:m] = c[:m]
        big[m] = c[m] / 2.0  # split the Nyquist cosine across +-m
        return np.fft.irfft(big * 2 * n, 2 * n)

    def _dealias_binary(self, other: "PeriodicFn", op) -> "PeriodicFn":
        if self.resolution != other.resolution:
            raise ValueError("resolution mismatch")
        n = self.resolution
        m = n // 2
        prod = op(self._refined(), other._refined())
        c2 = np.fft.rfft(prod) / (2 * n)
        c = np.zeros(m + 1, dtype=complex)
        c[:m] = c2[:m]  # modes >= m dropped (dealiasing)
        return PeriodicFn(np.fft.irfft(c * n, n))

    def __add__(self, other):
        if isinstance(other, PeriodicFn):
            if self.resolution != other.resolution:
                raise ValueError("resolution mismatch")
            return PeriodicFn(self.values + other.values)
        return PeriodicFn(self.values + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, PeriodicFn):
            if self.resolution != other.resolution:
                raise ValueError("resolution mismatch")
            return PeriodicFn(self.values - other.values)
        return PeriodicFn(self.values - float(other))

    def __rsub__(self, other):
        return PeriodicFn(float(other) - self.values)

    def __neg__(self):
        return PeriodicFn(-self.values)

    def __mul__(self, other):
        if isinstance(other, PeriodicFn):
            return self._dealias_binary(other, np.multiply)
        return PeriodicFn(self.values * float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, PeriodicFn):
            if np.min(np.abs(other._refined())) < 1e-14:
                raise ZeroDivisionError("divisor vanishes on the refined grid")
            return self._dealias_binary(other, np.divide)
        return PeriodicFn(self.values / float(other))

    # -- serialization -------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for x, v in zip(self.grid, self.values):
                w.writerow([f"{x:.17g}", f"{v:.17g}"])

    def to_json_dict(self) -> dict:
        return {"resolution": self.resolution, "values": [float(v) for v in self.values]}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True, indent=2)

    @classmethod
    def from_json_dict(cls, d: dict) -> "PeriodicFn":
        fn = cls(d["values"])
        if fn.resolution != d["resolution"]:
            raise ValueError("resolution field disagrees with sample count")
        return fn


def sample(f, resolution: int = 256) -> PeriodicFn:
    """Sample a period-1 callable on the equispaced grid."""
    _check_resolution(resolution)
    grid = circle_grid(resolution)
    try:
        vals = np.asarray(f(grid), dtype=float)
        if vals.shape != grid.shape:
            raise TypeError
    except (TypeError, ValueError):
        vals = np.array([float(f(x)) for x in grid])
    return PeriodicFn(vals)


def constant(value: float, resolution: int = 256) -> PeriodicFn:
    return PeriodicFn(np.full(resolution, float(value)))


# --------------------------------------------------------------------------
# densities and the cone


class Density:
    """Probability density: unit integral, nonnegative samples.

    A tiny negative tolerance absorbs interpolation ringing; strict
    positivity holds for converged fixed points and is checked there.
    """

    __slots__ = ("fn",)

    MASS_TOL = 1e-12
    NEGATIVE_TOL = 1e-12

    def __init__(self, fn: PeriodicFn):
        if abs(fn.integral() - 1.0) > self.MASS_TOL:
            raise ValueError(f"density mass {fn.integral()!r} is not 1")
        if np.min(fn.values) < -self.NEGATIVE_TOL:
            raise ValueError("density has negative samples")
        self.fn = fn

    @classmethod
    def normalized(cls, fn: PeriodicFn) -> "Density":
        mass = fn.integral()
        if mass <= 0:
            raise ValueError("cannot normalize a function of non-positive mass")
        return cls(fn / mass)

    @classmethod
    def uniform(cls, resolution: int = 256) -> "Density":
        return cls(constant(1.0, resolution))

    @property
    def resolution(self) -> int:
        return self.fn.resolution

    def strictly_positive(self) -> bool:
        return bool(np.min(self.fn.values) > 0.0)


@dataclass(frozen=True)
class ConeParams:
    """Log-Lipschitz cone parameter: positive functions with
    f(x)/f(y) <= exp(a |x - y|) in circle distance."""

    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("cone parameter a must be positive")


def _cone_check(fn: PeriodicFn, cone: ConeParams, name: str) -> None:
    if np.min(fn.values) <= 0.0:
        raise ConeMembershipError(f"{name} is not strictly positive on the grid")
    llc = fn.log_lip_constant()
    if not llc < cone.a:
        raise ConeMembershipError(
            f"{name} has log-Lipschitz constant {llc:.6g} >= cone parameter {cone.a:.6g}"
        )


def _auto_stride(n: int) -> int:
    # exact pair enumeration up to n = 512, subsampled beyond
    return 1 if n <= 512 else n // 512


def hilbert_alpha(phi: PeriodicFn, psi: PeriodicFn, cone: ConeParams, stride=None) -> float:
    """Projective gauge of psi against phi in the cone of parameter a.

    Infimum over grid points of psi/phi and over ordered grid pairs of
    (e^{a d} psi(x) - psi(y)) / (e^{a d} phi(x) - phi(y)); pairs with a
    non-positive denominator are skipped.  Cost is O((n/stride)^2).
    """
    if phi.resolution != psi.resolution:
        raise ValueError("resolution mismatch")
    _cone_check(phi, cone, "phi")
    _cone_check(psi, cone, "psi")
    if stride is None:
        stride = _auto_stride(phi.resolution)
    return float(
        hilbert_alpha_scan(phi.values, psi.values, float(cone.a), int(stride))
    )


def hilbert_distance(phi: PeriodicFn, psi: PeriodicFn, cone: ConeParams, stride=None) -> float:
    """Hilbert projective distance -log(alpha(phi,psi) alpha(psi,phi)).

    Symmetric and invariant under positive scaling of either argument.
    """
    a1 = hilbert_alpha(phi, psi, cone, stride)
    a2 = hilbert_alpha(psi, phi, cone, stride)
    if a1 <= 0.0 or a2 <= 0.0:
        raise ConeMembershipError("projective distance undefined: gauge not positive")
    # product can exceed 1 by roundoff for near-identical arguments
    return max(float(-np.log(a1 * a2)), 0.0)
