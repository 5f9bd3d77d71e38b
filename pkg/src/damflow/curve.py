"""Periods and Abel-Jacobi images of the real genus-2 curve y^2 = prod(x - x_s).

Everything here is done by direct quadrature on the branch points, with no
theta functions involved, so it can be used to check the theta machinery.

Conventions: the upper half-plane is lifted with the branch
``y(x) = prod sqrt(x - x_s)`` (principal roots), positive on (x6, inf).
Integration paths run along the boundary of that lift, i.e. the real axis
approached from above, or along straight segments inside the half-plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .theta import ThetaCharacteristic

QUAD_TOL = 1e-13


class QuadratureError(RuntimeError):
    pass


class ConditioningError(ValueError):
    pass


@dataclass(frozen=True)
class BranchConfig:
    x: tuple[float, ...]
    x_plus: float = 0.0
    x_minus: float = math.inf

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        object.__setattr__(self, "x", x)
        if len(x) != 6:
            raise ValueError("need six branch points")
        if any(b <= a for a, b in zip(x, x[1:])):
            raise ValueError("branch points must be strictly increasing")
        for name, v in (("x_plus", self.x_plus), ("x_minus", self.x_minus)):
            if x[0] <= v <= x[-1]:
                raise ValueError(f"{name} must lie outside [x1, x6]")
        if self.x_plus == self.x_minus:
            raise ValueError("x_plus and x_minus must differ")
        span = x[-1] - x[0]
        if min(b - a for a, b in zip(x, x[1:])) < 1e-15 * span:
            raise ConditioningError("branch points nearly coincide")

    def affine(self, alpha: float, beta: float) -> "BranchConfig":
        f = lambda v: alpha * v + beta if math.isfinite(v) else v
        return BranchConfig(tuple(f(v) for v in self.x), f(self.x_plus), f(self.x_minus))


def y_upper(t, xs) -> np.ndarray:
    """Branch of y on the closed upper half-plane (real t taken from above)."""
    t = np.asarray(t, dtype=complex)
    out = np.ones_like(t)
    for s in xs:
        d = t - s
        # force +0 imaginary part on the real axis so sqrt takes the value from above
        d = np.where(d.imag == 0, d.real + 0j, d)
        out = out * np.sqrt(d)
    return out


def _adaptive(fun, a: float, b: float, tol: float = QUAD_TOL, n0: int = 16, nmax: int = 4096):
    """Gauss-Legendre on [a, b] with node doubling until successive sums agree."""
    prev = None
    n = n0
    while n <= nmax:
        z, w = leggauss(n)
        t = 0.5 * (b - a) * z + 0.5 * (a + b)
        val = 0.5 * (b - a) * np.tensordot(w, fun(t), axes=(0, 0))
        if prev is not None and np.max(np.abs(val - prev)) <= tol * max(1.0, np.max(np.abs(val))):
            return val
        prev = val
        n *= 2
    raise QuadratureError("Gauss-Legendre did not converge")


def _split_adaptive(fun, a: float, b: float, scales, tol: float = QUAD_TOL):
    """_adaptive over [a, b] split geometrically at the given interior scales.

    Integrands like 1/prod sqrt(1 + x_s tau) change on the scale 1/x_s, which
    a single Gauss-Legendre rule cannot see when the x_s span many decades.
    """
    cuts = sorted(c for c in np.asarray(scales, dtype=float).ravel() if a < c < b)
    pts, out = [a], None
    for c in cuts:
        if c > 2 * pts[-1]:
            pts.append(c)
    pts.append(b)
    for lo, hi in zip(pts, pts[1:]):
        v = _adaptive(fun, lo, hi, tol)
        out = v if out is None else out + v
    return out


def _chebyshev_segment(fun_smooth, a: float, b: float, tol: float = QUAD_TOL):
    """Integral of fun_smooth(t)/sqrt((t-a)(b-t)) over [a, b] by Gauss-Chebyshev."""
    prev = None
    n = 16
    while n <= 8192:
        th = (2 * np.arange(1, n + 1) - 1) * np.pi / (2 * n)
        t = 0.5 * (a + b) + 0.5 * (b - a) * np.cos(th)
        val = (np.pi / n) * fun_smooth(t).sum(axis=0)
        if prev is not None and np.max(np.abs(val - prev)) <= tol * max(1.0, np.max(np.abs(val))):
            return val
        prev = val
        n *= 2
    raise QuadratureError("Gauss-Chebyshev did not converge")


def _monomials(t):
    t = np.asarray(t, dtype=complex)
    return np.stack([t, np.ones_like(t)], axis=-1)


class Curve:
    """Quadrature engine for one branch configuration.

    Raw integrals are of the pair (x dx/y, dx/y); normalized differentials
    du_j = (C[0, j] x + C[1, j]) dx / y.
    """

    def __init__(self, bc: BranchConfig):
        self.bc = bc
        self.xs = np.asarray(bc.x, dtype=float)
        self._seg = {}
        for k in range(5):
            self._seg[k] = self._full_segment(k)
        a1, a2 = self._seg[1].real, self._seg[3].real
        raw_a = np.stack([a1, a2])
        if abs(np.linalg.det(raw_a)) < 1e-14 * np.abs(raw_a).max() ** 2:
            raise ConditioningError("a-period matrix of raw differentials is singular")
        self.raw_a_periods = 2 * raw_a
        # half a-periods normalized to E/2
        self.C = 0.5 * np.linalg.inv(raw_a)
        self._fix_b_cycles()

    # raw integrals -----------------------------------------------------
    def _full_segment(self, k: int) -> np.ndarray:
        """Integral of (x, 1)/y over [x_k, x_{k+1}] (0-based k) from above."""
        xs = self.xs
        a, b = xs[k], xs[k + 1]
        others = np.delete(xs, [k, k + 1])
        phase = 1j ** (5 - k)  # one factor i per branch point right of the segment

        def smooth(t):
            h = np.prod(np.sqrt(np.abs(t[:, None] - others[None, :])), axis=1)
            return _monomials(t) / (phase * h)[:, None]

        return _chebyshev_segment(smooth, a, b)

    def _from_branch_point(self, k: int, x: float) -> np.ndarray:
        """Integral of (x,1)/y from branch point x_k to real x, with t = x_k +- s^2."""
        a = self.xs[k]
        if x == a:
            return np.zeros(2, dtype=complex)
        sgn = 1.0 if x > a else -1.0
        phi = 1.0 if sgn > 0 else 1j  # sqrt(t - x_k) = phi * s from above
        others = np.delete(self.xs, k)

        def f(s):
            t = a + sgn * s * s
            return _monomials(t) * (2.0 * sgn / (phi * y_upper(t, others)))[:, None]

        return _adaptive(f, 0.0, math.sqrt(abs(x - a)))

    def _real_path(self, a: float, b: float) -> np.ndarray:
        """Integral of (x,1)/y along the real axis between two points, no branch point between."""
        if a == b:
            return np.zeros(2, dtype=complex)
        lo, hi = min(a, b), max(a, b)
        if any(lo < v < hi for v in self.xs):
            raise QuadratureError("path crosses a branch point")
        return _adaptive(lambda t: _monomials(t) / y_upper(t, self.xs)[:, None], a, b)

    def raw_integral_real(self, x: float) -> np.ndarray:
        """Integral of (x,1)/y along the upper boundary from x1 to real x.

        For x < x1 the path runs leftwards from x1."""
        xs = self.xs
        if x < xs[0]:
            return self._to_left(x)
        k = int(np.searchsorted(xs, x, side="right")) - 1  # x in [x_k, x_{k+1})
        total = np.zeros(2, dtype=complex)
        for j in range(min(k, 5)):
            total = total + self._seg[j]
        if k >= 5:
            if x - xs[5] <= 1.0:
                return total + self._from_branch_point(5, x)
            return total + self._from_branch_point(5, xs[5] + 1.0) + self._real_path(xs[5] + 1.0, x)
        if x - xs[k] <= xs[k + 1] - x:
            return total + self._from_branch_point(k, x)
        return total + self._seg[k] + self._from_branch_point(k + 1, x)

    def _to_left(self, x: float) -> np.ndarray:
        x1 = self.xs[0]
        if x1 - x <= 1.0:
            return self._from_branch_point(0, x)
        return self._from_branch_point(0, x1 - 1.0) + self._real_path(x1 - 1.0, x)

    def raw_integral_at_infinity(self) -> np.ndarray:
        """Integral from x1 leftwards to the point at infinity (x = -1/tau)."""
        xs = self.xs
        x0 = min(xs[0] - 1.0, -1.0)

        def tail(tau):
            g = np.prod(np.sqrt(1.0 + xs[None, :] * tau[:, None]), axis=1)
            return np.stack([-1.0 / g, tau / g], axis=-1).astype(complex)

        return self._to_left(x0) + _split_adaptive(tail, 0.0, -1.0 / x0, 1.0 / xs)

    def raw_integral_complex(self, x: complex) -> np.ndarray:
        """Integral from x1 to a point of the open upper half-plane.

        The path runs along the boundary to the branch point nearest to x and
        then straight to x (t = x_k + r^2 (x - x_k)); far away it comes in
        from infinity in the variable tau = 1/t.
        """
        x = complex(x)
        xs = self.xs
        radius = 2.0 * max(abs(xs[0]), abs(xs[-1]))
        if abs(x) > radius:
            tau_end = 1.0 / x

            def g(r):
                tau = r * tau_end
                gg = np.prod(np.sqrt(1.0 - xs[None, :] * tau[:, None]), axis=1)
                return np.stack([-1.0 / gg, -tau / gg], axis=-1) * tau_end

            return self.raw_integral_at_infinity() + _split_adaptive(g, 0.0, 1.0, np.abs(x / xs))
        k = int(np.argmin(np.abs(x - xs)))
        a = xs[k]
        d = x - a
        sd = np.sqrt(d)
        others = np.delete(xs, k)

        def f(r):
            t = a + r * r * d
            return _monomials(t) * (2.0 * d / (sd * y_upper(t, others)))[:, None]

        return self.raw_integral_real(a) + _adaptive(f, 0.0, 1.0)

    # normalization -----------------------------------------------------
    def _fix_b_cycles(self):
        C = self.C
        P1 = 2 * (self._seg[0] @ C)           # over [x1, x2]
        P56 = 2 * (self._seg[4] @ C)          # over [x5, x6]
        # candidate columns; signs chosen for a symmetric positive definite Omega
        best = None
        for s1 in (1, -1):
            for s2 in (1, -1):
                pi = np.stack([s1 * P1, -s2 * P56], axis=1)  # columns Pi^1, Pi^2
                om = pi.imag
                err = abs(om[0, 1] - om[1, 0])
                pd = np.linalg.eigvalsh(0.5 * (om + om.T)).min() > 0
                if pd and (best is None or err < best[0]):
                    best = (err, pi)
        if best is None:
            raise QuadratureError("could not orient b-cycles")
        self.Pi = best[1]

    @property
    def omega(self) -> np.ndarray:
        om = self.Pi.imag
        return 0.5 * (om + om.T)

    def aj_real(self, x: float) -> np.ndarray:
        """AJ image of the boundary point over real x (upper sheet)."""
        if math.isinf(x):
            return self.raw_integral_at_infinity() @ self.C
        return self.raw_integral_real(float(x)) @ self.C

    def aj(self, x: complex, sheet: int = 1) -> np.ndarray:
        x = complex(x)
        if x.imag < 0:
            raise ValueError("use the upper half-plane representative with a sheet sign")
        v = self.aj_real(x.real) if x.imag == 0 else self.raw_integral_complex(x) @ self.C
        return sheet * v


def _tail_integral(fun, tau_max: float) -> np.ndarray:
    return _adaptive(fun, 0.0, tau_max)


def normalized_basis(bc: BranchConfig) -> np.ndarray:
    return Curve(bc).C


def period_matrix(bc: BranchConfig) -> np.ndarray:
    return Curve(bc).Pi


def aj_map(bc: BranchConfig, x: complex, sheet: int = 1, curve: Curve | None = None):
    """AJ image u(p) of p = (x, sheet) with its characteristic."""
    cv = curve or Curve(bc)
    u = cv.aj(x, sheet)
    return u, ThetaCharacteristic.from_point(u, cv.omega)
