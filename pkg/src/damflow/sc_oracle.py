"""Classical Schwarz-Christoffel route for the octagon, by direct quadrature.

    dw = -A (t - x2)(t - x4)(t - x5) dt / ((t - x_plus) y(t)),   x_plus = 0, x_minus = inf

with y the upper-half-plane branch of ``curve.y_upper``.  The overall minus
sign makes increasing t traverse the octagon with w_{s+1} - w_s = i^s H_s.

This is validation infrastructure: it is slow and breaks down under
crowding, which is exactly what the theta route avoids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .curve import QuadratureError, _adaptive, y_upper
from .polygon import PolygonSpec

ZEROS = (1, 3, 4)  # 0-based indices of x2, x4, x5


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleUnknowns:
    """Normalized preimages 1 = x1 < x2 < ... < x6 and the prefactor A > 0."""

    x: tuple[float, ...]
    A: float

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        object.__setattr__(self, "x", x)
        if len(x) != 6 or abs(x[0] - 1.0) > 0:
            raise ValueError("need six preimages with x1 = 1")
        if any(b <= a for a, b in zip(x, x[1:])):
            raise ValueError("preimages must be strictly increasing")
        if not self.A > 0:
            raise ValueError("A must be positive")

    def to_vector(self) -> np.ndarray:
        x = np.asarray(self.x)
        return np.concatenate([np.log(np.diff(x)), [math.log(self.A)]])

    @classmethod
    def from_vector(cls, v) -> "OracleUnknowns":
        gaps = np.exp(np.asarray(v[:5]))
        return cls(tuple(np.concatenate([[1.0], 1.0 + np.cumsum(gaps)])), float(math.exp(v[5])))


def _integrand_factor(t, xs, A, x_plus=0.0):
    t = np.asarray(t, dtype=complex)
    num = (t - xs[1]) * (t - xs[3]) * (t - xs[4])
    return -A * num / (t - x_plus)


def _breakpoints(a: float, b: float, near_a: float, near_b: float) -> list[float]:
    """Split [a, b] so each piece is no longer than its distance to the nearest singularity."""
    mid = 0.5 * (a + b)
    left, d = [a], 0.5 * min(near_a, b - a)
    while a + d < mid:
        left.append(a + d)
        d *= 2.0
    right, d = [b], 0.5 * min(near_b, b - a)
    while b - d > mid:
        right.append(b - d)
        d *= 2.0
    return left + [mid] + right[::-1]


def side_integral(u: OracleUnknowns, k: int, n: int | None = None, tol: float = 1e-13) -> complex:
    """w_{k+1} - w_k (0-based k) along [x_k, x_{k+1}].

    The end pieces use Gauss-Jacobi rules with the one-sided inverse square
    root as weight, the interior pieces Gauss-Legendre; pieces are graded
    geometrically towards both ends so that strongly separated preimages
    (crowding) are resolved.  ``n`` fixes the node count per piece.
    """
    xs = np.asarray(u.x)
    a, b = xs[k], xs[k + 1]
    others = np.delete(xs, [k, k + 1])
    poles = np.append(others, 0.0)
    phase = 1j ** (5 - k)

    def g(t):
        h = np.prod(np.sqrt(np.abs(t[:, None] - others[None, :])), axis=1)
        return _integrand_factor(t, xs, u.A) / (phase * h)

    pts = _breakpoints(a, b, float(np.min(np.abs(poles - a))), float(np.min(np.abs(poles - b))))
    pieces = list(zip(pts, pts[1:]))

    def piece(lo, hi, m):
        if lo == a:
            z, w = roots_jacobi(m, 0.0, -0.5)
            t = lo + 0.5 * (hi - lo) * (1 + z)
            return math.sqrt(0.5 * (hi - lo)) * np.sum(w * g(t) / np.sqrt(b - t))
        if hi == b:
            z, w = roots_jacobi(m, -0.5, 0.0)
            t = hi - 0.5 * (hi - lo) * (1 - z)
            return math.sqrt(0.5 * (hi - lo)) * np.sum(w * g(t) / np.sqrt(t - a))
        z, w = leggauss(m)
        t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * z
        return 0.5 * (hi - lo) * np.sum(w * g(t) / np.sqrt((t - a) * (b - t)))

    total = 0j
    for lo, hi in pieces:
        if n is not None:
            total += piece(lo, hi, n)
            continue
        prev, m = piece(lo, hi, 8), 16
        while True:
            val = piece(lo, hi, m)
            if abs(val - prev) <= tol * max(1.0, abs(val)):
                break
            prev, m = val, 2 * m
            if m > 1024:
                raise QuadratureError("Gauss-Jacobi quadrature did not converge")
        total += val
    return complex(total)


def residue_widths(u: OracleUnknowns) -> tuple[float, float]:
    """(H_plus, H_minus) from pi*|residue| of dw at x_plus = 0 and at infinity."""
    xs = np.asarray(u.x)
    res0 = u.A * xs[1] * xs[3] * xs[4] / math.sqrt(float(np.prod(xs)))
    return math.pi * res0, math.pi * u.A


def sc_side_lengths(u: OracleUnknowns) -> dict[str, float]:
    """Signed H1..H5 and the channel widths H+, H-."""
    out = {}
    for k in range(5):
        d = side_integral(u, k) / 1j ** (k + 1)
        out[f"H{k + 1}"] = float(d.real)
    out["H_plus"], out["H_minus"] = residue_widths(u)
    return out


def lengths_vector(u: OracleUnknowns) -> np.ndarray:
    d = sc_side_lengths(u)
    return np.array([d["H1"], d["H2"], d["H3"], d["H4"], d["H5"], d["H_plus"]])


def vertex_values(u: OracleUnknowns) -> np.ndarray:
    """w1..w6 with w1 = 0 from the side integrals."""
    return np.concatenate([[0j], np.cumsum([side_integral(u, k) for k in range(5)])])


def w_of_x(u: OracleUnknowns, x: complex, vertices: np.ndarray | None = None) -> complex:
    """w(x) with w(x1) = 0 for x in the closed upper half-plane.

    The path leaves the nearest preimage x_k (w_k known from the side
    integrals) along a straight segment, graded geometrically so that long
    segments towards the channels stay resolved.
    """
    x = complex(x)
    if x.imag < 0:
        raise ValueError("x must be in the closed upper half-plane")
    xs = np.asarray(u.x)
    wv = vertex_values(u) if vertices is None else vertices
    k = int(np.argmin(np.abs(x - xs)))
    a = xs[k]
    d = x - a
    if d == 0:
        return complex(wv[k])
    if x.imag == 0 and x.real <= 0:
        raise ValueError("real x at or left of the pole x_plus is not supported")
    others = np.delete(xs, k)
    sd = np.sqrt(d + 0j) if x.imag != 0 or d.real > 0 else 1j * math.sqrt(-d.real)

    def near(r):
        t = a + r * r * d
        if x.imag == 0:
            t = t.real + 0j
        return (_integrand_factor(t, xs, u.A) * 2.0 * d / (sd * y_upper(t, others)))[:, None]

    def far(s):
        t = a + s * d
        if x.imag == 0:
            t = t.real + 0j
        return (_integrand_factor(t, xs, u.A) * d / y_upper(t, xs))[:, None]

    def end(r):
        # r = 1 - s, so that t stays accurate relative to x near the pole at 0
        t = x - r * d
        if x.imag == 0:
            t = t.real + 0j
        return (_integrand_factor(t, xs, u.A) * d / y_upper(t, xs))[:, None]

    # breakpoints: geometric away from x_k, and towards x when x is close to the pole at 0
    n_split = max(1, int(math.ceil(math.log2(max(abs(d), 1.0)))) + 1)
    s0 = 2.0 ** -n_split
    pts = [s0]
    while pts[-1] < 0.5:
        pts.append(min(2 * pts[-1], 0.5))
    total = complex(_adaptive(near, 0.0, math.sqrt(s0))[0])
    for lo, hi in zip(pts, pts[1:]):
        total += complex(_adaptive(far, lo, hi)[0])
    tails = [0.5]
    while tails[-1] > 0.25 * abs(x) / abs(d):
        tails.append(0.5 * tails[-1])
    tails.append(0.0)
    for hi, lo in zip(tails, tails[1:]):
        total += complex(_adaptive(end, lo, hi)[0])
    return complex(wv[k]) + total


@dataclass
class OracleResult:
    unknowns: OracleUnknowns
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def oracle_solve(spec: PolygonSpec, init: OracleUnknowns | None = None, tol: float = 1e-11,
                 max_iter: int = 60) -> OracleResult:
    """Damped Newton on log-gap variables for H1..H5 and H+ (H- follows by closure)."""
    target = np.array([spec.H[0], spec.H[1], spec.H[2], spec.H[3], spec.H[4], spec.H_plus])
    scale = float(np.abs(target).max())
    if init is None:
        init = OracleUnknowns((1.0, 2.0, 3.0, 4.0, 5.0, 6.0), spec.H_minus / math.pi)
    v = init.to_vector()

    def F(vec):
        return (lengths_vector(OracleUnknowns.from_vector(vec)) - target) / scale

    r = F(v)
    hist = [float(np.linalg.norm(r))]
    for it in range(1, max_iter + 1):
        h = 1e-7
        J = np.empty((6, 6))
        try:
            with np.errstate(over="raise", invalid="raise"):
                for j in range(6):
                    e = np.zeros(6)
                    e[j] = h
                    J[:, j] = (F(v + e) - F(v - e)) / (2 * h)
        except (QuadratureError, ValueError, FloatingPointError):
            return OracleResult(OracleUnknowns.from_vector(v), hist[-1] * scale, it, False, hist)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise OracleError("singular oracle Jacobian") from exc
        t = 1.0
        while t > 1e-6:
            cand = v + t * step
            try:
                with np.errstate(over="raise", invalid="raise"):
                    rc = F(cand)
            except (QuadratureError, ValueError, FloatingPointError):
                rc = None
            if rc is not None and np.linalg.norm(rc) < (1 - 1e-4 * t) * np.linalg.norm(r):
                break
            t *= 0.5
        else:
            return OracleResult(OracleUnknowns.from_vector(v), hist[-1] * scale, it, False, hist)
        v, r = cand, rc
        hist.append(float(np.linalg.norm(r)))
        if hist[-1] * scale < tol * max(1.0, scale):
            return OracleResult(OracleUnknowns.from_vector(v), hist[-1] * scale, it, True, hist)
    return OracleResult(OracleUnknowns.from_vector(v), hist[-1] * scale, max_iter, False, hist)


def oracle_for(spec: PolygonSpec, mp=None, tol: float = 1e-11) -> OracleResult:
    """Oracle solution from the generic start, falling back to a start at the theta branch points.

    The fallback only picks the Newton basin; the oracle's own equations are
    solved to ``tol`` either way.
    """
    res = oracle_solve(spec, tol=tol)
    if res.converged or mp is None:
        return res
    from .sc_map import SCMap

    xs = np.asarray(SCMap(mp).branch_points, dtype=float)
    seed = OracleUnknowns(tuple(xs / xs[0]), spec.H_minus / math.pi)
    return oracle_solve(spec, seed, tol=tol)


@dataclass
class CrossValidation:
    """Discrepancies between the theta pipeline and direct quadrature."""

    branch_points_theta: list
    branch_points_oracle: list
    branch_point_error: float
    lambda_theta: float
    lambda_oracle: float
    lambda_error: float
    samples: list
    point_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.branch_point_error, self.lambda_error, self.point_error) < self.tol

    def to_dict(self) -> dict:
        return {
            "branch_points_theta": self.branch_points_theta,
            "branch_points_oracle": self.branch_points_oracle,
            "branch_point_error": self.branch_point_error,
            "lambda_theta": self.lambda_theta,
            "lambda_oracle": self.lambda_oracle,
            "lambda_error": self.lambda_error,
            "point_error": self.point_error,
            "passed": self.passed,
        }


def sample_points(xs, n: int = 10) -> np.ndarray:
    """Deterministic upper half-plane samples spread over the scales of the preimages."""
    xs = np.asarray(xs, dtype=float)
    r = np.exp(np.linspace(math.log(xs[0] / 4), math.log(4 * xs[-1]), n))
    ang = np.pi * (0.15 + 0.7 * ((np.arange(n) * 0.618034) % 1.0))
    return r * np.exp(1j * ang)


def cross_validate(spec: PolygonSpec, mp, u: OracleUnknowns, tol: float = 1e-6,
                   n_points: int = 10) -> CrossValidation:
    """Compare branch points, lambda and interior point images of the two routes.

    Branch point and lambda errors are relative; point errors are relative to
    the polygon scale max|H|.
    """
    from .flow import FlowError, lambda_modulus
    from .sc_map import MappingError, SCMap

    sc = SCMap(mp)
    bt = np.asarray(sc.branch_points, dtype=float)
    bo = np.asarray(u.x, dtype=float)
    with np.errstate(all="ignore"):
        bp_err = float(np.nanmax(np.abs(bt - bo) / bo)) if np.all(np.isfinite(bt)) else math.inf
    try:
        lam_t = lambda_modulus(mp)
    except FlowError:
        lam_t = math.nan
    # cross-ratio of (x+, x1, x-; x6) with x+ = 0, x- = inf
    lam_o = (bo[5] - 0.0) / (bo[0] - 0.0)
    lam_err = abs(lam_t - lam_o) / lam_o if math.isfinite(lam_t) else math.inf
    scale = float(np.abs(spec.vector()).max())
    wv = vertex_values(u)
    samples, worst = [], 0.0
    for x in sample_points(bo, n_points):
        w_o = w_of_x(u, x, wv)
        try:
            w_t = sc.map_x_to_w(x)
            err = abs(w_t - w_o) / scale
        except MappingError:
            w_t, err = complex(math.nan, math.nan), math.inf
        worst = max(worst, err)
        samples.append({"x": complex(x), "w_theta": w_t, "w_oracle": w_o, "error": err})
    return CrossValidation(bt.tolist(), bo.tolist(), bp_err, lam_t, float(lam_o), lam_err,
                           samples, worst, tol)
