"""Schwarz-Christoffel map of the octagon written in Jacobian variables.

A point of the upper half-plane is represented by its Abel-Jacobi image u
in the block of characteristics eps in [-1, 0]^2, eps' in [0, 1]^2.  The
map to the octagon is

    w(u) = H-/pi log th(u- - u)/th(u- + u) - H+/pi log th(u+ - u)/th(u+ + u) + C.u

and the projection to the half-plane is a quotient of four thetas; th is
an odd theta function ([3] or [5]; both give the same function once u+-
lie on the curve, each has one removable singularity at a vertex).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .curve import BranchConfig, Curve
from .polygon import GeometryError, PolygonSpec
from .theta import (
    CHAR_35,
    SeriesControl,
    DEFAULT_CONTROL,
    ThetaCharacteristic,
    char_from_points,
    theta_char,
    theta_derivatives,
)

ODD_CHARS = (char_from_points([3]), char_from_points([5]))
NEWTON_TOL = 1e-12
ACCEPT_TOL = 1e-10
CHANNEL_DEPTH_LIMIT = 1e6  # |x| range where w(u) still resolves to ACCEPT_TOL


class MappingError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class LogSingularity(MappingError):
    pass


@dataclass(frozen=True)
class MappingParams:
    """The nine auxiliary reals of the theta representation plus the polygon."""

    omega: tuple[tuple[float, float], tuple[float, float]]
    u_plus: tuple[float, float]
    u_minus: tuple[float, float]
    c1: float
    c2: float
    polygon: PolygonSpec

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        om = 0.5 * (om + om.T)
        object.__setattr__(self, "omega", tuple(tuple(float(v) for v in r) for r in om))
        object.__setattr__(self, "u_plus", tuple(float(v) for v in self.u_plus))
        object.__setattr__(self, "u_minus", tuple(float(v) for v in self.u_minus))
        object.__setattr__(self, "c1", float(self.c1))
        object.__setattr__(self, "c2", float(self.c2))

    @property
    def Omega(self) -> np.ndarray:
        return np.asarray(self.omega)

    @property
    def Pi(self) -> np.ndarray:
        return 1j * self.Omega

    @property
    def up(self) -> np.ndarray:
        return np.asarray(self.u_plus)

    @property
    def um(self) -> np.ndarray:
        return np.asarray(self.u_minus)

    @property
    def C(self) -> np.ndarray:
        return np.array([self.c1, self.c2])

    def vector(self) -> np.ndarray:
        """The seven Newton unknowns (Omega11, Omega12, Omega22, u+, u-)."""
        om = self.Omega
        return np.array([om[0, 0], om[0, 1], om[1, 1], *self.u_plus, *self.u_minus])

    @classmethod
    def from_vector(cls, z, spec: PolygonSpec) -> "MappingParams":
        z = np.asarray(z, dtype=float)
        H = spec.H
        return cls(((z[0], z[1]), (z[1], z[2])), (z[3], z[4]), (z[5], z[6]),
                   -2.0 * H[1], 2.0 * H[3], spec)

    def chart_violations(self) -> list[str]:
        om = self.Omega
        out = []
        if not 0 < om[0, 1] < min(om[0, 0], om[1, 1]):
            out.append("Omega outside the cone 0 < Omega12 < min(Omega11, Omega22)")
        if not 0 < self.u_plus[0] < self.u_minus[0] < 0.5:
            out.append("ordering 0 < u1+ < u1- < 1/2 violated")
        return out

    def to_dict(self) -> dict:
        return {
            "omega": [list(r) for r in self.omega],
            "u_plus": list(self.u_plus),
            "u_minus": list(self.u_minus),
            "c1": self.c1,
            "c2": self.c2,
            "polygon": {"H": list(self.polygon.H), "H_plus": self.polygon.H_plus,
                        "H_minus": self.polygon.H_minus},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MappingParams":
        p = d["polygon"]
        return cls(tuple(tuple(r) for r in d["omega"]), tuple(d["u_plus"]), tuple(d["u_minus"]),
                   d["c1"], d["c2"], PolygonSpec(tuple(p["H"]), p["H_plus"], p["H_minus"]))


def half_period(k: int, omega) -> np.ndarray:
    """Representative of u(p_k) inside the upper-half-plane block."""
    b = np.asarray(char_from_points([k]).binary(), dtype=float)
    return 0.5 * (-1j * (np.asarray(omega) @ b[:, 0]) + b[:, 1])


def characteristic(u, omega) -> ThetaCharacteristic:
    return ThetaCharacteristic.from_point(u, omega)


def in_block(u, omega, tol: float = 1e-7) -> bool:
    c = characteristic(u, omega)
    e, ep = np.asarray(c.eps) * 2, np.asarray(c.eps_prime) * 2
    return bool(np.all(e >= -1 - tol) and np.all(e <= tol)
                and np.all(ep >= -tol) and np.all(ep <= 1 + tol))


def reduce_to_fundamental(u, omega) -> np.ndarray:
    """Lattice translate of u with both characteristic vectors in [-1, 1)."""
    u = np.asarray(u, dtype=complex)
    c = characteristic(u, omega)
    e = np.asarray(c.eps) * 2
    ep = np.asarray(c.eps_prime) * 2
    e_r = (e + 1) % 2 - 1
    ep_r = (ep + 1) % 2 - 1
    return 0.5 * (1j * np.asarray(omega) @ e_r + ep_r)


def _branch_log(r):
    """log with Im in (-pi/2, 3pi/2); the third-kind terms have Im in [0, pi] on the half-plane."""
    return np.log(r * -1j) + 0.5j * np.pi


class SCMap:
    """Evaluation engine bound to one set of MappingParams (immutable, shareable)."""

    def __init__(self, mp: MappingParams, ctl: SeriesControl = DEFAULT_CONTROL):
        self.mp = mp
        self.ctl = ctl
        self.Pi = mp.Pi
        self.Omega = mp.Omega
        self.up = mp.up.astype(complex)
        self.um = mp.um.astype(complex)
        self.C = mp.C
        self.Hp = mp.polygon.H_plus
        self.Hm = mp.polygon.H_minus

    # odd theta choice ----------------------------------------------------
    def _pick(self, u):
        """Odd characteristic whose four theta factors stay away from zero at u."""
        best = None
        for c in ODD_CHARS:
            vals = theta_char(c, np.stack([self.um - u, self.um + u, self.up - u, self.up + u]),
                              self.Pi, self.ctl)
            m = np.abs(vals).min()
            if best is None or m > best[0] * 1e3:
                best = (m, c, vals)
        return best[1], best[2]

    # forward evaluations ---------------------------------------------------
    def w(self, u) -> complex:
        u = np.asarray(u, dtype=complex)
        c, v = self._pick(u)
        if np.abs(v).min() == 0:
            raise LogSingularity("u is a logarithmic pole of dw")
        return complex(self.Hm / np.pi * _branch_log(v[0] / v[1])
                       - self.Hp / np.pi * _branch_log(v[2] / v[3]) + self.C @ u)

    def w_grad(self, u, char: ThetaCharacteristic | None = None) -> np.ndarray:
        u = np.asarray(u, dtype=complex)
        c = char if char is not None else self._pick(u)[0]
        pts = np.stack([self.um - u, self.um + u, self.up - u, self.up + u])
        v, g = theta_derivatives(c, pts, self.Pi, 1, self.ctl)
        lg = g / v[:, None]
        return (self.Hm / np.pi * (-lg[0] - lg[1]) - self.Hp / np.pi * (-lg[2] - lg[3])
                + self.C).astype(complex)

    def x(self, u) -> complex:
        u = np.asarray(u, dtype=complex)
        c, v = self._pick(u)
        const = (theta_char(c, self.um, self.Pi, self.ctl) / theta_char(c, self.up, self.Pi, self.ctl)) ** 2
        den = v[0] * v[1]
        if den == 0:
            return complex(math.inf, 0)
        return complex(const * v[3] * v[2] / den)

    def x_grad(self, u):
        """(x, grad x) at u."""
        u = np.asarray(u, dtype=complex)
        c, _ = self._pick(u)
        pts = np.stack([self.um - u, self.um + u, self.up - u, self.up + u])
        v, g = theta_derivatives(c, pts, self.Pi, 1, self.ctl)
        const = (theta_char(c, self.um, self.Pi, self.ctl) / theta_char(c, self.up, self.Pi, self.ctl)) ** 2
        xv = const * v[2] * v[3] / (v[0] * v[1])
        lg = g / v[:, None]
        return complex(xv), xv * (-lg[2] + lg[3] + lg[0] - lg[1])

    def divisor(self, u):
        v, g = theta_derivatives(CHAR_35, np.asarray(u, dtype=complex), self.Pi, 1, self.ctl)
        return v, g

    # branch points and vertices -------------------------------------------
    @cached_property
    def branch_points(self) -> np.ndarray:
        """x(p_1), ..., x(p_6) from the closed-form half periods."""
        out = [1.0]
        for k in range(2, 7):
            out.append(self.x(half_period(k, self.Omega)).real)
        return np.array(out)

    def vertex(self, k: int) -> complex:
        if k == 1:
            return 0j
        return self.w(half_period(k, self.Omega))

    @cached_property
    def curve(self) -> Curve:
        return Curve(BranchConfig(tuple(self.branch_points)))

    # inverse problems -------------------------------------------------------
    def _newton(self, F, u0, max_iter: int = 50, tol: float = NEWTON_TOL):
        """Damped Newton for a holomorphic F: C^2 -> C^2 returning (value, Jacobian)."""
        u = np.asarray(u0, dtype=complex)
        f, J = F(u)
        nrm = np.linalg.norm(f)
        for it in range(max_iter):
            if nrm < tol:
                return u, nrm, it
            try:
                step = np.linalg.solve(J, -f)
            except np.linalg.LinAlgError:
                break
            t = 1.0
            while t > 1.0 / 1024:
                cand = u + t * step
                try:
                    fc, Jc = F(cand)
                    nc = np.linalg.norm(fc)
                except (LogSingularity, FloatingPointError, ZeroDivisionError):
                    nc = np.inf
                if np.isfinite(nc) and nc < nrm * (1 - 1e-4 * t) or (nc < tol):
                    break
                t *= 0.5
            else:
                break
            u, f, J, nrm = cand, fc, Jc, nc
        return u, nrm, max_iter if nrm < max(tol, ACCEPT_TOL) else -1

    def _system_x(self, x_star: complex):
        inv = abs(x_star) > 1.0

        def F(u):
            xv, gx = self.x_grad(u)
            th, gth = self.divisor(u)
            if inv:
                f1, g1 = 1.0 / xv - 1.0 / x_star, -gx / xv ** 2
            else:
                f1, g1 = xv - x_star, gx
            return np.array([f1, th]), np.array([g1, gth])

        return F

    def u_of_x(self, x_star: complex, guess=None) -> np.ndarray:
        x_star = complex(x_star)
        if x_star.imag < 0:
            raise ValueError("x must lie in the closed upper half-plane")
        if x_star == 1:
            return np.zeros(2, dtype=complex)
        if x_star == 0:
            return self.up.copy()
        if math.isinf(abs(x_star)):
            return self.um.copy()
        if guess is None:
            guess = self.curve.aj(x_star)
        u, res, it = self._newton(self._system_x(x_star), guess)
        if it < 0:
            raise MappingError("u_of_x Newton did not converge",
                               {"x": x_star, "residual": float(res), "u": u.tolist()})
        return u

    def _system_w(self, w_star: complex):
        def F(u):
            th, gth = self.divisor(u)
            return np.array([self.w(u) - w_star, th]), np.array([self.w_grad(u), gth])

        return F

    @cached_property
    def _table(self):
        """Coarse (w, u) table on a log-polar grid of the half-plane for initial guesses."""
        xs = self.branch_points
        radii = np.exp(np.linspace(math.log(xs[0]) - 8, math.log(xs[-1]) + 8, 41))
        angles = np.pi * (np.arange(1, 12) / 12)
        rows = []
        # march outwards along each ray, warm-starting Newton from the previous
        # point; quadrature guesses are only needed to (re)start a ray
        for a in angles:
            prev = None
            for r in radii:
                x = r * np.exp(1j * a)
                try:
                    u = self.u_of_x(x, guess=prev) if prev is not None else self.u_of_x(x)
                    if not in_block(u, self.Omega):
                        u = self.u_of_x(x)
                except MappingError:
                    try:
                        u = self.u_of_x(x)
                    except MappingError:
                        prev = None
                        continue
                rows.append((self.w(u), u))
                prev = u
        ws = np.array([r[0] for r in rows])
        us = np.array([r[1] for r in rows])
        return ws, us

    @cached_property
    def _channel_fits(self):
        """w ~ alpha log x + beta near x = 0 and x = inf, fitted at two points each."""
        xs = self.branch_points
        fits = []
        for r, kind in ((1e-4 * xs[0], "near"), (1e4 * xs[-1], "far")):
            xa, xb = r * 1j, r * math.e * 1j
            wa, wb = self.map_x_to_w(xa), self.map_x_to_w(xb)
            alpha = (wa - wb) / (math.log(r) - math.log(r * math.e))
            fits.append((kind, r, alpha, wa - alpha * np.log(xa)))
        return fits

    def _channel_guesses(self, w_star: complex) -> list[complex]:
        out = []
        for kind, r, alpha, beta in self._channel_fits:
            L = (w_star - beta) / alpha
            if not 0.0 <= L.imag <= math.pi or not abs(L.real) < 700:
                continue
            mod = math.exp(L.real)
            if (kind == "near" and mod < 10 * r) or (kind == "far" and mod > 0.1 * r):
                out.append(complex(np.exp(L)))
        return out

    def u_of_w(self, w_star: complex, guess=None) -> np.ndarray:
        w_star = complex(w_star)
        poly = self.mp.polygon
        if not poly.contains(w_star, strict=False)[0]:
            raise MappingError("point lies outside the octagon", {"w": w_star})
        if w_star == 0:
            return np.zeros(2, dtype=complex)
        F = self._system_w(w_star)
        if guess is not None:
            u, res, it = self._newton(F, guess)
            if it >= 0 and in_block(u, self.Omega):
                return u
        for x0 in self._channel_guesses(w_star):
            try:
                u, res, it = self._newton(F, self.u_of_x(x0))
            except MappingError:
                continue
            if it >= 0 and in_block(u, self.Omega):
                return u
        ws, us = self._table
        order = np.argsort(np.abs(ws - w_star))
        for idx in order[:6]:
            w0, u0 = ws[idx], us[idx]
            u = self._continue_w(w0, u0, w_star)
            if u is not None and in_block(u, self.Omega):
                return u
        deep = [x0 for x0 in self._channel_guesses(w_star)
                if not CHANNEL_DEPTH_LIMIT ** -1 < abs(x0) < CHANNEL_DEPTH_LIMIT]
        if deep:
            raise MappingError("point lies too deep in a channel to resolve in double precision",
                               {"w": w_star, "x_estimate": deep[0]})
        raise MappingError("u_of_w failed to converge", {"w": w_star})

    def _continue_w(self, w0, u0, w_star, max_depth: int = 12):
        """Track the solution along the straight segment w0 -> w_star."""
        poly = self.mp.polygon
        probe = w0 + (w_star - w0) * np.linspace(0, 1, 9)[1:-1]
        if not np.all(poly.contains(probe)):
            return None
        t, dt, u = 0.0, 1.0, np.asarray(u0, dtype=complex)
        halvings = 0
        while t < 1.0:
            dt = min(dt, 1.0 - t)
            target = w0 + (t + dt) * (w_star - w0)
            cand, res, it = self._newton(self._system_w(target), u, max_iter=20)
            if it >= 0:
                t, u = t + dt, cand
                dt *= 2
            else:
                dt *= 0.5
                halvings += 1
                if halvings > max_depth * 4 or dt < 2.0 ** -max_depth:
                    return None
        return u

    # compositions ---------------------------------------------------------
    def map_x_to_w(self, x_star: complex) -> complex:
        x_star = complex(x_star)
        if x_star == 1:
            return 0j
        return self.w(self.u_of_x(x_star))

    def map_w_to_x(self, w_star: complex) -> complex:
        return self.x(self.u_of_w(w_star))


def w_of_u(u, mp: MappingParams) -> complex:
    return SCMap(mp).w(u)


def x_of_u(u, mp: MappingParams) -> complex:
    return SCMap(mp).x(u)


def u_of_x(x_star: complex, mp: MappingParams) -> np.ndarray:
    return SCMap(mp).u_of_x(x_star)


def u_of_w(w_star: complex, mp: MappingParams) -> np.ndarray:
    return SCMap(mp).u_of_w(w_star)


def map_x_to_w(x_star: complex, mp: MappingParams) -> complex:
    return SCMap(mp).map_x_to_w(x_star)


def map_w_to_x(w_star: complex, mp: MappingParams) -> complex:
    return SCMap(mp).map_w_to_x(w_star)
