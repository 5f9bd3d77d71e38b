"""Seepage quantities: the modulus lambda, the rectangle aspect ratio kappa, total flow,
and streamlines/equipotentials through the half-plane -> rectangle map.

Rectangle convention (f = p + i q): the dam underside x in (1, lambda) is the
bottom side q = 0 from p = 0 to p = 1, the bed x < 0 is the top side q = kappa,
the basin bottom x in (0, 1) is p = 0 and x > lambda is p = 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ellipj, hyp2f1

from .sc_map import MappingError, MappingParams, SCMap, half_period
from .theta import char_from_points, theta_char


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class FlowSpec:
    permeability: float
    head_drop: float

    def __post_init__(self):
        if not (self.permeability > 0 and self.head_drop > 0):
            raise ValueError("permeability and head_drop must be positive")


@dataclass(frozen=True)
class RectModel:
    lam: float
    kappa: float

    def __post_init__(self):
        if not self.lam > 1:
            raise ValueError("lambda must exceed 1")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    @classmethod
    def from_lambda(cls, lam: float) -> "RectModel":
        return cls(lam, aspect_ratio(lam))


# modulus -----------------------------------------------------------------

_C3 = char_from_points([3])
_C36 = char_from_points([3, 6])


def lambda_modulus(mp: MappingParams, route: str = "theta") -> float:
    """lambda = x(p6) as a quotient of theta constants ("theta") or by x(u) at e6 ("x_of_u")."""
    if route == "theta":
        Pi, up, um = mp.Pi, mp.up.astype(complex), mp.um.astype(complex)
        num = theta_char(_C3, um, Pi) * theta_char(_C36, up, Pi)
        den = theta_char(_C3, up, Pi) * theta_char(_C36, um, Pi)
        lam = complex((num / den) ** 2).real
    elif route == "x_of_u":
        lam = SCMap(mp).x(half_period(6, mp.Omega)).real
    else:
        raise ValueError(f"unknown route {route!r}")
    if not lam > 1:
        raise FlowError(f"lambda = {lam} <= 1: parameters are inconsistent")
    return float(lam)


# aspect ratio --------------------------------------------------------------

def agm(a: float, b: float) -> float:
    for _ in range(64):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return a


def _precision_warning(lam: float):
    if lam - 1 < 1e-8 or lam > 1e14:
        warnings.warn(f"lambda = {lam:g} is close to a degenerate limit; kappa loses precision",
                      RuntimeWarning, stacklevel=3)


def aspect_ratio(lam: float, route: str = "hypergeometric") -> float:
    """kappa = lambda^{-1/2} F(1/2,1/2;1;1/lambda) / F(1/2,1/2;1;1-lambda).

    route "agm" evaluates the same ratio as K(1/lambda)/K(1-1/lambda) with
    both complete integrals from the arithmetic-geometric mean.
    """
    lam = float(lam)
    if not lam > 1:
        raise FlowError("lambda must exceed 1")
    _precision_warning(lam)
    if route == "hypergeometric":
        return float(hyp2f1(0.5, 0.5, 1.0, 1.0 / lam) / hyp2f1(0.5, 0.5, 1.0, 1.0 - lam) / math.sqrt(lam))
    if route == "agm":
        return agm(1.0, 1.0 / math.sqrt(lam)) / agm(1.0, math.sqrt(1.0 - 1.0 / lam))
    raise ValueError(f"unknown route {route!r}")


def total_flow(rm: RectModel, fs: FlowSpec) -> float:
    """Flow per unit dam length, Q = permeability * kappa * head_drop."""
    return fs.permeability * rm.kappa * fs.head_drop


# rectangle map -------------------------------------------------------------

def carlson_rf(x, y, z, tol: float = 1e-16) -> complex:
    """Carlson's R_F for complex arguments off the negative real axis (duplication)."""
    x, y, z = complex(x), complex(y), complex(z)
    for _ in range(100):
        sx, sy, sz = np.sqrt(x), np.sqrt(y), np.sqrt(z)
        lam = sx * sy + sy * sz + sz * sx
        x, y, z = 0.25 * (x + lam), 0.25 * (y + lam), 0.25 * (z + lam)
        mu = (x + y + z) / 3.0
        dx, dy, dz = 1 - x / mu, 1 - y / mu, 1 - z / mu
        if max(abs(dx), abs(dy), abs(dz)) < 1e-3:
            break
    e2 = dx * dy - dz * dz
    e3 = dx * dy * dz
    return complex((1 - e2 / 10 + e3 / 14 + e2 * e2 / 24 - 3 * e2 * e3 / 44) / np.sqrt(mu))


def _kf(lam: float) -> float:
    """Length of the dam side: integral of |dx/y| over (1, lambda)."""
    m = 1.0 - 1.0 / lam
    return math.pi / (agm(1.0, math.sqrt(1.0 - m)) * math.sqrt(lam))


def _tail(x: complex, lam: float) -> complex:
    """Integral of dt / sqrt(t (t-1) (t-lambda)) from x to +infinity (upper half-plane branch)."""
    x = complex(x)
    if x.imag == 0:
        x = complex(x.real, 0.0)
    return 2.0 * carlson_rf(x, x - 1.0, x - lam)


def rect_map(x: complex, lam: float) -> complex:
    """Map the closed upper half-plane onto [0, 1] x [0, kappa].

    Corners: x = 1 -> 0, lambda -> 1, infinity -> 1 + i kappa, 0 -> i kappa.
    """
    x = complex(x)
    if x.imag < 0:
        raise ValueError("x must lie in the closed upper half-plane")
    kappa = aspect_ratio(lam)
    corners = {1.0: 0j, float(lam): 1 + 0j, 0.0: 1j * kappa}
    if x.imag == 0 and x.real in corners:
        return corners[x.real]
    if math.isinf(abs(x)):
        return complex(1.0, kappa)
    kf = _kf(lam)
    i1 = complex(kappa * kf, -kf)
    return 1j * (i1 - _tail(x, lam)) / kf


def _dn_complex(z: complex, m: float, m1: float) -> complex:
    s, c, d, _ = ellipj(z.real, m)
    s1, c1, d1, _ = ellipj(z.imag, m1)
    den = c1 * c1 + m * s * s * s1 * s1
    if den == 0:
        return complex(math.inf)
    return complex(d * c1 * d1, -m * s * c * s1) / den


def rect_inverse(f: complex, lam: float, tol: float = 1e-12) -> complex:
    """Inverse of rect_map: x = 1 / dn^2(K(m) f | m), m = 1 - 1/lambda."""
    f = complex(f)
    kappa = aspect_ratio(lam)
    if not (-tol <= f.real <= 1 + tol and -tol * kappa <= f.imag <= kappa * (1 + tol)):
        raise ValueError("f lies outside the rectangle")
    if abs(f - complex(1.0, kappa)) < 1e-15:
        return complex(math.inf)
    m1 = 1.0 / lam
    m = 1.0 - m1
    K = math.pi / (2 * agm(1.0, math.sqrt(m1)))
    dn = _dn_complex(K * f, m, m1)
    if dn == 0 or math.isinf(abs(dn)):
        return 0j if math.isinf(abs(dn)) else complex(math.inf)
    x = 1.0 / (dn * dn)
    return complex(x.real, max(x.imag, 0.0))


def rect_derivative(x: complex, lam: float) -> complex:
    """df/dx = i / (K_F y(x)) on the upper half-plane."""
    x = complex(x)
    y = np.sqrt(x) * np.sqrt(x - 1.0) * np.sqrt(x - lam)
    return 1j / (_kf(lam) * y)


# tracing -------------------------------------------------------------------

@dataclass
class Polyline:
    points: np.ndarray
    level: float
    kind: str
    errors: list

    @property
    def complete(self) -> bool:
        return not self.errors


def chebyshev_fractions(n: int) -> np.ndarray:
    """n Chebyshev points of the first kind mapped to (0, 1), increasing."""
    k = np.arange(n)
    return 0.5 * (1 - np.cos((2 * k + 1) * np.pi / (2 * n)))


def _trace(fs, mp: MappingParams, kind: str, level: float, sc: SCMap | None = None) -> Polyline:
    sc = sc or SCMap(mp)
    lam = lambda_modulus(mp)
    pts, errs = [], []
    guess = None
    for f in fs:
        try:
            x = rect_inverse(f, lam)
            u = sc.u_of_x(x, guess=guess)
            pts.append(sc.w(u))
            guess = u
        except (MappingError, ValueError) as exc:
            errs.append({"f": complex(f), "error": str(exc)})
            guess = None
    return Polyline(np.array(pts, dtype=complex), level, kind, errs)


def trace_streamline(q_frac: float, n: int, mp: MappingParams, sc: SCMap | None = None) -> Polyline:
    """Image of the horizontal rectangle line q = q_frac * kappa, Chebyshev-sampled in p."""
    if not 0 < q_frac < 1:
        raise ValueError("q_frac must lie in (0, 1)")
    if n < 2:
        raise ValueError("need n >= 2")
    kappa = aspect_ratio(lambda_modulus(mp))
    fs = chebyshev_fractions(n) + 1j * q_frac * kappa
    return _trace(fs, mp, "streamline", q_frac, sc)


def trace_equipotential(p_frac: float, n: int, mp: MappingParams, sc: SCMap | None = None) -> Polyline:
    """Image of the vertical rectangle line p = p_frac, Chebyshev-sampled in q."""
    if not 0 <= p_frac <= 1:
        raise ValueError("p_frac must lie in [0, 1]")
    if n < 2:
        raise ValueError("need n >= 2")
    kappa = aspect_ratio(lambda_modulus(mp))
    fs = p_frac + 1j * kappa * chebyshev_fractions(n)
    return _trace(fs, mp, "equipotential", p_frac, sc)
