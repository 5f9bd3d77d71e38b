"""Auxiliary parameters (Omega, u+, u-, C) of the theta map for a given octagon.

Nine real conditions:

* wedge:   dtheta[35] ^ dw = 0 at the half periods e2, e4, e5, where w must
           have double zeros of its derivative (the Re/Im part that is not
           identically zero is used at each point);
* divisor: theta[35](u+) = theta[35](u-) = 0, i.e. u+- lie on the curve;
* sides:   four linear rows tying C, u+-, Omega to H1, H2, H4, H5.

C is eliminated by the first two side rows, leaving a square 7x7 Newton
system in z = (Omega11, Omega12, Omega22, u1+, u2+, u1-, u2-).

Everything except the divisor rows is homogeneous of degree one in the
polygon scale, so residual rows that carry H are divided by the scale
``max|H|``; a polygon and its multiples then share one solution z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curve import BranchConfig, Curve
from .polygon import GeometryError, PolygonSpec
from .sc_map import MappingParams, half_period
from .sc_oracle import OracleUnknowns, sc_side_lengths
from .theta import CHAR_35, HEAT, OMEGA_INDEX, ThetaError, char_from_points, theta_derivatives

WEDGE_POINTS = (2, 4, 5)
# the part of the wedge that is not identically zero at each point
WEDGE_PART = {2: "real", 4: "imag", 5: "real"}
W_CHAR = char_from_points([5])  # odd, regular at e2, e4, e5
DEGENERACY_MARGIN = 0.05
MIN_STEP = 1e-5  # smallest continuation step in normalized H-space

ANCHOR_BRANCH_POINTS = (1.0, 2.0, 6.0, 25.0, 1750.0, 16000.0)


class SolverError(RuntimeError):
    """Continuation exhausted; carries the last parameters that solved a spec."""

    def __init__(self, message: str, last_good: MappingParams | None = None, report: dict | None = None):
        super().__init__(message)
        self.last_good = last_good
        self.report = report or {}


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_newton: int = 30
    continuation_steps: int = 4
    max_backtracks: int = 12

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        for name in ("max_newton", "continuation_steps", "max_backtracks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def _scale(spec: PolygonSpec) -> float:
    return float(np.abs(spec.vector()).max())


def _omega(z) -> np.ndarray:
    return np.array([[z[0], z[1]], [z[1], z[2]]])


def _dOmega(m: int) -> np.ndarray:
    j, k = OMEGA_INDEX[m]
    E = np.zeros((2, 2))
    E[j, k] = E[k, j] = 1.0
    return E


class _LogGrad:
    """G(a) = grad log theta[c](a) with its u- and Omega-derivatives."""

    def __init__(self, c, pts, Pi):
        v, g, h, t = theta_derivatives(c, pts, Pi, 3)
        self.v, self.g, self.h, self.t = v, g, h, t
        self.G = g / v[:, None]
        self.DG = h / v[:, None, None] - g[:, :, None] * g[:, None, :] / (v ** 2)[:, None, None]

    def dG_omega(self, i: int, m: int) -> np.ndarray:
        j, k = OMEGA_INDEX[m]
        v, g = self.v[i], self.g[i]
        return HEAT[j, k] * (self.t[i][:, j, k] / v - g * self.h[i][j, k] / v ** 2)


def _system(z, spec: PolygonSpec, jacobian: bool = True, C=None):
    """Normalized 9-vector of residuals and the 7x7 Jacobian of the iterated rows.

    Row order: wedge e2, e4, e5; divisor u+, u-; sides 1-4.  The Jacobian
    rows correspond to entries 0-4 and 7-8 (the rows containing C alone are
    constant once C is eliminated).
    """
    z = np.asarray(z, dtype=float)
    om = _omega(z)
    Pi = 1j * om
    up = z[3:5].astype(complex)
    um = z[5:7].astype(complex)
    H1, H2, H3, H4, H5 = spec.H
    hp, hm = spec.H_plus, spec.H_minus
    s = _scale(spec)
    C = np.array([-2.0 * H2, 2.0 * H4]) if C is None else np.asarray(C, dtype=float)

    res = np.empty(9)
    J = np.zeros((7, 7))
    for row, k in enumerate(WEDGE_POINTS):
        e = half_period(k, om)
        b0 = np.asarray(char_from_points([k]).binary(), dtype=float)[:, 0]
        _, g35, h35, t35 = theta_derivatives(CHAR_35, e, Pi, 3)
        lg = _LogGrad(W_CHAR, np.stack([um - e, um + e, up - e, up + e]), Pi)
        gw = hm / np.pi * (-lg.G[0] - lg.G[1]) + hp / np.pi * (lg.G[2] + lg.G[3]) + C
        W = g35[0] * gw[1] - g35[1] * gw[0]
        part = np.real if WEDGE_PART[k] == "real" else np.imag
        res[row] = part(W) / s
        if not jacobian:
            continue
        dgw_du = hm / np.pi * (lg.DG[0] - lg.DG[1]) + hp / np.pi * (-lg.DG[2] + lg.DG[3])
        cols = []
        for m in range(3):
            j, kk = OMEGA_INDEX[m]
            de = -0.5j * _dOmega(m) @ b0
            dg35 = HEAT[j, kk] * t35[:, j, kk] + h35 @ de
            dgw = (hm / np.pi * (-lg.dG_omega(0, m) - lg.dG_omega(1, m))
                   + hp / np.pi * (lg.dG_omega(2, m) + lg.dG_omega(3, m)) + dgw_du @ de)
            cols.append((dg35, dgw))
        dgw_up = hp / np.pi * (lg.DG[2] + lg.DG[3])
        dgw_um = hm / np.pi * (-lg.DG[0] - lg.DG[1])
        for l in range(2):
            cols.append((np.zeros(2), dgw_up[:, l]))
        for l in range(2):
            cols.append((np.zeros(2), dgw_um[:, l]))
        for col, (dg35, dgw) in enumerate(cols):
            dW = dg35[0] * gw[1] + g35[0] * dgw[1] - dg35[1] * gw[0] - g35[1] * dgw[0]
            J[row, col] = part(dW) / s

    for row, (pt, off) in enumerate(((up, 3), (um, 5)), start=3):
        v, g, h = theta_derivatives(CHAR_35, pt, Pi, 2)
        res[row] = v.real
        if jacobian:
            for m in range(3):
                j, k = OMEGA_INDEX[m]
                J[row, m] = (HEAT[j, k] * h[j, k]).real
            J[row, off:off + 2] = g.real

    c1, c2 = C
    res[5] = (-2.0 * H2 - c1) / s
    res[6] = (2.0 * H4 - c2) / s
    res[7] = (2 * hm * (2 * z[5] - 1) - 2 * hp * (2 * z[3] - 1)
              + c1 * z[0] + c2 * z[1] + 2 * H1) / s
    res[8] = (4 * hm * z[6] - 4 * hp * z[4] + c1 * z[1] + c2 * z[2] - 2 * H5) / s
    if jacobian:
        J[5, [0, 1, 3, 5]] = [c1 / s, c2 / s, -4 * hp / s, 4 * hm / s]
        J[6, [1, 2, 4, 6]] = [c1 / s, c2 / s, -4 * hp / s, 4 * hm / s]
    return res, J


_ITERATED = [0, 1, 2, 3, 4, 7, 8]


def residual(params: MappingParams, spec: PolygonSpec | None = None) -> np.ndarray:
    """The nine residuals (wedge x3, divisor x2, sides x4); H-carrying rows divided by max|H|.

    The side rows use the C stored in ``params``, so the first two entries
    are exactly (-2 H2 - C1)/s and (2 H4 - C2)/s.
    """
    spec = spec or params.polygon
    return _system(params.vector(), spec, jacobian=False, C=params.C)[0]


def jacobian(params: MappingParams, spec: PolygonSpec | None = None) -> np.ndarray:
    """Analytic 7x7 Jacobian of the iterated rows with respect to ``params.vector()``."""
    return _system(params.vector(), spec or params.polygon)[1]


def _admissible_z(z, slack: float = 0.0) -> bool:
    """Admissible chart with a relative slack; also keeps Omega positive definite."""
    om = _omega(z)
    if np.linalg.eigvalsh(om).min() <= 0:
        return False
    lo = -slack * min(om[0, 0], om[1, 1])
    ok = lo < om[0, 1] < min(om[0, 0], om[1, 1]) * (1 + slack)
    ok &= -slack < z[3] and z[3] < z[5] + slack and z[5] < 0.5 + slack
    ok &= -slack < z[4] < 0.5 + slack and -slack < z[6] < 0.5 + slack
    return bool(ok)


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def _swap_if_crossed(z):
    """Keep u1+ < u1- by swapping the labels if an iterate crossed them."""
    if z[3] > z[5]:
        z = z.copy()
        z[3:5], z[5:7] = z[5:7].copy(), z[3:5].copy()
    return z


def _polish(z, spec: PolygonSpec, nrm: float, J, r, steps: int = 2):
    """Extra full Newton steps past the tolerance, kept only while they reduce the residual."""
    for _ in range(steps):
        try:
            cand = z + np.linalg.solve(J, -r)
            rc, Jc = _system(cand, spec)
        except (np.linalg.LinAlgError, ThetaError):
            break
        nc = float(np.linalg.norm(rc))
        if not nc < 0.5 * nrm:
            break
        z, nrm, J, r = cand, nc, Jc, rc[_ITERATED]
    return z, nrm


def _newton(z0, spec: PolygonSpec, cfg: SolverConfig) -> tuple[np.ndarray, NewtonReport]:
    z = np.asarray(z0, dtype=float).copy()
    try:
        res, J = _system(z, spec)
    except ThetaError:
        return z, NewtonReport(False, 0, math.inf)
    r = res[_ITERATED]
    nrm = float(np.linalg.norm(res))
    hist = [nrm]
    for it in range(1, cfg.max_newton + 1):
        if nrm < cfg.tol:
            z, nrm = _polish(z, spec, nrm, J, r)
            return z, NewtonReport(True, it - 1, nrm, hist)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            cand = _swap_if_crossed(z + t * step)
            if _admissible_z(cand, slack=0.1):
                try:
                    rc, Jc = _system(cand, spec)
                    nc = float(np.linalg.norm(rc))
                except ThetaError:
                    nc = math.inf
                if nc < (1 - 1e-4 * t) * nrm:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        z, res, J, nrm = cand, rc, Jc, nc
        r = res[_ITERATED]
        hist.append(nrm)
    return z, NewtonReport(nrm < cfg.tol, len(hist) - 1, nrm, hist)


def _params(z, spec: PolygonSpec) -> MappingParams:
    return MappingParams.from_vector(z, spec)


def _normalized(spec: PolygonSpec) -> np.ndarray:
    return spec.vector() / _scale(spec)


def check_spec(spec: PolygonSpec) -> PolygonSpec:
    """Reject specs outside the admissible set or too close to the degenerate isthmus."""
    spec.validate()
    H1, H2, H3, H4, H5 = spec.H
    if spec.H_plus + H1 - H3 < DEGENERACY_MARGIN * spec.H_plus:
        raise GeometryError("H+ + H1 - H3 < 0.05 H+: isthmus too close to degenerate", "isthmus-2")
    return spec


def _interpolate(a: PolygonSpec, b: PolygonSpec, t: float) -> PolygonSpec:
    """Point on the segment between the normalized H-vectors (closure kept exactly)."""
    va, vb = _normalized(a), _normalized(b)
    v = (1 - t) * va + t * vb
    return PolygonSpec.from_closure(v[:5], v[5])


def continuation_path(from_params: MappingParams, to_spec: PolygonSpec,
                      cfg: SolverConfig = SolverConfig()) -> list[MappingParams]:
    """Solve along the straight line in normalized H-space from a solved spec to ``to_spec``.

    Steps start at 1/continuation_steps and are halved on Newton failure (at
    most max_backtracks times in a row) and doubled after success.
    """
    check_spec(to_spec)
    start = from_params.polygon
    if np.allclose(_normalized(start), _normalized(to_spec), rtol=0, atol=1e-15):
        z, rep = _newton(from_params.vector(), to_spec, cfg)
        if not rep.converged:
            raise SolverError("Newton failed at the start of the path", from_params,
                              {"residual": rep.residual})
        return [_params(z, to_spec)]
    z = from_params.vector()
    t, dt = 0.0, 1.0 / cfg.continuation_steps
    path = []
    halvings = 0
    last_good = from_params
    while t < 1.0:
        dt = min(dt, 1.0 - t)
        t_new = 1.0 if 1.0 - (t + dt) < 1e-12 else t + dt
        spec_t = to_spec if t_new == 1.0 else _interpolate(start, to_spec, t_new)
        try:
            check_spec(spec_t)
            z_new, rep = _newton(z, spec_t, cfg)
            ok = rep.converged and _admissible_z(z_new)
        except GeometryError:
            ok = False
        if ok:
            t, z = t_new, z_new
            last_good = _params(z, spec_t)
            path.append(last_good)
            dt *= 2
            halvings = 0
        else:
            dt *= 0.5
            halvings += 1
            if halvings > cfg.max_backtracks or dt < MIN_STEP:
                raise SolverError(f"continuation stalled at t = {t:.6g}", last_good,
                                  {"t": t, "step": dt})
    # the path ran on normalized specs; the last element carries the true scale
    path[-1] = _params(z, to_spec)
    return path


def bootstrap_anchor(branch_points=ANCHOR_BRANCH_POINTS, A: float = 1.0) -> tuple[PolygonSpec, MappingParams]:
    """A (polygon, parameters) pair built by the forward route.

    Omega and u+- come from direct quadrature on the curve with the given
    branch points (x+ = 0, x- = inf), the side lengths from the
    Schwarz-Christoffel integral with zeros at x2, x4, x5.
    """
    cv = Curve(BranchConfig(tuple(branch_points)))
    sides = sc_side_lengths(OracleUnknowns(tuple(branch_points), A))
    spec = PolygonSpec(tuple(sides[f"H{k}"] for k in range(1, 6)), sides["H_plus"], sides["H_minus"])
    mp = MappingParams(cv.omega, cv.aj_real(0.0).real, cv.aj_real(math.inf).real,
                       -2.0 * spec.H[1], 2.0 * spec.H[3], spec)
    return spec, mp


_ANCHOR_CACHE: dict = {}


def _anchor() -> MappingParams:
    if "mp" not in _ANCHOR_CACHE:
        spec, mp = bootstrap_anchor()
        z, rep = _newton(mp.vector(), spec, SolverConfig(tol=1e-13))
        _ANCHOR_CACHE["mp"] = _params(z, spec) if rep.residual < np.linalg.norm(residual(mp)) else mp
    return _ANCHOR_CACHE["mp"]


def solve_params(spec: PolygonSpec, cfg: SolverConfig = SolverConfig(),
                 warm_start: MappingParams | None = None) -> MappingParams:
    """Parameters of the theta map for ``spec``.

    A warm start is tried with plain Newton first; otherwise (or if that
    fails) the solution is continued from the warm start or the bootstrap
    anchor.
    """
    check_spec(spec)
    if warm_start is not None:
        z, rep = _newton(warm_start.vector(), spec, cfg)
        if rep.converged and _admissible_z(z):
            return _finish(z, spec)
        try:
            return _finish(continuation_path(warm_start, spec, cfg)[-1].vector(), spec)
        except SolverError:
            pass
    return _finish(continuation_path(_anchor(), spec, cfg)[-1].vector(), spec)


def _finish(z, spec: PolygonSpec) -> MappingParams:
    mp = _params(z, spec)
    bad = mp.chart_violations()
    if bad:
        raise SolverError("; ".join(bad), mp)
    return mp


def newton_steps(spec: PolygonSpec, warm_start: MappingParams, cfg: SolverConfig = SolverConfig()) -> int:
    """Number of Newton steps plain Newton needs from ``warm_start`` (diagnostics)."""
    _, rep = _newton(warm_start.vector(), spec, cfg)
    return rep.iterations if rep.converged else -1
