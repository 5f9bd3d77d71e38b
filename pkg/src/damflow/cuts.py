"""Octagons with straight cuts from the reflex corners w2, w4, w5 (11-gons).

A cut appears when the zero of dw sitting at a reflex corner's branch point
moves onto a neighbouring interval of the real axis: the corner becomes a
right angle and the displaced zero is the cut tip (a full angle).  On the
Jacobian side the zero is a point z_j on the AJ image of that interval:

* horizontal cut:  z = e_k + r with r real  (intervals (x2, x3), (x4, x5))
* vertical cut:    z = e_k + i r with r real (intervals (x1, x2), (x3, x4), (x5, x6))

and the three wedge conditions at the half periods are replaced by wedge
conditions at the z_j, one divisor condition for each z_j and one cut
length condition each.  The four side rows and the divisor rows for u+-
are unchanged, giving 15 equations in 15 unknowns (C again eliminated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .param_solver import (
    WEDGE_PART,
    W_CHAR,
    SolverConfig,
    SolverError,
    _system,
    check_spec,
    solve_params,
)
from .polygon import GeometryError, PolygonSpec
from .sc_map import MappingParams, SCMap, half_period, in_block
from .theta import CHAR_35, ThetaError, char_from_points, theta_derivatives

CORNERS = (2, 4, 5)
DIRECTIONS = ("vertical", "horizontal")
# which part of theta[35] * phase is not identically zero on each chart
THETA_PART = {(2, "horizontal"): "real", (2, "vertical"): "imag",
              (4, "horizontal"): "imag", (4, "vertical"): "real",
              (5, "horizontal"): "real", (5, "vertical"): "imag"}
# unit vector from the corner towards the cut tip
CUT_UNIT = {(2, "vertical"): -1j, (2, "horizontal"): 1.0,
            (4, "vertical"): -1j, (4, "horizontal"): 1.0,
            (5, "vertical"): -1j, (5, "horizontal"): -1.0}


def _part(v: complex, which: str) -> float:
    return float(v.real if which == "real" else v.imag)


@dataclass(frozen=True)
class CutSpec:
    base: PolygonSpec
    cut_lengths: tuple[float, float, float] = (0.0, 0.0, 0.0)
    cut_directions: tuple[str, str, str] = ("vertical", "vertical", "vertical")

    def __post_init__(self):
        object.__setattr__(self, "cut_lengths", tuple(float(v) for v in self.cut_lengths))
        object.__setattr__(self, "cut_directions", tuple(self.cut_directions))
        if len(self.cut_lengths) != 3 or len(self.cut_directions) != 3:
            raise ValueError("need three cut lengths and three directions (corners w2, w4, w5)")
        for d in self.cut_directions:
            if d not in DIRECTIONS:
                raise ValueError(f"cut direction must be one of {DIRECTIONS}, got {d!r}")
        if any(not (v >= 0 and math.isfinite(v)) for v in self.cut_lengths):
            raise ValueError("cut lengths must be finite and non-negative")

    def segments(self) -> list[tuple[complex, complex]]:
        w = self.base.vertices()
        out = []
        for k, L, d in zip(CORNERS, self.cut_lengths, self.cut_directions):
            if L > 0:
                out.append((w[k - 1], w[k - 1] + L * CUT_UNIT[(k, d)]))
        return out

    def validate(self) -> "CutSpec":
        """Base polygon admissible, cut tips strictly inside, no two cuts meeting."""
        check_spec(self.base)
        segs = self.segments()
        for a, b in segs:
            pts = a + (b - a) * np.linspace(0.02, 1.0, 50)
            if not np.all(self.base.contains(pts, strict=True)):
                raise GeometryError(f"cut from {a} to {b} leaves the domain", "cut")
        for i in range(len(segs)):
            for j in range(i + 1, len(segs)):
                if _segments_meet(*segs[i], *segs[j]):
                    raise GeometryError("two cuts intersect", "cut")
        return self

    def scaled_lengths(self, t: float) -> "CutSpec":
        return CutSpec(self.base, tuple(t * v for v in self.cut_lengths), self.cut_directions)

    @property
    def active(self) -> list[int]:
        return [j for j, L in enumerate(self.cut_lengths) if L > 0]


def _segments_meet(a, b, c, d) -> bool:
    def cross(o, p, q):
        return (p - o).real * (q - o).imag - (p - o).imag * (q - o).real

    d1, d2 = cross(c, d, a), cross(c, d, b)
    d3, d4 = cross(a, b, c), cross(a, b, d)
    return (d1 * d2 <= 0) and (d3 * d4 <= 0)


@dataclass(frozen=True)
class ExtendedParams:
    """Octagon-type parameters plus the three Jacobian points of the cut tips."""

    mp: MappingParams
    z: tuple[tuple[complex, complex], ...]

    def to_dict(self) -> dict:
        return {"params": self.mp.to_dict(),
                "z": [[[c.real, c.imag] for c in zj] for zj in self.z]}

    @classmethod
    def from_dict(cls, d: dict) -> "ExtendedParams":
        z = tuple(tuple(complex(a, b) for a, b in zj) for zj in d["z"])
        return cls(MappingParams.from_dict(d["params"]), z)


def _chart_phase(k: int) -> np.ndarray:
    return np.asarray(char_from_points([k]).binary(), dtype=float)[:, 0]


def _chart_point(k: int, direction: str, r, omega) -> np.ndarray:
    e = half_period(k, omega)
    r = np.asarray(r, dtype=float)
    return e + (r if direction == "horizontal" else 1j * r)


def _z_rows(k: int, direction: str, z, mp: MappingParams, sc: SCMap, length: float):
    """(wedge, divisor, cut) residuals for one cut tip z; the first two unnormalized."""
    e = half_period(k, mp.Omega)
    ph = np.exp(-1j * np.pi * (_chart_phase(k) @ (z - e)))
    th, g = theta_derivatives(CHAR_35, z, mp.Pi, 1)
    gw = sc.w_grad(z, W_CHAR)
    W = (g[0] * gw[1] - g[1] * gw[0]) * ph
    dw = (sc.w(z) - sc.vertex(k)) / CUT_UNIT[(k, direction)]
    cut = (dw.real - length) / length ** (2.0 / 3.0)
    return _part(W, WEDGE_PART[k]), _part(th * ph, THETA_PART[(k, direction)]), float(cut)


def extended_residual(ep: ExtendedParams, cs: CutSpec) -> np.ndarray:
    """15 residuals: for each corner (wedge at z_j, divisor at z_j, cut length), then
    divisor at u+-, then the four side rows.

    Rows carrying H are divided by max|H| as in the octagon residual; the cut
    rows are (signed tip distance - L) / L^(2/3), which keeps them O(1) in
    the chart coordinate as the cut shrinks (the tip moves like r^3).  A
    corner without a cut has z_j at its half period and uses the octagon's
    wedge condition there.
    """
    mp, spec = ep.mp, cs.base
    s = float(np.abs(spec.vector()).max())
    base = _system(mp.vector(), spec, jacobian=False, C=mp.C)[0]
    sc = SCMap(mp)
    out = []
    for j, k in enumerate(CORNERS):
        z = np.asarray(ep.z[j], dtype=complex)
        if cs.cut_lengths[j] == 0:
            th = theta_derivatives(CHAR_35, z, mp.Pi, 1)[0]
            out += [base[j], abs(th), float(np.abs(z - half_period(k, mp.Omega)).max())]
            continue
        wv, tv, cv = _z_rows(k, cs.cut_directions[j], z, mp, sc, cs.cut_lengths[j])
        out += [wv / s, tv, cv]
    out += list(base[3:5]) + list(base[5:9])
    return np.array(out)


# solver ---------------------------------------------------------------------

def _pack(mp: MappingParams, rs: dict) -> np.ndarray:
    return np.concatenate([mp.vector(), *[rs[j] for j in sorted(rs)]])


def _unpack(v, spec: PolygonSpec, active: list[int]):
    mp = MappingParams.from_vector(v[:7], spec)
    rs = {j: np.asarray(v[7 + 2 * i: 9 + 2 * i]) for i, j in enumerate(active)}
    return mp, rs


def _reduced_residual(v, cs: CutSpec, active: list[int]) -> np.ndarray:
    """Residuals with the inactive corners' z fixed at their half periods (square system)."""
    spec = cs.base
    mp, rs = _unpack(v, spec, active)
    s = float(np.abs(spec.vector()).max())
    base = _system(mp.vector(), spec, jacobian=False)[0]
    sc = SCMap(mp)
    out = []
    for j, k in enumerate(CORNERS):
        if j not in active:
            out.append(base[j])
            continue
        z = _chart_point(k, cs.cut_directions[j], rs[j], mp.Omega)
        wv, tv, cv = _z_rows(k, cs.cut_directions[j], z, mp, sc, cs.cut_lengths[j])
        out += [wv / s, tv, cv]
    out += list(base[3:5]) + list(base[7:9])
    return np.array(out)


def _fd_jacobian(F, v, h: float = 1e-7) -> np.ndarray:
    f0 = F(v)
    J = np.empty((f0.size, v.size))
    for i in range(v.size):
        step = h * max(1.0, abs(v[i]))
        e = np.zeros_like(v)
        e[i] = step
        J[:, i] = (F(v + e) - F(v - e)) / (2 * step)
    return J


def _newton(v0, cs: CutSpec, active, cfg: SolverConfig):
    F = lambda vec: _reduced_residual(vec, cs, active)
    v = np.asarray(v0, dtype=float).copy()
    try:
        r = F(v)
    except (ThetaError, FloatingPointError):
        return v, math.inf
    nrm = float(np.linalg.norm(r))
    for _ in range(cfg.max_newton):
        if nrm < cfg.tol:
            break
        try:
            step = np.linalg.lstsq(_fd_jacobian(F, v), -r, rcond=None)[0]
        except (np.linalg.LinAlgError, ThetaError):
            break
        t, accepted = 1.0, False
        for _ in range(cfg.max_backtracks):
            cand = v + t * step
            try:
                rc = F(cand)
                nc = float(np.linalg.norm(rc))
            except (ThetaError, FloatingPointError, ZeroDivisionError):
                nc = math.inf
            if np.isfinite(nc) and nc < (1 - 1e-4 * t) * nrm and _chart_ok(cand, cs, active):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        v, r, nrm = cand, rc, nc
    return v, nrm


def _chart_ok(v, cs: CutSpec, active) -> bool:
    """Admissible chart for Omega and each z_j on the upper-half-plane block."""
    om = np.array([[v[0], v[1]], [v[1], v[2]]])
    if np.linalg.eigvalsh(om).min() <= 0:
        return False
    for i, j in enumerate(active):
        z = _chart_point(CORNERS[j], cs.cut_directions[j], v[7 + 2 * i: 9 + 2 * i], om)
        if not in_block(z, om, tol=1e-9):
            return False
    return True


# interval of the real axis hosting the displaced zero, as (left, right) branch point indices
_INTERVAL = {(2, "vertical"): (1, 2), (2, "horizontal"): (2, 3),
             (4, "vertical"): (3, 4), (4, "horizontal"): (4, 5),
             (5, "horizontal"): (4, 5), (5, "vertical"): (5, 6)}


def _initial_r(j: int, cs: CutSpec, mp: MappingParams, sc: SCMap) -> np.ndarray:
    """Starting chart coordinate for corner j: the point of the uncut boundary at distance L/2.

    For a short cut the tip sits where the uncut map has travelled half the
    cut length from the corner (local expansions s^3/3 versus s^3/3 - s0^2 s),
    so bisection on the real preimage gives a point exactly on the oval.
    """
    k, d = CORNERS[j], cs.cut_directions[j]
    lo_i, hi_i = _INTERVAL[(k, d)]
    xs = sc.branch_points
    a, b = xs[lo_i - 1], xs[hi_i - 1]
    xk = xs[k - 1]
    far = a if xk == b else b
    target = 0.5 * cs.cut_lengths[j]
    wk = sc.vertex(k)

    def dist(t):
        return abs(sc.map_x_to_w(xk + t * (far - xk)) - wk)

    lo, hi = 0.0, 0.5
    if dist(hi) < target:
        raise SolverError(f"cut at w{k} too long for the continuation start")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if dist(mid) < target else (lo, mid)
        if hi - lo < 1e-14:
            break
    z = sc.u_of_x(xk + hi * (far - xk))
    dz = z - half_period(k, mp.Omega)
    return dz.real if d == "horizontal" else dz.imag


def solve_cut_params(cs: CutSpec, cfg: SolverConfig = SolverConfig(),
                     base: MappingParams | None = None, warm_start: ExtendedParams | None = None,
                     t0: float = 1e-2) -> ExtendedParams:
    """Parameters of the cut octagon by continuation in the cut lengths from the uncut solution.

    The lengths are scaled by t running geometrically from t0 to 1 (step
    halved on failure); the first step is seeded from the uncut boundary
    point at half the cut length from each corner.
    """
    cs.validate()
    mp0 = base or (warm_start.mp if warm_start is not None and warm_start.mp.polygon == cs.base
                   else solve_params(cs.base, cfg))
    active = cs.active
    if not active:
        return ExtendedParams(mp0, tuple(tuple(half_period(k, mp0.Omega)) for k in CORNERS))
    if warm_start is not None:
        rs = {}
        for j in active:
            e = half_period(CORNERS[j], warm_start.mp.Omega)
            d = np.asarray(warm_start.z[j]) - e
            rs[j] = d.real if cs.cut_directions[j] == "horizontal" else d.imag
        if all(np.linalg.norm(rs[j]) > 0 for j in active):
            v, nrm = _newton(_pack(warm_start.mp, rs), cs, active, cfg)
            if nrm < cfg.tol:
                return _finish(v, cs, active)
    sc0 = SCMap(mp0)
    nrm = math.inf
    # very short cuts sit below the finite-difference resolution, long ones
    # outside the local basin; try a few starting fractions
    for t in dict.fromkeys((t0, 1e-1, 1e-3)):
        try:
            v = _pack(mp0, {j: _initial_r(j, cs.scaled_lengths(t), mp0, sc0) for j in active})
        except SolverError:
            continue
        v, nrm = _newton(v, cs.scaled_lengths(t), active, cfg)
        if nrm < cfg.tol:
            break
    else:
        raise SolverError("could not start the cut continuation", mp0, {"t": t, "residual": nrm})
    factor, halvings = 4.0, 0
    while t < 1.0:
        t_new = min(1.0, t * factor) if t < 0.25 else min(1.0, t + (factor - 1) * 0.25)
        cand, nc = _newton(v, cs.scaled_lengths(t_new), active, cfg)
        if nc < cfg.tol:
            t, v = t_new, cand
            factor = min(factor * 1.5, 8.0)
            halvings = 0
        else:
            factor = 1 + 0.5 * (factor - 1)
            halvings += 1
            if halvings > cfg.max_backtracks or factor - 1 < 1e-4:
                raise SolverError(f"cut continuation stalled at t = {t:.6g}",
                                  MappingParams.from_vector(v[:7], cs.base), {"t": t, "residual": nc})
    return _finish(v, cs, active)


def _finish(v, cs: CutSpec, active) -> ExtendedParams:
    mp, rs = _unpack(v, cs.base, active)
    z = []
    for j, k in enumerate(CORNERS):
        if j in active:
            z.append(tuple(_chart_point(k, cs.cut_directions[j], rs[j], mp.Omega)))
        else:
            z.append(tuple(half_period(k, mp.Omega)))
    return ExtendedParams(mp, tuple(z))


def cut_tip(ep: ExtendedParams, j: int) -> complex:
    """Image of the j-th cut tip in the w-plane."""
    return SCMap(ep.mp).w(np.asarray(ep.z[j], dtype=complex))


# sweep ------------------------------------------------------------------------

@dataclass
class SweepResult:
    grid: list
    kappa: np.ndarray
    failures: list = field(default_factory=list)


def kappa_of(ep: ExtendedParams) -> float:
    from .flow import aspect_ratio, lambda_modulus
    return aspect_ratio(lambda_modulus(ep.mp))


def _neighbour(idx, solved: dict, active) -> ExtendedParams | None:
    """A solved grid neighbour (one index step back) with the same set of active cuts."""
    for ax in reversed(range(len(idx))):
        hit = solved.get(idx[:ax] + (idx[ax] - 1,) + idx[ax + 1:])
        if hit is not None and hit[0] == tuple(active):
            return hit[1]
    return None


def kappa_sweep(cs_base: CutSpec, grid, cfg: SolverConfig = SolverConfig(),
                done: dict | None = None, on_cell=None) -> SweepResult:
    """kappa over a grid of cut lengths.

    ``grid`` is a sequence of three sequences (lengths for each corner; use a
    single value to hold a corner fixed).  Cells are visited row by row,
    warm-starting from the previous cell; ``done`` maps already computed
    index tuples to kappa (resume), ``on_cell(index, lengths, kappa)`` is
    called after each new cell.
    """
    axes = [list(map(float, g)) for g in grid]
    if len(axes) != 3:
        raise ValueError("grid needs one axis per corner")
    shape = tuple(len(a) for a in axes)
    kappa = np.full(shape, np.nan)
    failures = []
    done = dict(done or {})
    base_mp = solve_params(cs_base.base, cfg)
    solved: dict = {}
    for idx in np.ndindex(*shape):
        lengths = tuple(axes[c][i] for c, i in enumerate(idx))
        if idx in done:
            kappa[idx] = done[idx]
            continue
        cs = CutSpec(cs_base.base, lengths, cs_base.cut_directions)
        warm = _neighbour(idx, solved, cs.active)
        try:
            ep = solve_cut_params(cs, cfg, base=base_mp, warm_start=warm)
            kappa[idx] = kappa_of(ep)
            solved[idx] = (tuple(cs.active), ep)
        except (SolverError, GeometryError, ThetaError) as exc:
            failures.append({"index": idx, "lengths": lengths, "error": str(exc)})
        if on_cell is not None:
            on_cell(idx, lengths, float(kappa[idx]))
    return SweepResult(axes, kappa, failures)
