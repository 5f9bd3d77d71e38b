"""Job-level operations behind both the HTTP service and the command line.

Every function takes a validated ``JobConfig`` and returns plain dicts (or
lists of rows) whose content depends only on the configuration, so two runs
of the same job serialize to identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cuts import ExtendedParams, extended_residual, kappa_sweep, solve_cut_params
from .flow import (
    FlowError,
    aspect_ratio,
    lambda_modulus,
    trace_streamline,
)
from .param_solver import SolverError, check_spec, newton_steps, residual, solve_params
from .polygon import GeometryError
from .sc_map import MappingError, MappingParams, SCMap
from .schemas import JobConfig
from .theta import ThetaError

log = logging.getLogger("damflow")

CACHE_ENV = "DAMFLOW_CACHE_DIR"

EXIT_OK, EXIT_GEOMETRY, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class JobError(Exception):
    """An operation failure carrying its exit code and a JSON-able diagnostic."""

    def __init__(self, message: str, code: int, kind: str, detail: dict | None = None):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.detail = detail or {}

    def to_dict(self) -> dict:
        return {"error": str(self), "kind": self.kind, "exit_code": self.code, "detail": self.detail}


def classify(exc: BaseException) -> JobError:
    if isinstance(exc, JobError):
        return exc
    if isinstance(exc, GeometryError):
        return JobError(str(exc), EXIT_GEOMETRY, "geometry", {"rule": exc.rule})
    if isinstance(exc, SolverError):
        return JobError(str(exc), EXIT_SOLVER, "solver", _jsonable(exc.report))
    if isinstance(exc, (FlowError, MappingError, ThetaError)):
        return JobError(str(exc), EXIT_SOLVER, "solver")
    if isinstance(exc, OSError):
        return JobError(str(exc), EXIT_IO, "io")
    raise exc


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, (int, float, str, bool)) or v is None:
            out[k] = v
        elif isinstance(v, np.generic):
            out[k] = v.item()
        else:
            out[k] = repr(v)
    return out


# parameter cache ---------------------------------------------------------------

def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "damflow"


def geometry_key(cfg: JobConfig) -> str:
    g = cfg.geometry
    parts = [g.polygon().fingerprint()]
    if g.has_cuts:
        parts += [f"{v:.10g}" for v in g.cut_lengths] + list(g.cut_directions)
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:20]


@dataclass
class CacheEntry:
    kind: str
    params: MappingParams | ExtendedParams


class ParamCache:
    """Solved parameters keyed by geometry fingerprint, one JSON file per key.

    Entries are re-verified against the residual before reuse and dropped
    when they fail.  Writes go through one lock and an atomic rename.
    """

    def __init__(self, root: str | os.PathLike | None):
        self.root = Path(root) if root is not None else None
        self._lock = threading.Lock()

    @property
    def enabled(self) -> bool:
        return self.root is not None

    def _path(self, key: str) -> Path:
        return self.root / f"params-{key}.json"

    def get(self, cfg: JobConfig, tol: float) -> CacheEntry | None:
        if not self.enabled:
            return None
        path = self._path(geometry_key(cfg))
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            return None
        except (OSError, ValueError):
            self.evict(path)
            return None
        try:
            if data["kind"] == "cut":
                ep = ExtendedParams.from_dict(data["params"])
                ok = np.linalg.norm(extended_residual(ep, cfg.geometry.cut_spec())) < tol
                entry = CacheEntry("cut", ep)
            else:
                mp = MappingParams.from_dict(data["params"])
                ok = mp.polygon == cfg.geometry.polygon() and np.linalg.norm(residual(mp)) < tol
                entry = CacheEntry("octagon", mp)
        except (KeyError, TypeError, ValueError, ThetaError):
            ok = False
        if not ok:
            log.info("evicting stale cache entry %s", path.name)
            self.evict(path)
            return None
        return entry

    def put(self, cfg: JobConfig, entry: CacheEntry) -> None:
        if not self.enabled:
            return
        self.write_json(self._path(geometry_key(cfg)), {"kind": entry.kind, "params": entry.params.to_dict(),
                                                         "solver": cfg.solver.model_dump()})

    def write_json(self, path: Path, obj) -> None:
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            with os.fdopen(fd, "w") as fh:
                fh.write(dumps(obj))
            os.replace(tmp, path)

    def evict(self, path: Path) -> None:
        with self._lock:
            try:
                path.unlink()
            except FileNotFoundError:
                pass


# serialization -------------------------------------------------------------------

def _fmt(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        return "null"
    return format(x + 0.0, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits (lossless, stable)."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


# operations ----------------------------------------------------------------------

def validate(cfg: JobConfig) -> dict:
    g = cfg.geometry
    poly = g.polygon()
    violations = [{"rule": v.rule, "message": v.message} for v in poly.violations()]
    if not violations:
        try:
            check_spec(poly)
        except GeometryError as exc:
            violations.append({"rule": exc.rule, "message": str(exc)})
    if not violations and g.has_cuts:
        try:
            g.cut_spec().validate()
        except GeometryError as exc:
            violations.append({"rule": exc.rule, "message": str(exc)})
    return {"valid": not violations, "violations": violations, "fingerprint": geometry_key(cfg)}


def _require_valid(cfg: JobConfig) -> None:
    rep = validate(cfg)
    if not rep["valid"]:
        raise JobError("invalid geometry: " + "; ".join(v["message"] for v in rep["violations"]),
                       EXIT_GEOMETRY, "geometry", {"violations": rep["violations"]})


def solve_entry(cfg: JobConfig, cache: ParamCache) -> tuple[CacheEntry, str]:
    """Solved parameters for the job geometry and where they came from ("hit" or "miss")."""
    _require_valid(cfg)
    scfg = cfg.solver.config()
    hit = cache.get(cfg, scfg.tol)
    if hit is not None:
        log.info("parameter cache hit")
        return hit, "hit"
    g = cfg.geometry
    try:
        if g.has_cuts:
            octagon = JobConfig(schema_version=cfg.schema_version,
                                geometry=g.model_copy(update={"cut_lengths": [0.0, 0.0, 0.0]}),
                                solver=cfg.solver)
            base, _ = solve_entry(octagon, cache)
            entry = CacheEntry("cut", solve_cut_params(g.cut_spec(), scfg, base=base.params))
        else:
            entry = CacheEntry("octagon", solve_params(g.polygon(), scfg))
    except (SolverError, ThetaError, MappingError) as exc:
        raise classify(exc)
    cache.put(cfg, entry)
    return entry, "miss"


def _mp(entry: CacheEntry) -> MappingParams:
    return entry.params.mp if entry.kind == "cut" else entry.params


def solve(cfg: JobConfig, cache: ParamCache) -> dict:
    entry, _ = solve_entry(cfg, cache)
    mp = _mp(entry)
    out = {"schema_version": cfg.schema_version, "kind": entry.kind, "fingerprint": geometry_key(cfg)}
    out.update(mp.to_dict())
    if entry.kind == "cut":
        res = extended_residual(entry.params, cfg.geometry.cut_spec())
        out["z"] = [[[c.real, c.imag] for c in zj] for zj in entry.params.z]
        out["cut_tips"] = [[w.real, w.imag] for w in
                           (SCMap(mp).w(np.asarray(zj, dtype=complex)) for zj in entry.params.z)]
        steps = 0 if np.linalg.norm(res) < cfg.solver.tol else -1
    else:
        res = residual(mp)
        steps = newton_steps(mp.polygon, mp, cfg.solver.config())
    out["residual"] = [float(v) for v in res]
    out["residual_norm"] = float(np.linalg.norm(res))
    out["verification_newton_steps"] = steps
    out["chart_violations"] = mp.chart_violations()
    return out


def kappa(cfg: JobConfig, cache: ParamCache) -> dict:
    entry, _ = solve_entry(cfg, cache)
    try:
        lam = lambda_modulus(_mp(entry))
        k_h = aspect_ratio(lam, "hypergeometric")
        k_a = aspect_ratio(lam, "agm")
    except FlowError as exc:
        raise classify(exc)
    return {"lambda": lam, "kappa": k_h, "kappa_hypergeometric": k_h, "kappa_agm": k_a,
            "kappa_route_difference": abs(k_h - k_a),
            "Q": cfg.flow.permeability * k_h * cfg.flow.head_drop,
            "permeability": cfg.flow.permeability, "head_drop": cfg.flow.head_drop}


def map_points(cfg: JobConfig, cache: ParamCache, direction: str | None = None, points=None) -> list[dict]:
    """Map points between the half-plane and the domain; each row carries its own error marker.

    x2w rows report w, the image under x -> w, and the round-trip error of
    mapping back; w2x rows the other way round.
    """
    entry, _ = solve_entry(cfg, cache)
    mp = _mp(entry)
    sc = SCMap(mp)
    req = cfg.map
    direction = direction or (req.direction if req else "x2w")
    pts = points if points is not None else (req.points if req else [])
    poly = mp.polygon
    rows = []
    for i, (a, b) in enumerate(pts):
        z = complex(a, b)
        row = {"index": i, "re_in": z.real, "im_in": z.imag, "re_out": float("nan"), "im_out": float("nan"),
               "roundtrip_error": float("nan"), "error": ""}
        try:
            if direction == "x2w":
                if z.imag < 0:
                    raise MappingError("x lies in the lower half-plane")
                out = sc.map_x_to_w(z)
                back = sc.map_w_to_x(out) if z.imag > 0 else z
            else:
                if not poly.contains(z, strict=True)[0]:
                    raise MappingError("w lies outside the domain")
                out = sc.map_w_to_x(z)
                back = sc.map_x_to_w(out)
            row.update(re_out=out.real, im_out=out.imag, roundtrip_error=abs(back - z) / max(1.0, abs(z)))
        except (MappingError, ThetaError, ValueError) as exc:
            row["error"] = str(exc) or type(exc).__name__
        rows.append(row)
    return rows


def streamlines(cfg: JobConfig, cache: ParamCache) -> dict:
    """N streamlines at q-fractions i/(N+1); each polyline is a list of w points."""
    entry, _ = solve_entry(cfg, cache)
    mp = _mp(entry)
    sc = SCMap(mp)
    n, m = cfg.output.streamlines, cfg.output.samples
    lines = []
    for i in range(1, n + 1):
        try:
            pl = trace_streamline(i / (n + 1), m, mp, sc)
        except (FlowError, MappingError) as exc:
            raise classify(exc)
        lines.append({"line_id": i - 1, "q_fraction": pl.level,
                      "points": [(p.real, p.imag) for p in pl.points], "errors": len(pl.errors)})
    return {"polygon": [(w.real, w.imag) for w in mp.polygon.outline()], "lines": lines}


def sweep(cfg: JobConfig, cache: ParamCache, on_cell=None) -> list[dict]:
    """kappa over the configured grid of cut lengths; resumes from the cache directory."""
    if cfg.sweep is None:
        raise JobError("config has no 'sweep' section", EXIT_IO, "config")
    base_cfg = JobConfig(schema_version=cfg.schema_version,
                         geometry=cfg.geometry.model_copy(update={"cut_lengths": [0.0, 0.0, 0.0]}),
                         solver=cfg.solver)
    _require_valid(base_cfg)
    axes = cfg.sweep.lengths
    cs_base = base_cfg.geometry.cut_spec()
    for lengths in (tuple(a[i] for a, i in zip(axes, idx)) for idx in np.ndindex(*map(len, axes))):
        try:
            type(cs_base)(cs_base.base, lengths, cs_base.cut_directions).validate()
        except GeometryError as exc:
            raise JobError(f"sweep cell {lengths}: {exc}", EXIT_GEOMETRY, "geometry", {"rule": exc.rule})
    state_key = hashlib.sha256(dumps({"g": geometry_key(base_cfg), "d": list(cfg.geometry.cut_directions),
                                      "axes": axes}).encode()).hexdigest()[:20]
    state_path = cache.root / f"sweep-{state_key}.json" if cache.enabled else None
    done = {}
    if state_path is not None and state_path.exists():
        try:
            done = {tuple(c["index"]): c["kappa"] for c in json.loads(state_path.read_text())["cells"]
                    if c["kappa"] is not None}
            log.info("resuming sweep with %d cells done", len(done))
        except (OSError, ValueError, KeyError):
            done = {}
    cells = dict(done)

    def record(idx, lengths, k):
        if k == k:
            cells[tuple(int(i) for i in idx)] = k
        if state_path is not None:
            cache.write_json(state_path, {"cells": [{"index": list(i), "kappa": v} for i, v in sorted(cells.items())]})
        if on_cell is not None:
            on_cell(idx, lengths, k)

    base_entry, _ = solve_entry(base_cfg, cache)
    try:
        res = kappa_sweep(cs_base, axes, cfg.solver.config(), done=done, on_cell=record)
    except (SolverError, ThetaError) as exc:
        raise classify(exc)
    errors = {tuple(f["index"]): f["error"] for f in res.failures}
    rows = []
    for idx in np.ndindex(*res.kappa.shape):
        rows.append({"i": idx[0], "j": idx[1], "k": idx[2],
                     "L2": axes[0][idx[0]], "L4": axes[1][idx[1]], "L5": axes[2][idx[2]],
                     "kappa": float(res.kappa[idx]), "error": errors.get(idx, "")})
    return rows


def load_config(path: str | os.PathLike) -> JobConfig:
    """Read and validate a job file; I/O and parse problems become exit code 4 with field paths."""
    from pydantic import ValidationError

    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise JobError(f"cannot read config: {exc}", EXIT_IO, "io")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise JobError(f"config is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}",
                       EXIT_IO, "config", {"line": exc.lineno, "column": exc.colno})
    try:
        return JobConfig.model_validate(data)
    except ValidationError as exc:
        fields = [{"field": ".".join(str(p) for p in e["loc"]), "message": e["msg"]} for e in exc.errors()]
        raise JobError("config does not match the schema", EXIT_IO, "config", {"fields": fields})
