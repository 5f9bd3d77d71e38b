"""HTTP front end: the same job operations as the command line, over FastAPI.

Run with ``uvicorn damflow.api:app``.  Failures carry the command-line exit
code in the body: geometry errors answer 422, solver failures 409.
"""

from __future__ import annotations

import os

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from . import __version__, service
from .schemas import JobConfig, KappaResult, ValidateResult
from .service import JobError, ParamCache

app = FastAPI(title="damflow", version=__version__)

_STATUS = {service.EXIT_GEOMETRY: 422, service.EXIT_SOLVER: 409, service.EXIT_IO: 400}


def _cache() -> ParamCache:
    if os.environ.get("DAMFLOW_NO_CACHE"):
        return ParamCache(None)
    return ParamCache(service.default_cache_dir())


@app.exception_handler(JobError)
async def _job_error(_, exc: JobError):
    return JSONResponse(status_code=_STATUS.get(exc.code, 500), content=exc.to_dict())


def _call(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except JobError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise service.classify(exc)


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/validate", response_model=ValidateResult)
def validate(cfg: JobConfig):
    return _call(service.validate, cfg)


@app.post("/solve")
def solve(cfg: JobConfig):
    return _call(service.solve, cfg, _cache())


@app.post("/kappa", response_model=KappaResult)
def kappa(cfg: JobConfig):
    r = _call(service.kappa, cfg, _cache())
    return KappaResult(lam=r["lambda"], **{k: r[k] for k in KappaResult.model_fields if k != "lam"})


@app.post("/map")
def map_points(cfg: JobConfig):
    return _call(service.map_points, cfg, _cache())


@app.post("/streamlines")
def streamlines(cfg: JobConfig):
    return _call(service.streamlines, cfg, _cache())


@app.post("/sweep")
def sweep(cfg: JobConfig):
    return _call(service.sweep, cfg, _cache())
