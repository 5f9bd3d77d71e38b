"""Command line: a thin client over ``damflow.service``.

Exit codes: 0 success, 2 invalid geometry, 3 solver failure, 4 I/O or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import xml.etree.ElementTree as ET
from datetime import datetime, timezone
from pathlib import Path

from . import service
from .service import EXIT_IO, EXIT_OK, JobError, ParamCache, dumps

COMMANDS = ("validate", "solve", "kappa", "map", "streamlines", "sweep")
STREAMLINE_COLUMNS = ("line_id", "index", "re_w", "im_w")


def _g(x: float) -> str:
    return "nan" if x != x else format(float(x) + 0.0, ".17g")


def _csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_g(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def streamline_rows(result: dict) -> list[dict]:
    return [{"line_id": ln["line_id"], "index": i, "re_w": x, "im_w": y}
            for ln in result["lines"] for i, (x, y) in enumerate(ln["points"])]


def streamlines_svg(result: dict, width: int = 800) -> str:
    """Domain outline plus streamline polylines; y is flipped so the dam sits on top."""
    poly = result["polygon"]
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    pad = 0.02 * max(x1 - x0, y1 - y0)
    x0, x1, y0, y1 = x0 - pad, x1 + pad, y0 - pad, y1 + pad
    height = max(1, round(width * (y1 - y0) / (x1 - x0)))
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height),
                     viewBox=f"{_g(x0)} {_g(-y1)} {_g(x1 - x0)} {_g(y1 - y0)}")
    defs = ET.SubElement(svg, "defs")
    clip = ET.SubElement(defs, "clipPath", id="domain")
    pts = " ".join(f"{_g(x)},{_g(-y)}" for x, y in poly)
    ET.SubElement(clip, "polygon", points=pts)
    stroke = _g((x1 - x0) / width)
    ET.SubElement(svg, "polygon", points=pts, fill="#eef3f8", stroke="black",
                  **{"stroke-width": _g(2 * float(stroke))})
    g = ET.SubElement(svg, "g", fill="none", stroke="#1f5fa8", **{"stroke-width": stroke,
                                                                 "clip-path": "url(#domain)"})
    for ln in result["lines"]:
        if len(ln["points"]) > 1:
            ET.SubElement(g, "polyline", id=f"line{ln['line_id']}",
                          points=" ".join(f"{_g(x)},{_g(-y)}" for x, y in ln["points"]))
    ET.indent(svg)
    return ET.tostring(svg, encoding="unicode") + "\n"


def _render(cmd: str, result, fmt: str) -> str:
    if fmt == "json":
        return dumps(result) + "\n"
    if fmt == "csv":
        if cmd == "streamlines":
            return _csv(streamline_rows(result), STREAMLINE_COLUMNS)
        if cmd in ("map", "sweep"):
            return _csv(result, list(result[0].keys()) if result else [])
        rows = [{"name": k, "value": v} for k, v in result.items() if isinstance(v, (int, float, str))]
        return _csv(rows, ("name", "value"))
    if fmt == "svg":
        if cmd != "streamlines":
            raise JobError("svg output is only available for streamlines", EXIT_IO, "config")
        return streamlines_svg(result)
    raise JobError(f"unknown format {fmt}", EXIT_IO, "config")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="damflow", description="Seepage under an octagonal dam via genus-2 theta functions.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON job file")
    p.add_argument("--output", help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv", "svg"), help="overrides output.format of the config")
    p.add_argument("--cache-dir", help=f"parameter cache directory (default: ${service.CACHE_ENV} or ~/.cache/damflow)")
    p.add_argument("--no-cache", action="store_true", help="neither read nor write the parameter cache")
    p.add_argument("--tol", type=float, help="Newton residual tolerance (overrides solver.tol)")
    p.add_argument("--direction", choices=("w2x", "x2w"), help="map: direction (overrides map.direction)")
    p.add_argument("--timestamp", action="store_true", help="add a run timestamp to JSON output")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _setup_logging(verbose: bool) -> None:
    log = logging.getLogger("damflow")
    for h in list(log.handlers):
        if getattr(h, "_damflow_cli", False):
            log.removeHandler(h)
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(logging.Formatter("damflow: %(message)s"))
    h._damflow_cli = True
    log.addHandler(h)
    log.setLevel(logging.INFO if verbose else logging.WARNING)
    log.propagate = False


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        cfg = service.load_config(args.config)
        if args.tol is not None:
            if not args.tol > 0:
                raise JobError("--tol must be positive", EXIT_IO, "config")
            cfg = cfg.model_copy(update={"solver": cfg.solver.model_copy(update={"tol": args.tol})})
        fmt = args.format or cfg.output.format
        cache = ParamCache(None if args.no_cache else (args.cache_dir or service.default_cache_dir()))
        cmd = args.command
        if cmd == "validate":
            result = service.validate(cfg)
        elif cmd == "solve":
            result = service.solve(cfg, cache)
        elif cmd == "kappa":
            result = service.kappa(cfg, cache)
        elif cmd == "map":
            result = service.map_points(cfg, cache, direction=args.direction)
        elif cmd == "streamlines":
            result = service.streamlines(cfg, cache)
        else:
            result = service.sweep(cfg, cache)
        if args.timestamp and isinstance(result, dict) and fmt == "json":
            result = {**result, "timestamp": datetime.now(timezone.utc).isoformat()}
        text = _render(cmd, result, fmt)
        out_path = args.output or cfg.output.path
        if out_path:
            try:
                Path(out_path).write_text(text)
            except OSError as exc:
                raise JobError(f"cannot write output: {exc}", EXIT_IO, "io")
        else:
            sys.stdout.write(text)
        if cmd == "validate" and not result["valid"]:
            return service.EXIT_GEOMETRY
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - every failure maps onto the exit-code contract
        err = service.classify(exc)  # re-raises anything outside the contract
        sys.stderr.write(dumps(err.to_dict()) + "\n")
        return err.code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
