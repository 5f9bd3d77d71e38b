import csv
import io
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from damflow import service
from damflow.cli import run
from damflow.schemas import JobConfig
from damflow.service import ParamCache

P_TEST_JOB = {
    "schema_version": 1,
    "geometry": {"H": [-1, 1, 1, -1, 2], "H_plus": 3},
    "flow": {"permeability": 1, "head_drop": 1},
    "map": {"direction": "x2w", "points": [[1, 0], [0.5, 0.5], [3, 2], [2, -1]]},
    "output": {"streamlines": 4, "samples": 16},
}


def write(tmp_path, job, name="job.json"):
    p = tmp_path / name
    p.write_text(json.dumps(job))
    return str(p)


def cli(args, capsys):
    code = run(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_ok(tmp_path, capsys):
    code, out, _ = cli(["validate", "--config", write(tmp_path, P_TEST_JOB), "--no-cache"], capsys)
    assert code == 0
    assert json.loads(out)["valid"] is True


def test_validate_names_isthmus(tmp_path, capsys):
    job = {**P_TEST_JOB, "geometry": {"H": [-1, 1, 1, -1, 2], "H_plus": 2}}
    code, out, _ = cli(["validate", "--config", write(tmp_path, job), "--no-cache"], capsys)
    assert code == 2
    assert "isthmus-2" in {v["rule"] for v in json.loads(out)["violations"]}


def test_validate_names_sign(tmp_path, capsys):
    job = {**P_TEST_JOB, "geometry": {"H": [-1, -1, 1, -1, 2], "H_plus": 3}}
    code, out, _ = cli(["validate", "--config", write(tmp_path, job), "--no-cache"], capsys)
    assert code == 2
    assert json.loads(out)["violations"][0]["rule"] == "sign"


def test_solve_invalid_geometry_exit_2(tmp_path, capsys):
    job = {**P_TEST_JOB, "geometry": {"H": [-1, 1, 1, -1, 2], "H_plus": 2}}
    code, _, err = cli(["solve", "--config", write(tmp_path, job), "--no-cache"], capsys)
    assert code == 2
    assert json.loads(err)["kind"] == "geometry"


def test_solver_failure_exit_3(tmp_path, capsys):
    job = {**P_TEST_JOB, "solver": {"max_newton": 1, "max_backtracks": 1, "continuation_steps": 1}}
    code, _, err = cli(["solve", "--config", write(tmp_path, job), "--no-cache", "--tol", "1e-300"], capsys)
    assert code == 3
    assert json.loads(err)["kind"] == "solver"


def test_missing_config_exit_4(tmp_path, capsys):
    code, _, _ = cli(["solve", "--config", str(tmp_path / "nope.json")], capsys)
    assert code == 4


def test_bad_json_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"schema_version": 1,\n "geometry": }')
    code, _, err = cli(["validate", "--config", str(p)], capsys)
    assert code == 4
    assert json.loads(err)["detail"]["line"] == 2


def test_schema_field_errors(tmp_path, capsys):
    job = {**P_TEST_JOB, "schema_version": 9, "geometry": {"H": [1, 2], "H_plus": 3}}
    code, _, err = cli(["validate", "--config", write(tmp_path, job)], capsys)
    assert code == 4
    fields = {f["field"] for f in json.loads(err)["detail"]["fields"]}
    assert "geometry.H" in fields


def test_unwritable_output_exit_4(tmp_path, capsys):
    code, _, _ = cli(["validate", "--config", write(tmp_path, P_TEST_JOB), "--no-cache",
                      "--output", str(tmp_path / "missing" / "dir" / "out.json")], capsys)
    assert code == 4


def test_solve_and_cache_hit(tmp_path, capsys):
    cfg = write(tmp_path, P_TEST_JOB)
    args = ["solve", "--config", cfg, "--cache-dir", str(tmp_path / "cache"), "-v"]
    c1, out1, err1 = cli(args, capsys)
    c2, out2, err2 = cli(args, capsys)
    assert c1 == c2 == 0
    assert out1 == out2
    assert "cache hit" in err2 and "cache hit" not in err1
    res = json.loads(out2)
    assert res["residual_norm"] < 1e-10
    assert res["verification_newton_steps"] <= 1
    om = res["omega"]
    assert 0 < om[0][1] < min(om[0][0], om[1][1])


def test_stale_cache_entry_is_evicted(tmp_path, capsys):
    cache = tmp_path / "cache"
    cfg = write(tmp_path, P_TEST_JOB)
    cli(["solve", "--config", cfg, "--cache-dir", str(cache)], capsys)
    (entry,) = cache.glob("params-*.json")
    data = json.loads(entry.read_text())
    data["params"]["omega"][0][0] += 0.01
    entry.write_text(json.dumps(data))
    code, _, err = cli(["solve", "--config", cfg, "--cache-dir", str(cache), "-v"], capsys)
    assert code == 0
    assert "evicting" in err


def test_cache_env_variable(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(service.CACHE_ENV, str(tmp_path / "envcache"))
    cli(["kappa", "--config", write(tmp_path, P_TEST_JOB)], capsys)
    assert list((tmp_path / "envcache").glob("params-*.json"))


def test_kappa_report(tmp_path, capsys):
    code, out, _ = cli(["kappa", "--config", write(tmp_path, P_TEST_JOB), "--no-cache"], capsys)
    r = json.loads(out)
    assert code == 0
    assert r["kappa_route_difference"] < 1e-10
    assert r["Q"] == r["kappa"]
    assert r["lambda"] > 1


def test_map_csv(tmp_path, capsys):
    code, out, _ = cli(["map", "--config", write(tmp_path, P_TEST_JOB), "--no-cache", "--format", "csv"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0
    assert float(rows[0]["re_out"]) == 0 and float(rows[0]["im_out"]) == 0
    assert all(float(r["roundtrip_error"]) < 1e-8 for r in rows[:3])
    assert rows[3]["error"]


def test_streamlines_csv_columns(tmp_path, capsys):
    code, out, _ = cli(["streamlines", "--config", write(tmp_path, P_TEST_JOB), "--no-cache",
                        "--format", "csv"], capsys)
    lines = out.splitlines()
    assert code == 0
    assert lines[0] == "line_id,index,re_w,im_w"
    assert len(lines) == 1 + 4 * 16
    # 17 significant digits
    assert any(len(x.replace("-", "").replace(".", "").lstrip("0")) >= 15 for x in lines[5].split(",")[2:])


def test_streamlines_svg_parses(tmp_path, capsys):
    out_path = tmp_path / "s.svg"
    code, _, _ = cli(["streamlines", "--config", write(tmp_path, P_TEST_JOB), "--no-cache",
                      "--format", "svg", "--output", str(out_path)], capsys)
    assert code == 0
    root = ET.parse(out_path).getroot()
    assert root.tag.endswith("svg")
    assert len(root.findall(".//{http://www.w3.org/2000/svg}polyline")) == 4


def test_svg_only_for_streamlines(tmp_path, capsys):
    code, _, _ = cli(["kappa", "--config", write(tmp_path, P_TEST_JOB), "--no-cache", "--format", "svg"], capsys)
    assert code == 4


def test_determinism(tmp_path, capsys):
    cfg = write(tmp_path, P_TEST_JOB)
    outs = [cli(["streamlines", "--config", cfg, "--no-cache", "--format", "csv"], capsys)[1] for _ in range(2)]
    assert outs[0] == outs[1]
    outs = [cli(["solve", "--config", cfg, "--no-cache"], capsys)[1] for _ in range(2)]
    assert outs[0] == outs[1]


def test_timestamp_only_on_request(tmp_path, capsys):
    cfg = write(tmp_path, P_TEST_JOB)
    plain = json.loads(cli(["kappa", "--config", cfg, "--no-cache"], capsys)[1])
    stamped = json.loads(cli(["kappa", "--config", cfg, "--no-cache", "--timestamp"], capsys)[1])
    assert "timestamp" not in plain
    stamped.pop("timestamp")
    assert stamped == plain


def test_sweep_resumes(tmp_path):
    job = {**P_TEST_JOB, "sweep": {"lengths": [[0.0, 0.05], [0.0], [0.0]]}}
    cfg = JobConfig.model_validate(job)
    cache = ParamCache(tmp_path / "cache")

    class Interrupt(Exception):
        pass

    def stop_after_first(idx, lengths, k):
        raise Interrupt

    with pytest.raises(Interrupt):
        service.sweep(cfg, cache, on_cell=stop_after_first)
    seen = []
    rows = service.sweep(cfg, cache, on_cell=lambda idx, lengths, k: seen.append(tuple(idx)))
    assert seen == [(1, 0, 0)]
    assert rows[0]["kappa"] > rows[1]["kappa"]


def test_zero_sweep_equals_kappa(tmp_path):
    job = {**P_TEST_JOB, "sweep": {"lengths": [[0.0], [0.0], [0.0]]}}
    cfg = JobConfig.model_validate(job)
    cache = ParamCache(None)
    assert service.sweep(cfg, cache)[0]["kappa"] == service.kappa(cfg, cache)["kappa"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "damflow", "validate", "--config", write(tmp_path, P_TEST_JOB),
                           "--no-cache"], capture_output=True, text=True)
    assert proc.returncode == 0
