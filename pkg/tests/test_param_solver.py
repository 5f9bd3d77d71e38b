import numpy as np
import pytest

from damflow import P_TEST, SolverError, solve_params
from damflow.param_solver import (
    SolverConfig, bootstrap_anchor, continuation_path, jacobian, newton_steps, residual,
)
from damflow.polygon import GeometryError, PolygonSpec
from damflow.sc_map import MappingParams


def test_p_test_residual(p_params):
    assert np.linalg.norm(residual(p_params)) < 1e-10
    assert not p_params.chart_violations()


def test_c_eliminated(p_params):
    assert p_params.c1 == -2 * P_TEST.H[1]
    assert p_params.c2 == 2 * P_TEST.H[3]


def test_jacobian_matches_differences(p_params):
    J = jacobian(p_params)
    z = p_params.vector()
    h = 1e-6
    fd = np.empty_like(J)
    rows = [0, 1, 2, 3, 4, 7, 8]
    for i in range(7):
        e = np.zeros(7)
        e[i] = h
        rp = residual(MappingParams.from_vector(z + e, P_TEST))
        rm = residual(MappingParams.from_vector(z - e, P_TEST))
        fd[:, i] = ((rp - rm) / (2 * h))[rows]
    assert np.abs(J - fd).max() < 1e-6 * max(1.0, np.abs(J).max())


def test_anchor():
    spec, mp = bootstrap_anchor()
    assert np.linalg.norm(residual(mp, spec)) < 1e-8
    assert not mp.chart_violations()


def test_scaling(p_params):
    mp2 = solve_params(P_TEST.scaled(2.0))
    assert np.abs(mp2.vector() - p_params.vector()).max() < 1e-9
    assert np.allclose(mp2.C, 2 * p_params.C)


def test_warm_start_is_cheap(p_params):
    assert newton_steps(P_TEST, p_params) <= 1


def test_warm_start_agrees(p_params, random_specs):
    spec = random_specs[0]
    cold = solve_params(spec)
    warm = solve_params(spec, warm_start=p_params)
    assert np.abs(cold.vector() - warm.vector()).max() < 1e-8


def test_continuation_path_ends_at_target(p_params):
    target = PolygonSpec.from_closure((-1.0, 1.0, 1.2, -1.0, 2.0), 3.0)
    path = continuation_path(p_params, target, SolverConfig())
    assert path[-1].polygon == target
    assert np.linalg.norm(residual(path[-1])) < 1e-10


def test_invalid_geometry_rejected():
    with pytest.raises(GeometryError):
        solve_params(PolygonSpec.from_closure(P_TEST.H, 2.0))


def test_too_thin_isthmus_rejected():
    with pytest.raises(GeometryError):
        solve_params(PolygonSpec.from_closure((-1.0, 1.0, 1.9, -1.0, 2.0), 3.0))


def test_solver_error_carries_last_good(p_params):
    cfg = SolverConfig(max_newton=1, max_backtracks=1)
    target = PolygonSpec.from_closure((-1.0, 3.0, 1.0, -3.0, 2.0), 3.0)
    with pytest.raises(SolverError) as err:
        continuation_path(p_params, target, cfg)
    assert err.value.last_good is None or isinstance(err.value.last_good, MappingParams)


def test_params_serialization(p_params):
    assert MappingParams.from_dict(p_params.to_dict()) == p_params
