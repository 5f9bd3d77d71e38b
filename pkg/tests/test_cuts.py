import numpy as np
import pytest

from damflow import P_TEST, CutSpec, solve_cut_params
from damflow.cuts import (
    ExtendedParams, cut_tip, extended_residual, kappa_of, kappa_sweep,
)
from damflow.param_solver import residual
from damflow.polygon import GeometryError
from damflow.sc_map import half_period


def test_zero_cut_is_octagon(p_params):
    ep = solve_cut_params(CutSpec(P_TEST), base=p_params)
    assert ep.mp == p_params
    for j, k in enumerate((2, 4, 5)):
        assert np.allclose(ep.z[j], half_period(k, p_params.Omega))


def test_zero_cut_residual_reduces(p_params):
    ep = ExtendedParams(p_params, tuple(tuple(half_period(k, p_params.Omega)) for k in (2, 4, 5)))
    r = extended_residual(ep, CutSpec(P_TEST))
    assert r.shape == (15,)
    assert np.linalg.norm(r) < 1e-8
    base = residual(p_params)
    assert np.allclose(r[[0, 3, 6]], base[:3])


@pytest.mark.parametrize("j,direction,tip", [
    (1, "vertical", -1 - 2.1j),
    (1, "horizontal", -0.9 - 2j),
])
def test_cut_tip_lands(p_params, j, direction, tip):
    lengths = [0.0, 0.0, 0.0]
    lengths[j] = 0.1
    cs = CutSpec(P_TEST, tuple(lengths), (direction,) * 3)
    ep = solve_cut_params(cs, base=p_params)
    assert abs(cut_tip(ep, j) - tip) < 1e-6
    assert np.linalg.norm(extended_residual(ep, cs)) < 1e-9
    assert kappa_of(ep) < 0.2524706659


def test_round_trip_serialization(p_params):
    ep = ExtendedParams(p_params, tuple(tuple(half_period(k, p_params.Omega)) for k in (2, 4, 5)))
    assert ExtendedParams.from_dict(ep.to_dict()) == ep


def test_cut_leaving_domain():
    with pytest.raises(GeometryError):
        CutSpec(P_TEST, (0.0, 0.0, 2.5), ("vertical",) * 3).validate()


def test_crossing_cuts():
    with pytest.raises(GeometryError):
        # w2 down to y = -2.5 and w4 right to x = 0.5 meet at (0, -2)
        CutSpec(P_TEST, (1.5, 1.5, 0.0), ("vertical", "horizontal", "vertical")).validate()


def test_bad_direction():
    with pytest.raises(ValueError):
        CutSpec(P_TEST, (0.1, 0, 0), ("diagonal", "vertical", "vertical"))
    with pytest.raises(ValueError):
        CutSpec(P_TEST, (-0.1, 0, 0))


def test_sweep_resume(p_params):
    cs = CutSpec(P_TEST)
    grid = [[0.0, 0.05], [0.0], [0.0]]
    full = kappa_sweep(cs, grid)
    resumed = kappa_sweep(cs, grid, done={(0, 0, 0): full.kappa[0, 0, 0]})
    assert np.array_equal(full.kappa, resumed.kappa)
    assert full.kappa[1, 0, 0] < full.kappa[0, 0, 0]
