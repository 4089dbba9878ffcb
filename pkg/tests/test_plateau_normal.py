import math

import numpy as np
import pytest

from vecplateau import instances
from vecplateau.currents import PolyCurrent
from vecplateau.lpalgebra import NonconvergenceError
from vecplateau.plateau_normal import (CalibrationForm, GridGraph, check_calibration, check_p_monotone,
                                       snapped_grid, solve_normal, stencil_distortion, sweep_p)


@pytest.mark.parametrize("stencil,expected", [(4, math.sqrt(2)), (8, 1 / math.cos(math.pi / 8)),
                                              (16, 1 / math.cos(math.atan(0.5) / 2))])
def test_stencil_distortion(stencil, expected):
    assert stencil_distortion(stencil) == pytest.approx(expected, rel=1e-12)


def test_grid_incidence_is_divergence():
    G = GridGraph.around(instances.single_dipole(), n=9, stencil=8)
    D = G.incidence
    assert D.shape == (G.num_nodes, G.num_edges)
    np.testing.assert_allclose(np.asarray(D.sum(axis=0)).ravel(), 0)


def test_dipole_exact_band_contains_length():
    S = instances.single_dipole(1.0)
    sol = solve_normal(S, 2, n=33)
    assert sol.method == "exact"
    assert sol.continuum_lower <= 1.0 <= sol.continuum_upper
    assert sol.value == pytest.approx(1.0, rel=stencil_distortion(16) - 1)
    assert sol.divergence_residual() <= 1e-9


@pytest.mark.parametrize("method", ["admm", "pdhg"])
def test_iterative_solvers_agree_with_lp(method):
    S = instances.steiner_triangle()
    grid, _ = snapped_grid(S, 13, 8)
    ref = solve_normal(S, "inf", grid=grid, method="lp")
    sol = solve_normal(S, "inf", grid=grid, method=method, tol=1e-4, max_iter=50000)
    assert sol.lower <= ref.value * (1 + 1e-6)
    assert sol.value >= ref.value * (1 - 1e-6)
    assert sol.value == pytest.approx(ref.value, rel=2e-4)
    assert sol.divergence_residual() <= 1e-8


def test_strict_mode_raises_on_budget():
    S = instances.pentagon()
    with pytest.raises(NonconvergenceError):
        solve_normal(S, 2, n=17, tol=1e-9, max_iter=20)


def test_cleaned_current_keeps_boundary():
    S = instances.steiner_triangle()
    sol = solve_normal(S, "inf", n=17, method="lp")
    C = sol.cleaned_current()
    B = C.boundary().merged()
    assert B.k == 2 and C.ring == "real"
    # the cleaned network still joins the snapped atoms
    np.testing.assert_allclose(np.sort(np.abs(B.mults).sum(axis=1)), [1, 1, 2], atol=1e-8)


def test_sweep_is_monotone():
    S = instances.steiner_triangle()
    res = sweep_p(S, ["1", "2", "inf"], n=13, tol=1e-4, max_iter=20000)
    assert res.ok, res.violations
    vals = [s.value for _, s in res.rows]
    assert vals[0] >= vals[1] >= vals[2] * (1 - 1e-4)


def test_check_p_monotone_flags_increase():
    assert check_p_monotone(2, [("1", 1.0, 0.0), ("2", 1.2, 0.0)])


def test_calibration_of_a_segment():
    T = PolyCurrent.from_segments([((0, 0), (1, 0), [1, 1])])
    # constant covector w with w tau = m / |m|_2 calibrates the segment for p = 2
    w = np.array([[1 / math.sqrt(2), 0.0], [1 / math.sqrt(2), 0.0]])
    cal = CalibrationForm.constant(w, ((-1, -1), (2, 1)), T, p=2)
    rep = check_calibration(cal)
    assert rep.valid and rep.certified_value == pytest.approx(math.sqrt(2))
    bad = CalibrationForm.constant(2 * w, ((-1, -1), (2, 1)), T, p=2)
    assert not check_calibration(bad).valid
