import math

import numpy as np
import pytest

from vecplateau import instances
from vecplateau.currents import PolyCurrent
from vecplateau.plateau_integral import decomposed_current, solve_integral
from vecplateau.torusmaps import (LiftingSpec, TorusMapSpec, branch_phase, branch_phase_gradient, energy_chain,
                                  evaluate_map, fd_gradient_check, harmonic_energy, identity_violation,
                                  jacobian_pairing, jump_cost, neighbourhood_quadrature, nuclear_density,
                                  verify_theoremB, winding_number)

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def triangle_spec():
    T = solve_integral(instances.steiner_triangle(), "inf").current
    return TorusMapSpec.with_relative_width(T, 0.1)


def segment(length=1.0, k=1):
    m = np.zeros(k, int)
    m[0] = 1
    return PolyCurrent.from_segments([((0, 0), (length, 0), m)])


def test_branch_phase_jumps_by_multiplicity():
    T = PolyCurrent.from_segments([((0, 0), (1, 0), [2])])
    above = branch_phase(T, [[0.5, 1e-9]])
    below = branch_phase(T, [[0.5, -1e-9]])
    assert abs(abs(above - below)[0, 0] - 2) < 1e-6


def test_branch_phase_gradient_matches_differences():
    T = PolyCurrent.from_segments([((0, 0), (1, 0), [1]), ((1, 0), (1, 1), [1])])
    x = np.array([[0.3, 0.7], [2.0, -1.0]])
    h = 1e-6
    fd = np.stack([(branch_phase(T, x + [h, 0]) - branch_phase(T, x - [h, 0])) / (2 * h),
                   (branch_phase(T, x + [0, h]) - branch_phase(T, x - [0, h])) / (2 * h)], axis=-1)
    np.testing.assert_allclose(branch_phase_gradient(T, x), fd, atol=1e-6)


def test_width_check():
    with pytest.raises(ValueError):
        TorusMapSpec(segment(1.0), 0.3)
    TorusMapSpec(segment(1.0), 0.2)


def test_map_is_unimodular_and_rejects_support():
    spec = TorusMapSpec(segment(), 0.0)
    u, _ = evaluate_map(spec, [[0.5, 0.5], [2, 1]])
    np.testing.assert_allclose(np.abs(u), 1.0)
    with pytest.raises(ValueError):
        evaluate_map(spec, [[0.5, 0.0]])


def test_winding_numbers_at_atoms(triangle_spec):
    S = triangle_spec.boundary()
    for pos, m in zip(S.positions, S.mults):
        for i in range(S.k):
            w = winding_number(triangle_spec, pos, 0.3 * triangle_spec.epsilon, i, n=2048)
            assert w == pytest.approx(m[i], abs=1e-6)


def test_map_constant_far_away(triangle_spec):
    # the smoothed map is trivial outside the eps-neighbourhood of the network
    u, grad = evaluate_map(triangle_spec, [[3.0, 3.0], [-2.0, 0.4]])
    np.testing.assert_allclose(np.abs(grad), 0.0, atol=1e-12)


def test_quadrature_covers_neighbourhood():
    spec = TorusMapSpec(segment(1.0), 0.1)
    q = neighbourhood_quadrature(spec)
    assert np.all(q.weights > 0)
    # the rule lives on a union of eps/2 cells covering the eps-neighbourhood
    area = q.integrate(np.ones(len(q.weights)))
    assert 0.2 + math.pi * 0.01 <= area <= 0.2 + math.pi * 0.01 + 4 * 1.1 * 0.05


@pytest.mark.parametrize("p", ["1", "2", "inf"])
def test_segment_energy_close_to_mass(p):
    spec = TorusMapSpec(segment(1.0, k=2), 0.01)
    H = harmonic_energy(spec, p)
    assert abs(H.value - TWO_PI) / TWO_PI <= 0.05


def test_energy_chain_and_identity(triangle_spec):
    res = energy_chain(triangle_spec, 2)
    assert res["ok"], res
    q = neighbourhood_quadrature(triangle_spec)
    x = q.points[:: max(1, len(q.points) // 300)]
    assert identity_violation(triangle_spec, x, "inf") <= 1e-6
    assert np.all(nuclear_density(triangle_spec, x, "inf") >= 0)


def test_jacobian_pairing(triangle_spec):
    def phi(x):
        return np.sin(x[..., 0]) + x[..., 1] ** 2

    def grad(x):
        return np.stack([np.cos(x[..., 0]), 2 * x[..., 1]], axis=-1)

    lhs, rhs = jacobian_pairing(triangle_spec, phi, grad)
    np.testing.assert_allclose(lhs, rhs, atol=1e-6)


def test_lifting_properties(triangle_spec):
    S = triangle_spec.boundary()
    for cuts in (solve_integral(S, "inf").current, decomposed_current(S)):
        lift = LiftingSpec(cuts, triangle_spec)
        err, _ = fd_gradient_check(lift, n=200)
        assert err <= 1e-6
        rep = verify_theoremB(triangle_spec, lift, "inf")
        assert rep.ok
        assert jump_cost(lift, "inf") == pytest.approx(TWO_PI * cuts.mass("inf"))
        # exp(i theta) reproduces the map away from the cuts
        x = np.array([[0.5, 1.5], [1.6, 0.2]])
        u, _ = evaluate_map(triangle_spec, x)
        np.testing.assert_allclose(np.exp(1j * lift.theta(x)), u, atol=1e-9)


def test_cut_system_must_match_singular_set(triangle_spec):
    with pytest.raises(ValueError):
        LiftingSpec(segment(1.0, k=2), triangle_spec)
