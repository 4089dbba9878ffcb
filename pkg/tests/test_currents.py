import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vecplateau.currents import (PointBoundary, PolyCurrent, RadialMollifier, check_divergence_identity,
                                 expand_atoms, minimal_connection, minimal_connection_bruteforce)


def cross_current():
    # two unit-multiplicity segments crossing at (0.5, 0.5)
    return PolyCurrent.from_segments([((0, 0), (1, 1), [1, 0]), ((0, 1), (1, 0), [0, 1])])


def test_boundary_signs():
    T = PolyCurrent.from_segments([((0, 0), (1, 0), [1, 2])])
    B = T.boundary().merged()
    expected = PointBoundary([[0, 0], [1, 0]], [[-1, -2], [1, 2]])
    assert B.equals(expected)
    assert B.is_balanced()


def test_mass_values():
    T = PolyCurrent.from_segments([((0, 0), (3, 4), [3, 4])])
    assert T.mass(1) == pytest.approx(35.0)
    assert T.mass(2) == pytest.approx(25.0)
    assert T.mass("inf") == pytest.approx(20.0)
    np.testing.assert_allclose(T.component_mass(), [15.0, 20.0])


def test_planarize_splits_crossing():
    T = cross_current()
    assert not T.is_planar()
    P = T.planarized()
    assert P.is_planar()
    assert len(P.edges) == 4
    assert P.mass(2) == pytest.approx(T.mass(2))
    assert P.boundary().merged().equals(T.boundary().merged())


def test_canonical_merges_opposite_copies():
    T = PolyCurrent([[0, 0], [1, 0]], [[0, 1], [1, 0]], [[1], [1]])
    assert len(T.canonical().edges) == 0
    T2 = PolyCurrent([[0, 0], [1, 0]], [[0, 1], [0, 1]], [[1], [2]])
    C = T2.canonical()
    assert len(C.edges) == 1 and C.mults[0, 0] == 3


def test_integer_ring_rejects_fractions():
    with pytest.raises(ValueError):
        PolyCurrent([[0, 0], [1, 0]], [[0, 1]], [[0.5]], "integer")


def test_json_round_trip(tmp_path):
    T = cross_current()
    U = PolyCurrent.from_json(T.to_json())
    np.testing.assert_allclose(U.vertices, T.vertices)
    np.testing.assert_array_equal(U.mults, T.mults)
    S = PointBoundary([[0, 0], [1, 1]], [[1, -1], [-1, 1]])
    path = tmp_path / "b.json"
    S.to_json(path)
    assert PointBoundary.from_json(path).equals(S)


def test_merged_adds_coincident_atoms():
    S = PointBoundary([[0, 0], [0, 0], [1, 0]], [[1], [1], [-2]])
    M = S.merged()
    assert M.n == 2


@given(st.integers(1, 5), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_minimal_connection_matches_bruteforce(m, seed):
    rng = np.random.default_rng(seed)
    P, N = rng.random((m, 2)), rng.random((m, 2))
    a, _ = minimal_connection(P, N)
    b, _ = minimal_connection_bruteforce(P, N)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_expand_atoms():
    pos, neg = expand_atoms([[0, 0], [1, 0]], [2, -2])
    assert len(pos) == 2 and len(neg) == 2


@pytest.mark.parametrize("d", [2, 3])
def test_mollifier_unit_mass_and_linear_l1(d):
    mol = RadialMollifier(1.0, d)
    assert mol.total_mass() == pytest.approx(1.0, abs=1e-13)
    ratios = [mol.with_epsilon(e).field_l1() / e for e in (0.5, 0.25, 0.125)]
    assert max(ratios) - min(ratios) <= 1e-12 * max(ratios)


def test_mollifier_divergence_identity():
    mol = RadialMollifier(0.5, 2)

    def phi(x):
        return np.cos(x[..., 0]) * np.exp(x[..., 1])

    def grad(x):
        return np.stack([-np.sin(x[..., 0]) * np.exp(x[..., 1]), np.cos(x[..., 0]) * np.exp(x[..., 1])], axis=-1)

    assert check_divergence_identity(mol, phi, grad) <= 1e-4


def test_smoothed_kernel_matches_fundamental_field_outside():
    mol = RadialMollifier(0.3, 2)
    x = np.array([[1.0, 0.5], [-0.4, 0.2]])
    K = x / (2 * math.pi * np.sum(x**2, axis=1))[:, None]
    np.testing.assert_allclose(mol.smoothed_kernel(x), K, rtol=1e-12)
    y = np.array([[0.1, 0.05]])
    Ky = y / (2 * math.pi * np.sum(y**2))
    np.testing.assert_allclose(mol.smoothed_kernel(y), Ky - mol.field(y), rtol=1e-10)


def test_mollifier_field_singular_at_origin():
    with pytest.raises(ZeroDivisionError):
        RadialMollifier(1.0).field(np.zeros((1, 2)))
