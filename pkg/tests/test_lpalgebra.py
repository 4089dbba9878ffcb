import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vecplateau.lpalgebra import (Exponent, as_exponent, comass_p, conjugate, hodge_star, holder_factor, lp_norm,
                                  mass_p, mass_p_batch, mass_p_certified, nuclear_p, nuclear_p_batch,
                                  theorem_e_factor)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("text,expected", [("1", 1.0), ("3/2", 1.5), ("inf", math.inf), (2, 2.0), ("2.5", 2.5)])
def test_exponent_parse(text, expected):
    assert float(as_exponent(text)) == expected


def test_exponent_rejects_below_one():
    with pytest.raises(ValueError):
        Exponent.parse("0.5")


@pytest.mark.parametrize("p,q", [("1", "inf"), ("2", "2"), ("3/2", "3"), ("inf", "1")])
def test_conjugate_pairs(p, q):
    assert conjugate(p) == as_exponent(q)


def test_factors():
    assert holder_factor(4, "inf") == pytest.approx(4.0)
    assert holder_factor(4, 2) == pytest.approx(2.0)
    assert theorem_e_factor(4, 1) == pytest.approx(1.0)
    assert theorem_e_factor(4, "inf") == pytest.approx(4.0)
    assert theorem_e_factor(4, 2) == pytest.approx(3.0)


@given(arrays(float, (3, 2), elements=finite))
@settings(max_examples=40, deadline=None)
def test_mass2_is_trace_norm(V):
    s = np.linalg.svd(V, compute_uv=False).sum()
    assert mass_p(V, 2, 1e-9) == pytest.approx(s, rel=1e-6, abs=1e-9)


def test_mass1_closed_form():
    V = np.array([[1.0, -2.0], [0.5, 3.0], [-1.0, 0.0]])
    assert mass_p(V, 1) == np.linalg.norm(V, axis=1).sum()


def test_mass_inf_identity_certificate():
    c = mass_p_certified(np.eye(2), "inf", tol=1e-9)
    assert c.value == pytest.approx(math.sqrt(2), abs=1e-9)
    assert c.upper - c.lower <= 1e-6


@pytest.mark.parametrize("p", ["3/2", "3", "inf"])
def test_mass_between_holder_bounds(p):
    rng = np.random.default_rng(1)
    V = rng.normal(size=(2, 3))
    m = mass_p(V, p, 1e-7)
    m1 = mass_p(V, 1)
    # ||.||_p <= ||.||_1 <= k^(1-1/p) ||.||_p pointwise lifts to the masses
    assert m <= m1 + 1e-7
    assert m1 <= holder_factor(3, p) * m + 1e-7


def test_mass_exchange_matches_auto():
    rng = np.random.default_rng(3)
    V = rng.normal(size=(2, 3))
    a = mass_p_certified(V, "inf", tol=1e-6)
    b = mass_p_certified(V, "inf", tol=1e-6, method="exchange")
    assert a.value == pytest.approx(b.value, rel=1e-6)


def test_mass_scale_invariance():
    V = np.array([[3253.87, -1074.62], [3245.34, -1067.01], [6499.21, -2141.63]])
    m = mass_p(V, "inf", 1e-7)
    assert m == pytest.approx(1e4 * mass_p(V / 1e4, "inf", 1e-7), rel=1e-6)


def test_comass_duality_pairing():
    rng = np.random.default_rng(2)
    for _ in range(20):
        V = rng.normal(size=(2, 2))
        W = rng.normal(size=(2, 2))
        assert np.sum(W * V) <= comass_p(W, "inf") * mass_p(V, "inf", 1e-8) * (1 + 1e-7)


def test_comass_of_identity():
    # comass_p is the dual of mass_p: sup over unit tau of ||tau||_q
    assert comass_p(np.eye(2), "inf") == pytest.approx(math.sqrt(2), rel=1e-8)
    assert comass_p(np.eye(2), "1") == pytest.approx(1.0, rel=1e-8)
    assert comass_p(np.eye(2), "2") == pytest.approx(1.0, rel=1e-8)


def test_batch_matches_single():
    rng = np.random.default_rng(4)
    Vs = rng.normal(size=(30, 2, 2))
    for p in ["1", "2", "inf"]:
        batch = mass_p_batch(Vs, p, tol=1e-8)
        single = [mass_p(V, p, 1e-8) for V in Vs]
        np.testing.assert_allclose(batch, single, rtol=1e-6)


def test_nuclear_real_matrix_equals_mass():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(2, 2))
    assert nuclear_p(A.astype(complex), 2) == pytest.approx(mass_p(A, 2, 1e-9), rel=1e-6)


def test_nuclear_invariant_under_row_phases():
    rng = np.random.default_rng(6)
    A = rng.normal(size=(3, 2)) + 0j
    D = np.exp(1j * rng.uniform(0, 2 * np.pi, 3))[:, None]
    np.testing.assert_allclose(nuclear_p_batch(np.stack([A, D * A]), "inf", tol=1e-8),
                               nuclear_p(A, "inf", 1e-8), rtol=1e-6)


def test_hodge_star_rotates_vectors():
    v = np.array([1.0, 2.0])
    w = hodge_star(v, 1)
    assert abs(np.dot(v, w)) < 1e-14
    np.testing.assert_allclose(np.linalg.norm(w), np.linalg.norm(v))


def test_lp_norm_rows():
    z = np.array([[3.0, -4.0], [1.0, 1.0]])
    np.testing.assert_allclose(lp_norm(z, 2), [5.0, math.sqrt(2)])
    np.testing.assert_allclose(lp_norm(z, "inf"), [4.0, 1.0])
    np.testing.assert_allclose(lp_norm(z, 1), [7.0, 2.0])
