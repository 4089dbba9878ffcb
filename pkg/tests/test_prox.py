import numpy as np
import pytest
from scipy.optimize import minimize

from vecplateau.lpalgebra import lp_norm
from vecplateau.prox import project_l1_ball, prox_norm


def test_l1_projection_lands_on_ball():
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(50, 4)) * 3
    X = project_l1_ball(Y, 1.0)
    assert np.all(np.abs(X).sum(axis=1) <= 1 + 1e-12)
    inside = np.abs(Y).sum(axis=1) <= 1
    np.testing.assert_array_equal(X[inside], Y[inside])


@pytest.mark.parametrize("p", ["1", "3/2", "2", "3", "4", "inf"])
def test_prox_matches_numerical_minimiser(p):
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(5, 3))
    w = 0.7
    X = prox_norm(Z, w, p)
    for z, x in zip(Z, X):
        def f(y):
            return 0.5 * np.sum((y - z) ** 2) + w * lp_norm(y[None], p)[0]
        ref = minimize(f, z, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
        assert f(x) <= ref.fun + 1e-7
