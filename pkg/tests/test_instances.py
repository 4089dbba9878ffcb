import numpy as np

from vecplateau import instances


def test_random_instances_are_balanced_and_seeded():
    a = instances.random_instances(7, 10, 3)
    b = instances.random_instances(7, 10, 3)
    for S, T in zip(a, b):
        assert S.equals(T)
        assert S.is_balanced()
        assert 3 <= S.n <= 5
        assert not np.any(np.all(S.mults == 0, axis=1))
        assert not np.any(np.all(S.mults == 0, axis=0))


def test_random_dipoles():
    S = instances.random_dipoles(np.random.default_rng(0), pairs=3)
    assert S.k == 1 and S.n == 6 and S.is_balanced()


def test_named_instances():
    P = instances.pentagon()
    assert P.k == 4 and P.is_balanced()
    np.testing.assert_allclose(np.linalg.norm(P.positions, axis=1), 1.0)
    T = instances.steiner_triangle()
    assert T.k == 2 and T.is_balanced()
    assert instances.single_dipole(2.0).diameter() == 2.0
