"""Seeded instance generators used by the suites and the tests.

Random boundaries place 3 to 5 atoms uniformly in the unit square (with a
minimum separation) and draw multiplicities uniformly from {-2, ..., 2}^k,
rejecting draws that do not sum to zero per component, contain a zero atom
or leave a component identically zero.
"""

from __future__ import annotations

import numpy as np

from .currents import PointBoundary


def _separated_points(rng, n, min_sep):
    for _ in range(1000):
        P = rng.random((n, 2))
        d = np.linalg.norm(P[:, None] - P[None], axis=2) + np.eye(n)
        if d.min() >= min_sep:
            return P
    raise RuntimeError("could not place well separated atoms")


def random_boundary(rng: np.random.Generator, k: int, n_atoms: int | None = None, max_mult: int = 2,
                    min_sep: float = 0.15) -> PointBoundary:
    """Random balanced boundary in (Z^k)-coefficients; see the module docstring."""
    n = int(rng.integers(3, 6)) if n_atoms is None else n_atoms
    P = _separated_points(rng, n, min_sep)
    while True:
        M = rng.integers(-max_mult, max_mult + 1, size=(n, k))
        if np.any(M.sum(axis=0) != 0):
            continue
        if np.any(np.all(M == 0, axis=1)) or np.any(np.all(M == 0, axis=0)):
            continue
        return PointBoundary(P, M)


def random_instances(seed: int, trials: int, k: int, **kw) -> list[PointBoundary]:
    rng = np.random.default_rng([seed, k])
    return [random_boundary(rng, k, **kw) for _ in range(trials)]


def random_dipoles(rng: np.random.Generator, pairs: int | None = None, min_sep: float = 0.1) -> PointBoundary:
    """k = 1 boundary with unit positive and negative atoms in equal numbers."""
    m = int(rng.integers(1, 4)) if pairs is None else pairs
    P = _separated_points(rng, 2 * m, min_sep)
    M = np.r_[np.ones(m, int), -np.ones(m, int)][:, None]
    return PointBoundary(P, M)


def pentagon(k: int = 4, radius: float = 1.0) -> PointBoundary:
    """Regular pentagon: vertex i < 4 carries e_i and the last vertex carries -(1, 1, 1, 1)."""
    if k != 4:
        raise ValueError("the pentagon instance has k = 4")
    ang = np.pi / 2 + 2 * np.pi * np.arange(5) / 5
    P = radius * np.c_[np.cos(ang), np.sin(ang)]
    M = np.zeros((5, 4), int)
    M[:4] = np.eye(4, dtype=int)
    M[4] = -1
    return PointBoundary(P, M)


def steiner_triangle(side: float = 1.0) -> PointBoundary:
    """Equilateral triangle with multiplicities e_1, e_2, -(e_1 + e_2)."""
    P = side * np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    return PointBoundary(P, np.array([[1, 0], [0, 1], [-1, -1]]))


def single_dipole(length: float = 1.0, k: int = 1) -> PointBoundary:
    M = np.zeros((2, k), int)
    M[0] = -1
    M[1] = 1
    return PointBoundary(np.array([[0.0, 0.0], [length, 0.0]]), M)


NAMED = {"pentagon": pentagon, "triangle": steiner_triangle, "dipole": single_dipole}
