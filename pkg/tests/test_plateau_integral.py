import math

import numpy as np
import pytest

from vecplateau import instances
from vecplateau.currents import PointBoundary
from vecplateau.plateau_integral import (component_transport_costs, count_full_topologies, decomposed_current,
                                         full_topologies, grid_local_search_oracle, solve_integral,
                                         verify_theoremE)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_full_topology_count(n):
    # (2n - 5)!! full Steiner topologies on n terminals
    expected = math.prod(range(1, 2 * n - 4, 2))
    assert count_full_topologies(n) == expected
    assert len(list(full_topologies(n))) == expected


def test_triangle_values():
    S = instances.steiner_triangle()
    assert solve_integral(S, 1).value == pytest.approx(2.0, abs=1e-9)
    assert solve_integral(S, "inf").value == pytest.approx(math.sqrt(3), abs=1e-4)
    assert solve_integral(S, 2).value == pytest.approx(1.931851652578176, rel=1e-6)


def test_solution_has_prescribed_boundary():
    S = instances.pentagon()
    sol = solve_integral(S, "inf")
    assert sol.current.boundary().merged().equals(S.merged())
    assert sol.value == pytest.approx(sol.current.mass("inf"), rel=1e-12)
    assert sol.value == pytest.approx(4.574329, abs=1e-5)


def test_p1_equals_component_transport():
    for S in instances.random_instances(3, 5, 3):
        assert solve_integral(S, 1).value == pytest.approx(component_transport_costs(S).sum(), rel=1e-9)
        assert decomposed_current(S).boundary().merged().equals(S.merged())


def test_values_decrease_in_p():
    S = instances.random_instances(5, 1, 3)[0]
    vals = [solve_integral(S, p).value for p in ("1", "3/2", "2", "3", "inf")]
    assert all(a >= b - 1e-7 for a, b in zip(vals, vals[1:]))
    assert vals[0] <= 3 * vals[-1] + 1e-7


def test_grid_oracle_close_to_exact():
    S = instances.steiner_triangle()
    o = grid_local_search_oracle(S, "inf", n=64)
    assert abs(o.value - math.sqrt(3)) / math.sqrt(3) <= 0.05


def test_zero_boundary():
    S = PointBoundary(np.zeros((0, 2)), np.zeros((0, 2)))
    assert solve_integral(S, 2).value == 0.0


def test_theorem_e_bound_holds():
    S = instances.random_instances(1, 1, 2)[0]
    assert verify_theoremE(S, "inf", grid_n=17).ok
