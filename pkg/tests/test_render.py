import xml.etree.ElementTree as ET

from vecplateau import instances
from vecplateau.plateau_integral import solve_integral
from vecplateau.plateau_normal import solve_normal
from vecplateau.render import render_solution


def test_svg_is_valid_and_deterministic():
    S = instances.pentagon()
    T = solve_integral(S, "inf").current
    a = render_solution(T, S, "inf", title="pentagon")
    assert a == render_solution(T, S, "inf", title="pentagon")
    root = ET.fromstring(a)
    ns = "{http://www.w3.org/2000/svg}"
    groups = [g.get("id") for g in root.iter(ns + "g")]
    assert groups[:4] == [f"component-{i}" for i in range(4)]
    assert len(root.findall(f".//{ns}circle")) == S.n


def test_flow_heat_map():
    S = instances.steiner_triangle()
    N = solve_normal(S, "inf", n=13, method="lp")
    root = ET.fromstring(render_solution(None, S, "inf", flow=N))
    ids = [g.get("id") for g in root.iter("{http://www.w3.org/2000/svg}g")]
    assert "flow-0" in ids and "flow-1" in ids
