"""Deterministic SVG rendering of boundaries, networks and grid flows."""

from __future__ import annotations

import numpy as np

from .currents import PointBoundary, PolyCurrent
from .lpalgebra import lp_norm

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def _fmt(x: float) -> str:
    return f"{x:.4f}".rstrip("0").rstrip(".")


class _Frame:
    def __init__(self, points, size=480, pad=40):
        pts = np.asarray(points, float).reshape(-1, 2)
        lo = pts.min(axis=0) if len(pts) else np.zeros(2)
        hi = pts.max(axis=0) if len(pts) else np.ones(2)
        span = max(float((hi - lo).max()), 1e-9)
        self.lo, self.span, self.size, self.pad = lo, span, size, pad
        self.scale = (size - 2 * pad) / span

    def xy(self, p):
        x = self.pad + (p[0] - self.lo[0]) * self.scale
        y = self.size - self.pad - (p[1] - self.lo[1]) * self.scale  # y axis points up
        return _fmt(x), _fmt(y)


def render_solution(current: PolyCurrent | None, boundary: PointBoundary, p="inf", style: str = "layers",
                    flow=None, title: str | None = None, size: int = 480) -> str:
    """SVG document for a network (one stroke layer per component) and its boundary atoms.

    Edge widths are proportional to ||m_e||_p (style "norm") or to |m_{e,i}|
    per component layer (style "layers").  A grid flow, when given, is drawn
    as a heat map of ||z_e||_p per component.
    """
    pts = [boundary.positions]
    if current is not None and len(current.edges):
        pts.append(current.vertices)
    frame = _Frame(np.vstack(pts), size)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">', f'<rect width="{size}" height="{size}" fill="white"/>']
    if title:
        out.append(f'<text x="8" y="16" font-family="sans-serif" font-size="12">{title}</text>')
    if flow is not None:
        out += _flow_layers(flow, frame)
    if current is not None and len(current.edges):
        M = np.asarray(current.mults, float)
        wmax = max(float(np.abs(M).max()), 1e-12)
        if style == "norm":
            w = lp_norm(M, p)
            out.append('<g id="network" stroke="black" stroke-linecap="round">')
            for (a, b), we in zip(current.edges, w):
                x1, y1 = frame.xy(current.vertices[a])
                x2, y2 = frame.xy(current.vertices[b])
                out.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke-width="{_fmt(1 + 5 * we / wmax)}"/>')
            out.append("</g>")
        else:
            for i in range(current.k):
                col = PALETTE[i % len(PALETTE)]
                out.append(f'<g id="component-{i}" stroke="{col}" stroke-opacity="0.6" stroke-linecap="round">')
                for (a, b), m in zip(current.edges, M[:, i]):
                    if m == 0:
                        continue
                    x1, y1 = frame.xy(current.vertices[a])
                    x2, y2 = frame.xy(current.vertices[b])
                    out.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                               f'stroke-width="{_fmt(1 + 5 * abs(m) / wmax)}"/>')
                out.append("</g>")
    out.append('<g id="atoms" font-family="sans-serif" font-size="10">')
    for pos, m in zip(boundary.positions, boundary.mults):
        x, y = frame.xy(pos)
        fill = "black" if np.sum(m) >= 0 else "white"
        out.append(f'<circle cx="{x}" cy="{y}" r="4" fill="{fill}" stroke="black"/>')
        label = "(" + ",".join(str(int(v)) if float(v).is_integer() else _fmt(float(v)) for v in m) + ")"
        out.append(f'<text x="{_fmt(float(x) + 6)}" y="{_fmt(float(y) - 6)}">{label}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _flow_layers(flow, frame):
    """Heat map of per-component edge flow magnitudes of a FlowSolution."""
    grid = flow.grid
    xy = grid.node_xy()
    z = np.abs(flow.z)
    out = []
    for i in range(z.shape[1]):
        col = PALETTE[i % len(PALETTE)]
        zmax = float(z[:, i].max())
        if zmax <= 0:
            continue
        out.append(f'<g id="flow-{i}" stroke="{col}">')
        for e in np.flatnonzero(z[:, i] > 1e-3 * zmax):
            x1, y1 = frame.xy(xy[grid.tails[e]])
            x2, y2 = frame.xy(xy[grid.heads[e]])
            out.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                       f'stroke-opacity="{_fmt(0.15 + 0.85 * z[e, i] / zmax)}" stroke-width="2"/>')
        out.append("</g>")
    return out
