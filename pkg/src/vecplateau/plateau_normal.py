"""The normal (real-coefficient) Plateau problem on a grid graph.

Competitors are flows z_e in R^k on the edges of a square grid with a 4-, 8-
or 16-neighbour stencil, with cost sum_e len_e ||z_e||_p and the divergence
constraint D z = b fixed by the snapped boundary atoms.

* For p = 1 or k = 1 the problem splits into scalar min-cost flows, solved
  exactly as transportation problems on grid shortest-path distances.
* For other p the default is a relaxed ADMM (Douglas-Rachford) splitting in
  which the divergence constraint is enforced by an exact projection (one
  factorised graph Laplacian); a diagonally preconditioned primal-dual
  (Chambolle-Pock) iteration is kept as an alternative.  Every reported value
  comes with a feasible primal flow (upper bound) and a scaled dual potential
  (lower bound).
* An LP formulation (HiGHS) is available for p in {1, inf} as an oracle.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.csgraph import dijkstra
from scipy.sparse.linalg import factorized, splu

from .currents import PointBoundary, PolyCurrent
from .lpalgebra import (NonconvergenceError, as_exponent, comass_bounds, holder_factor, lp_norm)
from .prox import prox_norm

log = logging.getLogger(__name__)

STENCILS = {
    4: [(1, 0), (0, 1)],
    8: [(1, 0), (0, 1), (1, 1), (1, -1)],
    16: [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)],
}


def stencil_distortion(stencil: int) -> float:
    """Worst ratio of grid path length to Euclidean length for long segments.

    A vector between two consecutive stencil directions at angle alpha costs
    at most 1/cos(alpha/2) times its length when written as a positive
    combination of the two.
    """
    offs = STENCILS[stencil]
    ang = np.sort(np.mod([math.atan2(dy, dx) for dx, dy in offs] + [math.atan2(-dy, -dx) for dx, dy in offs],
                         2 * math.pi))
    gaps = np.diff(np.append(ang, ang[0] + 2 * math.pi))
    return 1.0 / math.cos(gaps.max() / 2)


@dataclass(frozen=True)
class GridGraph:
    """Square grid of n x n nodes with spacing h starting at ``origin``."""

    origin: tuple
    h: float
    n: int
    stencil: int = 16

    def __post_init__(self):
        if self.stencil not in STENCILS:
            raise ValueError("stencil must be 4, 8 or 16")
        if self.n < 3:
            raise ValueError("grid needs at least 3 nodes per side")

    @classmethod
    def around(cls, S: PointBoundary, n: int = 64, stencil: int = 16, margin: float = 0.25) -> "GridGraph":
        """Grid over the bounding box of S enlarged by about margin * diameter on each side.

        The spacing is chosen so that the lower-left corner of the bounding box
        and the far end of its longer side are grid nodes, which removes the
        snapping error for atoms on those lines.
        """
        lo = S.positions.min(axis=0)
        hi = S.positions.max(axis=0)
        diam = max(S.diameter(), 1e-12)
        extent = float((hi - lo).max())
        if extent <= 0:
            return cls((float(lo[0]), float(lo[1])), 1.0, n, stencil)
        pad = int(round(margin * diam / extent * (n - 1) / (1 + 2 * margin * diam / extent)))
        pad = min(max(pad, 1), (n - 2) // 2)
        h = extent / (n - 1 - 2 * pad)
        # centre the shorter side within its padding
        shift = np.floor(((n - 1) * h - (hi - lo)) / (2 * h))
        origin = lo - shift * h
        return cls((float(origin[0]), float(origin[1])), h, n, stencil)

    def refined(self) -> "GridGraph":
        return GridGraph(self.origin, self.h * (self.n - 1) / (2 * self.n - 2), 2 * self.n - 1, self.stencil)

    @property
    def distortion(self) -> float:
        return stencil_distortion(self.stencil)

    @property
    def num_nodes(self) -> int:
        return self.n * self.n

    def node_xy(self, ids=None) -> np.ndarray:
        ids = np.arange(self.num_nodes) if ids is None else np.asarray(ids)
        i, j = np.divmod(ids, self.n)
        return np.stack([self.origin[0] + i * self.h, self.origin[1] + j * self.h], axis=-1)

    @cached_property
    def _edges(self):
        n = self.n
        idx = np.arange(n * n).reshape(n, n)
        T, H, L = [], [], []
        for dx, dy in STENCILS[self.stencil]:
            X, Y = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            X2, Y2 = X + dx, Y + dy
            ok = (X2 >= 0) & (X2 < n) & (Y2 >= 0) & (Y2 < n)
            T.append(idx[X[ok], Y[ok]])
            H.append(idx[X2[ok], Y2[ok]])
            L.append(np.full(int(ok.sum()), math.hypot(dx, dy) * self.h))
        return np.concatenate(T), np.concatenate(H), np.concatenate(L)

    @property
    def tails(self):
        return self._edges[0]

    @property
    def heads(self):
        return self._edges[1]

    @property
    def lengths(self):
        return self._edges[2]

    @property
    def num_edges(self) -> int:
        return len(self.tails)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """D with (D z)_v = inflow - outflow at node v."""
        E = self.num_edges
        rows = np.concatenate([self.heads, self.tails])
        cols = np.concatenate([np.arange(E), np.arange(E)])
        vals = np.concatenate([np.ones(E), -np.ones(E)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.num_nodes, E))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        V = self.num_nodes
        return sp.csr_matrix((np.concatenate([self.lengths, self.lengths]),
                              (np.concatenate([self.tails, self.heads]), np.concatenate([self.heads, self.tails]))),
                             shape=(V, V))

    @cached_property
    def edge_lookup(self) -> sp.csr_matrix:
        """Sparse V x V matrix holding +(e+1) for tail->head and -(e+1) for head->tail."""
        V, E = self.num_nodes, self.num_edges
        eid = np.arange(1, E + 1, dtype=float)
        return sp.csr_matrix((np.concatenate([eid, -eid]),
                              (np.concatenate([self.tails, self.heads]), np.concatenate([self.heads, self.tails]))),
                             shape=(V, V))

    def snap(self, S: PointBoundary):
        """Nearest-node indices of the atoms of S (None when two atoms collide)."""
        rel = (S.positions - np.asarray(self.origin)) / self.h
        ij = np.rint(rel).astype(int)
        if np.any(ij < 0) or np.any(ij >= self.n):
            raise ValueError("boundary atoms lie outside the grid")
        ids = ij[:, 0] * self.n + ij[:, 1]
        if len(np.unique(ids)) < len(ids):
            return None
        return ids

    def to_current(self, z, threshold: float = 1e-9, ring: str = "real") -> PolyCurrent:
        z = np.asarray(z)
        keep = np.flatnonzero(np.abs(z).max(axis=1) > threshold)
        used = np.unique(np.concatenate([self.tails[keep], self.heads[keep]]))
        remap = -np.ones(self.num_nodes, dtype=np.int64)
        remap[used] = np.arange(len(used))
        edges = np.stack([remap[self.tails[keep]], remap[self.heads[keep]]], axis=1)
        return PolyCurrent(self.node_xy(used), edges, z[keep], ring)


def snapped_grid(S: PointBoundary, n: int = 64, stencil: int = 16, max_doublings: int = 4):
    """Grid around S on which all atoms snap to distinct nodes, doubling n if needed."""
    grid = GridGraph.around(S, n, stencil)
    for _ in range(max_doublings + 1):
        ids = grid.snap(S)
        if ids is not None:
            return grid, ids
        grid = grid.refined()
    raise ValueError("atoms could not be separated by grid refinement")


def snap_error(S: PointBoundary, grid: GridGraph, ids, p) -> float:
    """Upper bound on |P(S) - P(S snapped)|: moving atom a costs ||m_a||_p |x_a - x'_a|."""
    moved = np.linalg.norm(S.positions - grid.node_xy(ids), axis=1)
    return float(np.sum(moved * lp_norm(S.mults.astype(float), p)))


@dataclass
class FlowSolution:
    """Grid flow with certified bounds for the discrete problem."""

    grid: GridGraph
    node_ids: np.ndarray
    z: np.ndarray = field(repr=False)
    value: float  # cost of z (feasible)
    lower: float  # certified lower bound of the discrete optimum
    iterations: int
    p: object
    snap_error: float = 0.0
    method: str = ""
    elapsed: float = 0.0
    boundary: PointBoundary | None = field(default=None, repr=False)

    @property
    def gap(self) -> float:
        return max(self.value - self.lower, 0.0)

    @property
    def distortion(self) -> float:
        return self.grid.distortion

    @property
    def continuum_lower(self) -> float:
        """Lower estimate of the continuum optimum (distortion and snapping removed)."""
        return max(self.lower / self.distortion - self.snap_error, 0.0)

    @property
    def continuum_upper(self) -> float:
        return self.value + self.snap_error

    @property
    def band(self) -> float:
        """Half-width of the interval attached to ``value`` as uncertainty."""
        return self.continuum_upper - self.continuum_lower

    def divergence_residual(self, b=None) -> float:
        if b is None:
            b = self.boundary_target()
        return float(np.abs(self.grid.incidence @ self.z - b).max())

    def to_current(self, threshold: float = 1e-9) -> PolyCurrent:
        return self.grid.to_current(self.z, threshold)

    def cleaned_current(self, rel_threshold: float = 1e-3) -> PolyCurrent:
        """Flow on the edges above ``rel_threshold`` times the peak, rebalanced to the exact boundary.

        The minimum-norm correction on the kept edges restores the snapped
        boundary up to rounding; a ValueError is raised if it cannot.
        """
        from scipy.sparse.linalg import lsqr

        mag = np.abs(self.z).max(axis=1)
        keep = np.flatnonzero(mag > rel_threshold * mag.max())
        B = self.grid.incidence[:, keep].tocsc()
        target = self.boundary_target()
        z = np.zeros_like(self.z)
        z[keep] = self.z[keep]
        resid = target - B @ z[keep]
        for i in range(z.shape[1]):
            z[keep, i] += lsqr(B, resid[:, i], atol=1e-15, btol=1e-15, iter_lim=20000)[0]
        err = float(np.abs(self.grid.incidence @ z - target).max())
        if err > 1e-8:
            raise ValueError(f"thresholded flow cannot be rebalanced (residual {err:.2e})")
        return self.grid.to_current(z, 0.0)

    def boundary_target(self) -> np.ndarray:
        return boundary_vector(self.grid, self.node_ids, self.z.shape[1], self.boundary)

    def summary(self) -> dict:
        return {"value": self.value, "lower": self.lower, "gap": self.gap,
                "distortion": self.distortion, "snap_error": self.snap_error,
                "distortion_band": [self.continuum_lower, self.continuum_upper],
                "iterations": self.iterations, "method": self.method, "n": self.grid.n,
                "stencil": self.grid.stencil, "p": str(as_exponent(self.p))}


def boundary_vector(grid: GridGraph, ids, k: int, S: PointBoundary | None):
    b = np.zeros((grid.num_nodes, k))
    if S is not None:
        np.add.at(b, ids, S.mults.astype(float))
    return b


# --------------------------------------------------------------------------
# exact scalar flows
# --------------------------------------------------------------------------


def _transport(C, supply, demand):
    """Min-cost transportation plan with integral data (HiGHS)."""
    ns, nt = C.shape
    A_eq = sp.vstack([sp.kron(sp.identity(ns), np.ones((1, nt))), sp.kron(np.ones((1, ns)), sp.identity(nt))])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([supply, demand]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise NonconvergenceError(f"transportation problem failed: {res.message}")
    return res.x.reshape(ns, nt), float(res.fun)


def scalar_flow(grid: GridGraph, b_col):
    """Exact min-cost flow for one component; returns (z, cost, potentials)."""
    src = np.flatnonzero(b_col < 0)  # net outflow: tail side, -m at the tail
    snk = np.flatnonzero(b_col > 0)
    z = np.zeros(grid.num_edges)
    if src.size == 0:
        return z, 0.0
    dist, pred = dijkstra(grid.adjacency, directed=False, indices=src, return_predecessors=True)
    C = dist[:, snk]
    plan, cost = _transport(C, -b_col[src], b_col[snk])
    lookup = grid.edge_lookup
    for a in range(len(src)):
        for c in range(len(snk)):
            amt = plan[a, c]
            if amt <= 1e-12:
                continue
            v = snk[c]
            while v != src[a]:
                u = pred[a, v]
                e = int(lookup[u, v])
                z[abs(e) - 1] += amt if e > 0 else -amt
                v = u
    return z, cost


def solve_decomposed(grid: GridGraph, b):
    """Sum of the exact per-component flows; optimal for p = 1 or k = 1."""
    k = b.shape[1]
    z = np.zeros((grid.num_edges, k))
    costs = np.zeros(k)
    for i in range(k):
        z[:, i], costs[i] = scalar_flow(grid, b[:, i])
    return z, costs


# --------------------------------------------------------------------------
# certificates
# --------------------------------------------------------------------------


class _Certifier:
    def __init__(self, grid: GridGraph, b, p):
        self.grid = grid
        self.b = b
        self.p = as_exponent(p)
        self.q = self.p.conjugate()
        D = grid.incidence
        L = (D @ D.T).tocsc()[1:, 1:]
        self._solve = factorized(L)

    def project(self, z):
        """Closest flow (Euclidean) satisfying D z = b."""
        D = self.grid.incidence
        r = D @ z - self.b
        y = np.zeros_like(r)
        for i in range(r.shape[1]):
            y[1:, i] = self._solve(r[1:, i])
        return z - D.T @ y

    def potentials(self, lam):
        """Least-squares phi with D^T phi = lam."""
        r = self.grid.incidence @ lam
        y = np.zeros_like(r)
        for i in range(r.shape[1]):
            y[1:, i] = self._solve(r[1:, i])
        return y

    def repair(self, z, eps=1e-3):
        """Feasible flow close to z, correcting mostly on edges that already carry flow."""
        D = self.grid.incidence
        r = D @ z - self.b
        wi = (np.abs(z).max(axis=1) + eps) / self.grid.lengths
        lu = splu((D @ sp.diags(wi) @ D.T).tocsc()[1:, 1:])
        y = np.zeros_like(r)
        y[1:] = lu.solve(r[1:])
        return z - wi[:, None] * (D.T @ y)

    def cost(self, z):
        return float(np.sum(self.grid.lengths * lp_norm(z, self.p)))

    def dual_value(self, phi):
        """Lower bound from potentials phi after scaling into the feasible set."""
        g = self.grid.incidence.T @ phi
        c = float(np.max(lp_norm(g, self.q) / self.grid.lengths))
        return -float(np.sum(phi * self.b)) / max(c, 1.0)


# --------------------------------------------------------------------------
# solvers
# --------------------------------------------------------------------------


def _pdhg(grid, b, p, z0, lower0, tol, max_iter, check_every=50, time_limit=None):
    """Preconditioned primal-dual iterations with adaptive primal/dual balancing."""
    D = grid.incidence
    Dt = D.T.tocsr()
    h = grid.h
    lens = grid.lengths / h  # work in units of the grid spacing
    deg = np.asarray(abs(D).sum(axis=1)).ravel()
    cert = _Certifier(grid, b, p)
    z = z0.copy()
    phi = np.zeros_like(b)
    theta = 1.0  # tau = theta/2, sigma = 1/(theta deg)
    best_upper = cert.cost(z0)
    best_z = z0.copy()
    best_lower = lower0
    t0 = time.perf_counter()
    it = 0
    for it in range(1, max_iter + 1):
        tau = 0.5 * theta
        sigma = 1.0 / (theta * deg)
        z_new = prox_norm(z - tau * (Dt @ phi), tau * lens, p)
        zbar = 2 * z_new - z
        dphi = sigma[:, None] * (D @ zbar - b)
        phi = phi + dphi
        if it % check_every == 0:
            # residual balancing (primal feasibility vs dual stationarity)
            pr = np.linalg.norm(D @ z_new - b)
            dr = np.linalg.norm((z - z_new) / tau - Dt @ dphi) if tau > 0 else 0.0
            z = z_new
            zp = cert.project(z)
            up = cert.cost(zp)
            if up < best_upper:
                best_upper, best_z = up, zp
            lo = cert.dual_value(phi * h)
            best_lower = max(best_lower, lo)
            if best_upper - best_lower <= tol * best_upper:
                break
            if pr > 2 * dr:
                theta *= 0.7
            elif dr > 2 * pr:
                theta /= 0.7
            if time_limit is not None and time.perf_counter() - t0 > time_limit:
                break
        else:
            z = z_new
    return best_z, best_upper, best_lower, it


def _admm(grid, b, p, z0, lower0, tol, max_iter, check_every=25, time_limit=None, relax=1.6):
    """Relaxed ADMM on  min f(y) + indicator(D z = b)  subject to z = y."""
    h = grid.h
    lens = grid.lengths / h
    cert = _Certifier(grid, b, p)
    y = z0.copy()
    u = np.zeros_like(y)
    rho = 1.0
    best_upper, best_z = cert.cost(z0), z0.copy()
    best_lower = lower0
    t0 = time.perf_counter()
    it = 0
    for it in range(1, max_iter + 1):
        z = cert.project(y - u)
        y_old = y
        zh = relax * z + (1 - relax) * y_old
        y = prox_norm(zh + u, lens / rho, p)
        u = u + zh - y
        if it % check_every:
            continue
        for cand in (cert.project(y), cert.repair(y)):
            c = cert.cost(cand)
            if c < best_upper:
                best_upper, best_z = c, cand
        phi = cert.potentials(rho * u / h)
        best_lower = max(best_lower, cert.dual_value(phi), cert.dual_value(-phi))
        if best_upper - best_lower <= tol * best_upper:
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            break
        r = np.linalg.norm(z - y)
        s = rho * np.linalg.norm(y - y_old)
        if r > 3 * s:
            rho *= 1.5
            u /= 1.5
        elif s > 3 * r:
            rho /= 1.5
            u *= 1.5
    return best_z, best_upper, best_lower, it


def _lp(grid, b, p):
    """Exact LP for p in {1, inf} with HiGHS (independent oracle, small grids)."""
    p = as_exponent(p)
    D = grid.incidence
    V, E = D.shape
    k = b.shape[1]
    L = grid.lengths
    Ik = sp.identity(k, format="csr")
    # variables: z (E*k, row-major e then i), t (E) for inf or (E*k) for p = 1
    Aeq = sp.kron(D, Ik, format="csr")
    beq = b.reshape(-1)
    if p.is_inf:
        T = sp.kron(sp.identity(E), np.ones((k, 1)), format="csr")
        nt = E
        c = np.concatenate([np.zeros(E * k), L])
    elif p == 1:
        T = sp.identity(E * k, format="csr")
        nt = E * k
        c = np.concatenate([np.zeros(E * k), np.repeat(L, k)])
    else:
        raise ValueError("the LP oracle handles p in {1, inf} only")
    Zk = sp.identity(E * k, format="csr")
    Aub = sp.vstack([sp.hstack([Zk, -T]), sp.hstack([-Zk, -T])], format="csr")
    bub = np.zeros(2 * E * k)
    Aeq_full = sp.hstack([Aeq, sp.csr_matrix((V * k, nt))], format="csr")
    res = linprog(c, A_ub=Aub, b_ub=bub, A_eq=Aeq_full, b_eq=beq,
                  bounds=[(None, None)] * (E * k) + [(0, None)] * nt, method="highs")
    if res.status != 0:
        raise NonconvergenceError(f"LP oracle failed: {res.message}")
    z = res.x[: E * k].reshape(E, k)
    return z, float(res.fun)


def solve_normal(S: PointBoundary, p, grid: GridGraph | None = None, n: int = 64, stencil: int = 16,
                 tol: float = 1e-4, max_iter: int = 20000, method: str = "auto",
                 time_limit: float | None = None, strict: bool = True) -> FlowSolution:
    """Grid approximation of the real-coefficient Plateau problem with boundary S.

    ``method`` is one of "auto", "exact" (p = 1 or k = 1), "admm", "pdhg"
    or "lp" (p in {1, inf}).
    With ``strict`` a NonconvergenceError is raised when the relative gap
    exceeds ``tol``.
    """
    S.validate()
    p = as_exponent(p)
    t0 = time.perf_counter()
    if grid is None:
        grid, ids = snapped_grid(S, n, stencil)
    else:
        ids = grid.snap(S)
        if ids is None:
            raise ValueError("atoms collide on the given grid")
    k = S.k
    b = boundary_vector(grid, ids, k, S)
    serr = snap_error(S, grid, ids, p)
    decomposable = p == 1 or k == 1
    if method == "auto":
        method = "exact" if decomposable else "admm"
    if method == "exact":
        if not decomposable:
            raise ValueError("exact flow solver needs p = 1 or k = 1")
        z, costs = solve_decomposed(grid, b)
        val = float(np.sum(grid.lengths * lp_norm(z, p)))
        lower = float(lp_norm(costs, p)) if k > 1 else float(costs[0])
        lower = min(lower, val)
        return FlowSolution(grid, ids, z, val, lower, 0, p, serr, "exact", time.perf_counter() - t0, S)
    if method == "lp":
        z, val = _lp(grid, b, p)
        return FlowSolution(grid, ids, z, val, val, 0, p, serr, "lp", time.perf_counter() - t0, S)
    if method not in ("admm", "pdhg"):
        raise ValueError(f"unknown method {method!r}")
    z0, costs = solve_decomposed(grid, b)
    # the ||.||_p norm of the component costs is a lower bound (Minkowski)
    lower0 = float(lp_norm(costs, p))
    runner = _admm if method == "admm" else _pdhg
    z, val, lower, its = runner(grid, b, p, z0, lower0, tol, max_iter, time_limit=time_limit)
    sol = FlowSolution(grid, ids, z, val, min(lower, val), its, p, serr, method, time.perf_counter() - t0, S)
    if strict and sol.gap > tol * val:
        raise NonconvergenceError(f"primal-dual gap {sol.gap:.3e} above tolerance after {its} iterations", sol.gap)
    return sol


# --------------------------------------------------------------------------
# calibrations
# --------------------------------------------------------------------------


@dataclass
class CalibrationForm:
    """Piecewise-constant (R^k)*-valued 1-form on a triangulation."""

    points: np.ndarray  # (P, 2)
    triangles: np.ndarray  # (F, 3)
    omega: np.ndarray  # (F, k, 2)
    current: PolyCurrent
    p: object = 2

    def __post_init__(self):
        self.points = np.asarray(self.points, float)
        self.triangles = np.asarray(self.triangles, int)
        self.omega = np.asarray(self.omega, float)
        if self.omega.ndim == 2:
            self.omega = self.omega[:, None, :]

    @classmethod
    def constant(cls, w, box, current, p=2):
        """A constant form on the two-triangle subdivision of an axis box."""
        (x0, y0), (x1, y1) = box
        pts = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], float)
        tris = np.array([[0, 1, 2], [0, 2, 3]])
        w = np.atleast_2d(np.asarray(w, float))
        return cls(pts, tris, np.stack([w, w]), current, p)

    def locate(self, x, tol: float = 1e-12):
        """Indices of triangles containing x (closed triangles, so faces give two)."""
        P = self.points[self.triangles]
        a, b, c = P[:, 0], P[:, 1], P[:, 2]
        M = np.stack([b - a, c - a], axis=-1)
        lam = np.linalg.solve(M, (np.asarray(x) - a)[..., None])[..., 0]
        l0 = 1 - lam.sum(axis=1)
        inside = (lam >= -tol).all(axis=1) & (l0 >= -tol)
        return np.flatnonzero(inside)


@dataclass
class CalibrationReport:
    valid: bool
    certified_value: float | None = None
    condition: str | None = None
    location: object = None
    magnitude: float = 0.0

    def to_dict(self):
        loc = self.location
        if isinstance(loc, np.ndarray):
            loc = loc.tolist()
        return {"valid": self.valid, "certified_value": self.certified_value,
                "condition": self.condition, "location": loc, "magnitude": self.magnitude}


def check_calibration(cal: CalibrationForm, atol: float = 1e-9) -> CalibrationReport:
    """Verify the calibration conditions; the first violation found is reported."""
    p = as_exponent(cal.p)
    T = cal.current
    # (i) equality on T, sampled at interior points of every edge
    for e, ((A, B, m), tau) in enumerate(zip(T.segments(), T.tangents())):
        for s in (0.25, 0.5, 0.75):
            x = A + s * (B - A)
            tris = cal.locate(x)
            if tris.size == 0:
                return CalibrationReport(False, None, "support", x, float("nan"))
            w = cal.omega[tris[0]]
            pairing = float(np.dot(np.asarray(m, float), w @ tau))
            err = abs(pairing - float(lp_norm(np.asarray(m, float), p)))
            if err > atol:
                return CalibrationReport(False, None, "(i) equality on the current", {"edge": e, "point": x.tolist()}, err)
    # (ii) closedness: tangential traces agree across interior faces
    faces: dict = {}
    for f, tri in enumerate(cal.triangles):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            faces.setdefault((min(a, b), max(a, b)), []).append(f)
    for (a, b), fs in faces.items():
        if len(fs) < 2:
            continue
        t = cal.points[b] - cal.points[a]
        t = t / np.linalg.norm(t)
        d = float(np.abs(cal.omega[fs[0]] @ t - cal.omega[fs[1]] @ t).max())
        if d > atol:
            return CalibrationReport(False, None, "(ii) closedness", {"face": [int(a), int(b)]}, d)
    # (iii) comass at most one on every triangle
    for f in range(len(cal.triangles)):
        cb = comass_bounds(cal.omega[f], p)
        if cb.upper > 1 + atol:
            return CalibrationReport(False, None, "(iii) comass", {"triangle": f}, cb.upper - 1)
    return CalibrationReport(True, T.mass(p))


# --------------------------------------------------------------------------
# p sweeps
# --------------------------------------------------------------------------


@dataclass
class SweepResult:
    k: int
    rows: list  # (p, FlowSolution)
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def table(self):
        return [{"p": str(p), "value": s.value, "lower": s.lower, "gap": s.gap} for p, s in self.rows]


def check_p_monotone(k: int, rows, slack=None) -> list:
    """Monotone decrease in p and P_inf <= P_p <= k^(1/p) P_inf for (p, value, tol) rows."""
    out = []
    for (p1, v1, t1), (p2, v2, t2) in zip(rows[:-1], rows[1:]):
        if v2 > v1 + 2 * max(t1, t2):
            out.append(f"value increases from p={p1} ({v1:.6g}) to p={p2} ({v2:.6g})")
    infs = [r for r in rows if as_exponent(r[0]).is_inf]
    if infs:
        _, vinf, tinf = infs[0]
        for p, v, t in rows:
            # reverse Holder between p and inf: ||z||_p <= k^(1/p) ||z||_inf
            c = holder_factor(k, as_exponent(p).conjugate())
            if v < vinf - 2 * max(t, tinf):
                out.append(f"P_p below P_inf at p={p}")
            if v > c * vinf + 2 * max(t, tinf) * c:
                out.append(f"P_p above k^(1/p) P_inf at p={p}")
    return out


def sweep_p(S: PointBoundary, plist, grid: GridGraph | None = None, **kw) -> SweepResult:
    """Solve on a common grid for each p (ascending) and check monotonicity and sandwich."""
    ps = [as_exponent(p) for p in plist]
    if ps != sorted(ps):
        raise ValueError("plist must be sorted ascending")
    if grid is None:
        grid, _ = snapped_grid(S, kw.pop("n", 64), kw.pop("stencil", 16))
    rows = [(p, solve_normal(S, p, grid=grid, **kw)) for p in ps]
    viol = check_p_monotone(S.k, [(p, s.value, s.gap) for p, s in rows])
    return SweepResult(S.k, rows, viol)
