"""The integral Plateau problem for small point boundaries.

Competitors are finite networks with multiplicities in Z^k.  For p = 1 (or
k = 1) the problem splits into k independent transport problems and is solved
exactly.  Otherwise every full Steiner topology on the atoms is enumerated; the
multiplicity of each tree edge is forced by Kirchhoff's law, and branch points
are placed by a Gauss-Seidel Weiszfeld iteration followed by an exact conic
solve for the most promising topologies.  For a fixed topology the cost is
convex in the branch-point positions, so the polish step returns that
topology's optimum.

Independent upper bounds come from :func:`grid_local_search_oracle`, which
routes integer flows on a grid graph and improves them by merging subsets of
terminals at shared junctions.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import warnings
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.csgraph import dijkstra

from .currents import PointBoundary, PolyCurrent, expand_atoms
from .lpalgebra import NonconvergenceError, as_exponent, lp_norm, theorem_e_factor

log = logging.getLogger(__name__)

DEFAULT_MAX_TERMINALS = 8


@dataclass
class IntegralSolution:
    current: PolyCurrent
    value: float
    topology_id: tuple | str
    iterations: int = 0
    method: str = ""
    candidates: int = 0
    elapsed: float = 0.0

    def summary(self) -> dict:
        return {"value": self.value, "topology": str(self.topology_id), "method": self.method,
                "iterations": self.iterations, "candidates": self.candidates,
                "current": self.current.to_dict()}


# --------------------------------------------------------------------------
# decomposed (per-component) solution
# --------------------------------------------------------------------------


def transport_plan(P, mp, N, mn):
    """Integral optimal transport from atoms P (masses mp) to atoms N (masses mn).

    The transportation polytope has integral vertices, so the simplex solution
    is integral for integral data.
    """
    P = np.asarray(P, float).reshape(-1, 2)
    N = np.asarray(N, float).reshape(-1, 2)
    if len(P) == 0:
        return np.zeros((0, len(N))), 0.0
    C = np.linalg.norm(P[:, None, :] - N[None, :, :], axis=2)
    ns, nt = C.shape
    A = sp.vstack([sp.kron(sp.identity(ns), np.ones((1, nt))), sp.kron(np.ones((1, ns)), sp.identity(nt))])
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([mp, mn]).astype(float), bounds=(0, None),
                  method="highs-ds")
    if res.status != 0:
        raise NonconvergenceError(f"transport problem failed: {res.message}")
    plan = res.x.reshape(ns, nt)
    if np.allclose(plan, np.round(plan), atol=1e-9):
        plan = np.round(plan)
    return plan, float(np.sum(plan * C))


def component_transport_costs(S: PointBoundary) -> np.ndarray:
    """Optimal transport cost of each scalar component S_i (minimal connection)."""
    costs = np.zeros(S.k)
    for i in range(S.k):
        pos, m = S.component(i)
        _, costs[i] = transport_plan(pos[m < 0], -m[m < 0], pos[m > 0], m[m > 0])
    return costs


def decomposed_current(S: PointBoundary) -> PolyCurrent:
    """Union of straight transport segments, one family per component."""
    segs = []
    for i in range(S.k):
        pos, m = S.component(i)
        src, snk = pos[m < 0], pos[m > 0]
        plan, _ = transport_plan(src, -m[m < 0], snk, m[m > 0])
        for a, b in zip(*np.nonzero(plan > 0.5)):
            mult = np.zeros(S.k, dtype=np.int64)
            mult[i] = int(round(plan[a, b]))
            segs.append((src[a], snk[b], mult))
    if not segs:
        return PolyCurrent.empty(S.k)
    return PolyCurrent.from_segments(segs, ring="integer").planarized()


# --------------------------------------------------------------------------
# Steiner topologies
# --------------------------------------------------------------------------


def full_topologies(n: int):
    """Yield (id, edges) for all full Steiner topologies on n >= 3 terminals.

    Terminals are 0..n-1, Steiner points n..2n-3.  Topologies are grown by
    subdividing an edge and attaching the next terminal; the id records the
    chosen edge indices, so ids are ordered lexicographically.
    """
    if n < 3:
        raise ValueError("full topologies need at least three terminals")

    def grow(edges, j, ident):
        if j == n:
            yield ident, edges
            return
        s = n + (j - 2)
        for idx, (a, b) in enumerate(edges):
            new = edges[:idx] + edges[idx + 1:] + [(a, s), (s, b), (j, s)]
            yield from grow(new, j + 1, ident + (idx,))

    yield from grow([(0, n), (1, n), (2, n)], 3, ())


def count_full_topologies(n: int) -> int:
    return 1 if n <= 3 else math.prod(range(1, 2 * n - 4, 2))


def edge_flows(n_term: int, edges, mults):
    """Multiplicity of each tree edge (oriented a -> b) forced by Kirchhoff's law.

    ``mults`` holds the terminal multiplicities (boundary convention: the
    head of a unit edge carries +1).  Removing the edge leaves the component of
    b; the flow a -> b equals the total multiplicity found on b's side.
    """
    nv = 2 * n_term - 2
    adj = [[] for _ in range(nv)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    k = mults.shape[1]
    out = np.zeros((len(edges), k), dtype=mults.dtype)
    for e, (a, b) in enumerate(edges):
        seen = {a, b}
        stack = [b]
        tot = np.zeros(k, dtype=mults.dtype)
        while stack:
            v = stack.pop()
            if v < n_term:
                tot += mults[v]
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        out[e] = tot
    return out


def _weiszfeld_batch(X, nbr, wts, n_term, eps, max_iter=500, rtol=1e-8, check=True):
    """Gauss-Seidel Weiszfeld for many topologies at once.

    X: (T, V, 2) positions (terminals fixed), nbr: (T, s, 3) neighbour ids of
    each Steiner point, wts: (T, s, 3) edge weights.  Returns positions, the
    regularised objective and iteration count.
    """
    T, V, _ = X.shape
    ns = nbr.shape[1]
    ar = np.arange(T)

    def objective(X):
        tot = np.zeros(T)
        for s in range(ns):
            y = X[:, n_term + s]
            for j in range(3):
                nb = X[ar, nbr[:, s, j]]
                # each Steiner-Steiner edge is listed twice; halve those terms
                half = np.where(nbr[:, s, j] >= n_term, 0.5, 1.0)
                tot += half * wts[:, s, j] * np.sqrt(np.sum((y - nb) ** 2, axis=1) + eps * eps)
        return tot

    f = objective(X)
    it = 0
    for it in range(1, max_iter + 1):
        for s in range(ns):
            nb = X[ar[:, None], nbr[:, s]]  # (T, 3, 2)
            y = X[:, n_term + s]
            w = wts[:, s]
            diff = nb - y[:, None, :]
            dist = np.linalg.norm(diff, axis=2)
            # vertex optimality: y sticks to neighbour j when the pull of the others is at most w_j
            snapped = np.zeros(T, dtype=bool)
            newy = y.copy()
            for j in range(3):
                others = [l for l in range(3) if l != j]
                vec = nb[:, others] - nb[:, j][:, None, :]
                dl = np.linalg.norm(vec, axis=2)
                unit = np.where(dl[..., None] > 0, vec / np.where(dl > 0, dl, 1.0)[..., None], 0.0)
                pull = np.linalg.norm(np.einsum("tl,tld->td", w[:, others], unit), axis=1)
                ok = (pull <= w[:, j]) & ~snapped & (w[:, j] > 0)
                newy[ok] = nb[ok, j]
                snapped |= ok
            inv = w / np.sqrt(dist**2 + eps * eps)
            den = inv.sum(axis=1)
            free = ~snapped & (den > 0)
            newy[free] = np.einsum("tj,tjd->td", inv[free], nb[free]) / den[free, None]
            X[:, n_term + s] = newy
        f_new = objective(X)
        if check:
            # snapping to a neighbour is a descent step for the unregularised cost,
            # so allow for the regularisation offset
            slack = 1e-10 * np.maximum(f, 1.0) + 4 * eps * wts.sum(axis=(1, 2))
            if np.any(f_new > f + slack):
                raise AssertionError("Weiszfeld objective increased")
        done = np.all(f - f_new <= rtol * np.maximum(f_new, 1e-300))
        f = f_new
        if done:
            break
    return X, f, it


def _polish(cands, n_term):
    """Exact optima of sum w_e |x_a - x_b| over the Steiner positions, one SOCP for all candidates.

    ``cands`` holds (points, edges, weights) triples; the blocks are independent,
    so minimising the sum optimises every candidate.
    """
    import cvxpy as cp

    def cost(P, edges, weights):
        return float(sum(w * np.linalg.norm(P[a] - P[b]) for (a, b), w in zip(edges, weights)))

    ns = len(cands[0][0]) - n_term
    if ns == 0:
        return [(P, cost(P, e, w)) for P, e, w in cands]
    Ys = [cp.Variable((ns, 2)) for _ in cands]
    terms = []
    for Y, (P, edges, weights) in zip(Ys, cands):
        Y.value = P[n_term:]

        def pos(v, P=P, Y=Y):
            return P[v] if v < n_term else Y[v - n_term]

        terms += [w * cp.norm(pos(a) - pos(b), 2) for (a, b), w in zip(edges, weights) if w > 0]
    prob = cp.Problem(cp.Minimize(cp.sum(cp.hstack(terms))))
    with warnings.catch_warnings():
        # the Weiszfeld point is kept whenever the conic answer is not better
        warnings.simplefilter("ignore", UserWarning)
        try:
            prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
        except cp.error.SolverError:
            prob.solve(solver=cp.CLARABEL)
    out = []
    for Y, (P, edges, weights) in zip(Ys, cands):
        Q = P.copy()
        if Y.value is not None:
            Q[n_term:] = Y.value
        out.append((Q, cost(Q, edges, weights)))
    return out


def _embed(points, edges, flows, n_term, diam, merge_rtol=1e-6) -> PolyCurrent:
    """Turn an optimised tree into a planar integer current, merging coincident nodes."""
    pts = points.copy()
    tol = merge_rtol * max(diam, 1e-300)
    # snap Steiner points onto terminals or earlier Steiner points when they coincide
    for s in range(n_term, len(pts)):
        for v in range(s):
            if np.linalg.norm(pts[s] - pts[v]) <= tol:
                pts[s] = pts[v]
                break
    segs = [(pts[a], pts[b], flows[e]) for e, (a, b) in enumerate(edges)
            if np.any(flows[e] != 0) and np.linalg.norm(pts[a] - pts[b]) > 0]
    k = flows.shape[1]
    if not segs:
        return PolyCurrent.empty(k)
    return PolyCurrent.from_segments(segs, ring="integer", merge_tol=tol).planarized()


def solve_integral(S: PointBoundary, p, max_terminals: int = DEFAULT_MAX_TERMINALS, polish_top: int = 4,
                   polish_rtol: float = 0.1, seed: int = 0) -> IntegralSolution:
    """Best integral network with boundary S (forest ansatz, exact for p = 1 or k = 1)."""
    t0 = time.perf_counter()
    S.validate()
    p = as_exponent(p)
    S = S.merged()
    n, k = S.n, S.k
    if n == 0:
        return IntegralSolution(PolyCurrent.empty(k), 0.0, "empty", method="trivial")
    if n > max_terminals:
        raise ValueError(f"{n} terminals exceed the limit of {max_terminals}")
    if k > 8:
        raise ValueError("at most 8 components are supported")
    dec = decomposed_current(S)
    dec_val = dec.mass(p)
    if p == 1 or k == 1:
        return IntegralSolution(dec, dec_val, "decomposed", method="transport",
                                elapsed=time.perf_counter() - t0)
    best = (dec_val, ("decomposed",), dec, "transport")
    if n >= 3:
        best = _search_topologies(S, p, best, polish_top, polish_rtol)
    val, tid, cur, method = best
    assert cur.boundary().equals(S), "embedded network has the wrong boundary"
    return IntegralSolution(cur, cur.mass(p), tid, method=method,
                            candidates=count_full_topologies(n) + 1, elapsed=time.perf_counter() - t0)


def _search_topologies(S, p, best, polish_top, polish_rtol, chunk=4096, max_polish=128):
    n, k = S.n, S.k
    diam = S.diameter()
    eps = 1e-9 * diam
    mults = S.mults
    topo_ids, topo_edges, W, NB, flows_all = [], [], [], [], []
    for tid, edges in full_topologies(n):
        flows = edge_flows(n, edges, mults)
        w = lp_norm(flows.astype(float), p)
        topo_ids.append(tid)
        topo_edges.append(edges)
        flows_all.append(flows)
        nbr = [[] for _ in range(n - 2)]
        wts = [[] for _ in range(n - 2)]
        for (a, b), we in zip(edges, w):
            if a >= n:
                nbr[a - n].append(b)
                wts[a - n].append(we)
            if b >= n:
                nbr[b - n].append(a)
                wts[b - n].append(we)
        NB.append(nbr)
        W.append(wts)
    NB = np.array(NB, dtype=np.int64)
    W = np.array(W, dtype=float)
    T = len(topo_ids)
    vals = np.empty(T)
    Xall = np.empty((T, 2 * n - 2, 2))
    centroid = S.positions.mean(axis=0)
    for lo in range(0, T, chunk):
        sl = slice(lo, min(T, lo + chunk))
        m = sl.stop - sl.start
        X = np.empty((m, 2 * n - 2, 2))
        X[:, :n] = S.positions
        # start every Steiner point at the weighted centre of its terminal neighbours or the centroid
        X[:, n:] = _initial_steiner(S.positions, NB[sl], n, diam)
        X, f, _ = _weiszfeld_batch(X, NB[sl], W[sl], n, eps)
        Xall[sl] = X
        vals[sl] = _tree_costs(X, [topo_edges[i] for i in range(sl.start, sl.stop)], W[sl], NB[sl], n,
                               [lp_norm(flows_all[i].astype(float), p) for i in range(sl.start, sl.stop)])
    order = np.lexsort((np.arange(T), vals))
    cutoff = vals[order[0]] * (1 + polish_rtol)
    chosen = [i for i in order[:max(polish_top, 1)]] + [i for i in order[polish_top:] if vals[i] <= cutoff][:max_polish]
    polished = _polish([(Xall[i].copy(), topo_edges[i], lp_norm(flows_all[i].astype(float), p)) for i in chosen], n)
    results = []
    for i, (pts, val) in zip(chosen, polished):
        if val > vals[i]:
            pts, val = Xall[i], vals[i]
        results.append((val, topo_ids[i], i, pts))
    results.sort(key=lambda r: (r[0], r[1]))
    top = results[0][0]
    ties = [r for r in results if r[0] <= top * (1 + 1e-12)]
    val, tid, i, pts = min(ties, key=lambda r: r[1])
    if val < best[0] * (1 - 1e-12):
        cur = _embed(pts, topo_edges[i], flows_all[i], n, diam)
        best = (cur.mass(p), tid, cur, "steiner")
    return best


def _initial_steiner(P, nbr, n, diam):
    """Distinct starting points: mean of the terminal neighbours (or the centroid), slightly spread.

    Coincident starts let neighbouring Steiner points lock onto each other
    under the vertex-snapping rule.
    """
    T, ns, _ = nbr.shape
    centroid = P.mean(axis=0)
    out = np.empty((T, ns, 2))
    for s in range(ns):
        ids = nbr[:, s]
        term = ids < n
        cnt = term.sum(axis=1)
        tot = np.einsum("tj,tjd->td", term, P[np.minimum(ids, n - 1)])
        out[:, s] = np.where(cnt[:, None] > 0, tot / np.maximum(cnt, 1)[:, None], centroid)
    ang = 2 * np.pi * (np.arange(ns) + 0.5) / max(ns, 1)
    out += 0.05 * diam * np.stack([np.cos(ang), np.sin(ang)], -1)[None]
    return out


def _tree_costs(X, edges_list, W, NB, n, wlist):
    out = np.empty(len(edges_list))
    for t, (edges, w) in enumerate(zip(edges_list, wlist)):
        a = np.array([e[0] for e in edges])
        b = np.array([e[1] for e in edges])
        out[t] = float(np.sum(w * np.linalg.norm(X[t, a] - X[t, b], axis=1)))
    return out


# --------------------------------------------------------------------------
# grid oracle
# --------------------------------------------------------------------------


@dataclass
class GridOracleResult:
    value: float
    z: np.ndarray = field(repr=False)
    grid: object = None
    node_ids: np.ndarray = None
    snap_error: float = 0.0
    initial_value: float = 0.0

    @property
    def distortion(self) -> float:
        return self.grid.distortion

    def to_current(self) -> PolyCurrent:
        return self.grid.to_current(self.z, 0.5, ring="integer")


def grid_local_search_oracle(S: PointBoundary, p, grid=None, n: int = 64, stencil: int = 16) -> GridOracleResult:
    """Integer grid flow: per-component shortest paths, then subset merging.

    The merging step computes, for every subset D of terminals and every grid
    node v, the cheapest grid tree joining D to v where each path carries the
    summed multiplicity of the terminals it serves (a Dreyfus-Wagner style
    recursion).  The returned value is the true cost of the superposed integer
    flow, hence an upper bound for the snapped instance.
    """
    from .plateau_normal import boundary_vector, snap_error, snapped_grid, solve_decomposed

    p = as_exponent(p)
    S = S.merged()
    if grid is None:
        grid, ids = snapped_grid(S, n, stencil)
    else:
        ids = grid.snap(S)
    b = boundary_vector(grid, ids, S.k, S)
    z0, _ = solve_decomposed(grid, b)
    z0 = np.round(z0)
    v0 = float(np.sum(grid.lengths * lp_norm(z0, p)))
    best_z, best_v = z0, v0
    if S.n <= 8 and S.k > 1 and p != 1:
        z1 = _subset_tree_flow(grid, ids, S.mults, p)
        v1 = float(np.sum(grid.lengths * lp_norm(z1, p)))
        if v1 < best_v:
            best_z, best_v = z1, v1
    return GridOracleResult(best_v, best_z, grid, ids, snap_error(S, grid, ids, p), v0)


def _subset_tree_flow(grid, ids, mults, p):
    """Dreyfus-Wagner recursion with subset-dependent edge weights."""
    n = len(ids)
    V = grid.num_nodes
    k = mults.shape[1]
    root = n - 1
    others = list(range(n - 1))
    full = (1 << (n - 1)) - 1
    A = grid.adjacency.tocsr()
    cost = {}
    back = {}  # mask -> (pred array from Dijkstra, split array, labels)

    def subset_mult(mask):
        tot = np.zeros(k)
        for i in others:
            if mask >> i & 1:
                tot += mults[i]
        return tot

    def relax(mask, g):
        """C[mask, v] = min_u g[u] + w(mask) dist(u, v) via a super-source Dijkstra."""
        w = float(lp_norm(subset_mult(mask), p))
        if w == 0:
            u = int(np.argmin(g))
            return np.full(V, g[u]), np.full(V, -2, dtype=np.int64), u
        Aw = A * w
        src_col = sp.csr_matrix((g - g.min() + 1e-300, (np.zeros(V, int), np.arange(V))), shape=(1, V))
        big = sp.vstack([sp.hstack([sp.csr_matrix((1, 1)), src_col]),
                         sp.hstack([sp.csr_matrix((V, 1)), Aw])]).tocsr()
        dist, pred = dijkstra(big, directed=True, indices=0, return_predecessors=True)
        return dist[1:] + g.min() - 1e-300, pred[1:] - 1, None

    for mask in range(1, full + 1):
        members = [i for i in others if mask >> i & 1]
        if len(members) == 1:
            g = np.full(V, np.inf)
            g[ids[members[0]]] = 0.0
            split = None
        else:
            g = np.full(V, np.inf)
            split = np.zeros(V, dtype=np.int64)
            sub = (mask - 1) & mask
            while sub:
                if sub < (mask ^ sub):  # each unordered split once
                    c = cost[sub] + cost[mask ^ sub]
                    better = c < g
                    g = np.where(better, c, g)
                    split = np.where(better, sub, split)
                sub = (sub - 1) & mask
        C, pred, anchor = relax(mask, g)
        cost[mask] = C
        back[mask] = (pred, split, anchor, g)

    z = np.zeros((grid.num_edges, k))
    lookup = grid.edge_lookup

    def add_path(mask, v):
        """Add flow for subtree 'mask' ending at v (flow leaves the subtree towards v)."""
        pred, split, anchor, g = back[mask]
        m = subset_mult(mask)
        u = v
        if anchor is not None:
            u = anchor
        else:
            # walk back to where the label was initialised (super source predecessor = -1)
            while pred[u] >= 0:
                w_ = pred[u]
                e = int(lookup[w_, u])
                # subtree flow: boundary at terminals in mask is +m_i, so the flow runs from v into the subtree
                if e > 0:
                    z[e - 1] -= m
                else:
                    z[-e - 1] += m
                u = w_
        if split is None:
            return
        s = int(split[u])
        add_path(s, u)
        add_path(mask ^ s, u)

    add_path(full, ids[root])
    return z


# --------------------------------------------------------------------------
# Theorem E style comparison
# --------------------------------------------------------------------------


@dataclass
class ComparisonReport:
    k: int
    p: str
    integral: float
    normal: float
    normal_lower: float
    factor: float
    ratio: float
    tolerance: float
    ok: bool

    def to_dict(self):
        return dict(self.__dict__)


def normal_lower_bound(S: PointBoundary, p, sol=None) -> float:
    """Certified lower bound for the continuum real-coefficient problem.

    Combines the l^p norm of the component transport costs (each component of
    a competitor is a scalar competitor for its own boundary) with the grid
    dual bound corrected for stencil distortion and snapping.
    """
    lb = float(lp_norm(component_transport_costs(S), p))
    if sol is not None:
        lb = max(lb, sol.continuum_lower)
    return lb


def verify_theoremE(S: PointBoundary, p, normal=None, integral=None, grid_n: int = 24, stencil: int = 16,
                    normal_tol: float = 1e-3, rtol: float = 1e-9) -> ComparisonReport:
    """Check P_Z <= min(2 k^(1-1/p) - 1, k) P_R with the tolerances of both solvers."""
    from .plateau_normal import solve_normal

    p = as_exponent(p)
    if integral is None:
        integral = solve_integral(S, p)
    if normal is None:
        normal = solve_normal(S, p, n=grid_n, stencil=stencil, tol=normal_tol, strict=False)
    factor = theorem_e_factor(S.k, p)
    lower = normal_lower_bound(S, p, normal)
    # P_R lies in [lower, normal.continuum_upper]; test against the lower end
    tol = rtol * max(integral.value, 1.0)
    ok = integral.value <= factor * lower + tol
    ratio = integral.value / normal.value if normal.value > 0 else float("nan")
    return ComparisonReport(S.k, str(p), integral.value, normal.value, lower, factor, ratio,
                            normal.continuum_upper - lower + tol, bool(ok))
