"""Torus-valued maps with prescribed singularities, their energies and liftings.

Given an integral network T with boundary S, the phase

    psi(x) = sum_e m_e arg((x - B_e) / (x - A_e)) / (2 pi)

jumps by m_e across each edge and is harmonic elsewhere, so exp(2 pi i psi)
has winding m at the atoms of S.  Its energy diverges at infinity, so the map
used here is

    u = exp(2 pi i (psi - psi_eps)),   psi_eps = psi * rho_eps.

Since psi is harmonic away from supp T, psi_eps = psi there (mean value
property) and u == 1 outside the eps-neighbourhood of supp T.  The absolutely
continuous gradient of Theta = psi - psi_eps satisfies

    rot(grad Theta) = V_eps := T * rho_eps - S * R_eps,

with rot(a, b) = (-b, a), and V_eps = (1/2pi) star j(u).  Hence
|grad u_i| = 2 pi |V_i|, the nuclear norm of grad u equals 2 pi mass_p(V),
and E_p(u) = 2 pi M_p(V_eps) -> 2 pi M_p(T) as eps -> 0.

A lifting with cut system C (an integral network with the same boundary) is
theta = 2 pi (psi^C - psi_eps); it jumps by 2 pi m_e across the edges of C and
exp(i theta) = u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .currents import PointBoundary, PolyCurrent, RadialMollifier
from .lpalgebra import as_exponent, hodge_star, holder_factor, lp_norm, mass_p_batch, nuclear_p_batch

TWO_PI = 2.0 * math.pi


def rot(v):
    """Quarter turn (a, b) -> (-b, a) on the last axis."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def unrot(v):
    """Inverse quarter turn (a, b) -> (b, -a)."""
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def _segment_data(T: PolyCurrent):
    A = T.vertices[T.edges[:, 0]]
    B = T.vertices[T.edges[:, 1]]
    L = np.linalg.norm(B - A, axis=1)
    tau = (B - A) / L[:, None]
    return A, B, L, tau, T.mults.astype(float)


def branch_phase(T: PolyCurrent, x) -> np.ndarray:
    """psi(x) = sum_e m_e arg((x - B_e)/(x - A_e)) / (2 pi), shape (N, k).

    The principal argument puts the discontinuity on the segment itself.
    """
    x = np.atleast_2d(np.asarray(x, float))
    A, B, _, _, M = _segment_data(T)
    a = x[:, None, :] - A[None]
    b = x[:, None, :] - B[None]
    ang = np.arctan2(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0], np.sum(a * b, axis=-1))
    return ang @ M / TWO_PI


def branch_phase_gradient(T: PolyCurrent, x) -> np.ndarray:
    """Gradient of psi away from supp T, shape (N, k, 2)."""
    x = np.atleast_2d(np.asarray(x, float))
    A, B, _, _, M = _segment_data(T)
    a = x[:, None, :] - A[None]
    b = x[:, None, :] - B[None]
    # grad arg(x - c) = rot(x - c) / |x - c|^2
    g = rot(b) / np.sum(b * b, -1)[..., None] - rot(a) / np.sum(a * a, -1)[..., None]
    return np.einsum("nej,ek->nkj", g, M) / TWO_PI


def _chunk_size(n_edges: int, budget: int = 4_000_000) -> int:
    return max(256, budget // max(n_edges, 1))


def distance_to_support(T: PolyCurrent, x):
    """Distance from each point to the union of the segments, and the closest points."""
    x = np.atleast_2d(np.asarray(x, float))
    step = _chunk_size(len(T.edges))
    if len(x) > step:
        parts = [distance_to_support(T, x[i:i + step]) for i in range(0, len(x), step)]
        return tuple(np.concatenate(z) for z in zip(*parts))
    A, B, L, tau, _ = _segment_data(T)
    rel = x[:, None, :] - A[None]
    s = np.clip(np.einsum("nej,ej->ne", rel, tau), 0.0, L[None])
    c = A[None] + s[..., None] * tau[None]
    d = np.linalg.norm(x[:, None, :] - c, axis=2)
    j = np.argmin(d, axis=1)
    idx = np.arange(len(x))
    return d[idx, j], c[idx, j], j


@dataclass
class TorusMapSpec:
    """Map u_eps generated by an integral network T with mollification width eps."""

    current: PolyCurrent
    epsilon: float = 0.0
    check_width: bool = True

    def __post_init__(self):
        self.integral = self.current.ring == "integer"
        bd = self.current.boundary()
        if not self.integral:
            # a real flow with integer fluxes at its atoms still defines a map
            # (loop integrals of grad Theta are integers); only energies are
            # evaluated for such generators
            mults = np.rint(bd.mults)
            if np.abs(bd.mults - mults).max(initial=0.0) > 1e-8:
                raise ValueError("a real generating current needs an integral boundary")
            keep = np.any(mults != 0, axis=1)
            bd = PointBoundary(bd.positions[keep], mults[keep].astype(np.int64), bd.k)
        self._boundary = bd
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.epsilon > 0 and self.check_width and len(self.current.edges):
            shortest = float(self.current.lengths().min())
            if self.epsilon >= shortest / 4:
                raise ValueError(f"epsilon {self.epsilon:g} must be below a quarter of the shortest edge ({shortest:g})")
        self.mollifier = RadialMollifier(self.epsilon) if self.epsilon > 0 else None

    @classmethod
    def with_relative_width(cls, current: PolyCurrent, fraction: float = 0.05):
        """Spec with eps a fraction of the shortest edge (capped below a quarter)."""
        shortest = float(current.lengths().min())
        return cls(current, min(fraction, 0.24) * shortest)

    @property
    def k(self) -> int:
        return self.current.k

    def boundary(self) -> PointBoundary:
        return self._boundary

    # -- fields ------------------------------------------------------------

    def mollified_current(self, x) -> np.ndarray:
        """(T * rho_eps)(x) as a (N, k, 2) array, exact per segment."""
        x = np.atleast_2d(np.asarray(x, float))
        eps = self.epsilon
        A, _, L, tau, M = _segment_data(self.current)
        nrm = rot(tau)
        rel = x[:, None, :] - A[None]
        a = np.einsum("nej,ej->ne", rel, tau)
        b = np.einsum("nej,ej->ne", rel, nrm)
        w2 = eps * eps - b * b
        w = np.sqrt(np.maximum(w2, 0.0))
        lo = np.maximum(-a, -w)
        hi = np.minimum(L[None] - a, w)
        c = float(self.mollifier.profile_poly.coef[0])  # profile c (1 - t^2)^2

        def prim(t):
            return w2 * w2 * t - 2.0 * w2 * t**3 / 3.0 + t**5 / 5.0

        g = np.where((w2 > 0) & (hi > lo), c / eps**6 * (prim(hi) - prim(lo)), 0.0)
        return np.einsum("ne,ek,ej->nkj", g, M, tau)

    def boundary_field(self, x, kernel: str = "R") -> np.ndarray:
        """(S * R_eps)(x) (kernel 'R') or (S * (K - R_eps))(x) (kernel 'smooth')."""
        x = np.atleast_2d(np.asarray(x, float))
        S = self.boundary()
        out = np.zeros((len(x), self.k, 2))
        for pos, m in zip(S.positions, S.mults.astype(float)):
            rel = x - pos
            if kernel == "R":
                r = np.linalg.norm(rel, axis=1)
                f = np.zeros_like(rel)
                nz = r > 0
                f[nz] = self.mollifier.field(rel[nz])
            else:
                f = self.mollifier.smoothed_kernel(rel)
            out += m[None, :, None] * f[:, None, :]
        return out

    def V(self, x) -> np.ndarray:
        """V_eps = T * rho_eps - S * R_eps = (1/2pi) star j(u), shape (N, k, 2)."""
        self._need_eps()
        x = np.atleast_2d(np.asarray(x, float))
        step = _chunk_size(len(self.current.edges))
        if len(x) > step:
            return np.concatenate([self.V(x[i:i + step]) for i in range(0, len(x), step)])
        return self.mollified_current(x) - self.boundary_field(x, "R")

    def grad_phase(self, x) -> np.ndarray:
        """Absolutely continuous gradient of Theta = psi - psi_eps."""
        if self.epsilon == 0:
            return branch_phase_gradient(self.current, x)
        return unrot(self.V(x))

    def smooth_phase_gradient(self, x) -> np.ndarray:
        """grad psi_eps, from rot(grad psi_eps) = -T * rho_eps - S * (K - R_eps)."""
        return unrot(-self.mollified_current(x) - self.boundary_field(x, "smooth"))

    def smooth_phase(self, x, panels: int = 4, order: int = 12) -> np.ndarray:
        """psi_eps(x) by Gauss-Legendre integration from a point outside the eps-neighbourhood.

        The integrand is piecewise smooth with derivative jumps on the lines at
        distance eps from each edge and on the eps-circles around vertices; the
        straight path is split at its crossings with these curves.
        """
        self._need_eps()
        if not self.integral:
            raise ValueError("the smoothed phase is only available for integral generators")
        x = np.atleast_2d(np.asarray(x, float))
        eps = self.epsilon
        d, _, _ = distance_to_support(self.current, x)
        out = branch_phase(self.current, x)
        inside = np.flatnonzero(d < eps * (1 + 1e-12))
        if inside.size == 0:
            return out
        xs = x[inside]
        x0 = self._exit_points(xs)
        brk = np.sort(np.concatenate([self._kinks(xs, x0), np.linspace(0, 1, panels + 1)[None].repeat(len(xs), 0)],
                              axis=1), axis=1)
        g, w = np.polynomial.legendre.leggauss(order)
        acc = np.zeros((len(xs), self.k))
        dx = x0 - xs
        for j in range(brk.shape[1] - 1):
            s0, s1 = brk[:, j], brk[:, j + 1]
            s = s0[:, None] + (s1 - s0)[:, None] * (g[None] + 1) / 2
            pts = xs[:, None, :] + s[..., None] * dx[:, None, :]
            grad = self.smooth_phase_gradient(pts.reshape(-1, 2)).reshape(len(xs), order, self.k, 2)
            acc += np.einsum("nqkj,nj,q,n->nk", grad, dx, w, (s1 - s0) / 2)
        out[inside] = branch_phase(self.current, x0) - acc
        return out

    def _kinks(self, xs, x0):
        """Path parameters in [0, 1] where x + s (x0 - x) meets a kink curve of the integrand."""
        eps = self.epsilon
        A, _, _, tau, _ = _segment_data(self.current)
        nrm = rot(tau)
        dx = x0 - xs
        cols = []
        # lines b = +-eps for every edge
        b0 = np.einsum("nej,ej->ne", xs[:, None, :] - A[None], nrm)
        db = dx @ nrm.T
        with np.errstate(divide="ignore", invalid="ignore"):
            for sign in (1.0, -1.0):
                cols.append((sign * eps - b0) / db)
        # circles of radius eps around vertices and lines a = 0, a = L through them
        rel = xs[:, None, :] - self.current.vertices[None]
        qa = np.sum(dx * dx, axis=1)[:, None]
        qb = 2 * np.einsum("nvj,nj->nv", rel, dx)
        qc = np.sum(rel * rel, axis=2) - eps * eps
        disc = np.sqrt(np.maximum(qb * qb - 4 * qa * qc, 0.0))
        cols.append((-qb - disc) / (2 * qa))
        cols.append((-qb + disc) / (2 * qa))
        a0 = np.einsum("nej,ej->ne", xs[:, None, :] - A[None], tau)
        da = dx @ tau.T
        L = self.current.lengths()
        with np.errstate(divide="ignore", invalid="ignore"):
            cols.append(-a0 / da)
            cols.append((L[None] - a0) / da)
        s = np.concatenate(cols, axis=1)
        return np.where(np.isfinite(s), np.clip(s, 0.0, 1.0), 0.0)

    def _exit_points(self, xs):
        """Points at distance >= eps from supp T reachable by a straight path."""
        eps = self.epsilon
        d, c, j = distance_to_support(self.current, xs)
        A, _, _, tau, _ = _segment_data(self.current)
        nrm = rot(tau[j])
        away = xs - c
        nz = d > 1e-14 * eps
        direc = np.where(nz[:, None], away / np.where(nz, d, 1.0)[:, None], nrm)
        x0 = c + 1.05 * eps * direc
        bad = distance_to_support(self.current, x0)[0] < eps
        if np.any(bad):
            ang = np.linspace(0, TWO_PI, 64, endpoint=False)
            dirs = np.stack([np.cos(ang), np.sin(ang)], -1)
            for i in np.flatnonzero(bad):
                best = None
                for t in np.arange(1, 400) * eps / 4:
                    cand = xs[i] + t * dirs
                    ok = distance_to_support(self.current, cand)[0] >= 1.05 * eps
                    if ok.any():
                        best = cand[np.argmax(ok)]
                        break
                if best is None:
                    raise RuntimeError("no exit path found for the smoothed phase")
                x0[i] = best
        return x0

    def phase(self, x) -> np.ndarray:
        """Theta = psi - psi_eps (values modulo integers define u)."""
        if not self.integral:
            raise ValueError("map values are only available for integral generators")
        if self.epsilon == 0:
            return branch_phase(self.current, x)
        return branch_phase(self.current, x) - self.smooth_phase(x)

    def _need_eps(self):
        if self.epsilon <= 0:
            raise ValueError("this quantity needs a positive mollification width")


def evaluate_map(spec: TorusMapSpec, x):
    """u(x) in T^k (complex unit entries) and grad u(x) as (N, k, 2) complex arrays.

    With eps = 0 the map is the plain subtended-angle map; evaluation on the
    segments themselves is rejected because the gradient is not defined there.
    """
    x = np.atleast_2d(np.asarray(x, float))
    if spec.epsilon == 0:
        d, _, _ = distance_to_support(spec.current, x)
        if np.any(d <= 1e-12 * max(1.0, spec.current.lengths().max())):
            raise ValueError("evaluation point lies on the support of the generating current")
    theta = spec.phase(x)
    u = np.exp(1j * TWO_PI * theta)
    grad = 1j * TWO_PI * u[..., None] * spec.grad_phase(x)
    return u, grad


def pre_jacobian(spec: TorusMapSpec, x) -> np.ndarray:
    """j(u_i) = u^1 du^2 - u^2 du^1 = Im(conj(u_i) grad u_i), shape (N, k, 2)."""
    u, grad = evaluate_map(spec, x)
    return np.imag(np.conj(u)[..., None] * grad)


def winding_number(spec: TorusMapSpec, centre, radius: float, component: int = 0, n: int = 4096) -> float:
    """(1/2pi) times the loop integral of j(u_i) around a circle (counter-clockwise)."""
    t = TWO_PI * (np.arange(n) + 0.5) / n
    pts = np.asarray(centre, float) + radius * np.stack([np.cos(t), np.sin(t)], -1)
    tang = radius * np.stack([-np.sin(t), np.cos(t)], -1)
    j = pre_jacobian(spec, pts)[:, component]
    return float(np.sum(np.einsum("nj,nj->n", j, tang)) * (TWO_PI / n) / TWO_PI)


# --------------------------------------------------------------------------
# quadrature over the eps-neighbourhood
# --------------------------------------------------------------------------


@dataclass
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    error: float  # estimated absolute error for the test integrand
    cells: int = 0

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _gauss_square(order):
    g, w = np.polynomial.legendre.leggauss(order)
    u = (g + 1) / 2
    U, Vv = np.meshgrid(u, u, indexing="ij")
    W = np.outer(w, w) / 4
    return np.stack([U.ravel(), Vv.ravel()], -1), W.ravel()


def _rect_rule(x0, y0, x1, y1, ref, wref):
    pts = np.stack([x0[:, None] + (x1 - x0)[:, None] * ref[None, :, 0],
                    y0[:, None] + (y1 - y0)[:, None] * ref[None, :, 1]], -1)
    w = ((x1 - x0) * (y1 - y0))[:, None] * wref[None, :]
    return pts, w


def _duffy_rule(c, p1, p2, ref, wref):
    """Collapsed Gauss rule on triangles (c, p1, p2) with the singular vertex c."""
    u = ref[:, 0]
    v = ref[:, 1]
    e1 = p1 - c
    e2 = p2 - c
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = c[:, None, :] + u[None, :, None] * ((1 - v)[None, :, None] * e1[:, None, :] + v[None, :, None] * e2[:, None, :])
    w = det[:, None] * (u * wref)[None, :]
    return pts, w


def neighbourhood_quadrature(spec: TorusMapSpec, rtol: float = 1e-6, order: int = 6, max_level: int = 12,
                             integrand=None) -> QuadratureRule:
    """Adaptive tensor Gauss rule over the eps-neighbourhood of supp T.

    Cells are squares of side eps/2 refined by quadrisection where the rule
    and its refinement disagree on the test integrand (sum of |V_i| by
    default).  Cells containing an atom are split at the atom and integrated
    with collapsed (Duffy) rules, which absorb the 1/r singularity.
    """
    spec._need_eps()
    eps = spec.epsilon
    T = spec.current
    if integrand is None:
        def integrand(x):
            return np.linalg.norm(spec.V(x), axis=2).sum(axis=1)

    atoms = spec.boundary().positions
    ref, wref = _gauss_square(order)
    lo = T.vertices.min(axis=0) - eps
    hi = T.vertices.max(axis=0) + eps
    h0 = eps / 2
    nx = int(np.ceil((hi[0] - lo[0]) / h0))
    ny = int(np.ceil((hi[1] - lo[1]) / h0))
    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    x0 = lo[0] + I.ravel() * h0
    y0 = lo[1] + J.ravel() * h0
    cen = np.stack([x0 + h0 / 2, y0 + h0 / 2], -1)
    d, _, _ = distance_to_support(T, cen)
    keep = d <= eps + h0 * math.sqrt(0.5) * 1.0001
    cells = np.stack([x0[keep], y0[keep], x0[keep] + h0, y0[keep] + h0], -1)

    # split cells that contain atoms: the atom becomes a corner of four sub-rectangles
    sing_tris = []
    regular = []
    for c in cells:
        inside = [a for a in atoms if c[0] <= a[0] <= c[2] and c[1] <= a[1] <= c[3]]
        if not inside:
            regular.append(c)
            continue
        a = inside[0]
        corners = np.array([[c[0], c[1]], [c[2], c[1]], [c[2], c[3]], [c[0], c[3]]])
        for q in range(4):
            p1, p2 = corners[q], corners[(q + 1) % 4]
            if abs((p1[0] - a[0]) * (p2[1] - a[1]) - (p1[1] - a[1]) * (p2[0] - a[0])) > 0:
                sing_tris.append((a, p1, p2))
    pts_s, w_s = np.zeros((0, 2)), np.zeros(0)
    err = 0.0
    if sing_tris:
        sing_tris = _refine_duffy(np.array(sing_tris), integrand, ref, wref, rtol, max_level)
        P, W, e = sing_tris
        pts_s, w_s, err = P, W, e
    cells = np.array(regular).reshape(-1, 4)
    pts_r, w_r, e_r, ncell = _refine_rects(cells, integrand, ref, wref, rtol, max_level)
    return QuadratureRule(np.vstack([pts_r, pts_s]), np.concatenate([w_r, w_s]), err + e_r, ncell)


def _refine_rects(cells, f, ref, wref, rtol, max_level):
    out_p, out_w = [], []
    err_total = 0.0
    ncell = 0
    total_est = None
    for level in range(max_level + 1):
        if len(cells) == 0:
            break
        p, w = _rect_rule(cells[:, 0], cells[:, 1], cells[:, 2], cells[:, 3], ref, wref)
        coarse = (f(p.reshape(-1, 2)).reshape(p.shape[:2]) * w).sum(axis=1)
        xm = 0.5 * (cells[:, 0] + cells[:, 2])
        ym = 0.5 * (cells[:, 1] + cells[:, 3])
        kids = np.concatenate([
            np.stack([cells[:, 0], cells[:, 1], xm, ym], -1), np.stack([xm, cells[:, 1], cells[:, 2], ym], -1),
            np.stack([cells[:, 0], ym, xm, cells[:, 3]], -1), np.stack([xm, ym, cells[:, 2], cells[:, 3]], -1)])
        pk, wk = _rect_rule(kids[:, 0], kids[:, 1], kids[:, 2], kids[:, 3], ref, wref)
        fk = (f(pk.reshape(-1, 2)).reshape(pk.shape[:2]) * wk).sum(axis=1)
        fine = fk.reshape(4, -1).sum(axis=0)
        est = np.abs(fine - coarse)
        if total_est is None:
            total_est = max(float(np.abs(fine).sum()), 1e-300)
        area = (cells[:, 2] - cells[:, 0]) * (cells[:, 3] - cells[:, 1])
        budget = rtol * total_est * area / max(area.sum(), 1e-300) if level == 0 else rtol * total_est * area / tot_area
        if level == 0:
            tot_area = float(area.sum())
            budget = rtol * total_est * area / tot_area
        done = (est <= budget) | (level == max_level)
        # accept the refined values of finished cells
        kid_idx = np.arange(len(cells))
        for q in range(4):
            sel = kid_idx[done] + q * len(cells)
            out_p.append(pk[sel].reshape(-1, 2))
            out_w.append(wk[sel].reshape(-1))
        err_total += float(est[done].sum())
        ncell += int(done.sum()) * 4
        cells = kids.reshape(4, -1, 4)[:, ~done].reshape(-1, 4)
    return np.vstack(out_p) if out_p else np.zeros((0, 2)), np.concatenate(out_w) if out_w else np.zeros(0), err_total, ncell


def _refine_duffy(tris, f, ref, wref, rtol, max_level):
    """Adaptive refinement of singular triangles by splitting the far edge."""
    out_p, out_w = [], []
    err = 0.0
    scale = None
    for level in range(max_level + 1):
        if len(tris) == 0:
            break
        c, p1, p2 = tris[:, 0], tris[:, 1], tris[:, 2]
        P, W = _duffy_rule(c, p1, p2, ref, wref)
        coarse = (f(P.reshape(-1, 2)).reshape(P.shape[:2]) * W).sum(axis=1)
        mid = 0.5 * (p1 + p2)
        Pa, Wa = _duffy_rule(c, p1, mid, ref, wref)
        Pb, Wb = _duffy_rule(c, mid, p2, ref, wref)
        fa = (f(Pa.reshape(-1, 2)).reshape(Pa.shape[:2]) * Wa).sum(axis=1)
        fb = (f(Pb.reshape(-1, 2)).reshape(Pb.shape[:2]) * Wb).sum(axis=1)
        est = np.abs(fa + fb - coarse)
        if scale is None:
            scale = max(float(np.abs(fa + fb).sum()), 1e-300)
        done = (est <= rtol * scale / max(len(tris), 1)) | (level == max_level)
        for Pq, Wq in ((Pa, Wa), (Pb, Wb)):
            out_p.append(Pq[done].reshape(-1, 2))
            out_w.append(Wq[done].reshape(-1))
        err += float(est[done].sum())
        nd = ~done
        tris = np.concatenate([np.stack([c[nd], p1[nd], mid[nd]], 1), np.stack([c[nd], mid[nd], p2[nd]], 1)])
    return np.vstack(out_p), np.concatenate(out_w), err


# --------------------------------------------------------------------------
# energies
# --------------------------------------------------------------------------


@dataclass
class EnergyResult:
    value: float
    quad_error: float
    tail_bound: float = 0.0
    nodes: int = 0

    def to_dict(self):
        return {"value": self.value, "quad_error": self.quad_error, "tail_bound": self.tail_bound,
                "nodes": self.nodes}


def _quad(spec, quad):
    return quad if quad is not None else neighbourhood_quadrature(spec)


def harmonic_density(spec: TorusMapSpec, x, p) -> np.ndarray:
    """||(|grad u_1|, ..., |grad u_k|)||_p at points x."""
    V = spec.V(x)
    return TWO_PI * lp_norm(np.linalg.norm(V, axis=2), p)


def harmonic_energy(spec: TorusMapSpec, p, quad: QuadratureRule | None = None) -> EnergyResult:
    """H_p(u) by quadrature; u is constant outside the quadrature region, so the tail is zero."""
    q = _quad(spec, quad)
    vals = harmonic_density(spec, q.points, p)
    val = q.integrate(vals)
    # the rule was adapted to sum |V_i|; scale its error estimate to this density
    err = TWO_PI * q.error * holder_factor(1, p)
    return EnergyResult(val, err, 0.0, len(q.weights))


def nuclear_density(spec: TorusMapSpec, x, p, tol: float = 1e-7) -> np.ndarray:
    """|grad u|_{nucl,p} = 2 pi mass_p(V) at points x (batched)."""
    V = spec.V(x)
    return TWO_PI * mass_p_batch(V, p, tol=tol)


def nuclear_energy(spec: TorusMapSpec, p, quad: QuadratureRule | None = None, check_identity: bool = True,
                   atol: float = 1e-6) -> EnergyResult:
    """E_p(u) by quadrature, optionally checking |grad u|_{nucl,p} = |star j(u)|_{mass,p} at every node.

    The integrand is the mass of star j(u) = 2 pi V; the check evaluates the
    nuclear norm of the complex gradient matrix independently.
    """
    q = _quad(spec, quad)
    dens = nuclear_density(spec, q.points, p)
    if check_identity:
        worst = identity_violation(spec, q.points, p, dens)
        if worst > atol:
            raise AssertionError(f"nuclear/mass identity violated, worst relative mismatch {worst:.3e}")
    val = q.integrate(dens)
    return EnergyResult(val, TWO_PI * q.error * holder_factor(spec.k, p), 0.0, len(q.weights))


def identity_violation(spec: TorusMapSpec, x, p, mass_vals=None, exact_sample: int = 2000, seed: int = 0,
                       chunk: int = 20000) -> float:
    """Largest relative mismatch between nuclear_p(grad u) and mass_p(star j(u)) over x.

    grad u = 2 pi i diag(u) grad Theta, and the nuclear norm does not change
    under left multiplication by a diagonal unitary.  The full map value u is
    therefore evaluated (by path integration) only on a random sample of
    ``exact_sample`` nodes; at the remaining nodes the branch phase
    exp(2 pi i psi) stands in for u.
    """
    x = np.atleast_2d(np.asarray(x, float))
    exact = np.zeros(len(x), bool)
    if exact_sample:
        pick = np.random.default_rng(seed).choice(len(x), min(exact_sample, len(x)), replace=False)
        exact[pick] = True
    worst = 0.0
    for lo in range(0, len(x), chunk):
        xs = x[lo:lo + chunk]
        ex = exact[lo:lo + chunk]
        gth = spec.grad_phase(xs)
        phase = branch_phase(spec.current, xs)
        if ex.any():
            phase[ex] = spec.phase(xs[ex])
        u = np.exp(1j * TWO_PI * phase)
        grad = 1j * TWO_PI * u[..., None] * gth
        nuc = nuclear_p_batch(grad, p, tol=1e-7)
        if mass_vals is None:
            jac = np.imag(np.conj(u)[..., None] * grad)
            mv = mass_p_batch(hodge_star(jac, 1), p, tol=1e-7)
        else:
            mv = mass_vals[lo:lo + chunk]
        scale = np.maximum(np.maximum(np.abs(nuc), np.abs(mv)), 1.0)
        worst = max(worst, float(np.max(np.abs(nuc - mv) / scale, initial=0.0)))
    return worst


def energy_chain(spec: TorusMapSpec, p, quad: QuadratureRule | None = None) -> dict:
    """H_p <= E_p <= H_1 <= k^(1-1/p) H_p, evaluated on a common rule."""
    q = _quad(spec, quad)
    p = as_exponent(p)
    Hp = harmonic_energy(spec, p, q)
    Ep = nuclear_energy(spec, p, q)
    H1 = harmonic_energy(spec, 1, q)
    c = holder_factor(spec.k, p)
    slack = 1e-12 * max(H1.value, 1.0) + 1e-9 * H1.value
    checks = {
        "H_p<=E_p": Hp.value <= Ep.value + slack,
        "E_p<=H_1": Ep.value <= H1.value + slack,
        "H_1<=cH_p": H1.value <= c * Hp.value + slack,
    }
    return {"p": str(p), "H_p": Hp.value, "E_p": Ep.value, "H_1": H1.value, "holder": c,
            "quad_error": q.error, "nodes": len(q.weights), "checks": checks, "ok": all(checks.values())}


def jacobian_pairing(spec: TorusMapSpec, phi, grad_phi, quad: QuadratureRule | None = None):
    """(int (1/2pi) star j(u) . grad phi, <S, phi>), which agree for star J(u) = pi S."""
    q = _quad(spec, quad)
    V = spec.V(q.points)
    vals = np.einsum("nkj,nj->nk", V, grad_phi(q.points))
    lhs = (q.weights[:, None] * vals).sum(axis=0)
    S = spec.boundary()
    rhs = (S.mults.astype(float) * phi(S.positions)[:, None]).sum(axis=0)
    return lhs, rhs


# --------------------------------------------------------------------------
# liftings
# --------------------------------------------------------------------------


@dataclass
class LiftingSpec:
    """Lifting theta = 2 pi (psi^C - psi_eps) of the map of ``spec`` with cut system C."""

    cuts: PolyCurrent
    spec: TorusMapSpec

    def __post_init__(self):
        if self.cuts.ring != "integer":
            raise ValueError("cut systems carry integer multiplicities")
        if not self.cuts.boundary().equals(self.spec.boundary()):
            raise ValueError("the cut system and the map have different singular sets")

    def theta(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        return TWO_PI * (branch_phase(self.cuts, x) - self.spec.smooth_phase(x))

    def grad_theta(self, x) -> np.ndarray:
        """Analytic a.c. gradient: 2 pi (grad psi^C - grad psi_eps)."""
        x = np.atleast_2d(np.asarray(x, float))
        return TWO_PI * (branch_phase_gradient(self.cuts, x) - self.spec.smooth_phase_gradient(x))

    def jump(self, x, normal_offset: float) -> np.ndarray:
        """theta^+ - theta^- across the cut at x (left minus right of the edge direction)."""
        x = np.atleast_2d(np.asarray(x, float))
        _, _, j = distance_to_support(self.cuts, x)
        _, _, _, tau, _ = _segment_data(self.cuts)
        n = rot(tau[j])
        return self.theta(x + normal_offset * n) - self.theta(x - normal_offset * n)


def jump_cost(lift: LiftingSpec, p) -> float:
    """Sum over cut edges of 2 pi ||m_e||_p length(e) = 2 pi M_p(C)."""
    return TWO_PI * lift.cuts.mass(p)


@dataclass
class TheoremBReport:
    k: int
    p: str
    H_p: float
    jump: float
    sbv: float
    bound: float
    margin: float
    ok: bool

    def to_dict(self):
        return dict(self.__dict__)


def verify_theoremB(spec: TorusMapSpec, lift: LiftingSpec, p, quad: QuadratureRule | None = None,
                    H: EnergyResult | None = None) -> TheoremBReport:
    """|theta|_SBV = H_p + jump cost must not exceed 2 k^(1-1/p) H_p."""
    p = as_exponent(p)
    H = H or harmonic_energy(spec, p, quad)
    J = jump_cost(lift, p)
    sbv = H.value + J
    bound = 2 * holder_factor(spec.k, p) * H.value
    margin = bound - sbv
    ok = margin >= -(H.quad_error + 1e-12 * max(sbv, 1.0))
    return TheoremBReport(spec.k, str(p), H.value, J, sbv, bound, margin, bool(ok))


def fd_gradient_check(lift: LiftingSpec, n: int = 1000, seed: int = 0, h: float | None = None,
                      min_cut_distance: float | None = None):
    """Max relative error between |grad theta_j| by central differences and |grad u_j|.

    Points are drawn uniformly in the eps-neighbourhood of supp T (where the
    gradients are nonzero) and kept away from the cuts and the atoms.
    """
    spec = lift.spec
    eps = spec.epsilon
    rng = np.random.default_rng(seed)
    h = h or 1e-5 * eps
    min_cut = min_cut_distance or 0.02 * eps
    lo = spec.current.vertices.min(axis=0) - eps
    hi = spec.current.vertices.max(axis=0) + eps
    atoms = spec.boundary().positions
    pts = []
    while len(pts) < n:
        cand = lo + (hi - lo) * rng.random((4 * n, 2))
        d, _, _ = distance_to_support(spec.current, cand)
        dc, _, _ = distance_to_support(lift.cuts, cand)
        da = np.min(np.linalg.norm(cand[:, None] - atoms[None], axis=2), axis=1)
        ok = (d < 0.98 * eps) & (dc > min_cut) & (da > 0.05 * eps)
        pts.extend(cand[ok].tolist())
    pts = np.array(pts[:n])
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    th = {key: lift.theta(pts + off) for key, off in (("xp", ex), ("xm", -ex), ("yp", ey), ("ym", -ey))}
    gx = (th["xp"] - th["xm"]) / (2 * h)
    gy = (th["yp"] - th["ym"]) / (2 * h)
    fd = np.sqrt(gx**2 + gy**2)
    _, grad_u = evaluate_map(spec, pts)
    an = np.linalg.norm(np.abs(grad_u), axis=2)
    scale = np.maximum(an, 1e-3 * np.max(an))
    rel = np.abs(fd - an) / scale
    return float(rel.max()), pts


@dataclass
class TheoremDReport:
    k: int
    p: str
    epsilon: float
    H_p: float
    jump: float
    factor: float
    equality_indicator: bool

    def to_dict(self):
        return dict(self.__dict__)


def lifting_factor(spec: TorusMapSpec, cuts: PolyCurrent, p, quad=None) -> TheoremDReport:
    """Empirical factor (H_p + min jump cost) / H_p for a given map and optimal cuts."""
    p = as_exponent(p)
    H = harmonic_energy(spec, p, quad)
    J = TWO_PI * cuts.mass(p)
    eq = abs(J - H.value) <= max(H.quad_error, 1e-9 * H.value)
    return TheoremDReport(spec.k, str(p), spec.epsilon, H.value, J, 1 + J / H.value, bool(eq))


@dataclass
class TheoremDSummary:
    k: int
    p: str
    rows: list  # per (generator, eps): dicts with H_p, two_pi_PZ, factor
    max_factor: float
    min_factor: float

    @property
    def exceeds_two(self) -> bool:
        return self.max_factor > 2.0

    def to_dict(self):
        return {"k": self.k, "p": self.p, "rows": self.rows, "max_factor": self.max_factor,
                "min_factor": self.min_factor, "exceeds_two": self.exceeds_two}


def verify_theoremD(S: PointBoundary, p, generators: dict | None = None, fractions=(0.2, 0.1),
                    rtol: float = 1e-4) -> TheoremDSummary:
    """Report best lifting factors (H_p + 2 pi P_Z) / H_p over a family of maps; nothing is asserted.

    ``generators`` maps names to currents whose boundary is S (or a snapped
    copy of S for grid flows); by default the optimal integral network and
    the per-component transport network are used.  The integral optimum is
    recomputed for each distinct boundary, since the minimal jump cost of a
    map is 2 pi P_Z of its own singular set.
    """
    from .plateau_integral import decomposed_current, solve_integral

    p = as_exponent(p)
    if generators is None:
        generators = {"integral": solve_integral(S, p).current, "decomposed": decomposed_current(S)}
    cache: list = []
    rows = []
    for name, T in generators.items():
        base = TorusMapSpec(T, 0.0)
        bd = base.boundary()
        hit = next((v for b, v in cache if b.equals(bd)), None)
        if hit is None:
            hit = solve_integral(bd, p).value
            cache.append((bd, hit))
        shortest = float(T.lengths().min())
        for f in fractions:
            spec = TorusMapSpec(T, min(f, 0.24) * shortest, check_width=False)
            q = neighbourhood_quadrature(spec, rtol=rtol)
            H = harmonic_energy(spec, p, q)
            J = TWO_PI * hit
            rows.append({"generator": name, "epsilon": spec.epsilon, "H_p": H.value, "quad_error": H.quad_error,
                         "two_pi_PZ": J, "factor": 1.0 + J / H.value,
                         "equality": bool(abs(J - H.value) <= max(H.quad_error, 1e-9 * H.value))})
    factors = [r["factor"] for r in rows]
    return TheoremDSummary(S.k, str(p), rows, max(factors), min(factors))
