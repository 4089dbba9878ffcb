"""Exact l^p arithmetic and the vector-valued mass, comass and nuclear norms.

Matrices are stored row-per-component: a ``k x d`` array ``V`` whose row ``i``
is the classical 1-vector (or 1-covector) ``v_i`` in R^d.  Complex matrices
(gradients of torus-valued maps) are handled by splitting every complex row
into an indivisible R^2 block, so that the l^p norm is taken over the complex
moduli and not over R^{2k}.

The mass norm is computed as a primal/dual pair.  Every result carries an
explicit rank-one decomposition (upper bound) and a covector ``W`` whose comass
is bounded from above by a certified branch-and-bound search (lower bound).
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache, total_ordering
from typing import Sequence

import numpy as np


class NonconvergenceError(RuntimeError):
    """Primal and dual bounds failed to meet within the requested tolerance."""

    def __init__(self, message, gap=float("nan")):
        super().__init__(message)
        self.gap = gap


# --------------------------------------------------------------------------
# exponents
# --------------------------------------------------------------------------


@total_ordering
@dataclass(frozen=True)
class Exponent:
    """An exponent p in [1, inf], stored exactly.

    ``value`` is a :class:`fractions.Fraction` or ``math.inf``.
    """

    value: Fraction | float

    def __post_init__(self):
        v = self.value
        if isinstance(v, float) and math.isinf(v):
            if v < 0:
                raise ValueError("exponent must be >= 1")
            return
        if not isinstance(v, Fraction):
            object.__setattr__(self, "value", Fraction(v))
        if self.value < 1:
            raise ValueError(f"exponent must be >= 1, got {self.value}")

    @classmethod
    def parse(cls, p) -> "Exponent":
        if isinstance(p, Exponent):
            return p
        if isinstance(p, str):
            s = p.strip().lower()
            if s in {"inf", "infinity", "oo", "∞", "+inf"}:
                return cls(math.inf)
            return cls(Fraction(s))
        if isinstance(p, float):
            if math.isinf(p):
                return cls(math.inf)
            # repr gives the shortest decimal that round-trips, so 1.5 -> 3/2
            return cls(Fraction(repr(p)))
        return cls(Fraction(p))

    @property
    def is_inf(self) -> bool:
        return isinstance(self.value, float)

    @property
    def reciprocal(self) -> Fraction:
        """1/p as an exact fraction (0 for p = inf)."""
        return Fraction(0) if self.is_inf else 1 / self.value

    def conjugate(self) -> "Exponent":
        r = 1 - self.reciprocal
        return Exponent(math.inf) if r == 0 else Exponent(1 / r)

    def __float__(self):
        return math.inf if self.is_inf else float(self.value)

    def __lt__(self, other):
        other = Exponent.parse(other)
        return float(self) < float(other) if (self.is_inf or other.is_inf) else self.value < other.value

    def __eq__(self, other):
        try:
            other = Exponent.parse(other)
        except (TypeError, ValueError):
            return NotImplemented
        if self.is_inf or other.is_inf:
            return self.is_inf and other.is_inf
        return self.value == other.value

    def __hash__(self):
        return hash(("Exponent", str(self)))

    def __str__(self):
        if self.is_inf:
            return "inf"
        v = self.value
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"

    def __repr__(self):
        return f"Exponent({self})"

    def label(self) -> str:
        """Short float-like label for tables ('1', '1.5', 'inf')."""
        if self.is_inf:
            return "inf"
        f = float(self.value)
        return f"{f:g}"


def as_exponent(p) -> Exponent:
    return Exponent.parse(p)


def conjugate(p) -> Exponent:
    """Conjugate exponent q with 1/p + 1/q = 1 (1 <-> inf)."""
    return as_exponent(p).conjugate()


def holder_factor(k: int, p) -> float:
    """k^(1 - 1/p), evaluated from the exact exponent."""
    p = as_exponent(p)
    return float(k) ** float(1 - p.reciprocal)


def norm_ratio_factor(k: int, p1, p2) -> float:
    """k^((p2 - p1)/(p1 p2)) = k^(1/p1 - 1/p2), the reverse Holder constant."""
    p1, p2 = as_exponent(p1), as_exponent(p2)
    return float(k) ** float(p1.reciprocal - p2.reciprocal)


def theorem_e_factor(k: int, p) -> float:
    """min(2 k^(1-1/p) - 1, k)."""
    return min(2.0 * holder_factor(k, p) - 1.0, float(k))


def lp_norm(z, p) -> float | np.ndarray:
    """l^p norm over the last axis; complex entries contribute their modulus."""
    p = as_exponent(p)
    a = np.abs(np.asarray(z))
    if a.shape[-1] == 0:
        return 0.0 if a.ndim == 1 else np.zeros(a.shape[:-1])
    m = a.max(axis=-1)
    if p.is_inf:
        out = m
    elif p.value == 1:
        out = a.sum(axis=-1)
    elif p.value == 2:
        out = np.sqrt((a * a).sum(axis=-1))
    else:
        pf = float(p.value)
        safe = np.where(m > 0, m, 1.0)
        out = m * ((a / np.expand_dims(safe, -1)) ** pf).sum(axis=-1) ** (1.0 / pf)
    return float(out) if np.ndim(out) == 0 else out


def group_norm(Y, blocks, p) -> np.ndarray:
    """l^p norm of the vector of Euclidean block norms, over the last axis.

    ``blocks`` is a list of index arrays partitioning the last axis, or None
    for singleton blocks.
    """
    Y = np.asarray(Y, dtype=float)
    if blocks is None:
        return lp_norm(Y, p)
    parts = np.stack([np.linalg.norm(Y[..., b], axis=-1) for b in blocks], axis=-1)
    return lp_norm(parts, p)


# --------------------------------------------------------------------------
# direction sets and certified maximisation over the unit sphere
# --------------------------------------------------------------------------


def _circle_dirs(theta):
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


@lru_cache(maxsize=8)
def _icosphere(level: int):
    t = (1 + 5**0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    V = np.array(verts, float)
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    tri = V[np.array(faces)]  # (F, 3, 3)
    for _ in range(level):
        tri = _split_triangles(tri)
    return tri


def _split_triangles(tri):
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]

    def mid(x, y):
        m = x + y
        return m / np.linalg.norm(m, axis=-1, keepdims=True)

    ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
    return np.concatenate([
        np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
        np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1)])


@dataclass(frozen=True)
class SphereMax:
    lower: float
    upper: float
    direction: np.ndarray
    local_maxima: np.ndarray  # candidate directions with value close to the max


def sphere_max(f, d: int, rtol: float = 1e-12, n0: int | None = None, max_rounds: int = 60) -> SphereMax:
    """Certified maximum of a norm-of-linear-map ``f(tau)`` over unit tau in R^d.

    ``f`` maps an ``(m, d)`` array of directions to ``m`` values and must be of
    the form ``N(W tau)`` for some norm N.  In d=2 the certificate uses the
    exact identity y(theta) = [y(a) sin(b-theta) + y(b) sin(theta-a)]/sin(b-a)
    which bounds f on [a, b] by max(f(a), f(b))/cos((b-a)/2).  In d=3 a
    spherical triangle lies in the cone of its vertices scaled by 1/h, with h
    the distance from the origin to the flat triangle.
    """
    if d == 1:
        v = float(f(np.ones((1, 1)))[0])
        return SphereMax(v, v, np.ones(1), np.ones((1, 1)))
    if d == 2:
        return _circle_max(f, rtol, n0 or 4096, max_rounds)
    if d == 3:
        return _sphere3_max(f, rtol, max_rounds)
    raise ValueError("only d in {1, 2, 3} is supported")


def _circle_max(f, rtol, n0, max_rounds):
    theta = np.linspace(0.0, np.pi, n0, endpoint=False)
    vals = f(_circle_dirs(theta))
    # intervals [theta_j, theta_j + width_j]; the function has period pi
    left = theta
    width = np.full(n0, np.pi / n0)
    fl = vals
    fr = np.roll(vals, -1)
    best_i = int(np.argmax(vals))
    lower, best_t = float(vals[best_i]), float(theta[best_i])
    for _ in range(max_rounds):
        ub = np.maximum(fl, fr) / np.cos(width / 2)
        upper = float(ub.max())
        if upper <= lower * (1 + rtol) or upper - lower <= 1e-300:
            break
        active = ub > lower * (1 + rtol)
        l, w, a, b = left[active], width[active] / 2, fl[active], fr[active]
        mids = l + w
        fm = f(_circle_dirs(mids))
        j = int(np.argmax(fm))
        if fm[j] > lower:
            lower, best_t = float(fm[j]), float(mids[j])
        left = np.concatenate([l, mids])
        width = np.concatenate([w, w])
        fl = np.concatenate([a, fm])
        fr = np.concatenate([fm, b])
    ub = np.maximum(fl, fr) / np.cos(width / 2)
    upper = max(float(ub.max()), lower)
    near = left[ub >= lower * (1 - 1e-3)] if lower > 0 else left[:1]
    cands = _circle_dirs(np.unique(np.round(np.append(near, best_t), 12)))
    return SphereMax(lower, upper, _circle_dirs(np.array([best_t]))[0], cands)


def _sphere3_max(f, rtol, max_rounds):
    tri = _icosphere(3)
    best_val, best_dir = -1.0, None
    upper = np.inf
    for _ in range(max_rounds):
        F = tri.shape[0]
        vals = f(tri.reshape(-1, 3)).reshape(F, 3)
        j = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[j] > best_val:
            best_val, best_dir = float(vals[j]), tri[j].copy()
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        h = np.abs(np.einsum("fi,fi->f", n, tri[:, 0]))
        ub = vals.max(axis=1) / h
        upper = float(ub.max())
        if upper <= best_val * (1 + rtol):
            break
        active = ub > best_val * (1 + rtol)
        sub = tri[active]
        if sub.shape[0] > 200000:
            sub = sub[np.argsort(-ub[active])[:200000]]
        tri = _split_triangles(sub)
    upper = max(upper, best_val)
    flat = tri.reshape(-1, 3)
    fv = f(flat)
    order = np.argsort(-fv)
    cands = flat[order[fv[order] >= best_val * (1 - 1e-2)]][:64]
    return SphereMax(best_val, upper, best_dir, np.vstack([best_dir[None, :], cands]))


# --------------------------------------------------------------------------
# comass
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ComassBound:
    lower: float
    upper: float
    direction: np.ndarray
    candidates: np.ndarray = field(repr=False, default=None)

    @property
    def value(self) -> float:
        return self.lower


@lru_cache(maxsize=16)
def _sign_classes(k: int) -> np.ndarray:
    """Sign vectors in {+-1}^k modulo global sign (first entry +1)."""
    return np.array([s for s in itertools.product((1.0, -1.0), repeat=k) if s[0] > 0])


def comass_bounds(W, p, blocks=None, rtol: float = 1e-12) -> ComassBound:
    """Certified comass of an (R^k)*-valued 1-covector W (k x d).

    The comass is the supremum over unit tau of the dual (l^q) norm of W tau.
    With ``blocks`` the rows of W are grouped into Euclidean blocks (used for
    the complex nuclear norm dual).
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    p = as_exponent(p)
    q = p.conjugate()
    n, d = W.shape
    if not W.any():
        return ComassBound(0.0, 0.0, np.eye(d)[0], np.eye(d)[:1])
    if q == 2:
        _, s, vt = np.linalg.svd(W)
        return ComassBound(float(s[0]), float(s[0]), vt[0], vt[:1])
    if q.is_inf:
        groups = [np.array([i]) for i in range(n)] if blocks is None else blocks
        best, best_dir = -1.0, None
        for g in groups:
            _, s, vt = np.linalg.svd(W[g])
            if s[0] > best:
                best, best_dir = float(s[0]), vt[0]
        return ComassBound(best, best, best_dir, best_dir[None, :])
    if q == 1 and blocks is None and n <= 16:
        S = _sign_classes(n)
        cols = S @ W  # (S, d)
        norms = np.linalg.norm(cols, axis=1)
        j = int(np.argmax(norms))
        direction = cols[j] / norms[j] if norms[j] > 0 else np.eye(d)[0]
        return ComassBound(float(norms[j]), float(norms[j]), direction, direction[None, :])

    def f(tau):
        return np.atleast_1d(group_norm(tau @ W.T, blocks, q))

    res = sphere_max(f, d, rtol=rtol)
    return ComassBound(res.lower, res.upper, res.direction, res.local_maxima)


def comass_p(W, p) -> float:
    """p-comass of an (R^k)*-valued 1-covector given as a k x d real array."""
    return comass_bounds(W, p).lower


# --------------------------------------------------------------------------
# mass and nuclear norms
# --------------------------------------------------------------------------


@dataclass
class MassCertificate:
    """Primal/dual certificate pair for a mass or nuclear norm.

    ``terms`` is a list of (z, tau) with sum z (x) tau = V exactly up to the
    residual already priced into ``upper``; ``dual`` has comass at most
    ``dual_comass`` so that <dual, V>/dual_comass is a valid lower bound.
    """

    value: float
    lower: float
    upper: float
    dual: np.ndarray
    terms: list = field(default_factory=list, repr=False)
    method: str = ""

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def _block_trace_norm(R, blocks):
    if blocks is None:
        return float(np.linalg.norm(R, axis=1).sum())
    return float(sum(np.linalg.svd(R[b], compute_uv=False).sum() for b in blocks))


def _residual_terms(R, blocks):
    """Rank-one terms representing R, priced at sum of block trace norms."""
    terms = []
    n = R.shape[0]
    groups = [np.array([i]) for i in range(n)] if blocks is None else blocks
    for g in groups:
        u, s, vt = np.linalg.svd(R[g], full_matrices=False)
        for j in range(len(s)):
            if s[j] > 0:
                z = np.zeros(n)
                z[g] = u[:, j] * s[j]
                terms.append((z, vt[j]))
    return terms


def _certify(V, blocks, p, W, terms, method, tol):
    """Turn a dual guess and primal terms into a validated certificate."""
    W = np.asarray(W, float)
    if np.sum(W * V) < 0:
        W = -W
    cb = comass_bounds(W, p, blocks)
    inner = float(np.sum(W * V))
    lower = inner / cb.upper if cb.upper > 0 else 0.0
    recon = np.zeros_like(V)
    cost = 0.0
    for z, tau in terms:
        recon += np.outer(z, tau)
        cost += float(group_norm(z, blocks, p)) * float(np.linalg.norm(tau))
    R = V - recon
    upper = cost + _block_trace_norm(R, blocks)
    all_terms = list(terms) + _residual_terms(R, blocks)
    lower = min(lower, upper)
    value = 0.5 * (lower + upper)
    cert = MassCertificate(value, lower, upper, W / cb.upper if cb.upper > 0 else W, all_terms, method)
    if cert.gap > tol * max(1.0, upper):
        raise NonconvergenceError(f"mass bounds did not meet ({method}): gap {cert.gap:.3e}", cert.gap)
    return cert


def _mass_closed_form(V, blocks, p):
    n, d = V.shape
    groups = [np.array([i]) for i in range(n)] if blocks is None else blocks
    if p == 1:
        terms, W = [], np.zeros_like(V)
        total = 0.0
        for g in groups:
            u, s, vt = np.linalg.svd(V[g], full_matrices=False)
            total += s.sum()
            r = int(np.sum(s > s[0] * 1e-14)) if s[0] > 0 else 0
            W[g] = u[:, :r] @ vt[:r] if r else 0.0
            for j in range(r):
                z = np.zeros(n)
                z[g] = u[:, j] * s[j]
                terms.append((z, vt[j]))
        if blocks is None:
            total = np.linalg.norm(V, axis=1).sum()
        return float(total), W, terms, "closed-form p=1"
    if p == 2:
        u, s, vt = np.linalg.svd(V, full_matrices=False)
        r = int(np.sum(s > s[0] * 1e-14)) if s[0] > 0 else 0
        W = u[:, :r] @ vt[:r] if r else np.zeros_like(V)
        terms = [(u[:, j] * s[j], vt[j]) for j in range(r)]
        return float(s.sum()), W, terms, "trace norm"
    return None


def _rank_one(V, blocks, p):
    """Exact value when V = z (x) tau."""
    u, s, vt = np.linalg.svd(V, full_matrices=False)
    if s[0] == 0:
        return 0.0, np.zeros_like(V), [], "zero"
    if len(s) > 1 and s[1] > 1e-13 * s[0]:
        return None
    z = u[:, 0] * s[0]
    tau = vt[0]
    val = float(group_norm(z, blocks, p))
    # dual: W = g tau^T with g a norming functional of z
    g = _norming_functional(z, blocks, p)
    return val, np.outer(g, tau), [(z, tau)], "rank one"


def _norming_functional(z, blocks, p):
    """g with group-dual-norm(g) = 1 and <g, z> = group-norm(z)."""
    n = len(z)
    groups = [np.array([i]) for i in range(n)] if blocks is None else blocks
    mags = np.array([np.linalg.norm(z[g]) for g in groups])
    g = np.zeros(n)
    if not mags.any():
        return g
    if p.is_inf:
        j = int(np.argmax(mags))
        weights = np.zeros_like(mags)
        weights[j] = 1.0
    elif p == 1:
        weights = np.ones_like(mags)
    else:
        pf = float(p.value)
        m = mags / mags.max()
        weights = m ** (pf - 1)
        weights /= lp_norm(weights, p.conjugate())
    for w, gi, mag in zip(weights, groups, mags):
        if mag > 0:
            g[gi] = w * z[gi] / mag
    return g


def _solve_sign_socp(Vs, signs):
    """Batched l^inf mass: min sum |tau_s| s.t. sum_s s_i tau_s = v_i, per matrix."""
    import cvxpy as cp
    import scipy.sparse as sp

    N, k, d = Vs.shape
    S = len(signs)
    tau = cp.Variable((N * S, d))
    A = sp.kron(sp.identity(N, format="csr"), sp.csr_matrix(signs.T), format="csr")
    con = A @ tau == Vs.reshape(N * k, d)
    prob = cp.Problem(cp.Minimize(cp.sum(cp.norm(tau, 2, axis=1))), [con])
    _solve(prob)
    taus = np.asarray(tau.value).reshape(N, S, d)
    W = -np.asarray(con.dual_value).reshape(N, k, d)
    return taus, W


def _solve(prob):
    import cvxpy as cp

    with warnings.catch_warnings():
        # inaccurate solutions are caught by the certificates downstream
        warnings.simplefilter("ignore", UserWarning)
        try:
            prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11,
                       max_iter=400)
        except cp.error.SolverError:
            prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise NonconvergenceError(f"conic subproblem status {prob.status}")


def _restricted_primal(V, blocks, p, dirs):
    """min sum_j g(z_j) s.t. sum_j z_j tau_j^T = V over a finite direction set."""
    import cvxpy as cp

    n, d = V.shape
    M = dirs.shape[0]
    Z = cp.Variable((M, n))
    cons = [Z.T @ dirs == V]
    groups = [np.array([i]) for i in range(n)] if blocks is None else blocks
    if blocks is None:
        mags = cp.abs(Z)
    else:
        mags = cp.hstack([cp.reshape(cp.norm(Z[:, g], 2, axis=1), (M, 1), order="C") for g in groups])
    ng = len(groups)
    if p.is_inf:
        t = cp.max(mags, axis=1)
        obj = cp.sum(t)
    elif p == 1:
        obj = cp.sum(mags)
    elif p == 2:
        obj = cp.sum(cp.norm(Z, 2, axis=1))
    else:
        # ||z||_p <= t  iff  |z_i| <= r_i^(1/p) t^(1-1/p) with sum r = t
        t = cp.Variable(M)
        r = cp.Variable((M, ng))
        if blocks is None:
            inner = Z
        else:
            inner = cp.Variable((M, ng))
            cons.append(mags <= inner)
        cons += [cp.sum(r, axis=1) == t,
                 cp.constraints.PowCone3D(cp.vec(r, order="C"),
                                          cp.vec(cp.hstack([cp.reshape(t, (M, 1), order="C")] * ng), order="C"),
                                          cp.vec(inner, order="C"),
                                          float(1 / p.value))]
        obj = cp.sum(t)
    prob = cp.Problem(cp.Minimize(obj), cons)
    _solve(prob)
    Zv = np.asarray(Z.value)
    W = -np.asarray(cons[0].dual_value)
    return Zv, W


def _initial_dirs(d, m):
    if d == 2:
        return _circle_dirs(np.linspace(0, np.pi, m, endpoint=False))
    level = 1 if m <= 32 else 2
    return _hemisphere(np.unique(np.round(_icosphere(level).reshape(-1, 3), 12), axis=0))


def _hemisphere(pts):
    """Identify antipodal directions (tau and -tau give the same rank-one term)."""
    flip = (pts[:, 2] < -1e-12) | ((np.abs(pts[:, 2]) <= 1e-12) & (pts[:, 1] < -1e-12)) | (
        (np.abs(pts[:, 2]) <= 1e-12) & (np.abs(pts[:, 1]) <= 1e-12) & (pts[:, 0] < 0))
    pts = np.where(flip[:, None], -pts, pts)
    return np.unique(np.round(pts, 12), axis=0)


def _exchange(V, blocks, p, tol, max_rounds=40):
    """Column generation on the direction set until primal and dual meet."""
    n, d = V.shape
    dirs = _initial_dirs(d, 64)
    last = None
    for _ in range(max_rounds):
        Z, W = _restricted_primal(V, blocks, p, dirs)
        if np.sum(W * V) < 0:
            W = -W
        terms = [(Z[j], dirs[j]) for j in range(len(dirs)) if np.linalg.norm(Z[j]) > 1e-14]
        try:
            return _certify(V, blocks, p, W, terms, "direction exchange", tol)
        except NonconvergenceError as err:
            last = err
        cb = comass_bounds(W, p, blocks)
        dirs = np.concatenate([dirs, np.atleast_2d(cb.candidates), np.atleast_2d(cb.direction)])
        if d == 2:
            th = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), np.pi)
            dirs = _circle_dirs(np.unique(np.round(th, 13)))
        else:
            dirs = _hemisphere(dirs)
    raise NonconvergenceError("direction exchange did not converge", getattr(last, "gap", float("nan")))


def _mass_certified(V, p, blocks, tol):
    V = np.atleast_2d(np.asarray(V, dtype=float))
    p = as_exponent(p)
    n, d = V.shape
    if d not in (1, 2, 3):
        raise ValueError("ambient dimension must be at most 3")
    if not V.any():
        return MassCertificate(0.0, 0.0, 0.0, np.zeros_like(V), [], "zero")
    cf = _mass_closed_form(V, blocks, p)
    if cf is None:
        cf = _rank_one(V, blocks, p)
    if cf is not None:
        val, W, terms, method = cf
        cert = _certify(V, blocks, p, W, terms, method, max(tol, 1e-9))
        # the closed form is the value; the certificate brackets it up to rounding
        cert.value = val
        return cert
    # conic solves are better conditioned on V / |V|_F (the mass is 1-homogeneous)
    scale = float(np.linalg.norm(V))
    U = V / scale
    if p.is_inf and blocks is None and n <= 12:
        signs = _sign_classes(n)
        taus, W = _solve_sign_socp(U[None], signs)
        terms = [(signs[s], taus[0, s]) for s in range(len(signs)) if np.linalg.norm(taus[0, s]) > 0]
        c = _certify(U, blocks, p, W[0], terms, "sign decomposition", tol)
    else:
        c = _exchange(U, blocks, p, tol)
    return MassCertificate(c.value * scale, c.lower * scale, c.upper * scale, c.dual,
                           [(z, tau * scale) for z, tau in c.terms], c.method)


def mass_p_certified(v, p, tol: float = 1e-6, method: str = "auto") -> MassCertificate:
    """p-mass of an R^k-valued 1-vector (k x d real array) with certificates.

    ``method="exchange"`` bypasses the closed forms and always runs the
    general column-generation solver (useful for cross-checking).
    """
    if method == "exchange":
        V = np.atleast_2d(np.asarray(v, dtype=float))
        return _exchange(V, None, as_exponent(p), tol)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    return _mass_certified(v, p, None, tol)


def mass_p(v, p, tol: float = 1e-6) -> float:
    """p-mass of an R^k-valued 1-vector given as a k x d real array."""
    return mass_p_certified(v, p, tol).value


def _complex_blocks(A):
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    k, d = A.shape
    V = np.empty((2 * k, d))
    V[0::2] = A.real
    V[1::2] = A.imag
    blocks = [np.array([2 * i, 2 * i + 1]) for i in range(k)]
    return V, blocks


def phase_reduce(A, rtol: float = 1e-12):
    """If every row of A is a unit complex multiple of a real row, return the real rows.

    For such A the complex decomposition can be replaced by its real part
    without increasing the cost, so the nuclear norm equals the real mass.
    """
    V, blocks = _complex_blocks(A)
    rows = []
    for b in blocks:
        u, s, vt = np.linalg.svd(V[b], full_matrices=False)
        if s[0] == 0:
            rows.append(np.zeros(V.shape[1]))
            continue
        if len(s) > 1 and s[1] > rtol * s[0]:
            return None
        rows.append(vt[0] * s[0])
    return np.array(rows)


def nuclear_p_certified(A, p, tol: float = 1e-6, reduce: bool = True) -> MassCertificate:
    """p-nuclear norm of a linear map R^d -> C^k given as a k x d complex array."""
    A = np.atleast_2d(np.asarray(A))
    if reduce:
        R = phase_reduce(A)
        if R is not None:
            return _mass_certified(R, p, None, tol)
    V, blocks = _complex_blocks(A)
    return _mass_certified(V, p, blocks, tol)


def nuclear_p(A, p, tol: float = 1e-6) -> float:
    return nuclear_p_certified(A, p, tol).value


def nuclear_p_batch(As, p, tol: float = 1e-6, rtol: float = 1e-12) -> np.ndarray:
    """Vectorised p-nuclear norm for a stack of complex k x d matrices.

    Rows that are unit complex multiples of real rows are reduced to the real
    mass in one batched call; other matrices go through the block solver.
    """
    As = np.asarray(As, dtype=complex)
    N, k, d = As.shape
    blocks = np.stack([As.real, As.imag], axis=2)  # (N, k, 2, d)
    u, s, vt = np.linalg.svd(blocks, full_matrices=False)
    reducible = np.all(s[..., 1] <= rtol * np.maximum(s[..., 0], 1e-300), axis=1) if min(2, d) > 1 \
        else np.ones(N, bool)
    out = np.empty(N)
    if reducible.any():
        R = vt[reducible, :, 0, :] * s[reducible, :, :1]
        out[reducible] = mass_p_batch(R, p, tol)
    for n in np.flatnonzero(~reducible):
        out[n] = nuclear_p_certified(As[n], p, tol, reduce=False).value
    return out


def mass_p_batch(Vs, p, tol: float = 1e-6) -> np.ndarray:
    """Vectorised p-mass for a stack of real k x d matrices.

    Rank-one matrices and p in {1, 2} use closed forms; the remaining matrices
    are solved jointly (l^inf) or one at a time (other p).
    """
    Vs = np.asarray(Vs, dtype=float)
    p = as_exponent(p)
    N, k, d = Vs.shape
    if p == 1:
        return np.linalg.norm(Vs, axis=2).sum(axis=1)
    s = np.linalg.svd(Vs, compute_uv=False)
    if p == 2:
        return s.sum(axis=1)
    out = np.empty(N)
    rank1 = s[:, 1] <= 1e-13 * s[:, 0] if s.shape[1] > 1 else np.ones(N, bool)
    rank1 |= s[:, 0] == 0
    if rank1.any():
        u, sv, vt = np.linalg.svd(Vs[rank1], full_matrices=False)
        out[rank1] = lp_norm(u[:, :, 0] * sv[:, :1], p)
    rest = np.flatnonzero(~rank1)
    if rest.size == 0:
        return out
    if p.is_inf and k == 2:
        # the sign vectors (1, 1) and (1, -1) form a basis, so the decomposition is unique
        R = Vs[rest]
        out[rest] = 0.5 * (np.linalg.norm(R[:, 0] + R[:, 1], axis=1) + np.linalg.norm(R[:, 0] - R[:, 1], axis=1))
        return out
    if p.is_inf and k <= 12:
        signs = _sign_classes(k)
        for chunk in np.array_split(rest, max(1, rest.size // 500 + 1)):
            scale = np.linalg.norm(Vs[chunk], axis=(1, 2))
            taus, W = _solve_sign_socp(Vs[chunk] / scale[:, None, None], signs)
            taus *= scale[:, None, None]
            com = np.linalg.norm(np.einsum("nkd,sk->nsd", W, signs), axis=2).max(axis=1)
            lower = np.einsum("nkd,nkd->n", W, Vs[chunk]) / com
            recon = np.einsum("sk,nsd->nkd", signs, taus)
            upper = np.linalg.norm(taus, axis=2).sum(axis=1) + np.linalg.norm(Vs[chunk] - recon, axis=2).sum(axis=1)
            gap = upper - lower
            bad = gap > tol * np.maximum(upper, 1.0)
            out[chunk] = 0.5 * (lower + upper)
            for i in chunk[bad]:
                out[i] = mass_p_certified(Vs[i], p, tol).value
        return out
    for i in rest:
        out[i] = mass_p_certified(Vs[i], p, tol).value
    return out


# --------------------------------------------------------------------------
# Hodge star
# --------------------------------------------------------------------------


def multi_indices(d: int, m: int):
    """Increasing multi-indices of length m in {0, ..., d-1}, lexicographic."""
    return list(itertools.combinations(range(d), m))


def permutation_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def hodge_matrix(d: int, m: int) -> np.ndarray:
    """Matrix of the Hodge star on m-(co)vector coefficients.

    Coefficients are indexed by :func:`multi_indices`; star dx_I = sigma(I, I') e_I'.
    """
    if d not in (1, 2, 3):
        raise ValueError("Hodge star is implemented for d <= 3 only")
    if not 0 <= m <= d:
        raise ValueError("degree out of range")
    src = multi_indices(d, m)
    dst = multi_indices(d, d - m)
    H = np.zeros((len(dst), len(src)))
    for j, I in enumerate(src):
        Ic = tuple(i for i in range(d) if i not in I)
        H[dst.index(Ic), j] = permutation_sign(I + Ic)
    return H


def hodge_star(x, m: int, d: int | None = None) -> np.ndarray:
    """Apply the Hodge star row-wise to a stack of m-(co)vector coefficients.

    ``x`` has shape (..., C(d, m)); for m = 1 this is a k x d matrix.  When
    ``d`` is omitted it is inferred for m = 1 from the last axis.
    """
    x = np.asarray(x)
    if d is None:
        if m != 1:
            raise ValueError("d must be given for m != 1")
        d = x.shape[-1]
    if d > 3:
        raise ValueError("Hodge star is implemented for d <= 3 only")
    H = hodge_matrix(d, m)
    if x.shape[-1] != H.shape[1]:
        raise ValueError("coefficient length does not match C(d, m)")
    return x @ H.T


def rotate_quarter(V) -> np.ndarray:
    """Hodge star of planar 1-covectors: (a, b) -> (-b, a), applied row-wise."""
    V = np.asarray(V)
    return np.stack([-V[..., 1], V[..., 0]], axis=-1)
