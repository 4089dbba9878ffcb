"""Polyhedral 0- and 1-currents in the plane with vector multiplicities.

A :class:`PointBoundary` is a finite sum of Dirac masses with multiplicities in
Z^k (or R^k); a :class:`PolyCurrent` is a finite union of oriented segments with
vector multiplicities.  The boundary operator acts combinatorially: an edge
A -> B with multiplicity m contributes m at B and -m at A.

The module also provides the radial mollifier and the field R_eps that solves
Div R_eps = delta_0 - rho_eps, used by the torus-map construction.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import linear_sum_assignment

from .lpalgebra import as_exponent, lp_norm

#: two atoms closer than this fraction of the diameter are considered equal
MERGE_RTOL = 1e-9


def _as_mults(m, k=None):
    m = np.asarray(m)
    if m.ndim == 1:
        m = m[:, None] if k == 1 else m[None, :]
    if np.issubdtype(m.dtype, np.integer):
        return m.astype(np.int64)
    return m.astype(float)


def _is_integral(m) -> bool:
    m = np.asarray(m)
    return bool(np.issubdtype(m.dtype, np.integer) or np.all(m == np.round(m)))


# --------------------------------------------------------------------------
# 0-currents
# --------------------------------------------------------------------------


@dataclass
class PointBoundary:
    """Finite sum of atoms m_a delta_{x_a} with m_a in Z^k (or R^k)."""

    positions: np.ndarray  # (n, 2)
    mults: np.ndarray  # (n, k)
    k: int = 0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float)).reshape(-1, 2)
        mults = np.asarray(self.mults)
        if mults.size == 0:
            k = self.k or (mults.shape[-1] if mults.ndim == 2 else 1)
            mults = np.zeros((len(self.positions), k), dtype=np.int64)
        else:
            mults = mults.reshape(len(self.positions), -1)
        if _is_integral(mults):
            mults = np.round(mults).astype(np.int64)
        self.mults = mults
        if self.k == 0:
            self.k = mults.shape[1]
        if mults.shape[1] != self.k:
            raise ValueError("multiplicity length does not match k")

    # -- basic properties --------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.positions)

    def diameter(self) -> float:
        if self.n < 2:
            return 0.0
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())

    def total(self) -> np.ndarray:
        return self.mults.sum(axis=0)

    def is_balanced(self, atol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(self.total()) <= atol))

    def validate(self):
        """Raise ValueError unless per-component totals vanish and atoms are distinct."""
        if not self.is_balanced():
            raise ValueError(f"multiplicities do not sum to zero per component: {self.total().tolist()}")
        tol = MERGE_RTOL * max(self.diameter(), 1.0)
        for a, b in itertools.combinations(range(self.n), 2):
            if np.linalg.norm(self.positions[a] - self.positions[b]) <= tol:
                raise ValueError(f"atoms {a} and {b} coincide")
        return self

    def merged(self) -> "PointBoundary":
        """Merge atoms closer than the distinctness threshold and drop zero atoms."""
        tol = MERGE_RTOL * max(self.diameter(), 1.0)
        pos, mul = [], []
        for x, m in zip(self.positions, self.mults):
            for j, y in enumerate(pos):
                if np.linalg.norm(x - y) <= tol:
                    mul[j] = mul[j] + m
                    break
            else:
                pos.append(x.copy())
                mul.append(m.copy())
        keep = [j for j, m in enumerate(mul) if np.any(m != 0)]
        return PointBoundary(np.array([pos[j] for j in keep]).reshape(-1, 2),
                             np.array([mul[j] for j in keep]).reshape(-1, self.k), self.k)

    def component(self, i: int):
        """Atoms of component i as (positions, scalar multiplicities), zeros dropped."""
        m = self.mults[:, i]
        nz = m != 0
        return self.positions[nz], m[nz]

    def transformed(self, scale=1.0, shift=(0.0, 0.0)) -> "PointBoundary":
        return PointBoundary(self.positions * scale + np.asarray(shift), self.mults.copy(), self.k)

    def __add__(self, other: "PointBoundary") -> "PointBoundary":
        return PointBoundary(np.vstack([self.positions, other.positions]),
                             np.vstack([self.mults, other.mults]), self.k).merged()

    def __neg__(self):
        return PointBoundary(self.positions.copy(), -self.mults, self.k)

    def __sub__(self, other):
        return self + (-other)

    def is_zero(self) -> bool:
        return self.merged().n == 0

    def equals(self, other: "PointBoundary", atol: float = 1e-9) -> bool:
        return _atoms_close((self - other).merged(), atol)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {"k": int(self.k),
                "atoms": [{"pos": [float(x), float(y)], "mult": m.tolist()}
                          for (x, y), m in zip(self.positions, self.mults)]}

    @classmethod
    def from_dict(cls, data: dict) -> "PointBoundary":
        try:
            k = int(data["k"])
            atoms = data["atoms"]
            pos = np.array([a["pos"] for a in atoms], dtype=float).reshape(-1, 2)
            mul = np.array([a["mult"] for a in atoms]).reshape(-1, k)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed boundary instance: {exc}") from exc
        return cls(pos, mul, k).validate()

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "PointBoundary":
        s = str(text_or_path)
        if not s.lstrip().startswith("{"):
            s = Path(s).read_text()
        return cls.from_dict(json.loads(s))


def _atoms_close(b: PointBoundary, atol: float) -> bool:
    return b.n == 0 or float(np.abs(b.mults).max()) <= atol


# --------------------------------------------------------------------------
# 1-currents
# --------------------------------------------------------------------------


@dataclass
class PolyCurrent:
    """Oriented segments (tail, head) with multiplicities in Z^k or R^k."""

    vertices: np.ndarray  # (V, 2)
    edges: np.ndarray  # (E, 2) int
    mults: np.ndarray  # (E, k)
    ring: str = "integer"

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        m = np.asarray(self.mults)
        k = m.shape[-1] if m.ndim == 2 else (m.shape[0] if len(self.edges) == 0 else 1)
        self.mults = m.reshape(len(self.edges), -1) if m.size else np.zeros((len(self.edges), max(k, 1)))
        if self.ring not in ("integer", "real"):
            raise ValueError("ring must be 'integer' or 'real'")
        if self.ring == "integer":
            if not _is_integral(self.mults):
                raise ValueError("integer current with non-integral multiplicities")
            self.mults = np.round(self.mults).astype(np.int64)
        else:
            self.mults = self.mults.astype(float)

    @classmethod
    def empty(cls, k: int, ring="integer"):
        return cls(np.zeros((0, 2)), np.zeros((0, 2), int), np.zeros((0, k)), ring)

    @classmethod
    def from_segments(cls, segments, ring=None, merge_tol=None) -> "PolyCurrent":
        """Build from an iterable of (A, B, m) with A, B points in the plane."""
        segments = list(segments)
        if not segments:
            raise ValueError("no segments given")
        pts = np.array([s[0] for s in segments] + [s[1] for s in segments], float)
        tol = merge_tol if merge_tol is not None else MERGE_RTOL * max(_diam(pts), 1.0)
        verts: list = []

        def vid(x):
            for j, y in enumerate(verts):
                if abs(x[0] - y[0]) <= tol and abs(x[1] - y[1]) <= tol:
                    return j
            verts.append(np.asarray(x, float))
            return len(verts) - 1

        edges, mults = [], []
        for a, b, m in segments:
            edges.append((vid(a), vid(b)))
            mults.append(np.atleast_1d(m))
        mults = np.array(mults)
        if ring is None:
            ring = "integer" if _is_integral(mults) else "real"
        return cls(np.array(verts), np.array(edges), mults, ring)

    @property
    def k(self) -> int:
        return self.mults.shape[1]

    def lengths(self) -> np.ndarray:
        if len(self.edges) == 0:
            return np.zeros(0)
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    def tangents(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return d / self.lengths()[:, None]

    def boundary(self) -> PointBoundary:
        """Signed endpoint sums: head gets +m, tail gets -m; zero atoms omitted."""
        acc = np.zeros((len(self.vertices), self.k), dtype=self.mults.dtype)
        np.add.at(acc, self.edges[:, 1], self.mults)
        np.subtract.at(acc, self.edges[:, 0], self.mults)
        if self.ring == "real":
            scale = max(1.0, float(np.abs(self.mults).max(initial=0.0)))
            acc = np.where(np.abs(acc) <= 1e-12 * scale, 0.0, acc)
        nz = np.any(acc != 0, axis=1)
        return PointBoundary(self.vertices[nz], acc[nz], self.k)

    def mass(self, p) -> float:
        return mass_p_current(self, p)

    def component_mass(self) -> np.ndarray:
        """Euclidean mass of each scalar component T_i."""
        return (self.lengths()[:, None] * np.abs(self.mults)).sum(axis=0)

    def canonical(self, drop_zero: bool = True) -> "PolyCurrent":
        """Orient every edge with tail < head, merge parallel copies, drop zero edges."""
        acc: dict = {}
        for (t, h), m in zip(self.edges, self.mults):
            if t == h:
                continue
            key, sign = ((t, h), 1) if t < h else ((h, t), -1)
            acc[key] = acc.get(key, 0) + sign * m
        keys = sorted(acc)
        if drop_zero:
            scale = max(1.0, float(np.abs(self.mults).max(initial=0.0)))
            keys = [key for key in keys if np.any(np.abs(acc[key]) > (0 if self.ring == "integer" else 1e-12 * scale))]
        edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
        mults = np.array([acc[key] for key in keys]).reshape(-1, self.k)
        used = np.unique(edges)
        remap = -np.ones(len(self.vertices), dtype=np.int64)
        remap[used] = np.arange(len(used))
        out = PolyCurrent(self.vertices[used], remap[edges], mults, self.ring)
        return out

    def planarized(self) -> "PolyCurrent":
        """Split crossing and overlapping segments so that edges meet only at vertices."""
        return planarize(self)

    def is_planar(self, rtol: float = 1e-9) -> bool:
        tol = rtol * max(_diam(self.vertices), 1.0)
        L = self.lengths()
        if np.any(L <= tol):
            return False
        for a, b in itertools.combinations(range(len(self.edges)), 2):
            if _segments_touch_improperly(self, a, b, tol):
                return False
        return True

    def as_real(self) -> "PolyCurrent":
        return PolyCurrent(self.vertices.copy(), self.edges.copy(), self.mults.astype(float), "real")

    def __add__(self, other: "PolyCurrent") -> "PolyCurrent":
        ring = "integer" if (self.ring == other.ring == "integer") else "real"
        segs = list(self.segments()) + list(other.segments())
        if not segs:
            return PolyCurrent.empty(self.k, ring)
        return PolyCurrent.from_segments(segs, ring=ring).planarized()

    def __neg__(self):
        return PolyCurrent(self.vertices.copy(), self.edges.copy(), -self.mults, self.ring)

    def scaled(self, c: float) -> "PolyCurrent":
        return PolyCurrent(self.vertices.copy(), self.edges.copy(), self.mults * c, "real")

    def segments(self):
        for (t, h), m in zip(self.edges, self.mults):
            yield self.vertices[t], self.vertices[h], m

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {"ring": self.ring,
                "vertices": self.vertices.tolist(),
                "edges": [[int(t), int(h), m.tolist()] for (t, h), m in zip(self.edges, self.mults)]}

    @classmethod
    def from_dict(cls, data: dict) -> "PolyCurrent":
        edges = [(e[0], e[1]) for e in data["edges"]]
        mults = [e[2] for e in data["edges"]]
        ring = data.get("ring") or ("integer" if _is_integral(np.array(mults)) else "real")
        return cls(np.array(data["vertices"], float), np.array(edges, int).reshape(-1, 2),
                   np.array(mults).reshape(len(edges), -1), ring)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "PolyCurrent":
        s = str(text_or_path)
        if not s.lstrip().startswith("{"):
            s = Path(s).read_text()
        return cls.from_dict(json.loads(s))


def _diam(pts) -> float:
    pts = np.asarray(pts, float).reshape(-1, 2)
    if len(pts) < 2:
        return 0.0
    return float(np.linalg.norm(pts.max(0) - pts.min(0)))


def mass_p_current(T: PolyCurrent, p) -> float:
    """M_p(T) = sum over edges of length times the l^p norm of the multiplicity."""
    if len(T.edges) == 0:
        return 0.0
    return float(np.sum(T.lengths() * lp_norm(T.mults, as_exponent(p))))


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _segments_touch_improperly(T, a, b, tol) -> bool:
    (ta, ha), (tb, hb) = T.edges[a], T.edges[b]
    shared = {ta, ha} & {tb, hb}
    P, Q = T.vertices[ta], T.vertices[ha]
    R, S = T.vertices[tb], T.vertices[hb]
    for X, (U, W), ends in ((R, (P, Q), (ta, ha)), (S, (P, Q), (ta, ha)),
                            (P, (R, S), (tb, hb)), (Q, (R, S), (tb, hb))):
        if _point_on_open_segment(X, U, W, tol):
            return True
    if shared:
        return False
    r, s = Q - P, S - R
    den = _cross(r, s)
    if abs(den) <= tol * np.linalg.norm(r) * np.linalg.norm(s) * 1e-3:
        return False
    t = _cross(R - P, s) / den
    u = _cross(R - P, r) / den
    return 0 <= t <= 1 and 0 <= u <= 1


def _point_on_open_segment(X, U, W, tol) -> bool:
    d = W - U
    L = np.linalg.norm(d)
    t = float(np.dot(X - U, d) / (L * L))
    if t * L <= tol or (1 - t) * L <= tol:
        return False
    return abs(_cross(d, X - U)) / L <= tol


def planarize(T: PolyCurrent, rtol: float = 1e-9) -> PolyCurrent:
    """Insert vertices at crossings, T-junctions and overlaps, then merge edges."""
    if len(T.edges) == 0:
        return T
    tol = rtol * max(_diam(T.vertices), 1.0)
    verts = [v for v in T.vertices]

    def vid(x):
        for j, y in enumerate(verts):
            if np.linalg.norm(x - y) <= tol:
                return j
        verts.append(np.asarray(x, float))
        return len(verts) - 1

    E = len(T.edges)
    cuts = [[0.0, 1.0] for _ in range(E)]
    P = T.vertices[T.edges[:, 0]]
    Q = T.vertices[T.edges[:, 1]]
    for a in range(E):
        r = Q[a] - P[a]
        La = np.linalg.norm(r)
        for b in range(E):
            if a == b:
                continue
            # endpoints of b lying on a (T-junctions and collinear overlaps)
            for X in (P[b], Q[b]):
                t = float(np.dot(X - P[a], r) / (La * La))
                if tol < t * La < La - tol and abs(_cross(r, X - P[a])) / La <= tol:
                    cuts[a].append(t)
            if b < a:
                continue
            s = Q[b] - P[b]
            den = _cross(r, s)
            if abs(den) <= 1e-14 * La * np.linalg.norm(s):
                continue
            t = _cross(P[b] - P[a], s) / den
            u = _cross(P[b] - P[a], r) / den
            Lb = np.linalg.norm(s)
            if -tol / La <= t <= 1 + tol / La and -tol / Lb <= u <= 1 + tol / Lb:
                if tol < t * La < La - tol:
                    cuts[a].append(float(t))
                if tol < u * Lb < Lb - tol:
                    cuts[b].append(float(u))
    segs_e, segs_m = [], []
    for a in range(E):
        ts = sorted(set(np.round(cuts[a], 15)))
        ids = [vid(P[a] + t * (Q[a] - P[a])) for t in ts]
        for i0, i1 in zip(ids[:-1], ids[1:]):
            if i0 != i1:
                segs_e.append((i0, i1))
                segs_m.append(T.mults[a])
    out = PolyCurrent(np.array(verts), np.array(segs_e, int).reshape(-1, 2),
                      np.array(segs_m).reshape(-1, T.k), T.ring)
    return out.canonical()


# --------------------------------------------------------------------------
# minimal connection
# --------------------------------------------------------------------------


def minimal_connection(P, N):
    """Min over bijections sigma of sum |P_i - N_sigma(i)|, with the matching.

    Returns ``(length, matching)`` where ``matching[i]`` is the index in N
    matched to P[i].
    """
    P = np.asarray(P, float).reshape(-1, 2)
    N = np.asarray(N, float).reshape(-1, 2)
    if len(P) != len(N):
        raise ValueError(f"size mismatch: {len(P)} positive and {len(N)} negative points")
    if len(P) == 0:
        return 0.0, np.zeros(0, dtype=int)
    C = np.linalg.norm(P[:, None, :] - N[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(C)
    match = np.empty(len(P), dtype=int)
    match[rows] = cols
    return float(C[rows, cols].sum()), match


def minimal_connection_bruteforce(P, N):
    """Exhaustive permutation scan, used as an oracle for small sizes."""
    P = np.asarray(P, float).reshape(-1, 2)
    N = np.asarray(N, float).reshape(-1, 2)
    if len(P) != len(N):
        raise ValueError("size mismatch")
    C = np.linalg.norm(P[:, None, :] - N[None, :, :], axis=2)
    best, best_perm = math.inf, None
    for perm in itertools.permutations(range(len(N))):
        v = float(C[np.arange(len(P)), perm].sum())
        if v < best:
            best, best_perm = v, perm
    return (0.0 if best_perm is None else best), np.array(best_perm if best_perm else [], dtype=int)


def expand_atoms(positions, mults):
    """Repeat each point |m| times, splitting into positive and negative lists."""
    positions = np.asarray(positions, float).reshape(-1, 2)
    mults = np.asarray(mults)
    if not _is_integral(mults):
        raise ValueError("expansion needs integer multiplicities")
    m = np.round(mults).astype(int)
    pos = np.repeat(positions, np.maximum(m, 0), axis=0)
    neg = np.repeat(positions, np.maximum(-m, 0), axis=0)
    return pos, neg


# --------------------------------------------------------------------------
# radial mollifier and the field R_eps
# --------------------------------------------------------------------------


def _sphere_area(d: int) -> float:
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class RadialMollifier:
    """rho_eps(x) = eps^-d rho(x/eps) with a polynomial radial profile.

    The profile is c (1 - t^2)^2 in the plane and c (1 - t^4)^2 in R^3; the
    constant c normalises the integral to 1 and stays below 1 in both cases.
    """

    epsilon: float = 1.0
    d: int = 2
    profile_poly: Polynomial = field(default=None, compare=False)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.d not in (2, 3):
            raise ValueError("only d in {2, 3} is supported")
        if self.profile_poly is None:
            t = Polynomial([0, 1])
            base = (1 - t**2) ** 2 if self.d == 2 else (1 - t**4) ** 2
            rad = Polynomial([0] * (self.d - 1) + [1])
            mass = _sphere_area(self.d) * (base * rad).integ()(1.0)
            object.__setattr__(self, "profile_poly", base / mass)

    def with_epsilon(self, eps: float) -> "RadialMollifier":
        return RadialMollifier(eps, self.d, self.profile_poly)

    # radial profiles on [0, 1] (unit scale)

    def profile(self, t):
        t = np.asarray(t, float)
        return np.where(t < 1, self.profile_poly(np.minimum(t, 1.0)), 0.0)

    def _F(self):
        rad = Polynomial([0] * (self.d - 1) + [1])
        G = (self.profile_poly * rad).integ()
        return G(1.0) - G  # F(t) = int_t^1 s^(d-1) rho(s) ds

    def xi(self, t):
        """xi(t) = t^-d int_t^1 s^(d-1) rho(s) ds, zero for t >= 1."""
        t = np.asarray(t, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t < 1, self._F()(np.minimum(t, 1.0)) / t**self.d, 0.0)
        return out

    def rho(self, x):
        """rho_eps at points x of shape (..., d)."""
        x = np.asarray(x, float)
        r = np.linalg.norm(x, axis=-1) / self.epsilon
        return self.profile(r) / self.epsilon**self.d

    def field(self, x):
        """R_eps(x) = eps^-d xi(|x|/eps) x; raises at the origin."""
        x = np.asarray(x, float)
        r = np.linalg.norm(x, axis=-1)
        if np.any(r == 0):
            raise ZeroDivisionError("the mollifier field is singular at the origin")
        s = self.xi(r / self.epsilon) / self.epsilon**self.d
        return s[..., None] * x

    def smoothed_kernel(self, x):
        """K * rho_eps = K - R_eps, with K(x) = x / (|S^(d-1)| |x|^d) the fundamental field.

        Written as x G(t) / (eps^d t^d) with G(t) = int_0^t s^(d-1) rho(s) ds, a
        polynomial divisible by t^d, so the expression is regular at the origin.
        """
        x = np.asarray(x, float)
        r = np.linalg.norm(x, axis=-1)
        t = r / self.epsilon
        rad = Polynomial([0] * (self.d - 1) + [1])
        G = (self.profile_poly * rad).integ()
        H, _ = divmod(G, Polynomial([0] * self.d + [1]))
        inside = H(np.minimum(t, 1.0)) / self.epsilon**self.d
        with np.errstate(divide="ignore", invalid="ignore"):
            outside = 1.0 / (_sphere_area(self.d) * np.where(r > 0, r, 1.0) ** self.d)
        s = np.where(t < 1, inside, outside)
        return s[..., None] * x

    def field_l1(self, n: int = 64) -> float:
        """||R_eps||_L1 by Gauss-Legendre quadrature in the radial variable."""
        # |R_eps| r^(d-1) = eps^-d xi(r/eps) r^d is a polynomial in r
        g, w = np.polynomial.legendre.leggauss(n)
        r = 0.5 * self.epsilon * (g + 1)
        vals = self.xi(r / self.epsilon) * r**self.d / self.epsilon**self.d
        return float(_sphere_area(self.d) * 0.5 * self.epsilon * np.sum(w * vals))

    def total_mass(self, n: int = 64) -> float:
        g, w = np.polynomial.legendre.leggauss(n)
        r = 0.5 * self.epsilon * (g + 1)
        vals = self.profile(r / self.epsilon) * r ** (self.d - 1) / self.epsilon**self.d
        return float(_sphere_area(self.d) * 0.5 * self.epsilon * np.sum(w * vals))


def mollifier_field(mol: RadialMollifier, x):
    return mol.field(x)


def _polar_nodes(d, eps, nr, na):
    g, w = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * eps * (g + 1)
    wr = 0.5 * eps * w
    if d == 2:
        th = 2 * np.pi * np.arange(na) / na
        dirs = np.stack([np.cos(th), np.sin(th)], -1)
        wd = np.full(na, 2 * np.pi / na)
    else:
        gz, wz = np.polynomial.legendre.leggauss(na)
        ph = 2 * np.pi * np.arange(2 * na) / (2 * na)
        st = np.sqrt(1 - gz**2)
        dirs = np.stack([st[:, None] * np.cos(ph)[None, :], st[:, None] * np.sin(ph)[None, :],
                         np.repeat(gz[:, None], 2 * na, 1)], -1).reshape(-1, 3)
        wd = (wz[:, None] * np.full(2 * na, np.pi / na)[None, :]).reshape(-1)
    return r, wr, dirs, wd


def check_divergence_identity(mol: RadialMollifier, phi, grad_phi, tol: float = 1e-10,
                              max_level: int = 7) -> float:
    """Residual |-int R_eps . grad phi - phi(0) + int rho_eps phi|.

    The integrals are taken in polar coordinates, where the r^(1-d)
    singularity of R_eps is cancelled by the Jacobian, so the removed ball
    around the origin shrinks to a single point.  Quadrature orders are doubled
    until two successive values agree to ``tol``.
    """
    d, eps = mol.d, mol.epsilon
    prev = None
    for level in range(max_level):
        nr, na = 16 * 2**level, 32 * 2**level if d == 2 else 12 * 2**level
        r, wr, dirs, wd = _polar_nodes(d, eps, nr, na)
        X = r[:, None, None] * dirs[None, :, :]
        W = (wr * r ** (d - 1))[:, None] * wd[None, :]
        R = mol.field(X)
        lhs = -np.sum(W * np.einsum("ijk,ijk->ij", R, grad_phi(X)))
        rhs = float(np.asarray(phi(np.zeros(d)))) - np.sum(W * mol.rho(X) * phi(X))
        res = abs(lhs - rhs)
        val = lhs - rhs
        if prev is not None and abs(val - prev) <= tol:
            return float(res)
        prev = val
    raise RuntimeError("quadrature for the divergence identity did not converge")
