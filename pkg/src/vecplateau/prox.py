"""Row-wise proximal maps of w * ||z||_p and projections onto l^q balls.

All functions act on a ``(E, k)`` array with a length-``E`` weight vector and
return a new array; rows are independent.
"""

from __future__ import annotations

import numpy as np

from .lpalgebra import as_exponent


def project_l1_ball(Y, r):
    """Euclidean projection of each row of Y onto {x : ||x||_1 <= r_row}."""
    Y = np.asarray(Y, float)
    r = np.broadcast_to(np.asarray(r, float), Y.shape[:1])
    A = np.abs(Y)
    out = Y.copy()
    inside = A.sum(axis=1) <= r
    idx = np.flatnonzero(~inside)
    if idx.size == 0:
        return out
    a = A[idx]
    s = -np.sort(-a, axis=1)
    cs = np.cumsum(s, axis=1)
    j = np.arange(1, a.shape[1] + 1)
    cond = s - (cs - r[idx, None]) / j > 0
    rho = a.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = (cs[np.arange(len(idx)), rho] - r[idx]) / (rho + 1)
    out[idx] = np.sign(Y[idx]) * np.maximum(a - theta[:, None], 0.0)
    return out


def _prox_general(Z, w, p, iters: int = 55):
    """prox of w ||.||_p for finite p not in {1, 2}, by a nested monotone solve.

    With s = ||x||_p the optimality system decouples into scalar equations
    x_i + w s^(1-p) x_i^(p-1) = |z_i|; the outer unknown s is found by
    bisection on the monotone residual ||x(s)||_p - s.
    """
    pf = float(p)
    q = pf / (pf - 1)
    A = np.abs(Z)
    out = np.zeros_like(Z)
    amax = A.max(axis=1)
    # rows with ||z||_q <= w map to zero
    scale = np.where(amax > 0, amax, 1.0)
    nq = scale * ((A / scale[:, None]) ** q).sum(axis=1) ** (1 / q)
    act = np.flatnonzero(nq > w)
    if act.size == 0:
        return out
    a = A[act] / scale[act, None]  # normalise so that the largest entry is 1
    ww = w[act] / scale[act]
    solve = _scalar_solver(p)
    lo = np.zeros(act.size)
    hi = (a**pf).sum(axis=1) ** (1 / pf)
    for _ in range(iters):
        s = 0.5 * (lo + hi)
        x = solve(a, (ww * s ** (1 - pf))[:, None])
        g = (x**pf).sum(axis=1) ** (1 / pf) - s
        pos = g > 0
        lo = np.where(pos, s, lo)
        hi = np.where(pos, hi, s)
    s = 0.5 * (lo + hi)
    x = solve(a, (ww * s ** (1 - pf))[:, None])
    out[act] = np.sign(Z[act]) * x * scale[act, None]
    return out


def _depressed_cubic(c, a):
    """Real root t >= 0 of t^3 + c t - a = 0 for c >= 0, a >= 0 (Cardano)."""
    d = np.sqrt(a * a / 4 + c**3 / 27)
    u2 = np.cbrt(a / 2 + d) ** 2
    u2 = np.where(u2 > 0, u2, 1.0)
    # t = a / (t^2 + c) with t = u - c/(3u), written without cancellation
    return np.where(a > 0, a / (u2 + c / 3 + c * c / (9 * u2)), 0.0)


def _solve_scalar(a, c, p, iters: int = 60):
    """Solve x + c x^(p-1) = a for x in [0, a] (safeguarded Newton)."""
    lo = np.zeros_like(a)
    hi = np.broadcast_to(a, np.broadcast_shapes(a.shape, np.shape(c))).copy()
    x = 0.5 * hi
    for _ in range(iters):
        xp = np.maximum(x, 1e-300)
        f = x + c * xp ** (p - 1) - a
        lo = np.where(f < 0, x, lo)
        hi = np.where(f < 0, hi, x)
        df = 1 + c * (p - 1) * xp ** (p - 2)
        xn = x - f / df
        bad = ~((xn > lo) & (xn < hi))
        x = np.where(bad, 0.5 * (lo + hi), xn)
        if np.all(hi - lo <= 1e-15 * np.maximum(a, 1e-300)):
            break
    return x


def _scalar_solver(p):
    """Solver for x + c x^(p-1) = a on [0, a]; closed forms for p in {3/2, 4/3, 3, 4}."""
    from fractions import Fraction

    if p == Fraction(3):
        return lambda a, c: 2 * a / (1 + np.sqrt(1 + 4 * c * a))
    if p == Fraction(3, 2):
        # x = t^2 with t^2 + c t - a = 0
        return lambda a, c: (2 * a / (c + np.sqrt(c * c + 4 * a))) ** 2
    if p == Fraction(4, 3):
        # x = t^3 with t^3 + c t - a = 0
        return lambda a, c: _depressed_cubic(c, a) ** 3
    if p == Fraction(4):
        # c x^3 + x - a = 0, i.e. x^3 + x/c - a/c = 0
        return lambda a, c: _depressed_cubic(1 / c, a / c)
    pf = float(p)
    return lambda a, c: _solve_scalar(a, c, pf)


def prox_norm(Z, w, p):
    """Row-wise prox of w_e * ||z_e||_p."""
    p = as_exponent(p)
    Z = np.asarray(Z, float)
    w = np.broadcast_to(np.asarray(w, float), Z.shape[:1])
    if p == 1:
        return np.sign(Z) * np.maximum(np.abs(Z) - w[:, None], 0.0)
    if p == 2:
        nrm = np.linalg.norm(Z, axis=1)
        f = np.maximum(1 - w / np.where(nrm > 0, nrm, 1.0), 0.0)
        return Z * f[:, None]
    if p.is_inf:
        return Z - project_l1_ball(Z, w)
    return _prox_general(Z, w, p.value)
