"""Independent reference solvers used to cross-check the Green sweeps.

Everything here deliberately avoids the production code paths: bounded
discrete solutions come from one dense least-squares solve of the whole
boundary-value system, and continuous ones from scipy's collocation BVP
solver plus a high-order adaptive integrator for extensions.  Slow and
simple on purpose.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_bvp, solve_ivp

from .cocycle import MatrixSequence
from .errors import InputError
from .spectral import ProjectionFamily


def _condition_rows(proj: np.ndarray, tol: float = 1e-11) -> np.ndarray:
    """Rows R with R @ x = 0 equivalent to proj @ x = 0 (full row rank)."""
    u, sv, vt = np.linalg.svd(proj)
    rank = int(np.sum(sv > tol * max(1.0, sv[0] if len(sv) else 0.0)))
    return vt[:rank]


def _forcing_lookup(w_start, w_values, dim):
    w_values = np.atleast_2d(np.asarray(w_values, dtype=float))

    def w_at(n: int) -> np.ndarray:
        i = n - w_start
        if 0 <= i < len(w_values):
            return w_values[i]
        return np.zeros(dim)

    return w_at


def dense_line_solve(seq: MatrixSequence, family: ProjectionFamily,
                     w_start: int, w_values, a: int, b: int):
    """Bounded solution of z_{n+1} = A_n z_n + w_n on [a, b], dense.

    Boundary conditions P_a z_a = 0 and (I - P_b) z_b = 0 characterize the
    restriction of the full-line bounded solution once [a, b] contains the
    forcing support with enough hyperbolic margin.  Returns (values, info).
    """
    if b <= a:
        raise InputError("need b > a")
    d = seq.dim
    if not family.covers(a, b):
        raise InputError("projection family does not cover [a, b]")
    w_at = _forcing_lookup(w_start, w_values, d)
    count = b - a + 1
    rows_p = _condition_rows(family.at(a))
    rows_q = _condition_rows(np.eye(d) - family.at(b))
    m = np.zeros(((count - 1) * d + len(rows_p) + len(rows_q), count * d))
    rhs = np.zeros(m.shape[0])
    for k, n in enumerate(range(a, b)):
        r = k * d
        m[r:r + d, k * d:(k + 1) * d] = -seq.at(n)
        m[r:r + d, (k + 1) * d:(k + 2) * d] = np.eye(d)
        rhs[r:r + d] = w_at(n)
    r = (count - 1) * d
    m[r:r + len(rows_p), :d] = rows_p
    r += len(rows_p)
    m[r:r + len(rows_q), -d:] = rows_q
    sol, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    values = sol.reshape(count, d)
    resid = float(np.max(np.abs(m @ sol - rhs))) if len(rhs) else 0.0
    return values, {"lstsq_residual": resid, "cond_rows": len(rows_p) + len(rows_q)}


def dense_trichotomy_solve(seq: MatrixSequence, plus: ProjectionFamily,
                           minus: ProjectionFamily, w_start: int, w_values,
                           a: int, b: int):
    """Dense bounded solution under a trichotomy on [a, b].

    Ends are pinned by P^-_a z_a = 0 and (I - P^+_b) z_b = 0; the center
    band freedom is removed by matching the seam normalization of the
    half-line gluing, (P^+_0 - P^-_0)(z_0 - w_{-1}) = 0.
    """
    if not (a <= -1 and b >= 0):
        raise InputError("the window must contain the seam [-1, 0]")
    d = seq.dim
    w_at = _forcing_lookup(w_start, w_values, d)
    count = b - a + 1
    rows_left = _condition_rows(minus.at(a))
    rows_right = _condition_rows(np.eye(d) - plus.at(b))
    center = plus.at(0) - minus.at(0)
    rows_center = _condition_rows(center)
    n_rows = (count - 1) * d + len(rows_left) + len(rows_right) + len(rows_center)
    m = np.zeros((n_rows, count * d))
    rhs = np.zeros(n_rows)
    for k, n in enumerate(range(a, b)):
        r = k * d
        m[r:r + d, k * d:(k + 1) * d] = -seq.at(n)
        m[r:r + d, (k + 1) * d:(k + 2) * d] = np.eye(d)
        rhs[r:r + d] = w_at(n)
    r = (count - 1) * d
    m[r:r + len(rows_left), :d] = rows_left
    r += len(rows_left)
    m[r:r + len(rows_right), -d:] = rows_right
    r += len(rows_right)
    col0 = (-a) * d
    m[r:r + len(rows_center), col0:col0 + d] = rows_center
    rhs[r:r + len(rows_center)] = rows_center @ w_at(-1)
    sol, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    values = sol.reshape(count, d)
    resid = float(np.max(np.abs(m @ sol - rhs)))
    return values, {"lstsq_residual": resid}


def bvp_segment_solve(a_fn, z_fn, left_rows: np.ndarray, right_rows: np.ndarray,
                      t0: float, t1: float, *, nodes: int = 201,
                      tol: float = 1e-10):
    """Collocation solve of x' = A(t)x + z(t) with projected end conditions.

    left_rows @ x(t0) = 0 and right_rows @ x(t1) = 0 must stack to exactly
    dim independent conditions.  Returns the scipy solution object (use
    .sol(t) for dense evaluation).
    """
    left_rows = np.atleast_2d(left_rows)
    right_rows = np.atleast_2d(right_rows)
    d = left_rows.shape[1]
    if len(left_rows) + len(right_rows) != d:
        raise InputError(
            f"{len(left_rows)} + {len(right_rows)} boundary rows for a "
            f"{d}-dimensional problem"
        )

    def fun(ts, ys):
        out = np.empty_like(ys)
        for j, t in enumerate(ts):
            out[:, j] = a_fn(float(t)) @ ys[:, j] + z_fn(float(t))
        return out

    def bc(ya, yb):
        return np.concatenate([left_rows @ ya, right_rows @ yb])

    grid = np.linspace(t0, t1, nodes)
    guess = np.zeros((d, nodes))
    sol = solve_bvp(fun, bc, grid, guess, tol=tol, max_nodes=40000)
    if not sol.success:
        raise RuntimeError(f"collocation solver failed: {sol.message}")
    return sol


def ivp_extend(a_fn, t0: float, x0, ts):
    """High-accuracy homogeneous propagation x' = A(t)x from (t0, x0).

    ts may run in either direction away from t0; returns (len(ts), d).
    """
    ts = np.asarray(ts, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if len(ts) == 0:
        return np.zeros((0, len(x0)))

    def fun(t, y):
        return a_fn(float(t)) @ y

    sol = solve_ivp(fun, (t0, ts[-1]), x0, method="DOP853", t_eval=ts,
                    rtol=1e-11, atol=1e-13, dense_output=False)
    if not sol.success:
        raise RuntimeError(f"extension integration failed: {sol.message}")
    return sol.y.T


def projector_condition_rows(proj: np.ndarray) -> np.ndarray:
    """Public alias used by tests to build boundary rows from projectors."""
    return _condition_rows(np.asarray(proj, dtype=float))
