"""Bounded solutions of z_{n+1} = A_n z_n + w_n and shadowing of pseudo-orbits.

The Green solves are two-sweep: a forward sweep accumulates the range-bundle
part of the solution, a backward sweep accumulates the kernel-bundle part
through the inverses of the steps restricted to Ker P_n.  For forcing with
support inside the window both sweeps are exact finite sums, so the output
solves the recurrence to rounding error; the certificate contributes the a
priori sup bound, not the values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cocycle import MatrixSequence, PseudoOrbit, spectral_norm
from .errors import InputError, RangeError, StructuralError
from .spectral import (
    DichotomyCertificate,
    Refusal,
    TrichotomyCertificate,
    _matrix_kernel_of_projection,
)


class _KernelOps:
    """One-step inverses of A_n restricted to the kernel bundle of a family.

    back_apply(n, x) returns the unique u in Ker P_n with A_n u = x (for x
    in Ker P_{n+1}); raises StructuralError when the restricted step is
    numerically singular.
    """

    def __init__(self, seq: MatrixSequence, family, sv_tol: float = 1e-10):
        self.family = family
        self.start = family.start
        d = family.dim
        self.rank_kernel = d - int(round(np.trace(family.mats[0])))
        self.kers = [_matrix_kernel_of_projection(p) for p in family.mats]
        self.steps = []
        if self.rank_kernel == 0:
            return
        for n in range(family.start, family.stop):
            i = n - family.start
            a = seq.at(n)
            m = self.kers[i + 1].T @ (a @ self.kers[i])
            smin = float(np.linalg.svd(m, compute_uv=False)[-1])
            if smin <= sv_tol:
                raise StructuralError(
                    f"step at n={n} is numerically singular on the kernel "
                    f"bundle (sigma_min={smin:.2e})"
                )
            self.steps.append(m)

    def back_apply(self, n: int, x: np.ndarray) -> np.ndarray:
        """u = B(n, n+1) x: kernel-bundle preimage of x under A_n."""
        if self.rank_kernel == 0:
            return np.zeros_like(x)
        i = n - self.start
        coords = np.linalg.solve(self.steps[i], self.kers[i + 1].T @ x)
        return self.kers[i] @ coords

    def kernel_projector(self, n: int) -> np.ndarray:
        k = self.kers[n - self.start]
        return k @ k.T


@dataclass(frozen=True)
class GreenSolution:
    """Values of the bounded solution on [start, start + len - 1]."""

    start: int
    values: np.ndarray
    gain: float  # a-priori sup|z| <= gain * sup|w|
    info: dict = field(default_factory=dict)

    @property
    def stop(self) -> int:
        return self.start + len(self.values) - 1

    def at(self, n: int) -> np.ndarray:
        if not self.start <= n <= self.stop:
            raise RangeError(f"index {n} outside solution range")
        return self.values[n - self.start]

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))


def solution_residual(seq: MatrixSequence, start: int, values: np.ndarray,
                      w_start: int | None = None, w: np.ndarray | None = None) -> float:
    """Max per-step defect of x_{n+1} = A_n x_n (+ w_n) along the values."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    worst = 0.0
    for i in range(len(values) - 1):
        n = start + i
        r = values[i + 1] - seq.at(n) @ values[i]
        if w is not None and w_start is not None and 0 <= n - w_start < len(w):
            r = r - w[n - w_start]
        worst = max(worst, float(np.linalg.norm(r)))
    return worst


def _forcing_window(w_start, w_values, dim):
    w = np.atleast_2d(np.asarray(w_values, dtype=float))
    if w.shape[1] != dim:
        raise InputError(f"forcing dimension {w.shape[1]} != system dimension {dim}")
    if not np.all(np.isfinite(w)):
        raise InputError("forcing contains non-finite entries")
    return int(w_start), w


def green_solve_line(seq: MatrixSequence, cert: DichotomyCertificate,
                     w_start: int, w_values, *, range_start: int | None = None,
                     range_stop: int | None = None,
                     tail_tol: float = 1e-12) -> GreenSolution:
    """Bounded solution of z_{n+1} = A_n z_n + w_n under a full-line dichotomy.

    w lives on [w_start, w_start + len(w) - 1] and is treated as zero
    elsewhere; the returned values cover [range_start, range_stop]
    (defaults: the forcing window extended one step forward).  The
    certificate window must contain the requested range padded by the decay
    length of (prefactor, rate) at tail_tol; otherwise a RangeError says by
    how much to grow it.
    """
    if isinstance(cert, Refusal):
        raise InputError(f"a certificate is required; got a refusal ({cert.reason})")
    if isinstance(cert, TrichotomyCertificate):
        return green_solve_trichotomy(seq, cert, w_start, w_values,
                                      range_start=range_start,
                                      range_stop=range_stop, tail_tol=tail_tol)
    w_start, w = _forcing_window(w_start, w_values, seq.dim)
    w_end = w_start + len(w) - 1
    a = w_start if range_start is None else int(range_start)
    b = w_end + 1 if range_stop is None else int(range_stop)
    if b < a:
        raise InputError("empty requested range")
    pad = cert.pad_for(tail_tol)
    lo = min(a, w_start) - pad
    hi = max(b, w_end + 1) + pad
    fam = cert.family
    if not fam.covers(lo, hi):
        raise RangeError(
            f"certificate window [{fam.start}, {fam.stop}] cannot host the "
            f"requested range padded to [{lo}, {hi}]; refit on a larger window"
        )
    ops = _KernelOps(seq, fam)
    d = seq.dim
    n0 = min(a, w_start)
    n1 = max(b, w_end + 1)

    # forward sweep: u_n = sum_{k<n} A(n,k+1) P_{k+1} w_k.  Re-projecting
    # after every step is a no-op in exact arithmetic (the family commutes
    # with the steps) but keeps roundoff from seeding the expanding band,
    # where it would grow like the unstable cocycle.
    u = {n0: np.zeros(d)}
    cur = u[n0]
    for n in range(n0, n1):
        cur = seq.at(n) @ cur
        if w_start <= n <= w_end:
            cur = cur + w[n - w_start]
        cur = fam.at(n + 1) @ cur
        u[n + 1] = cur

    # backward sweep: v_n = sum_{k>=n} B(n,k+1) Q_{k+1} w_k
    v = {n1: np.zeros(d)}
    cur = v[n1]
    eye = np.eye(d)
    for n in range(n1 - 1, n0 - 1, -1):
        rhs = cur
        if w_start <= n <= w_end:
            rhs = rhs + (eye - fam.at(n + 1)) @ w[n - w_start]
        cur = ops.back_apply(n, rhs)
        v[n] = cur

    values = np.array([u[n] - v[n] for n in range(a, b + 1)])
    return GreenSolution(
        start=a,
        values=values,
        gain=cert.shadowing_gain,
        info={"pad": pad, "certificate": "dichotomy"},
    )


def green_solve_trichotomy(seq: MatrixSequence, tri: TrichotomyCertificate,
                           w_start: int, w_values, *,
                           range_start: int | None = None,
                           range_stop: int | None = None,
                           tail_tol: float = 1e-12) -> GreenSolution:
    """Bounded solution under half-line dichotomies glued at time 0.

    The forcing is split at the seam: steps n >= -1 feed the forward-side
    Green sum z1 (so the impulse w_{-1} enters through P+ at time 0), steps
    n <= -2 feed the backward-side sum z2.  z1 is extended below 0 through
    the backward-side kernel bundle (its seam value lands in Ker P0+ which
    sits inside Ker P0-), z2 is extended above 0 by plain propagation (its
    seam value lies in Ima P0- inside Ima P0+).  Both extensions decay, and
    their grid norms give the reported N in the bound L = 2 N K.
    """
    if tri.compat_residual > 1e-8:
        raise InputError(
            f"trichotomy compatibility residual {tri.compat_residual:.2e} "
            f"too large for a Green solve"
        )
    w_start, w = _forcing_window(w_start, w_values, seq.dim)
    w_end = w_start + len(w) - 1
    a = min(w_start, -1) if range_start is None else int(range_start)
    b = max(w_end + 1, 0) if range_stop is None else int(range_stop)
    if b < a:
        raise InputError("empty requested range")
    if a > -1 or b < 0:
        raise InputError(
            "trichotomy solve expects a range containing the seam "
            "[-1, 0]; use the half-line certificate directly otherwise"
        )
    d = seq.dim

    plus, minus = tri.plus, tri.minus
    pad_p = plus.pad_for(tail_tol)
    pad_m = minus.pad_for(tail_tol)
    hi = max(b, w_end + 1) + pad_p
    lo = min(a, w_start) - pad_m
    if not plus.family.covers(0, hi):
        raise RangeError(
            f"forward-side certificate window [{plus.family.start}, "
            f"{plus.family.stop}] must contain [0, {hi}]"
        )
    if not minus.family.covers(lo, 0):
        raise RangeError(
            f"backward-side certificate window [{minus.family.start}, "
            f"{minus.family.stop}] must contain [{lo}, 0]"
        )
    ops_p = _KernelOps(seq, plus.family)
    ops_m = _KernelOps(seq, minus.family)
    eye = np.eye(d)
    p0_plus = plus.family.at(0)
    p0_minus = minus.family.at(0)

    def wval(n):
        if w_start <= n <= w_end:
            return w[n - w_start]
        return None

    # ---- z1 on [0, b]: forward-side sums over steps n >= -1.  As in the
    # line solver, re-project after each step so roundoff cannot seed the
    # expanding band.
    cur = np.zeros(d)
    w_m1 = wval(-1)
    if w_m1 is not None:
        cur = p0_plus @ w_m1  # the seam step feeds straight into time 0
    u = {0: cur}
    for n in range(0, b):
        cur = seq.at(n) @ cur
        wn = wval(n)
        if wn is not None:
            cur = cur + wn
        cur = plus.family.at(n + 1) @ cur
        u[n + 1] = cur
    v = {b + 1: np.zeros(d)}
    cur = v[b + 1]
    for n in range(b, -1, -1):
        rhs = cur
        wn = wval(n)
        if wn is not None:
            rhs = rhs + (eye - plus.family.at(n + 1)) @ wn
        cur = ops_p.back_apply(n, rhs)
        v[n] = cur
    z1 = {n: u[n] - v[n] for n in range(0, b + 1)}

    # ---- z2 on [a, -1]: backward-side sums over steps n <= -2
    u2 = {a: np.zeros(d)}
    cur = u2[a]
    for n in range(a, -1):
        nxt = seq.at(n) @ cur
        wn = wval(n)
        if wn is not None and n <= -2:
            nxt = nxt + wn
        nxt = minus.family.at(n + 1) @ nxt
        u2[n + 1] = nxt
        cur = nxt
    v2 = {-1: np.zeros(d)}
    cur = v2[-1]
    for n in range(-2, a - 1, -1):
        rhs = cur
        wn = wval(n)
        if wn is not None:
            rhs = rhs + (eye - minus.family.at(n + 1)) @ wn
        cur = ops_m.back_apply(n, rhs)
        v2[n] = cur
    z2 = {n: u2[n] - v2[n] for n in range(a, 0)}

    # ---- extensions across the seam
    ext_norm = 1.0
    seam = z1[0] - (w_m1 if w_m1 is not None else 0.0)
    seam = (eye - p0_minus) @ seam  # lies in Ker P0+ <= Ker P0-; clean leakage
    cur = seam
    acc_op = (eye - p0_minus)
    for n in range(-1, a - 1, -1):
        cur = ops_m.back_apply(n, cur)
        z1[n] = cur
        acc_op = ops_m.back_apply(n, acc_op)
        ext_norm = max(ext_norm, spectral_norm(acc_op))

    seam2 = p0_plus @ (seq.at(-1) @ z2[-1])  # in Ima P0- <= Ima P0+
    cur = seam2
    acc_op2 = p0_plus
    ext_norm = max(ext_norm, spectral_norm(acc_op2))
    z2[0] = cur
    for n in range(0, b):
        cur = plus.family.at(n + 1) @ (seq.at(n) @ cur)
        z2[n + 1] = cur
        acc_op2 = plus.family.at(n + 1) @ (seq.at(n) @ acc_op2)
        ext_norm = max(ext_norm, spectral_norm(acc_op2))

    values = np.array([z1[n] + z2[n] for n in range(a, b + 1)])
    k_d = tri.half_line_gain
    big_n = ext_norm
    return GreenSolution(
        start=a,
        values=values,
        gain=2.0 * big_n * k_d,
        info={
            "pad": max(pad_p, pad_m),
            "certificate": "trichotomy",
            "N": big_n,
            "K": k_d,
        },
    )


@dataclass(frozen=True)
class ShadowingResult:
    """An exact solution within bound = gain * delta of the pseudo-orbit."""

    start: int
    solution: np.ndarray
    sup_error: float
    bound: float
    gain: float
    unique: bool
    residual_max: float
    info: dict = field(default_factory=dict)

    @property
    def stop(self) -> int:
        return self.start + len(self.solution) - 1

    def to_json_dict(self) -> dict:
        return {
            "start": self.start,
            "length": int(len(self.solution)),
            "sup_error": self.sup_error,
            "bound": self.bound,
            "gain": self.gain,
            "unique": self.unique,
            "residual_max": self.residual_max,
            "info": {k: v for k, v in sorted(self.info.items())},
        }


def shadow(pseudo: PseudoOrbit, cert, *, tail_tol: float = 1e-12) -> ShadowingResult:
    """Exact solution x with sup|x_n - y_n| <= gain * delta near the input.

    The defect sequence w_n = y_{n+1} - A_n y_n is fed to the Green solver
    and subtracted: x = y - z.  unique is True only under a full-line
    dichotomy certificate; under a trichotomy the center directions admit
    other equally valid shadows.
    """
    seq = pseudo.seq
    a, b = pseudo.start, pseudo.stop
    if isinstance(cert, TrichotomyCertificate):
        sol = green_solve_trichotomy(seq, cert, a, pseudo.defects,
                                     range_start=a, range_stop=b,
                                     tail_tol=tail_tol)
        unique = False
    elif isinstance(cert, DichotomyCertificate):
        if cert.side != "line":
            raise InputError(
                "shadowing needs a full-line dichotomy or a trichotomy; "
                f"got a half-line certificate (side={cert.side!r})"
            )
        sol = green_solve_line(seq, cert, a, pseudo.defects,
                               range_start=a, range_stop=b, tail_tol=tail_tol)
        unique = True
    else:
        raise InputError(f"unsupported certificate object {type(cert).__name__}")
    x = pseudo.values - sol.values
    sup_error = sol.sup_norm
    residual = solution_residual(seq, a, x)
    return ShadowingResult(
        start=a,
        solution=x,
        sup_error=sup_error,
        bound=sol.gain * pseudo.delta,
        gain=sol.gain,
        unique=unique,
        residual_max=residual,
        info=dict(sol.info, delta=pseudo.delta),
    )


# ---------------------------------------------------------------------------
# the collapsing-scalar closed-form solver

def gamma_operator(w_start: int, w_values, *, range_start: int | None = None,
                   range_stop: int | None = None) -> GreenSolution:
    """Closed-form bounded solve for the scalar system A_n = 2 (n <= -2),
    0 (n >= -1): (Gw)_n = w_{n-1} for n >= 0, 0 at n = -1, and
    -sum_{i=1}^{-(n+1)} 2^{-i} w_{n+i-1} for n <= -2.

    Contracting: sup|Gw| <= sup|w|.  Sums are evaluated with fsum and the
    2^{-i} weights are exact, so the recurrence residual stays at rounding
    level (<= 1e-14 for unit forcing).
    """
    w = np.asarray(w_values, dtype=float)
    if w.ndim == 2 and w.shape[1] == 1:
        w = w[:, 0]
    if w.ndim != 1:
        raise InputError("gamma_operator expects scalar forcing")
    if not np.all(np.isfinite(w)):
        raise InputError("forcing contains non-finite entries")
    w_start = int(w_start)
    w_end = w_start + len(w) - 1
    a = w_start if range_start is None else int(range_start)
    b = w_end + 1 if range_stop is None else int(range_stop)

    def wval(n):
        return w[n - w_start] if w_start <= n <= w_end else 0.0

    out = np.empty(b - a + 1)
    for n in range(a, b + 1):
        if n >= 0:
            out[n - a] = wval(n - 1)
        elif n == -1:
            out[n - a] = 0.0
        else:
            terms = [-math.ldexp(wval(n + i - 1), -i) for i in range(1, -n)]
            out[n - a] = math.fsum(terms)
    return GreenSolution(start=a, values=out.reshape(-1, 1), gain=1.0,
                         info={"solver": "gamma"})


def shadow_via_gamma(pseudo: PseudoOrbit) -> ShadowingResult:
    """Shadow a pseudo-orbit of the collapsing scalar system through the
    closed-form operator; gain 1, no certificate needed, never unique
    (the system has no backward uniqueness)."""
    if pseudo.seq.dim != 1:
        raise InputError("the closed-form solver is scalar only")
    a, b = pseudo.start, pseudo.stop
    sol = gamma_operator(a, pseudo.defects, range_start=a, range_stop=b)
    x = pseudo.values - sol.values
    return ShadowingResult(
        start=a,
        solution=x,
        sup_error=sol.sup_norm,
        bound=1.0 * pseudo.delta,
        gain=1.0,
        unique=False,
        residual_max=solution_residual(pseudo.seq, a, x),
        info={"solver": "gamma", "delta": pseudo.delta},
    )
