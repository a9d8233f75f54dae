"""Reference implementations of the sweep kernels (pure numpy).

These define the semantics; the compiled module `_core` must match them.
All sweeps are classical fixed-step RK4.  Coefficient samples `As` are taken
on the half-step grid t0, t0+h/2, t0+h, ..., so a sweep of n steps consumes
an array of shape (2n+1, d, d); the step h may be negative for backward
sweeps.  `projs`, when given, holds one matrix per step that is applied to
the state after that step (left for state sweeps, right for adjoint sweeps);
this is used to re-project invariant-bundle quantities and suppress error
growth in the complementary directions.
"""

import numpy as np


def rk4_matrix(As, h, X0, adjoint=False, projs=None, record=False):
    """Sweep X' = A(t) X (or Y' = -Y A(t) when adjoint=True).

    Returns an array of shape (n+1, d, d) of states at the step nodes when
    record=True, else shape (1, d, d) holding only the final state.
    """
    As = np.asarray(As, dtype=float)
    n = (As.shape[0] - 1) // 2
    d = As.shape[1]
    X = np.array(X0, dtype=float)
    out = np.empty((n + 1 if record else 1, d, d))
    if record:
        out[0] = X
    half = 0.5 * h
    for i in range(n):
        a0 = As[2 * i]
        am = As[2 * i + 1]
        a1 = As[2 * i + 2]
        if adjoint:
            k1 = -(X @ a0)
            k2 = -((X + half * k1) @ am)
            k3 = -((X + half * k2) @ am)
            k4 = -((X + h * k3) @ a1)
        else:
            k1 = a0 @ X
            k2 = am @ (X + half * k1)
            k3 = am @ (X + half * k2)
            k4 = a1 @ (X + h * k3)
        X = X + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if projs is not None:
            X = (X @ projs[i]) if adjoint else (projs[i] @ X)
        if record:
            out[i + 1] = X
    if not record:
        out[0] = X
    return out


def rk4_commutator(As, h, P0, record=False):
    """Sweep P' = A(t) P - P A(t) (conjugation flow of a projector).

    This transports P(s) = T(s,s0) P0 T(s0,s) without forming either
    propagator, so nothing blows up even when T does.
    """
    As = np.asarray(As, dtype=float)
    n = (As.shape[0] - 1) // 2
    d = As.shape[1]
    P = np.array(P0, dtype=float)
    out = np.empty((n + 1 if record else 1, d, d))
    if record:
        out[0] = P
    half = 0.5 * h
    for i in range(n):
        a0 = As[2 * i]
        am = As[2 * i + 1]
        a1 = As[2 * i + 2]
        k1 = a0 @ P - P @ a0
        y = P + half * k1
        k2 = am @ y - y @ am
        y = P + half * k2
        k3 = am @ y - y @ am
        y = P + h * k3
        k4 = a1 @ y - y @ a1
        P = P + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if record:
            out[i + 1] = P
    if not record:
        out[0] = P
    return out


def rk4_affine(As, gs, h, x0, projs=None, record=False):
    """Sweep x' = A(t) x + g(t); `gs` sampled like `As`, shape (2n+1, d)."""
    As = np.asarray(As, dtype=float)
    gs = np.asarray(gs, dtype=float)
    n = (As.shape[0] - 1) // 2
    d = As.shape[1]
    x = np.array(x0, dtype=float)
    out = np.empty((n + 1 if record else 1, d))
    if record:
        out[0] = x
    half = 0.5 * h
    for i in range(n):
        a0 = As[2 * i]
        am = As[2 * i + 1]
        a1 = As[2 * i + 2]
        g0 = gs[2 * i]
        gm = gs[2 * i + 1]
        g1 = gs[2 * i + 2]
        k1 = a0 @ x + g0
        k2 = am @ (x + half * k1) + gm
        k3 = am @ (x + half * k2) + gm
        k4 = a1 @ (x + h * k3) + g1
        x = x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if projs is not None:
            x = projs[i] @ x
        if record:
            out[i + 1] = x
    if not record:
        out[0] = x
    return out
