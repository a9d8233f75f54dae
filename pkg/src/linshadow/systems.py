"""Ready-made systems: small named examples with known splittings.

These back the self-test suite and the worked examples in the docs.  Each
discrete builder returns a MatrixSequence (plus exact projection families
where the splitting is known in closed form); the continuous ones return
EvolutionFamily instances with matching projection paths.
"""

from __future__ import annotations

import math

import numpy as np

from .cocycle import MatrixSequence
from .errors import InputError
from .evolution import CoefficientPath, EvolutionFamily
from .spectral import ProjectionFamily
from .summable import ProjectionPath


def collapsing_scalar_system() -> MatrixSequence:
    """x_{n+1} = 2 x_n for n <= -2, then x_{n+1} = 0.

    The step into n = -1 kills everything, so forward orbits collapse and
    backward continuation is non-unique; the closed-form bounded-inverse
    operator for this system is available as shadowing.gamma_operator.
    """
    return MatrixSequence(
        dim=1, window_start=-2,
        window=[[[2.0]], [[0.0]]],
        left_tail="constant", right_tail="constant",
    )


def switching_scalar_system(contract: float = 0.5,
                            expand: float = 2.0) -> MatrixSequence:
    """x_{n+1} = expand * x_n for n <= -1, contract * x_n for n >= 0.

    Hyperbolic on both half-lines with opposite splittings; the bounded
    direction through time 0 makes it the smallest honest trichotomy.
    """
    if not (0 < contract < 1 < expand):
        raise InputError("need 0 < contract < 1 < expand")
    return MatrixSequence(
        dim=1, window_start=-1,
        window=[[[expand]], [[contract]]],
        left_tail="constant", right_tail="constant",
    )


def constant_system(mat) -> MatrixSequence:
    """A_n = mat for all n."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    return MatrixSequence(dim=mat.shape[0], window_start=0, window=mat[None],
                          left_tail="constant", right_tail="constant")


def constant_diag_system(*entries) -> MatrixSequence:
    return constant_system(np.diag(np.asarray(entries, dtype=float)))


def trichotomy_demo_system(half_window: int = 60):
    """diag(1/2, 2, c_n) with c_n switching from 2 (past) to 1/2 (future).

    Returns (seq, plus_family, minus_family): the exact stable projections
    are diag(1,0,1) for n >= 0 and diag(1,0,0) for n <= 0, so the center
    band is the third coordinate.
    """
    m = int(half_window)
    if m < 1:
        raise InputError("half_window must be >= 1")
    seq = MatrixSequence(
        dim=3, window_start=-1,
        window=[np.diag([0.5, 2.0, 2.0]), np.diag([0.5, 2.0, 0.5])],
        left_tail="constant", right_tail="constant",
    )
    p_plus = np.diag([1.0, 0.0, 1.0])
    p_minus = np.diag([1.0, 0.0, 0.0])
    plus = ProjectionFamily(side="plus", start=0,
                            mats=np.repeat(p_plus[None], m + 1, axis=0))
    minus = ProjectionFamily(side="minus", start=-m,
                             mats=np.repeat(p_minus[None], m + 1, axis=0))
    return seq, plus, minus


def _haar_orthogonal(dim: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def random_dichotomic_system(dim: int, stable_dim: int, start: int, stop: int,
                             rng, stable_band=(0.2, 1.0 / 3.0),
                             unstable_band=(3.0, 5.0)):
    """A_n = Q_{n+1} D_n Q_n^T on [start, stop) with exact stable splitting.

    D_n is diagonal with stable_dim entries drawn from stable_band and the
    rest from unstable_band; the rotations are Haar orthogonal.  Returns
    (seq, family) where family holds the exact orthogonal stable
    projections on [start, stop] (invariance residual is exactly zero by
    construction since diagonal scalings commute with the split).
    """
    if not (0 < stable_dim < dim):
        raise InputError("stable_dim must be strictly between 0 and dim")
    if stop <= start:
        raise InputError("need stop > start")
    count = stop - start
    qs = [_haar_orthogonal(dim, rng) for _ in range(count + 1)]
    window = np.empty((count, dim, dim))
    for i in range(count):
        vals = np.concatenate([
            rng.uniform(*stable_band, size=stable_dim),
            rng.uniform(*unstable_band, size=dim - stable_dim),
        ])
        window[i] = qs[i + 1] @ np.diag(vals) @ qs[i].T
    seq = MatrixSequence(dim=dim, window_start=start, window=window,
                         left_tail="constant", right_tail="constant")
    mats = np.empty((count + 1, dim, dim))
    for i, q in enumerate(qs):
        basis = q[:, :stable_dim]
        mats[i] = basis @ basis.T
    family = ProjectionFamily(side="line", start=start, mats=mats)
    return seq, family


def matches_collapsing_scalar(seq: MatrixSequence, lo: int = -20,
                              hi: int = 20) -> bool:
    """True when seq agrees with collapsing_scalar_system on [lo, hi]."""
    if seq.dim != 1:
        return False
    for n in range(lo, hi + 1):
        want = 2.0 if n <= -2 else 0.0
        if seq.at(n)[0, 0] != want:
            return False
    return True


# ---------------------------------------------------------------------------
# continuous-time fixtures


def hyperbolic_constant_fixture(mu_stable: float = -1.0,
                                mu_unstable: float = 1.0,
                                step: float = 1e-3,
                                horizon: float = 40.0):
    """x' = diag(mu_stable, mu_unstable) x with the exact constant splitting.

    Returns (family, path, exact_propagator).
    """
    if not (mu_stable < 0 < mu_unstable):
        raise InputError("need mu_stable < 0 < mu_unstable")
    mat = np.diag([mu_stable, mu_unstable])
    family = EvolutionFamily(CoefficientPath.constant(mat), step=step,
                             horizon=horizon)
    path = ProjectionPath(side="line", kind="constant",
                          mat=np.diag([1.0, 0.0]))

    def exact_t(t, s):
        return np.diag([math.exp(mu_stable * (t - s)),
                        math.exp(mu_unstable * (t - s))])

    return family, path, exact_t


def scalar_decay_fixture(rate: float = 1.0, step: float = 1e-3,
                         horizon: float = 40.0):
    """x' = -rate x; everything is stable, P = 1 on the whole line."""
    if rate <= 0:
        raise InputError("rate must be positive")
    family = EvolutionFamily(CoefficientPath.constant([[-rate]]), step=step,
                             horizon=horizon)
    path = ProjectionPath(side="line", kind="constant", mat=[[1.0]])
    return family, path, lambda t, s: np.array([[math.exp(-rate * (t - s))]])


def rotating_frame_fixture(omega: float = 1.0, mu_stable: float = -1.0,
                           mu_unstable: float = 1.0, step: float = 1e-3,
                           horizon: float = 40.0):
    """Hyperbolic system in a frame rotating at rate omega.

    A(t) = R(wt) D R(wt)^T + w J with D = diag(mu_stable, mu_unstable) and
    J the rotation generator; the propagator is R(wt) e^{D(t-s)} R(ws)^T
    exactly, and the stable projection R(wt) diag(1,0) R(wt)^T is carried
    by an anchored path.  Returns (family, path, exact_propagator).
    """
    w, a, b = float(omega), float(mu_stable), float(mu_unstable)
    entries = [
        [f"{a}*cos({w}*t)**2 + {b}*sin({w}*t)**2",
         f"({a}-{b})*sin({w}*t)*cos({w}*t) - {w}"],
        [f"({a}-{b})*sin({w}*t)*cos({w}*t) + {w}",
         f"{a}*sin({w}*t)**2 + {b}*cos({w}*t)**2"],
    ]
    family = EvolutionFamily(CoefficientPath.expressions(entries), step=step,
                             horizon=horizon)
    path = ProjectionPath(side="line", kind="anchored",
                          mat=np.diag([1.0, 0.0]), anchor=0.0)

    def rot(t):
        c, s = math.cos(w * t), math.sin(w * t)
        return np.array([[c, -s], [s, c]])

    def exact_t(t, s):
        return rot(t) @ np.diag([math.exp(a * (t - s)),
                                 math.exp(b * (t - s))]) @ rot(s).T

    return family, path, exact_t


def smoothed_switch_fixture(step: float = 1e-3, horizon: float = 40.0):
    """x' = -tanh(t) x: contracting forward on R+, backward on R-.

    The bounded-both-ways direction 1/cosh(t) is a genuine center band, so
    the pair of half-line paths below assembles into a trichotomy whose
    center projector has rank one.  Returns (family, plus_path, minus_path).
    """
    family = EvolutionFamily(CoefficientPath.expressions([["-tanh(t)"]]),
                             step=step, horizon=horizon)
    plus = ProjectionPath(side="plus", kind="constant", mat=[[1.0]])
    minus = ProjectionPath(side="minus", kind="constant", mat=[[0.0]])
    return family, plus, minus
