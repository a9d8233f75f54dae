"""Stable/unstable subspace estimation and dichotomy certificates (discrete).

Certificates assert two-sided decay bounds with respect to a projection
family P_n: forward decay of the cocycle on Ima P_n, backward decay of the
kernel-restricted inverses on Ker P_n.  Fitting never does least squares:
the reported (prefactor, rate) pair dominates every sampled norm on the
window, so an accepted certificate is a true bound for what was measured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .cocycle import (
    OVERFLOW_LIMIT,
    MatrixSequence,
    cocycle,
    spectral_norm,
    spectral_norms,
)
from .errors import InputError, RangeError, SplittingError

#: singular values below sv floor * largest are treated as zero
RANK_RTOL_FACTOR = 4.0  # multiplies d * eps


@dataclass(frozen=True)
class Subspace:
    """Orthonormal basis of a subspace of R^d (columns; may be empty)."""

    basis: np.ndarray  # (d, k)
    warnings: tuple = ()

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if b.ndim != 2:
            raise InputError("basis must be a 2-d array of column vectors")
        if b.shape[1] > 0:
            gram = b.T @ b
            if np.max(np.abs(gram - np.eye(b.shape[1]))) > 1e-12:
                raise InputError("basis columns are not orthonormal to 1e-12")
        b = np.ascontiguousarray(b)
        b.flags.writeable = False
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def orthogonal_projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


def principal_angles(a: Subspace | np.ndarray, b: Subspace | np.ndarray) -> np.ndarray:
    """Principal angles between two subspaces (radians)."""
    ba = a.basis if isinstance(a, Subspace) else np.asarray(a, dtype=float)
    bb = b.basis if isinstance(b, Subspace) else np.asarray(b, dtype=float)
    if ba.shape[1] == 0 or bb.shape[1] == 0:
        return np.array([])
    return scipy.linalg.subspace_angles(ba, bb)


def subspace_gap(a, b) -> float:
    """Largest principal angle; 0 when the spans agree."""
    ang = principal_angles(a, b)
    return float(np.max(ang)) if ang.size else 0.0


def estimate_stable(seq: MatrixSequence, base: int, horizon: int,
                    sigma_split: float = 1.0) -> Subspace:
    """Directions whose forward orbit over `horizon` steps stays below
    sigma_split in gain: the right singular space of A(base+horizon, base)
    with singular values < sigma_split.
    """
    if horizon < 1:
        raise InputError("horizon must be >= 1")
    mat = cocycle(seq, base + horizon, base)
    _u, s, vt = np.linalg.svd(mat)
    warnings = []
    lo, hi = 0.1 * sigma_split, 10.0 * sigma_split
    if np.any((s >= lo) & (s <= hi)):
        warnings.append(
            "singular value near the split threshold; raise the horizon "
            "to sharpen the stable/unstable separation"
        )
    keep = s < sigma_split
    return Subspace(np.ascontiguousarray(vt[keep].T), tuple(warnings))


def _preimage_chain(seq, base, horizon, v, growth_cap, preimage_tol):
    """Greedy minimal-norm backward chain u_base = v, A_k u_k = u_{k+1}.

    Returns the chain values [u_{base-horizon}, ..., u_base] or None when a
    step has no consistent preimage or the chain exceeds the growth cap.
    """
    scale = np.linalg.norm(v)
    chain = [np.asarray(v, dtype=float)]
    u = chain[0]
    for k in range(1, horizon + 1):
        a = seq.at(base - k)
        sol = np.linalg.lstsq(a, u, rcond=None)[0]
        if np.linalg.norm(a @ sol - u) > preimage_tol * (1.0 + np.linalg.norm(u)):
            return None
        if np.linalg.norm(sol) > growth_cap * scale:
            return None
        chain.append(sol)
        u = sol
    chain.reverse()
    return np.array(chain)


def estimate_unstable(seq: MatrixSequence, base: int, horizon: int,
                      growth_cap: float = 10.0,
                      preimage_tol: float = 1e-8) -> Subspace:
    """Directions reachable from the past that admit a bounded backward
    branch: candidates span the numerical column space of A(base,
    base-horizon); each is kept only if its greedy minimal-norm preimage
    chain stays within growth_cap of the unit start.
    """
    if horizon < 1:
        raise InputError("horizon must be >= 1")
    mat = cocycle(seq, base, base - horizon)
    d = seq.dim
    _q, r, _piv = scipy.linalg.qr(mat, pivoting=True)
    diag = np.abs(np.diag(r))
    warnings = []
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        tol = RANK_RTOL_FACTOR * d * np.finfo(float).eps * diag[0]
        rank = int(np.sum(diag > tol))
        near = (diag > tol * 1e-2) & (diag < tol * 1e2)
        if np.any(near):
            warnings.append(
                "rank decision near the noise floor; candidate count may be "
                "sensitive to the horizon"
            )
    if rank == 0:
        return Subspace(np.zeros((d, 0)), tuple(warnings))
    q_full = np.linalg.qr(_q[:, :rank])[0]  # re-orthonormalize defensively
    kept = []
    for i in range(rank):
        v = q_full[:, i]
        if _preimage_chain(seq, base, horizon, v, growth_cap, preimage_tol) is not None:
            kept.append(v)
    if not kept:
        return Subspace(np.zeros((d, 0)), tuple(warnings))
    basis = np.linalg.qr(np.column_stack(kept))[0]
    return Subspace(basis, tuple(warnings))


def _matrix_kernel(a: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the null space of a (columns)."""
    _u, s, vt = np.linalg.svd(a)
    d = a.shape[1]
    if s.size == 0 or s[0] == 0.0:
        return np.eye(d)
    tol = RANK_RTOL_FACTOR * d * np.finfo(float).eps * s[0]
    null_mask = np.ones(d, dtype=bool)
    null_mask[: s.size] = s <= tol
    return np.ascontiguousarray(vt[null_mask].T)


def carry_stable_forward(seq: MatrixSequence, base: int, sub: Subspace,
                         stop: int, rank_tol: float = 1e-9) -> dict:
    """Propagate a stable subspace forward by invariance.

    S_{n+1} is spanned by A_n S_n together with the null space of A_{n+1}
    (directions the next step kills decay trivially, so they belong to
    every forward-stable bundle).  Used for half-line families where a
    pointwise windowed estimate at nodes near the endpoint would have to
    look outside the half-line.  Returns {n: Subspace} for n in [base, stop].
    """
    out = {base: sub}
    basis = sub.basis
    for n in range(base, stop):
        cols = []
        if basis.shape[1]:
            img = seq.at(n) @ basis
            scale = np.linalg.norm(img, axis=0)
            keep = scale > rank_tol
            if np.any(keep):
                cols.append(img[:, keep] / scale[keep])
        kn = _matrix_kernel(seq.at(n + 1))
        if kn.shape[1]:
            cols.append(kn)
        if cols:
            stacked = np.column_stack(cols)
            u, s, _vt = np.linalg.svd(stacked, full_matrices=False)
            rank = int(np.sum(s > rank_tol * s[0])) if s.size else 0
            basis = np.ascontiguousarray(u[:, :rank])
        else:
            basis = np.zeros((seq.dim, 0))
        out[n + 1] = Subspace(basis)
    return out


@dataclass(frozen=True)
class BackwardWitness:
    """A nonzero bounded backward chain with x_0 = 0, scaled to sup norm 1."""

    start: int
    values: np.ndarray  # (L, d), indices start .. 0

    def residual_max(self, seq: MatrixSequence) -> float:
        worst = 0.0
        for i in range(len(self.values) - 1):
            r = self.values[i + 1] - seq.at(self.start + i) @ self.values[i]
            worst = max(worst, float(np.linalg.norm(r)))
        return worst

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))


def backward_uniqueness_test(seq: MatrixSequence, horizon: int,
                             growth_cap: float = 10.0,
                             preimage_tol: float = 1e-8):
    """Check that x_0 = 0 forces every bounded backward chain to vanish.

    Scans kernel directions of A_{-j} (j = 1..horizon); any such direction
    that also admits a bounded backward branch yields a nonzero bounded
    chain hitting 0 at time 0.  Returns (True, None) when no witness is
    found, else (False, witness).
    """
    if horizon < 1:
        raise InputError("horizon must be >= 1")
    for j in range(1, horizon + 1):
        a = seq.at(-j)
        ker = _matrix_kernel(a)
        for i in range(ker.shape[1]):
            v = ker[:, i]
            chain = _preimage_chain(seq, -j, horizon, v, growth_cap, preimage_tol)
            if chain is None:
                continue
            # forward part: propagate v through -j -> 0 (lands on ~0 at -j+1)
            fwd = [v]
            for n in range(-j, 0):
                fwd.append(seq.at(n) @ fwd[-1])
            values = np.vstack([chain[:-1], np.array(fwd)])
            sup = np.max(np.linalg.norm(values, axis=1))
            values = values / sup
            return False, BackwardWitness(start=-j - horizon, values=values)
    return True, None


# ---------------------------------------------------------------------------
# projection families

@dataclass(frozen=True)
class ProjectionFamily:
    """Projections P_n for n in [start, start + len(mats) - 1].

    side labels the half-line the family is meant for: "plus", "minus",
    or "line".
    """

    side: str
    start: int
    mats: np.ndarray  # (L, d, d)

    def __post_init__(self):
        if self.side not in ("plus", "minus", "line"):
            raise InputError("side must be 'plus', 'minus' or 'line'")
        m = np.asarray(self.mats, dtype=float)
        if m.ndim != 3 or m.shape[1] != m.shape[2] or len(m) == 0:
            raise InputError("mats must be a non-empty stack of square matrices")
        m = np.ascontiguousarray(m)
        m.flags.writeable = False
        object.__setattr__(self, "mats", m)

    @property
    def dim(self) -> int:
        return self.mats.shape[1]

    @property
    def stop(self) -> int:
        return self.start + len(self.mats) - 1

    def covers(self, lo: int, hi: int) -> bool:
        return self.start <= lo and hi <= self.stop

    def at(self, n: int) -> np.ndarray:
        if not self.start <= n <= self.stop:
            raise RangeError(f"index {n} outside family window [{self.start}, {self.stop}]")
        return self.mats[n - self.start]

    def ranks(self) -> np.ndarray:
        return np.array([int(round(np.trace(p))) for p in self.mats])

    def validate(self, seq: MatrixSequence | None = None):
        """Residual report: projector defect and (with seq) invariance."""
        proj_res = float(
            np.max(spectral_norms(self.mats @ self.mats - self.mats))
        )
        norms = spectral_norms(self.mats)
        report = {
            "projection_residual": proj_res,
            "projection_residual_ok": proj_res <= 1e-10 * (1.0 + float(np.max(norms))),
            "rank_constant": bool(len(set(self.ranks().tolist())) == 1),
        }
        if seq is not None:
            worst = 0.0
            for n in range(self.start, self.stop):
                a = seq.at(n)
                res = spectral_norm(self.at(n + 1) @ a - a @ self.at(n))
                rel = res / (1.0 + spectral_norm(a))
                worst = max(worst, rel)
            report["invariance_residual"] = worst
            report["invariance_residual_ok"] = worst <= 1e-8
        return report


def _orthogonal_complement(basis: np.ndarray, d: int) -> np.ndarray:
    if basis.shape[1] == 0:
        return np.eye(d)
    u = np.linalg.svd(basis, full_matrices=True)[0]
    return np.ascontiguousarray(u[:, basis.shape[1]:])


def _complement_within(stable: Subspace, unstable: Subspace) -> np.ndarray:
    """A complement of the stable space chosen inside the unstable space."""
    d = stable.ambient_dim
    need = d - stable.rank
    if need == 0:
        return np.zeros((d, 0))
    if unstable.rank < need:
        raise SplittingError(
            f"unstable space rank {unstable.rank} cannot complement a "
            f"stable space of rank {stable.rank} in dimension {d}"
        )
    s, u = stable.basis, unstable.basis
    resid = u - s @ (s.T @ u)
    _w, sv, vt = np.linalg.svd(resid, full_matrices=False)
    if sv.size < need or sv[need - 1] < 1e-10:
        raise SplittingError("unstable space does not complement the stable one")
    picked = u @ vt[:need].T
    return np.linalg.qr(picked)[0]


def oblique_projection(range_basis: np.ndarray, kernel_basis: np.ndarray,
                       angle_floor: float = 1e-6) -> np.ndarray:
    """Projection onto span(range_basis) along span(kernel_basis)."""
    d = range_basis.shape[0]
    r = range_basis.shape[1]
    if r + kernel_basis.shape[1] != d:
        raise SplittingError("range and kernel dimensions do not sum to the ambient one")
    if r == 0:
        return np.zeros((d, d))
    if kernel_basis.shape[1] == 0:
        return np.eye(d)
    ang = scipy.linalg.subspace_angles(range_basis, kernel_basis)
    if ang.size and float(np.min(ang)) < angle_floor:
        raise SplittingError(
            f"splitting is numerically degenerate: principal angle "
            f"{float(np.min(ang)):.2e} below {angle_floor:g}"
        )
    b = np.column_stack([range_basis, kernel_basis])
    binv = np.linalg.solve(b, np.eye(d))
    return range_basis @ binv[:r]


def build_projection_family(seq: MatrixSequence, stable, *, start: int | None = None,
                            side: str = "line", rule: str = "within_unstable",
                            unstable=None, complements=None,
                            angle_floor: float = 1e-6) -> ProjectionFamily:
    """Assemble P_n projecting onto stable(n) along the chosen complement.

    `stable` is a list of Subspace (one per index, starting at `start`) or a
    dict {n: Subspace}; `unstable`/`complements` follow the same convention
    and are required by the rules "within_unstable" / "user_supplied".
    """
    def normalize(obj, what):
        if obj is None:
            raise InputError(f"{what} subspaces required by rule {rule!r}")
        if isinstance(obj, dict):
            keys = sorted(obj)
            if keys != list(range(keys[0], keys[0] + len(keys))):
                raise InputError(f"{what} indices must be consecutive")
            return keys[0], [obj[k] for k in keys]
        if start is None:
            raise InputError("start index required when passing subspace lists")
        return start, list(obj)

    s0, stables = normalize(stable, "stable")
    if rule not in ("orthogonal", "within_unstable", "user_supplied"):
        raise InputError(f"unknown complement rule {rule!r}")
    others = None
    if rule == "within_unstable":
        o0, others = normalize(unstable, "unstable")
        if o0 != s0 or len(others) != len(stables):
            raise InputError("stable and unstable ranges must match")
    elif rule == "user_supplied":
        o0, others = normalize(complements, "complement")
        if o0 != s0 or len(others) != len(stables):
            raise InputError("stable and complement ranges must match")

    d = seq.dim
    mats = np.empty((len(stables), d, d))
    for i, sub in enumerate(stables):
        if rule == "orthogonal":
            comp = _orthogonal_complement(sub.basis, d)
        elif rule == "within_unstable":
            comp = _complement_within(sub, others[i])
        else:
            comp = others[i].basis
        mats[i] = oblique_projection(sub.basis, comp, angle_floor)
    return ProjectionFamily(side=side, start=s0, mats=mats)


# ---------------------------------------------------------------------------
# certificates

@dataclass(frozen=True)
class Refusal:
    """A machine-readable 'no certificate' outcome."""

    reason: str  # no_decay | noninvertible_kernel | compat_residual
    detail: str = ""
    witness: dict | None = None

    def to_json_dict(self) -> dict:
        out = {"type": "refusal", "reason": self.reason, "detail": self.detail}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass(frozen=True)
class DichotomyCertificate:
    """Verified two-sided decay: forward norm of the cocycle on Ima P and
    backward norm of kernel-restricted inverses on Ker P are both bounded
    by prefactor * exp(-rate * gap) at every sampled gap on the window.
    """

    family: ProjectionFamily
    prefactor: float
    rate: float
    forward_norms: np.ndarray = field(repr=False, default=None)
    backward_norms: np.ndarray = field(repr=False, default=None)
    residuals: dict = field(repr=False, default_factory=dict)

    @property
    def side(self) -> str:
        return self.family.side

    @property
    def shadowing_gain(self) -> float:
        """The bound constant L = 2 D / (1 - e^{-rate})."""
        return 2.0 * self.prefactor / (1.0 - math.exp(-self.rate))

    def pad_for(self, tail_tol: float = 1e-12) -> int:
        """Steps after which the certified decay falls below tail_tol."""
        return max(1, math.ceil(math.log(max(self.prefactor, 1.0) / tail_tol) / self.rate))

    def bound_at(self, gap: int) -> float:
        return self.prefactor * math.exp(-self.rate * gap)

    def check(self, seq: MatrixSequence, slack: float = 1e-9):
        """Re-measure the window norms against the certified envelope."""
        tables = _norm_tables(seq, self.family)
        if isinstance(tables, Refusal):
            return False, f"structure failed: {tables.reason}"
        g0, gplus, gminus = tables
        for k in range(len(gplus)):
            cap = self.bound_at(k) * (1.0 + slack)
            if gplus[k] > cap or gminus[k] > cap:
                return False, f"decay bound violated at gap {k}"
        if g0 > self.prefactor * (1.0 + slack):
            return False, "prefactor below the measured projection norms"
        return True, ""

    def to_json_dict(self) -> dict:
        return {
            "type": "dichotomy",
            "side": self.side,
            "dim": self.family.dim,
            "window": [self.family.start, self.family.stop],
            "projections": [p.reshape(-1).tolist() for p in self.family.mats],
            "prefactor": self.prefactor,
            "rate": self.rate,
            "residuals": dict(self.residuals),
        }


def _kernel_bases(family: ProjectionFamily):
    return [_matrix_kernel_of_projection(p) for p in family.mats]


def _matrix_kernel_of_projection(p: np.ndarray) -> np.ndarray:
    """Orthonormal basis of Ker P = Ima (I - P) for a projector P."""
    d = p.shape[0]
    q = d - int(round(np.trace(p)))
    if q == 0:
        return np.zeros((d, 0))
    u, s, _vt = np.linalg.svd(np.eye(d) - p)
    return np.ascontiguousarray(u[:, :q])


def _norm_tables(seq: MatrixSequence, family: ProjectionFamily,
                 sv_tol: float = 1e-10, inv_tol: float = 1e-6):
    """Window norm tables (g0, forward per gap, backward per gap) or a Refusal."""
    r0, r1 = family.start, family.stop
    ranks = family.ranks()
    if len(set(ranks.tolist())) != 1:
        n_jump = int(np.argmax(np.diff(ranks) != 0)) + r0
        return Refusal(
            reason="noninvertible_kernel",
            detail="projection rank changes across the window, so the kernel "
                   "restriction cannot be invertible",
            witness={"index": n_jump, "ranks": ranks.tolist()},
        )
    w = r1 - r0
    d = seq.dim
    eye = np.eye(d)
    qmats = eye[None, :, :] - family.mats
    g0 = float(max(np.max(spectral_norms(family.mats)), np.max(spectral_norms(qmats))))

    # forward norms by sweeping the projected state with re-projection at
    # every node: P_m A_{m-1} ... P_{n+1} A_n P_n equals A(m,n) P_n exactly
    # for an invariant family, but unlike (full product) @ P_n it does not
    # drown the decaying bundle in roundoff from the expanding one.
    gplus = np.zeros(w + 1)
    for n in range(r0, r1 + 1):
        cur = np.array(family.at(n))
        gplus[0] = max(gplus[0], spectral_norm(cur))
        for m in range(n + 1, r1 + 1):
            cur = family.at(m) @ (seq.at(m - 1) @ cur)
            val = spectral_norm(cur)
            if not math.isfinite(val) or val >= OVERFLOW_LIMIT:
                gplus[m - n] = max(gplus[m - n], OVERFLOW_LIMIT)
                break
            if val > gplus[m - n]:
                gplus[m - n] = val

    gminus = np.zeros(w + 1)
    q = d - int(ranks[0])
    if q > 0:
        kers = _kernel_bases(family)
        steps = []
        for n in range(r0, r1):
            a = seq.at(n)
            i = n - r0
            m = kers[i + 1].T @ (a @ kers[i])
            res = spectral_norm(a @ kers[i] - kers[i + 1] @ m)
            if res > inv_tol * (1.0 + spectral_norm(a)):
                return Refusal(
                    reason="noninvertible_kernel",
                    detail="kernel bundle is not invariant under the step map",
                    witness={"index": n, "residual": res},
                )
            smin = float(np.linalg.svd(m, compute_uv=False)[-1]) if q else 0.0
            if smin <= sv_tol:
                return Refusal(
                    reason="noninvertible_kernel",
                    detail="step map is numerically singular on the kernel bundle",
                    witness={"index": n, "sigma_min": smin},
                )
            steps.append(m)
        for n in range(r0, r1 + 1):
            i = n - r0
            rhs = kers[i].T @ qmats[i]  # kernel coords of Q_n
            acc = rhs
            gminus[0] = max(gminus[0], float(spectral_norm(kers[i] @ acc)))
            for k in range(1, i + 1):
                # move one step back: solve M_{n-k} x = acc
                acc = np.linalg.solve(steps[i - k], acc)
                val = float(spectral_norm(kers[i - k] @ acc))
                if val > gminus[k]:
                    gminus[k] = val
    return g0, gplus, gminus


def fit_dichotomy_constants(seq: MatrixSequence, family: ProjectionFamily, *,
                            sv_tol: float = 1e-10, min_rate: float = 1e-6,
                            rate_cap: float = 50.0):
    """Fit (prefactor, rate) dominating the measured window norms.

    The rate is the steepest exponential anchored at the gap-0 norm that
    stays above every sample, i.e. the binding chord of the log-norm
    envelope; the result is a true bound on the window, never a regression.
    Refuses with reason "no_decay" when no positive rate exists, and with
    "noninvertible_kernel" when the kernel bundle cannot be inverted.
    """
    report = family.validate(seq)
    if not report["projection_residual_ok"]:
        raise InputError(
            f"family is not a projection family "
            f"(residual {report['projection_residual']:.2e})"
        )
    if not report.get("invariance_residual_ok", True):
        raise InputError(
            f"family is not invariant under the system "
            f"(residual {report['invariance_residual']:.2e})"
        )
    tables = _norm_tables(seq, family, sv_tol=sv_tol)
    if isinstance(tables, Refusal):
        return tables
    g0, gplus, gminus = tables
    g = np.maximum(gplus, gminus)
    anchor = max(g0, 1.0)
    rate = rate_cap
    worst = None
    log_anchor = math.log(anchor)
    for k in range(1, len(g)):
        if g[k] <= 0.0:
            continue
        slope = (log_anchor - math.log(g[k])) / k
        if slope < rate:
            rate = slope
            worst = (k, float(g[k]))
    if rate <= min_rate:
        return Refusal(
            reason="no_decay",
            detail="window norms do not decay with the gap",
            witness={"gap": worst[0], "norm": worst[1]} if worst else None,
        )
    return DichotomyCertificate(
        family=family,
        prefactor=anchor,
        rate=float(rate),
        forward_norms=gplus,
        backward_norms=gminus,
        residuals={
            "projection": report["projection_residual"],
            "invariance": report.get("invariance_residual", 0.0),
        },
    )


@dataclass(frozen=True)
class TrichotomyCertificate:
    """Dichotomies on both half-lines whose time-0 projections commute and
    are nested (Ima minus inside Ima plus, Ker plus inside Ker minus)."""

    plus: DichotomyCertificate
    minus: DichotomyCertificate
    compat_residual: float

    @property
    def dim(self) -> int:
        return self.plus.family.dim

    @property
    def half_line_gain(self) -> float:
        return max(self.plus.shadowing_gain, self.minus.shadowing_gain)

    def center_projector(self) -> np.ndarray:
        return self.plus.family.at(0) - self.minus.family.at(0)

    @property
    def degenerate_center(self) -> bool:
        """True when the two time-0 projections agree (a full-line dichotomy)."""
        return spectral_norm(self.center_projector()) <= 1e-8

    def to_json_dict(self) -> dict:
        return {
            "type": "trichotomy",
            "plus": self.plus.to_json_dict(),
            "minus": self.minus.to_json_dict(),
            "compat_residual": self.compat_residual,
        }


def assemble_trichotomy(plus: DichotomyCertificate, minus: DichotomyCertificate,
                        tol: float = 1e-8):
    """Combine half-line certificates; refuse when the time-0 projections
    fail the compatibility identities P- = P- P+ = P+ P-."""
    if isinstance(plus, Refusal) or isinstance(minus, Refusal):
        raise InputError("assemble_trichotomy needs two accepted certificates")
    if not plus.family.covers(0, 0) or not minus.family.covers(0, 0):
        raise InputError("both families must contain index 0")
    p_plus = plus.family.at(0)
    p_minus = minus.family.at(0)
    res = max(
        spectral_norm(p_minus - p_minus @ p_plus),
        spectral_norm(p_minus - p_plus @ p_minus),
    )
    if res > tol:
        return Refusal(
            reason="compat_residual",
            detail="time-0 projections are not nested/commuting",
            witness={"residual": float(res)},
        )
    return TrichotomyCertificate(plus=plus, minus=minus, compat_residual=float(res))


# ---------------------------------------------------------------------------
# certificate files

def certificate_from_dict(data: dict):
    kind = data.get("type")
    if kind == "dichotomy":
        fam = ProjectionFamily(
            side=data["side"],
            start=int(data["window"][0]),
            mats=np.array(
                [np.reshape(p, (data["dim"], data["dim"])) for p in data["projections"]]
            ),
        )
        return DichotomyCertificate(
            family=fam,
            prefactor=float(data["prefactor"]),
            rate=float(data["rate"]),
            residuals=dict(data.get("residuals", {})),
        )
    if kind == "trichotomy":
        return TrichotomyCertificate(
            plus=certificate_from_dict(data["plus"]),
            minus=certificate_from_dict(data["minus"]),
            compat_residual=float(data["compat_residual"]),
        )
    if kind == "refusal":
        return Refusal(
            reason=data.get("reason", "unknown"),
            detail=data.get("detail", ""),
            witness=data.get("witness"),
        )
    raise InputError(f"unknown certificate type {kind!r}")


def check_certificate_dict(data: dict, seq: MatrixSequence | None = None):
    """Invariant-by-invariant validation of a certificate JSON dict.

    Returns a list of (invariant_name, ok, detail) triples; used by the
    self-test command to reject corrupted certificate files.
    """
    checks = []
    try:
        cert = certificate_from_dict(data)
    except (InputError, KeyError, ValueError) as exc:
        return [("certificate_parse", False, str(exc))]
    if isinstance(cert, Refusal):
        ok = cert.reason in ("no_decay", "noninvertible_kernel", "compat_residual")
        checks.append(("refusal_reason_code", ok, cert.reason))
        return checks

    def check_dichotomy(c, label):
        fam = c.family
        proj_res = float(np.max(spectral_norms(fam.mats @ fam.mats - fam.mats)))
        checks.append((f"{label}projection_idempotent", proj_res <= 1e-8,
                       f"residual {proj_res:.2e}"))
        ranks = fam.ranks()
        checks.append((f"{label}rank_constant", len(set(ranks.tolist())) == 1,
                       f"ranks {sorted(set(ranks.tolist()))}"))
        checks.append((f"{label}rate_positive", c.rate > 0.0, f"rate {c.rate:g}"))
        checks.append((f"{label}prefactor_at_least_norms", c.prefactor >= 1.0 - 1e-12,
                       f"prefactor {c.prefactor:g}"))
        if seq is not None:
            ok, why = c.check(seq)
            checks.append((f"{label}window_decay_bound", ok, why))

    if isinstance(cert, DichotomyCertificate):
        check_dichotomy(cert, "")
    else:
        check_dichotomy(cert.plus, "plus_")
        check_dichotomy(cert.minus, "minus_")
        p_plus = cert.plus.family.at(0)
        p_minus = cert.minus.family.at(0)
        res = max(
            spectral_norm(p_minus - p_minus @ p_plus),
            spectral_norm(p_minus - p_plus @ p_minus),
        )
        checks.append(("compat_residual", res <= 1e-8, f"residual {res:.2e}"))
    return checks
