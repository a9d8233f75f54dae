"""Summable and exponential dichotomies for x' = A(t)x.

The defining integrals int ||T(t,s)P(s)|| ds are evaluated by sweeping the
projected propagator as an ODE state (adjoint direction for the stable
piece, reverse time for checks on the unstable one) with re-projection at
every node.  Re-projection is an exact no-op for a genuinely invariant
family and otherwise kills the error components that would grow along the
sweep, which is what makes long horizons affordable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cocycle import spectral_norm, spectral_norms
from .errors import InputError
from .evolution import EvolutionFamily
from .spectral import Refusal, Subspace

_trapz = getattr(np, "trapezoid", None) or np.trapz

PATH_SIDES = ("plus", "minus", "line")


@dataclass
class ProjectionPath:
    """t -> P(t) on a half-line or the line.

    kinds: "constant" (P(t) = mat), "anchored" (mat at the anchor time,
    transported by the conjugation flow P' = AP - PA), "sampled" (several
    anchors; evaluation transports from the nearest one).
    """

    side: str
    kind: str
    mat: np.ndarray = None
    anchor: float = 0.0
    times: np.ndarray = None
    mats: np.ndarray = None

    def __post_init__(self):
        if self.side not in PATH_SIDES:
            raise InputError("side must be 'plus', 'minus' or 'line'")
        if self.kind in ("constant", "anchored"):
            self.mat = np.atleast_2d(np.asarray(self.mat, dtype=float))
            if self.mat.shape[0] != self.mat.shape[1]:
                raise InputError("projection matrix must be square")
        elif self.kind == "sampled":
            self.times = np.asarray(self.times, dtype=float)
            self.mats = np.asarray(self.mats, dtype=float)
            if len(self.times) < 1 or np.any(np.diff(self.times) <= 0):
                raise InputError("sample times must be strictly increasing")
            if self.mats.shape != (len(self.times), self.mats.shape[1], self.mats.shape[1]):
                raise InputError("sample matrices must be square and match times")
        else:
            raise InputError(f"unknown projection path kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.mat.shape[0] if self.mat is not None else self.mats.shape[1]

    def domain(self):
        if self.side == "plus":
            return 0.0, math.inf
        if self.side == "minus":
            return -math.inf, 0.0
        return -math.inf, math.inf

    def _transport(self, family: EvolutionFamily, p0, t0, ts, step):
        """Conjugation-flow transport of p0 from t0 through sorted times ts."""
        out = np.empty((len(ts), self.dim, self.dim))
        below = [i for i, t in enumerate(ts) if t < t0]
        above = [i for i, t in enumerate(ts) if t >= t0]
        for idx_list, direction in ((list(reversed(below)), -1), (above, +1)):
            cur = np.array(p0)
            cur_t = t0
            for i in idx_list:
                t = ts[i]
                if t != cur_t:
                    n = max(1, int(math.ceil(abs(t - cur_t) / step - 1e-12)))
                    h = (t - cur_t) / n
                    grid = cur_t + (t - cur_t) * np.arange(2 * n + 1) / (2.0 * n)
                    cur = _kernels.rk4_commutator(family.path.sample(grid), h, cur)[-1]
                    cur_t = t
                out[i] = cur
        return out

    def sample_nodes(self, family: EvolutionFamily | None, ts,
                     step: float | None = None) -> np.ndarray:
        """P(t) stacked over the times; family required unless constant."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.kind == "constant":
            return np.broadcast_to(self.mat, (len(ts), self.dim, self.dim)).copy()
        if family is None:
            raise InputError(f"a family is required to evaluate a {self.kind} path")
        step = family.step if step is None else float(step)
        order = np.argsort(ts, kind="stable")
        sorted_ts = ts[order]
        if self.kind == "anchored":
            vals = self._transport(family, self.mat, self.anchor, sorted_ts, step)
        else:
            vals = np.empty((len(ts), self.dim, self.dim))
            anchor_of = np.clip(
                np.searchsorted(self.times, sorted_ts), 0, len(self.times) - 1
            )
            # snap to the nearer neighbor
            left = np.clip(anchor_of - 1, 0, len(self.times) - 1)
            use_left = (np.abs(self.times[left] - sorted_ts)
                        < np.abs(self.times[anchor_of] - sorted_ts))
            anchor_of = np.where(use_left, left, anchor_of)
            for a_idx in np.unique(anchor_of):
                mask = anchor_of == a_idx
                vals[mask] = self._transport(
                    family, self.mats[a_idx], float(self.times[a_idx]),
                    sorted_ts[mask], step,
                )
        out = np.empty_like(vals)
        out[order] = vals
        return out

    def at(self, t: float, family: EvolutionFamily | None = None) -> np.ndarray:
        return self.sample_nodes(family, [t])[0]

    def validate(self, family: EvolutionFamily | None, ts, *,
                 pairs: int = 8, rng=None):
        """Idempotency on the grid and commutation on a few test pairs."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        ps = self.sample_nodes(family, ts)
        idem = float(np.max(spectral_norms(ps @ ps - ps)))
        report = {"idempotency_residual": idem, "idempotency_ok": idem <= 1e-8}
        if family is not None and len(ts) >= 2:
            rng = np.random.default_rng(0) if rng is None else rng
            worst = 0.0
            for _ in range(pairs):
                i, j = sorted(rng.choice(len(ts), size=2, replace=False))
                s, t = float(ts[i]), float(ts[j])
                if t - s > family.horizon:
                    continue
                tr = family.propagate(t, s)
                res = spectral_norm(tr @ ps[i] - ps[j] @ tr)
                worst = max(worst, res / max(1.0, spectral_norm(tr)))
            report["commutation_residual"] = worst
            report["commutation_ok"] = worst <= 1e-6
        return report

    def to_json_dict(self) -> dict:
        out = {"side": self.side, "kind": self.kind, "dim": self.dim}
        if self.kind == "constant":
            out["matrix"] = self.mat.reshape(-1).tolist()
        elif self.kind == "anchored":
            out["matrix"] = self.mat.reshape(-1).tolist()
            out["anchor"] = float(self.anchor)
        else:
            out["times"] = self.times.tolist()
            out["mats"] = [m.reshape(-1).tolist() for m in self.mats]
        return out


def projection_path_from_dict(data: dict) -> ProjectionPath:
    kind = data.get("kind")
    d = int(data["dim"])
    unflat = lambda m: np.reshape(np.asarray(m, dtype=float), (d, d))  # noqa: E731
    if kind == "constant":
        return ProjectionPath(side=data["side"], kind=kind, mat=unflat(data["matrix"]))
    if kind == "anchored":
        return ProjectionPath(side=data["side"], kind=kind, mat=unflat(data["matrix"]),
                              anchor=float(data.get("anchor", 0.0)))
    if kind == "sampled":
        return ProjectionPath(side=data["side"], kind=kind,
                              times=np.asarray(data["times"], dtype=float),
                              mats=np.array([unflat(m) for m in data["mats"]]))
    raise InputError(f"unknown projection path kind {kind!r}")


# ---------------------------------------------------------------------------
# the defining integrals

def _projected_norms(family, path, t, edge, complement, quad_step):
    """Node times, integrand values and edge value for one integral piece.

    For edge < t this is ||T(t,s)P(s)|| via the adjoint sweep; for edge > t
    the same sweep direction trick applies with the complementary seed (the
    integrand there is ||T(t,s)Q(s)|| = ||Q(t)T(t,s)|| by commutation).
    """
    if edge == t:
        return np.array([t]), np.array([0.0]), 0.0
    n = max(1, int(math.ceil(abs(edge - t) / quad_step - 1e-12)))
    nodes = t + (edge - t) * np.arange(n + 1) / n
    proj_nodes = path.sample_nodes(family, nodes[1:], step=quad_step)
    seed = path.sample_nodes(family, [t])[0]
    if complement:
        eye = np.eye(family.dim)
        seed = eye - seed
        proj_nodes = eye[None] - proj_nodes
    states = family.sweep_matrix(t, edge, seed, adjoint=True,
                                 projs=proj_nodes, record=True, step=quad_step)
    norms = spectral_norms(states)
    return nodes, norms, float(norms[-1])


@dataclass
class SummableReport:
    """One evaluation of the defining integrals at a single time."""

    t: float
    forward: float
    backward: float
    forward_edge: float
    backward_edge: float
    forward_tail: bool
    backward_tail: bool

    @property
    def total(self) -> float:
        return self.forward + self.backward


def summable_integral_report(family: EvolutionFamily, path: ProjectionPath,
                             t: float, *, horizon: float = 30.0,
                             quad_step: float = 1e-2,
                             tail_threshold: float = 1e-10) -> SummableReport:
    lo, hi = path.domain()
    t = float(t)
    if not lo <= t <= hi:
        raise InputError(f"t = {t:g} outside the path's half-line")
    fwd_edge = max(t - horizon, lo)
    bwd_edge = min(t + horizon, hi)
    nodes_f, vals_f, edge_f = _projected_norms(
        family, path, t, fwd_edge, False, quad_step)
    nodes_b, vals_b, edge_b = _projected_norms(
        family, path, t, bwd_edge, True, quad_step)
    int_f = float(_trapz(vals_f, dx=abs(nodes_f[1] - nodes_f[0]))) if len(nodes_f) > 1 else 0.0
    int_b = float(_trapz(vals_b, dx=abs(nodes_b[1] - nodes_b[0]))) if len(nodes_b) > 1 else 0.0
    # a truncation at the domain boundary is complete, not truncated
    tail_f = bool(edge_f > tail_threshold and fwd_edge > lo)
    tail_b = bool(edge_b > tail_threshold and bwd_edge < hi)
    return SummableReport(t=t, forward=int_f, backward=int_b,
                          forward_edge=edge_f, backward_edge=edge_b,
                          forward_tail=tail_f, backward_tail=tail_b)


def summable_integral(family: EvolutionFamily, path: ProjectionPath, t: float,
                      *, horizon: float = 30.0, quad_step: float = 1e-2) -> float:
    """Truncated value of the two defining integrals at time t."""
    return summable_integral_report(family, path, t, horizon=horizon,
                                    quad_step=quad_step).total


def _crude_rate(family, path, t0: float) -> float:
    """Two-sample decay guess used only to size the truncation horizon."""
    p = path.sample_nodes(family, [t0])[0]
    q = np.eye(family.dim) - p
    lam = math.inf
    g = spectral_norm(family.propagate(t0 + 1.0, t0) @ p)
    if g > 0:
        lam = min(lam, -math.log(min(g, 1.0 - 1e-12)) if g < 1 else 0.0)
    g = spectral_norm(family.propagate(t0, t0 + 1.0) @ q)
    if g > 0:
        lam = min(lam, -math.log(min(g, 1.0 - 1e-12)) if g < 1 else 0.0)
    if not math.isfinite(lam):
        lam = 1.0
    return min(max(lam, 0.5), 5.0)


@dataclass(frozen=True)
class SummableCertificate:
    """K bounds the truncated defining integrals at every grid time, and no
    truncation edge showed a non-decaying integrand."""

    path: ProjectionPath
    K: float
    horizon: float
    quad_step: float
    grid: np.ndarray = field(repr=False, default=None)
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def side(self) -> str:
        return self.path.side

    def to_json_dict(self) -> dict:
        return {
            "type": "summable",
            "side": self.side,
            "dim": self.path.dim,
            "K": self.K,
            "horizon": self.horizon,
            "quad_step": self.quad_step,
            "path": self.path.to_json_dict(),
            "grid": [float(t) for t in (self.grid if self.grid is not None else [])],
            "samples": [float(v) for v in (self.samples if self.samples is not None else [])],
        }


def verify_summable(family: EvolutionFamily, path: ProjectionPath, grid, *,
                    horizon: float | None = None, quad_step: float = 1e-2,
                    tail_threshold: float = 1e-10, rng=None):
    """K = max of the truncated integrals over the grid, or a refusal when
    any truncation edge still carries mass (the integrand is not decaying,
    so no finite K can be certified this way)."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if len(grid) == 0:
        raise InputError("empty verification grid")
    report = path.validate(family, grid, rng=rng)
    if not report["idempotency_ok"]:
        raise InputError(
            f"path is not a projection family "
            f"(idempotency residual {report['idempotency_residual']:.2e})"
        )
    if not report.get("commutation_ok", True):
        raise InputError(
            f"path does not commute with the flow "
            f"(residual {report['commutation_residual']:.2e})"
        )
    if horizon is None:
        horizon = min(max(30.0 / _crude_rate(family, path, float(grid[0])), 10.0), 60.0)
    totals = np.empty(len(grid))
    for i, t in enumerate(grid):
        rep = summable_integral_report(family, path, float(t), horizon=horizon,
                                       quad_step=quad_step,
                                       tail_threshold=tail_threshold)
        if rep.forward_tail or rep.backward_tail:
            side = "forward" if rep.forward_tail else "backward"
            edge = rep.forward_edge if rep.forward_tail else rep.backward_edge
            return Refusal(
                reason="no_decay",
                detail=f"{side} integrand still {edge:.2e} at the truncation "
                       f"horizon {horizon:g}; not summable on this evidence",
                witness={"t": float(t), "side": side, "edge_value": edge},
            )
        totals[i] = rep.total
    return SummableCertificate(path=path, K=float(np.max(totals)),
                               horizon=float(horizon), quad_step=float(quad_step),
                               grid=grid.copy(), samples=totals)


# ---------------------------------------------------------------------------
# exponential fit (continuous)

@dataclass(frozen=True)
class ExponentialEstimateC:
    """prefactor * exp(-rate * gap) dominates every sampled projected norm."""

    path: ProjectionPath
    prefactor: float
    rate: float
    gaps: np.ndarray = field(repr=False, default=None)
    norms: np.ndarray = field(repr=False, default=None)

    @property
    def summable_bound(self) -> float:
        """The K value the exponential constants imply (2D / rate)."""
        return 2.0 * self.prefactor / self.rate


def verify_exponential_c(family: EvolutionFamily, path: ProjectionPath, grid,
                         *, quad_step: float = 1e-2, min_rate: float = 1e-6,
                         rate_cap: float = 50.0):
    """Anchored envelope fit of log projected-norm samples against the gap.

    The grid must be uniformly spaced; each grid time contributes one
    stable and one unstable sweep down to the grid start, and the per-gap
    maxima are fitted exactly like the discrete constants.
    """
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 2:
        raise InputError("need at least two grid times")
    deltas = np.diff(grid)
    spacing = float(deltas[0])
    if np.max(np.abs(deltas - spacing)) > 1e-9 * max(1.0, abs(spacing)):
        raise InputError("verify_exponential_c expects a uniform grid")
    m = len(grid)
    sub = max(1, int(math.ceil(spacing / quad_step - 1e-12)))
    gmax = np.zeros(m)
    eye = np.eye(family.dim)
    for i in range(m):
        t = float(grid[i])
        ps = path.sample_nodes(family, [t])[0]
        gmax[0] = max(gmax[0], spectral_norm(ps), spectral_norm(eye - ps))
        if i == 0:
            continue
        n = i * sub
        nodes = t + (grid[0] - t) * np.arange(n + 1) / n
        projs = path.sample_nodes(family, nodes[1:], step=quad_step)
        stable = family.sweep_matrix(t, float(grid[0]), ps, adjoint=True,
                                     projs=projs, record=True, step=quad_step)
        unstable = family.sweep_matrix(t, float(grid[0]), eye - ps,
                                       projs=eye[None] - projs, record=True,
                                       step=quad_step)
        s_norms = spectral_norms(stable[::sub])
        u_norms = spectral_norms(unstable[::sub])
        for k in range(1, i + 1):
            val = max(float(s_norms[k]), float(u_norms[k]))
            if val > gmax[k]:
                gmax[k] = val
    anchor = max(gmax[0], 1.0)
    rate = rate_cap
    worst = None
    for k in range(1, m):
        if gmax[k] <= 0.0:
            continue
        slope = (math.log(anchor) - math.log(gmax[k])) / (k * spacing)
        if slope < rate:
            rate = slope
            worst = (k * spacing, float(gmax[k]))
    if rate <= min_rate:
        return Refusal(
            reason="no_decay",
            detail="projected norms do not decay with the gap",
            witness={"gap": worst[0], "norm": worst[1]} if worst else None,
        )
    ks = np.arange(m) * spacing
    return ExponentialEstimateC(path=path, prefactor=float(anchor),
                                rate=float(rate), gaps=ks, norms=gmax)


# ---------------------------------------------------------------------------
# trichotomies

@dataclass(frozen=True)
class SummableTrichotomyCertificate:
    plus: SummableCertificate
    minus: SummableCertificate
    compat_residual: float

    @property
    def K(self) -> float:
        return max(self.plus.K, self.minus.K)

    @property
    def dim(self) -> int:
        return self.plus.path.dim

    def to_json_dict(self) -> dict:
        return {
            "type": "summable_trichotomy",
            "plus": self.plus.to_json_dict(),
            "minus": self.minus.to_json_dict(),
            "compat_residual": self.compat_residual,
        }


def assemble_summable_trichotomy(plus: SummableCertificate,
                                 minus: SummableCertificate, *,
                                 family: EvolutionFamily | None = None,
                                 tol: float = 1e-8):
    """Glue half-line summable certificates; refuse when the time-0
    projections are not nested/commuting."""
    if isinstance(plus, Refusal) or isinstance(minus, Refusal):
        raise InputError("assemble_summable_trichotomy needs two accepted certificates")
    p_plus = plus.path.at(0.0, family)
    p_minus = minus.path.at(0.0, family)
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
    return SummableTrichotomyCertificate(plus=plus, minus=minus,
                                         compat_residual=float(res))


def summable_certificate_from_dict(data: dict):
    kind = data.get("type")
    if kind == "summable":
        return SummableCertificate(
            path=projection_path_from_dict(data["path"]),
            K=float(data["K"]),
            horizon=float(data["horizon"]),
            quad_step=float(data["quad_step"]),
            grid=np.asarray(data.get("grid", []), dtype=float),
            samples=np.asarray(data.get("samples", []), dtype=float),
        )
    if kind == "summable_trichotomy":
        return SummableTrichotomyCertificate(
            plus=summable_certificate_from_dict(data["plus"]),
            minus=summable_certificate_from_dict(data["minus"]),
            compat_residual=float(data["compat_residual"]),
        )
    if kind == "refusal":
        return Refusal(reason=data.get("reason", "unknown"),
                       detail=data.get("detail", ""),
                       witness=data.get("witness"))
    raise InputError(f"unknown certificate type {kind!r}")


def check_summable_certificate(family: EvolutionFamily, cert, slack: float = 1e-2):
    """Re-measure a summable certificate; list of (invariant, ok, detail)."""
    checks = []

    def check_one(c, label):
        grid = c.grid if c.grid is not None and len(c.grid) else np.array([0.0])
        rep = c.path.validate(family, grid)
        checks.append((f"{label}idempotency", rep["idempotency_ok"],
                       f"residual {rep['idempotency_residual']:.2e}"))
        if "commutation_ok" in rep:
            checks.append((f"{label}commutation", rep["commutation_ok"],
                           f"residual {rep.get('commutation_residual', 0.0):.2e}"))
        worst = 0.0
        for t in grid:
            worst = max(worst, summable_integral(family, c.path, float(t),
                                                 horizon=c.horizon,
                                                 quad_step=c.quad_step))
        checks.append((f"{label}integral_bound", worst <= c.K * (1.0 + slack),
                       f"measured {worst:.6g} vs certified {c.K:.6g}"))

    if isinstance(cert, SummableTrichotomyCertificate):
        check_one(cert.plus, "plus_")
        check_one(cert.minus, "minus_")
        p_plus = cert.plus.path.at(0.0, family)
        p_minus = cert.minus.path.at(0.0, family)
        res = max(
            spectral_norm(p_minus - p_minus @ p_plus),
            spectral_norm(p_minus - p_plus @ p_minus),
        )
        checks.append(("compat_residual", res <= 1e-8, f"residual {res:.2e}"))
    elif isinstance(cert, SummableCertificate):
        check_one(cert, "")
    elif isinstance(cert, Refusal):
        ok = cert.reason in ("no_decay", "noninvertible_kernel", "compat_residual")
        checks.append(("refusal_reason_code", ok, cert.reason))
    else:
        checks.append(("certificate_parse", False, f"unsupported {type(cert).__name__}"))
    return checks


def estimate_stable_c(family: EvolutionFamily, t0: float, horizon: float,
                      sigma_split: float = 1.0) -> Subspace:
    """Forward-contracting directions over [t0, t0+horizon] via the SVD of
    the propagator.  Decay-based: on merely summable (non-exponential)
    dichotomies this is a heuristic, and the returned warning says so.
    """
    mat = family.propagate(t0 + horizon, t0)
    _u, s, vt = np.linalg.svd(mat)
    warnings = ["decay-based estimate; summability alone does not imply "
                "pointwise decay, treat as heuristic on such inputs"]
    lo, hi = 0.1 * sigma_split, 10.0 * sigma_split
    if np.any((s >= lo) & (s <= hi)):
        warnings.append("singular value near the split threshold")
    keep = s < sigma_split
    return Subspace(np.ascontiguousarray(vt[keep].T), tuple(warnings))
