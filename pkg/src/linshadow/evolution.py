"""Evolution families T(t,s) for x' = A(t)x and approximate solutions.

Propagation is fixed-step classical Runge-Kutta on the matrix equation,
with the coefficient path sampled on the half-step grid.  The same sweep
machinery (forward/adjoint, optional per-node re-projection, state
recording) backs the dichotomy integrals and the Green integrals, so their
accuracy story is one and the same.
"""

from __future__ import annotations

import ast
import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cocycle import atomic_write_text
from .errors import InputError, RangeError

PATH_KINDS = ("constant", "piecewise", "sampled", "expr", "callable")

_EXPR_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "log": np.log, "sqrt": np.sqrt, "tanh": np.tanh, "sinh": np.sinh,
    "cosh": np.cosh, "abs": np.abs, "arctan": np.arctan,
}
_EXPR_NAMES = {"pi": math.pi, "e": math.e}


def _compile_entry(expr: str):
    """Compile one coefficient entry over the allowed expression set."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise InputError(f"bad coefficient expression {expr!r}: {exc}") from None
    for node in ast.walk(tree):
        if isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _EXPR_FUNCS):
                raise InputError(f"only {sorted(_EXPR_FUNCS)} callable in {expr!r}")
        elif isinstance(node, ast.Name):
            if node.id != "t" and node.id not in _EXPR_FUNCS and node.id not in _EXPR_NAMES:
                raise InputError(f"unknown name {node.id!r} in coefficient {expr!r}")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise InputError(f"non-numeric constant in {expr!r}")
        elif not isinstance(node, (ast.Expression, ast.BinOp, ast.UnaryOp,
                                   ast.Add, ast.Sub, ast.Mult, ast.Div,
                                   ast.Pow, ast.USub, ast.UAdd, ast.Load,
                                   ast.Mod)):
            raise InputError(f"disallowed syntax in coefficient {expr!r}")
    code = compile(tree, "<coefficient>", "eval")

    def evaluate(ts: np.ndarray) -> np.ndarray:
        env = {"t": ts, **_EXPR_FUNCS, **_EXPR_NAMES}
        out = eval(code, {"__builtins__": {}}, env)  # noqa: S307 - vetted AST
        return np.broadcast_to(np.asarray(out, dtype=float), ts.shape).copy()

    return evaluate


class CoefficientPath:
    """The matrix t -> A(t); see the constructors for the supported rules."""

    def __init__(self, dim, kind, **data):
        if kind not in PATH_KINDS:
            raise InputError(f"unknown coefficient kind {kind!r}")
        self.dim = int(dim)
        self.kind = kind
        self._data = data
        if kind == "constant":
            m = np.asarray(data["matrix"], dtype=float)
            if m.shape != (self.dim, self.dim):
                raise InputError("constant coefficient matrix has wrong shape")
            self._mat = m
        elif kind == "piecewise":
            self._breaks = np.asarray(data["breaks"], dtype=float)
            self._mats = np.asarray(data["mats"], dtype=float)
            if self._breaks.ndim != 1 or np.any(np.diff(self._breaks) <= 0):
                raise InputError("piecewise breaks must be strictly increasing")
            if self._mats.shape != (len(self._breaks) + 1, self.dim, self.dim):
                raise InputError("piecewise needs len(breaks)+1 matrices")
        elif kind == "sampled":
            self._times = np.asarray(data["times"], dtype=float)
            self._mats = np.asarray(data["mats"], dtype=float)
            if len(self._times) < 2 or np.any(np.diff(self._times) <= 0):
                raise InputError("sampled times must be strictly increasing (>= 2)")
            if self._mats.shape != (len(self._times), self.dim, self.dim):
                raise InputError("sampled matrices shape mismatch")
        elif kind == "expr":
            entries = np.asarray(data["entries"], dtype=object)
            if entries.shape == (self.dim * self.dim,):
                entries = entries.reshape(self.dim, self.dim)
            if entries.shape != (self.dim, self.dim):
                raise InputError("expr entries must form a d x d grid")
            self._entries = entries
            self._compiled = [[_compile_entry(str(entries[i, j]))
                               for j in range(self.dim)] for i in range(self.dim)]
        else:  # callable
            self._fn = data["fn"]

    # -- constructors ------------------------------------------------------
    @classmethod
    def constant(cls, matrix):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(matrix.shape[0], "constant", matrix=matrix)

    @classmethod
    def piecewise(cls, breaks, mats):
        mats = np.asarray(mats, dtype=float)
        return cls(mats.shape[1], "piecewise", breaks=breaks, mats=mats)

    @classmethod
    def sampled(cls, times, mats):
        mats = np.asarray(mats, dtype=float)
        return cls(mats.shape[1], "sampled", times=times, mats=mats)

    @classmethod
    def expressions(cls, entries):
        entries = np.asarray(entries, dtype=object)
        d = entries.shape[0]
        return cls(d, "expr", entries=entries)

    @classmethod
    def from_callable(cls, dim, fn):
        return cls(dim, "callable", fn=fn)

    # -- evaluation --------------------------------------------------------
    def sample(self, ts) -> np.ndarray:
        """A(t) stacked over the given times, shape (len(ts), d, d)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        d = self.dim
        if self.kind == "constant":
            return np.broadcast_to(self._mat, (len(ts), d, d)).copy()
        if self.kind == "piecewise":
            idx = np.searchsorted(self._breaks, ts, side="right")
            return self._mats[idx].copy()
        if self.kind == "sampled":
            t_clip = np.clip(ts, self._times[0], self._times[-1])
            hi = np.clip(np.searchsorted(self._times, t_clip, side="right"),
                         1, len(self._times) - 1)
            lo = hi - 1
            t0, t1 = self._times[lo], self._times[hi]
            lam = ((t_clip - t0) / (t1 - t0))[:, None, None]
            return (1.0 - lam) * self._mats[lo] + lam * self._mats[hi]
        if self.kind == "expr":
            out = np.empty((len(ts), d, d))
            for i in range(d):
                for j in range(d):
                    out[:, i, j] = self._compiled[i][j](ts)
            return out
        out = np.empty((len(ts), d, d))
        for k, t in enumerate(ts):
            out[k] = np.asarray(self._fn(float(t)), dtype=float)
        return out

    def at(self, t: float) -> np.ndarray:
        return self.sample([t])[0]

    # -- serialization -----------------------------------------------------
    def to_json_dict(self) -> dict:
        if self.kind == "constant":
            body = {"matrix": self._mat.reshape(-1).tolist()}
        elif self.kind == "piecewise":
            body = {"breaks": self._breaks.tolist(),
                    "mats": [m.reshape(-1).tolist() for m in self._mats]}
        elif self.kind == "sampled":
            body = {"times": self._times.tolist(),
                    "mats": [m.reshape(-1).tolist() for m in self._mats]}
        elif self.kind == "expr":
            body = {"entries": [str(e) for e in self._entries.reshape(-1)]}
        else:
            raise InputError("callable coefficient paths cannot be serialized")
        return {"dim": self.dim, "kind": self.kind, **body}


def coefficient_path_from_dict(data: dict) -> CoefficientPath:
    try:
        dim = int(data["dim"])
        kind = data["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed coefficient path: {exc}") from None
    unflat = lambda m: np.reshape(np.asarray(m, dtype=float), (dim, dim))  # noqa: E731
    if kind == "constant":
        return CoefficientPath(dim, "constant", matrix=unflat(data["matrix"]))
    if kind == "piecewise":
        return CoefficientPath(dim, "piecewise", breaks=data["breaks"],
                               mats=np.array([unflat(m) for m in data["mats"]]))
    if kind == "sampled":
        return CoefficientPath(dim, "sampled", times=data["times"],
                               mats=np.array([unflat(m) for m in data["mats"]]))
    if kind == "expr":
        entries = np.asarray(data["entries"], dtype=object)
        return CoefficientPath(dim, "expr", entries=entries)
    raise InputError(f"unknown coefficient kind {kind!r}")


def load_coefficient_path(path) -> CoefficientPath:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from None
    return coefficient_path_from_dict(data)


def save_coefficient_path(path, cpath: CoefficientPath):
    atomic_write_text(path, json.dumps(cpath.to_json_dict(), sort_keys=True, indent=1))


class EvolutionFamily:
    """T(t,s) realized by fixed-step RK4 on X' = A(t)X, X(s) = Id.

    The default step targets ~1e-8 propagation accuracy over |t-s| <= 10
    for O(1) coefficients; the horizon and the norm guard keep expanding
    directions from silently overflowing.
    """

    def __init__(self, path: CoefficientPath, step: float = 1e-3,
                 horizon: float = 40.0, guard: float = 1e150):
        if step <= 0 or horizon <= 0:
            raise InputError("step and horizon must be positive")
        self.path = path
        self.step = float(step)
        self.horizon = float(horizon)
        self.guard = float(guard)
        self._cache = {}

    @property
    def dim(self) -> int:
        return self.path.dim

    def steps_for(self, s: float, t: float, step: float | None = None) -> int:
        h = self.step if step is None else float(step)
        return max(1, int(math.ceil(abs(t - s) / h - 1e-12)))

    def _halfgrid(self, s: float, t: float, n: int) -> np.ndarray:
        return s + (t - s) * np.arange(2 * n + 1) / (2.0 * n)

    def _check(self, x: np.ndarray, s, t) -> np.ndarray:
        m = np.max(np.abs(x))
        if not np.isfinite(m) or m > self.guard:
            raise RangeError(
                f"propagation from {s:g} to {t:g} exceeded the overflow "
                f"guard {self.guard:.1e}; shorten the horizon"
            )
        return x

    def propagate(self, t: float, s: float) -> np.ndarray:
        """The d x d propagator T(t,s); exact identity at t == s."""
        t, s = float(t), float(s)
        if t == s:
            return np.eye(self.dim)
        if abs(t - s) > self.horizon + 1e-12:
            raise RangeError(
                f"|t-s| = {abs(t - s):g} beyond the configured horizon "
                f"{self.horizon:g}"
            )
        key = (s, t)
        hit = self._cache.get(key)
        if hit is not None:
            return hit.copy()
        n = self.steps_for(s, t)
        h = (t - s) / n
        samples = self.path.sample(self._halfgrid(s, t, n))
        out = _kernels.rk4_matrix(samples, h, np.eye(self.dim))[-1]
        self._check(out, s, t)
        if len(self._cache) < 4096:
            self._cache[key] = out.copy()
        return out

    def sweep_matrix(self, s: float, t: float, x0: np.ndarray, *,
                     adjoint: bool = False, projs: np.ndarray | None = None,
                     record: bool = False, step: float | None = None):
        """RK4 sweep of X' = A X (or X' = -X A when adjoint) from s to t.

        With record=True returns the states at every step node (n+1 of
        them, from s to t inclusive); projs, when given, holds one matrix
        per step and is applied multiplicatively after that step (left for
        plain sweeps, right for adjoint ones).
        """
        t, s = float(t), float(s)
        x0 = np.asarray(x0, dtype=float)
        if t == s:
            out = x0[None, :, :].copy()
            return out if record else out[0]
        n = self.steps_for(s, t, step)
        h = (t - s) / n
        samples = self.path.sample(self._halfgrid(s, t, n))
        states = _kernels.rk4_matrix(samples, h, x0, adjoint=adjoint,
                                     projs=projs, record=record)
        self._check(states[-1], s, t)
        return states if record else states[-1]

    def sweep_affine(self, s: float, t: float, x0: np.ndarray,
                     forcing, *, projs: np.ndarray | None = None,
                     record: bool = False, step: float | None = None):
        """RK4 sweep of x' = A(t)x + g(t); forcing maps a time array to
        (len, d) samples and is evaluated on the half-step grid."""
        t, s = float(t), float(s)
        x0 = np.asarray(x0, dtype=float)
        if t == s:
            out = x0[None, :].copy()
            return out if record else out[0]
        n = self.steps_for(s, t, step)
        h = (t - s) / n
        grid = self._halfgrid(s, t, n)
        samples = self.path.sample(grid)
        gs = np.asarray(forcing(grid), dtype=float)
        if gs.shape != (len(grid), self.dim):
            raise InputError("forcing samples have wrong shape")
        states = _kernels.rk4_affine(samples, gs, h, x0, projs=projs,
                                     record=record)
        self._check(states[-1], s, t)
        return states if record else states[-1]


@dataclass
class ApproximateSolution:
    """A candidate trajectory with derivatives, gridded and optionally
    backed by closed-form callables (value_fn, deriv_fn) for off-grid
    evaluation.  Derivatives not supplied are filled by centered
    differences on the grid (second order; recorded in derivative_source).
    """

    times: np.ndarray
    values: np.ndarray
    derivs: np.ndarray = None
    value_fn: object = None
    deriv_fn: object = None
    derivative_source: str = "supplied"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] != len(self.times):
            raise InputError("times and values length mismatch")
        if len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
            raise InputError("times must be strictly increasing (>= 2 nodes)")
        if (self.value_fn is None) != (self.deriv_fn is None):
            raise InputError("value_fn and deriv_fn must be supplied together")
        if self.derivs is None:
            if self.deriv_fn is not None:
                self.derivs = np.atleast_2d(
                    np.asarray([self.deriv_fn(t) for t in self.times], dtype=float)
                )
                self.derivative_source = "analytic"
            else:
                # two-node grids only support first-order ends
                order = 2 if len(self.times) >= 3 else 1
                self.derivs = np.gradient(self.values, self.times, axis=0,
                                          edge_order=order)
                self.derivative_source = "centered"
        else:
            self.derivs = np.atleast_2d(np.asarray(self.derivs, dtype=float))
            if self.derivs.shape != self.values.shape:
                raise InputError("derivative array shape mismatch")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def value_at(self, ts: np.ndarray) -> np.ndarray:
        """y on arbitrary times: the callable when given, else linear interp."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.value_fn is not None:
            return np.atleast_2d(np.asarray([self.value_fn(t) for t in ts],
                                            dtype=float))
        out = np.empty((len(ts), self.dim))
        for j in range(self.dim):
            out[:, j] = np.interp(ts, self.times, self.values[:, j])
        return out


def defect_c(family: EvolutionFamily, approx: ApproximateSolution):
    """Pointwise defect y'(t) - A(t)y(t) on the grid and its sup norm."""
    if approx.dim != family.dim:
        raise InputError(
            f"solution dimension {approx.dim} != system dimension {family.dim}"
        )
    amats = family.path.sample(approx.times)
    samples = approx.derivs - np.einsum("nij,nj->ni", amats, approx.values)
    delta = float(np.max(np.linalg.norm(samples, axis=1)))
    return samples, delta


# ---------------------------------------------------------------------------
# CSV formats: t, y1..yd[, dy1..dyd]

def save_approximate_solution(path, approx: ApproximateSolution):
    d = approx.dim
    header = (["t"] + [f"y{j + 1}" for j in range(d)]
              + [f"dy{j + 1}" for j in range(d)])
    lines = [",".join(header)]
    for i, t in enumerate(approx.times):
        row = [repr(float(t))]
        row += [repr(float(v)) for v in approx.values[i]]
        row += [repr(float(v)) for v in approx.derivs[i]]
        lines.append(",".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_approximate_solution(path, dim: int | None = None) -> ApproximateSolution:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: empty file")
    has_derivs = None
    first = rows[0]
    try:
        float(first[0])
        has_header = False
    except ValueError:
        has_header = True
    if has_header:
        names = [c.strip() for c in first]
        d = sum(1 for c in names if c.startswith("y"))
        has_derivs = any(c.startswith("dy") for c in names)
        rows = rows[1:]
        if dim is not None and dim != d:
            raise InputError(f"{path}: header says dim {d}, caller says {dim}")
    else:
        ncol = len(first)
        if dim is not None:
            d = dim
            has_derivs = (ncol == 1 + 2 * d)
            if ncol not in (1 + d, 1 + 2 * d):
                raise InputError(f"{path}: {ncol} columns do not fit dim {d}")
        elif ncol % 2 == 0:
            d = ncol - 1  # odd count of data columns can only be y alone
            has_derivs = False
        else:
            raise InputError(
                f"{path}: ambiguous layout with {ncol} columns; pass dim= or "
                f"add a header like t,y1,...,dy1,..."
            )
    times, values, derivs = [], [], []
    for r in rows:
        need = 1 + d * (2 if has_derivs else 1)
        if len(r) != need:
            raise InputError(f"{path}: row with {len(r)} fields, expected {need}")
        try:
            nums = [float(c) for c in r]
        except ValueError as exc:
            raise InputError(f"{path}: non-numeric field ({exc})") from None
        times.append(nums[0])
        values.append(nums[1:1 + d])
        if has_derivs:
            derivs.append(nums[1 + d:])
    return ApproximateSolution(
        times=np.array(times),
        values=np.array(values),
        derivs=np.array(derivs) if has_derivs else None,
    )
