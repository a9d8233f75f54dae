"""Matrix sequences, cocycle products, and pseudo-orbits (discrete time).

A system is the recurrence x_{n+1} = A_n x_n with A_n given on a finite
window and extended to all of Z by tail rules.  Matrices may be singular:
products are only formed forward in time, and backward motion elsewhere in
the package goes through explicit kernel-restriction inverses.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError, RangeError

TAIL_RULES = ("constant", "periodic", "zero")

# Entries at or above this magnitude are treated as overflow. Keeping the
# guard well under float max leaves room for a few more multiplications
# before anything turns into inf behind our back.
OVERFLOW_LIMIT = 1e300


def _as_matrix_stack(window, dim):
    arr = np.asarray(window, dtype=float)
    if arr.ndim == 2:  # one flat row-major matrix per entry
        if arr.shape[1] != dim * dim:
            raise InputError(
                f"window entries have {arr.shape[1]} values, expected {dim * dim}"
            )
        arr = arr.reshape(arr.shape[0], dim, dim)
    if arr.ndim != 3 or arr.shape[1] != dim or arr.shape[2] != dim:
        raise InputError(f"window must be a stack of {dim}x{dim} matrices")
    if not np.all(np.isfinite(arr)):
        raise InputError("window contains non-finite entries")
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class MatrixSequence:
    """A_n on a window [window_start, window_start + len - 1], with tails.

    Tail rules: "constant" repeats the nearest window endpoint matrix,
    "periodic" repeats the whole window, "zero" gives the zero matrix.
    """

    dim: int
    window_start: int
    window: np.ndarray  # (m, dim, dim), read-only
    left_tail: str = "constant"
    right_tail: str = "constant"

    def __post_init__(self):
        if self.dim < 1:
            raise InputError("dim must be >= 1")
        object.__setattr__(self, "window", _as_matrix_stack(self.window, self.dim))
        if len(self.window) == 0:
            raise InputError("window must contain at least one matrix")
        for rule in (self.left_tail, self.right_tail):
            if rule not in TAIL_RULES:
                raise InputError(f"unknown tail rule {rule!r}; use one of {TAIL_RULES}")

    @property
    def window_stop(self) -> int:
        """One past the last window index."""
        return self.window_start + len(self.window)

    def at(self, n: int) -> np.ndarray:
        """A_n (read-only view; copy before mutating)."""
        m = len(self.window)
        i = n - self.window_start
        if 0 <= i < m:
            return self.window[i]
        rule = self.left_tail if i < 0 else self.right_tail
        if rule == "zero":
            z = np.zeros((self.dim, self.dim))
            z.flags.writeable = False
            return z
        if rule == "periodic":
            return self.window[i % m]
        return self.window[0] if i < 0 else self.window[m - 1]

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "window_start": self.window_start,
            "window": [m.reshape(-1).tolist() for m in self.window],
            "left_tail": self.left_tail,
            "right_tail": self.right_tail,
        }


def eval_matrix(seq: MatrixSequence, n: int) -> np.ndarray:
    """A_n for any integer n (window entry or tail extension)."""
    return seq.at(n)


def _check_finite(mat, m, n):
    if not np.all(np.isfinite(mat)) or np.max(np.abs(mat)) >= OVERFLOW_LIMIT:
        raise RangeError(
            f"cocycle product from {n} to {m} overflows; "
            "shrink the window or horizon"
        )


def cocycle(seq: MatrixSequence, m: int, n: int) -> np.ndarray:
    """Forward product A_{m-1} ... A_n (identity when m == n).

    Only defined for m >= n; matrices may be singular, so no backward
    products are formed here.
    """
    if m < n:
        raise DomainError(f"cocycle needs m >= n, got m={m}, n={n}")
    out = np.eye(seq.dim)
    for k in range(n, m):
        out = seq.at(k) @ out
        _check_finite(out, m, n)
    return out


class CocycleWindow:
    """All cocycle products over a window, built once and then immutable.

    product(m, n) returns A(m, n) for window_start <= n <= m <= window_stop.
    Safe to share across threads after construction.
    """

    def __init__(self, seq: MatrixSequence, start: int, stop: int):
        if stop < start:
            raise DomainError("window stop must be >= start")
        self.seq = seq
        self.start = start
        self.stop = stop
        w = stop - start + 1
        d = seq.dim
        # zero-filled: only the lower triangle (m >= n) is meaningful, and
        # the finiteness guard below scans the whole array
        table = np.zeros((w, w, d, d))
        eye = np.eye(d)
        for j in range(w):
            table[j, j] = eye
            for i in range(j + 1, w):
                table[i, j] = seq.at(start + i - 1) @ table[i - 1, j]
        if not np.all(np.isfinite(table)) or np.max(np.abs(table)) >= OVERFLOW_LIMIT:
            raise RangeError(
                f"cocycle products overflow on [{start}, {stop}]; "
                "shrink the window"
            )
        table.flags.writeable = False
        self._table = table

    def product(self, m: int, n: int) -> np.ndarray:
        if m < n:
            raise DomainError(f"cocycle needs m >= n, got m={m}, n={n}")
        if n < self.start or m > self.stop:
            raise RangeError(f"[{n}, {m}] outside cached window [{self.start}, {self.stop}]")
        return self._table[m - self.start, n - self.start]

    def column(self, n: int) -> np.ndarray:
        """Stack of A(m, n) for m = n .. stop."""
        if n < self.start or n > self.stop:
            raise RangeError(f"{n} outside cached window [{self.start}, {self.stop}]")
        j = n - self.start
        return self._table[j:, j]


def defect(seq: MatrixSequence, start: int, values: np.ndarray):
    """Per-step defects w_n = y_{n+1} - A_n y_n and their max Euclidean norm.

    `values` holds y_start .. y_{start+L-1}; the returned array has length
    L-1, w[i] belonging to the step start+i -> start+i+1.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[1] != seq.dim:
        raise InputError(f"values have dim {values.shape[1]}, system has {seq.dim}")
    if len(values) < 2:
        raise InputError("need at least two points to form a defect")
    steps = len(values) - 1
    w = np.empty((steps, seq.dim))
    for i in range(steps):
        w[i] = values[i + 1] - seq.at(start + i) @ values[i]
    delta = float(np.max(np.linalg.norm(w, axis=1)))
    return w, delta


@dataclass(frozen=True)
class PseudoOrbit:
    """A finite orbit segment together with its defect size delta.

    delta must dominate the computed per-step defects; when omitted it is
    set to exactly the max defect norm.
    """

    seq: MatrixSequence
    start: int
    values: np.ndarray  # (L, dim)
    delta: float
    defects: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        values = np.ascontiguousarray(values)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        w, dmax = defect(self.seq, self.start, values)
        w.flags.writeable = False
        object.__setattr__(self, "defects", w)
        delta = self.delta
        if delta is None:
            delta = dmax
        if delta < dmax * (1.0 - 1e-12) - 1e-300:
            raise InputError(
                f"declared delta {delta:g} smaller than max defect {dmax:g}"
            )
        object.__setattr__(self, "delta", float(delta))

    @property
    def stop(self) -> int:
        """Index of the last orbit point."""
        return self.start + len(self.values) - 1


def pseudo_orbit(seq, start, values, delta=None) -> PseudoOrbit:
    return PseudoOrbit(seq, start, np.asarray(values, dtype=float), delta)


# ---------------------------------------------------------------------------
# serialization

def matrix_sequence_from_dict(data: dict) -> MatrixSequence:
    try:
        return MatrixSequence(
            dim=int(data["dim"]),
            window_start=int(data["window_start"]),
            window=data["window"],
            left_tail=data.get("left_tail", "constant"),
            right_tail=data.get("right_tail", "constant"),
        )
    except KeyError as exc:
        raise InputError(f"matrix sequence JSON missing field {exc}") from exc


def load_matrix_sequence(path) -> MatrixSequence:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read matrix sequence from {path}: {exc}") from exc
    return matrix_sequence_from_dict(data)


def save_matrix_sequence(path, seq: MatrixSequence):
    atomic_write_text(path, json.dumps(seq.to_json_dict(), sort_keys=True, indent=1) + "\n")


def load_trajectory(path):
    """Read a trajectory CSV (rows: n, y_1, ..., y_d) -> (start, values)."""
    rows = []
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                try:
                    idx = float(row[0])
                except ValueError:
                    continue  # header line
                rows.append((idx, [float(x) for x in row[1:]]))
    except OSError as exc:
        raise InputError(f"cannot read trajectory from {path}: {exc}") from exc
    if not rows:
        raise InputError(f"no data rows in {path}")
    indices = [r[0] for r in rows]
    start = int(round(indices[0]))
    for k, idx in enumerate(indices):
        if abs(idx - (start + k)) > 1e-9:
            raise InputError("trajectory indices must be consecutive integers")
    dims = {len(r[1]) for r in rows}
    if len(dims) != 1 or 0 in dims:
        raise InputError("trajectory rows have inconsistent dimensions")
    return start, np.array([r[1] for r in rows], dtype=float)


def save_trajectory(path, start, values):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    lines = []
    for i, row in enumerate(values):
        lines.append(",".join([str(start + i)] + [repr(float(x)) for x in row]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text: str):
    """Write via a temp file + rename so readers never see partial output."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def spectral_norm(mat) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(np.asarray(mat, dtype=float), 2))


def spectral_norms(stack) -> np.ndarray:
    """Largest singular value of each matrix in a stack, batched."""
    stack = np.asarray(stack, dtype=float)
    if stack.size == 0:
        return np.zeros(stack.shape[0])
    return np.linalg.svd(stack, compute_uv=False)[..., 0]


def sup_norm(values) -> float:
    """max_n |v_n| (Euclidean norm per entry) of a sequence of vectors."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(values, axis=-1)))
