"""Batch command-line front end.

One command per process, deterministic output (stable key order, no
timestamps), write-then-rename for files.  Exit codes: 0 success, 1 input
error, 2 certificate refusal, 3 property/bound failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import selftest as selftest_mod
from .cocycle import (
    atomic_write_text,
    load_matrix_sequence,
    load_trajectory,
    pseudo_orbit,
)
from .errors import DomainError, InputError, RangeError, SplittingError, StructuralError
from .evolution import EvolutionFamily, load_approximate_solution, load_coefficient_path
from .shadowing import gamma_operator, shadow, shadow_via_gamma, solution_residual
from .shadowing_ode import shadow_c
from .spectral import (
    Refusal,
    assemble_trichotomy,
    backward_uniqueness_test,
    build_projection_family,
    carry_stable_forward,
    check_certificate_dict,
    estimate_stable,
    estimate_unstable,
    fit_dichotomy_constants,
)
from .summable import (
    ProjectionPath,
    check_summable_certificate,
    estimate_stable_c,
    summable_certificate_from_dict,
    verify_summable,
)
from .systems import collapsing_scalar_system, matches_collapsing_scalar

EXIT_OK, EXIT_INPUT, EXIT_REFUSAL, EXIT_PROPERTY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on bad flags; we reserve 2 for refusals."""

    def error(self, message):
        raise InputError(message)


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def _emit(out_path, payload):
    text = json.dumps(_jsonify(payload), sort_keys=True, indent=2) + "\n"
    if out_path:
        atomic_write_text(out_path, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# certificate estimation shared by analyze and shadow


def _estimate_family(seq, lo, hi, horizon, side):
    if side == "minus":
        # windowed estimates near the endpoint would have to look past 0;
        # estimate once at the deepest node and carry forward by invariance
        base_h = max(1, min(horizon, -lo))
        stables = carry_stable_forward(seq, lo, estimate_stable(seq, lo, base_h), hi)
    else:
        stables = {n: estimate_stable(seq, n, horizon) for n in range(lo, hi + 1)}
    unstables = {n: estimate_unstable(seq, n, horizon) for n in range(lo, hi + 1)}
    d = seq.dim
    if all(stables[n].rank + unstables[n].rank == d for n in stables):
        return build_projection_family(seq, stables, side=side,
                                       rule="within_unstable",
                                       unstable=unstables)
    return build_projection_family(seq, stables, side=side, rule="orthogonal")


def _fit_side(seq, lo, hi, horizon, side):
    """Certificate, Refusal, or an error dict when no candidate family exists."""
    try:
        family = _estimate_family(seq, lo, hi, horizon, side)
        return fit_dichotomy_constants(seq, family)
    except (InputError, SplittingError, StructuralError, RangeError) as exc:
        return {"type": "error", "detail": str(exc)}


def _entry(result):
    if isinstance(result, dict):
        return result
    return result.to_json_dict()


def _accepted(result):
    return not isinstance(result, (Refusal, dict))


def cmd_analyze(args):
    seq = load_matrix_sequence(args.system)
    horizon = int(args.horizon) if args.horizon else 40
    tol = args.tol if args.tol else 1e-8

    s_hat = estimate_stable(seq, 0, horizon)
    u_hat = estimate_unstable(seq, 0, horizon)
    unique, witness = backward_uniqueness_test(seq, horizon)

    line = _fit_side(seq, -horizon, horizon, horizon, "line")
    plus = _fit_side(seq, 0, horizon, horizon, "plus")
    minus = _fit_side(seq, -horizon, 0, horizon, "minus")
    if _accepted(plus) and _accepted(minus):
        tri = assemble_trichotomy(plus, minus, tol=tol)
    else:
        tri = {"type": "error",
               "detail": "needs accepted certificates on both half-lines"}

    regimes = []
    if _accepted(tri):
        regimes.append("trichotomy")
    if _accepted(line):
        regimes.append("line_dichotomy")
    report = {
        "dim": seq.dim,
        "horizon": horizon,
        "estimated": {
            "stable_dim": s_hat.rank,
            "unstable_dim": u_hat.rank,
            "warnings": list(s_hat.warnings) + list(u_hat.warnings),
        },
        "backward_uniqueness": {
            "unique": bool(unique),
            "witness": None if witness is None else {
                "start": witness.start,
                "values": witness.values,
                "residual_max": witness.residual_max(seq),
                "sup_norm": witness.sup_norm,
            },
        },
        "certificates": {
            "line": _entry(line),
            "plus": _entry(plus),
            "minus": _entry(minus),
            "trichotomy": _entry(tri),
        },
        "regime": regimes if regimes else "neither",
    }
    _emit(args.out, report)
    return EXIT_OK if regimes else EXIT_REFUSAL


def cmd_shadow(args):
    seq = load_matrix_sequence(args.system)
    start, values = load_trajectory(args.pseudo)
    pseudo = pseudo_orbit(seq, start, values)

    if args.gamma:
        if not matches_collapsing_scalar(seq):
            raise InputError(
                "--gamma applies only to the collapsing scalar system "
                "(x_{n+1} = 2 x_n for n <= -2, then 0)"
            )
        res = shadow_via_gamma(pseudo)
        cert_entry = {"type": "closed_form_gamma"}
    else:
        pad = int(args.pad) if args.pad else 40
        horizon = int(args.horizon) if args.horizon else 40
        tail_tol = args.tol if args.tol else 1e-12
        a, b = pseudo.start, pseudo.stop
        line = _fit_side(seq, a - pad, b + pad, horizon, "line")
        cert = line if _accepted(line) else None
        attempts = {"line": _entry(line)}
        if cert is None and a <= -1 and b >= 0:
            plus = _fit_side(seq, 0, b + pad, horizon, "plus")
            minus = _fit_side(seq, a - pad, 0, horizon, "minus")
            attempts["plus"], attempts["minus"] = _entry(plus), _entry(minus)
            if _accepted(plus) and _accepted(minus):
                tri = assemble_trichotomy(plus, minus)
                attempts["trichotomy"] = _entry(tri)
                if _accepted(tri):
                    cert = tri
        if cert is None:
            _emit(args.out, {"refused": True, "attempts": attempts,
                             "delta": pseudo.delta})
            return EXIT_REFUSAL
        res = shadow(pseudo, cert, tail_tol=tail_tol)
        cert_entry = cert.to_json_dict()

    payload = {
        "start": res.start,
        "solution": res.solution,
        "sup_error": res.sup_error,
        "bound": res.bound,
        "L": res.gain,
        "unique": res.unique,
        "residual_max": res.residual_max,
        "delta": pseudo.delta,
        "certificate": cert_entry,
    }
    _emit(args.out, payload)
    return EXIT_OK if res.sup_error <= res.bound else EXIT_PROPERTY


def cmd_shadow_c(args):
    step = args.step if args.step else 1e-3
    horizon = args.horizon if args.horizon else 40.0
    family = EvolutionFamily(load_coefficient_path(args.system), step=step,
                             horizon=horizon)
    approx = load_approximate_solution(args.trajectory)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)

    est_horizon = min(10.0, horizon / 2.0)
    sub = estimate_stable_c(family, 0.0, est_horizon)
    p0 = sub.basis @ sub.basis.T
    path = ProjectionPath(side="line", kind="anchored", mat=p0, anchor=0.0)
    za, zb = approx.span
    grid = np.linspace(min(za, -1.0), max(zb, 1.0), 7)
    cert = verify_summable(family, path, grid, rng=rng)
    if isinstance(cert, Refusal):
        _emit(args.out, {"refused": True, "refusal": cert.to_json_dict(),
                         "estimated_stable_dim": sub.rank})
        return EXIT_REFUSAL

    res = shadow_c(family, approx, cert)
    payload = {
        "t0": res.times[0],
        "t1": res.times[-1],
        "times": res.times,
        "solution": res.solution,
        "sup_error": res.sup_error,
        "bound": res.bound,
        "L": res.gain,
        "N": res.N,
        "K": res.K,
        "residual_max": res.residual_max,
        "delta": res.info["delta"],
        "certificate": cert.to_json_dict(),
    }
    _emit(args.out, payload)
    return EXIT_OK if res.sup_error <= res.bound else EXIT_PROPERTY


def cmd_verify(args):
    try:
        with open(args.certificate) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read certificate: {exc}") from exc

    kind = data.get("type", "")
    if kind.startswith("summable"):
        if not args.system:
            raise InputError("summable certificates need the system file "
                             "to re-measure the integrals")
        family = EvolutionFamily(
            load_coefficient_path(args.system),
            step=args.step if args.step else 1e-3,
            horizon=args.horizon if args.horizon else 40.0,
        )
        cert = summable_certificate_from_dict(data)
        checks = check_summable_certificate(family, cert,
                                            slack=args.tol if args.tol else 1e-2)
    else:
        seq = load_matrix_sequence(args.system) if args.system else None
        checks = check_certificate_dict(data, seq)

    failures = [name for name, ok, _ in checks if not ok]
    _emit(args.out, {
        "certificate_type": kind,
        "checks": [{"name": n, "ok": ok, "detail": d} for n, ok, d in checks],
        "all_ok": not failures,
    })
    if failures:
        print(f"failed: {failures[0]}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_selftest(args):
    seed = args.seed if args.seed is not None else 0
    report, first_failure = selftest_mod.run_all(seed)
    if args.certificate:
        try:
            with open(args.certificate) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read certificate: {exc}") from exc
        if data.get("type", "").startswith("summable"):
            raise InputError("selftest certificate injection supports "
                             "discrete certificates only")
        for name, ok, detail in check_certificate_dict(data):
            entry = {"name": f"cert:{name}", "ok": bool(ok), "detail": detail}
            report["results"].append(entry)
            if ok:
                report["passed"] += 1
            else:
                report["failed"] += 1
                if first_failure is None:
                    first_failure = entry["name"]
    _emit(args.out, report)
    if first_failure is not None:
        print(f"failed: {first_failure}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_gamma(args):
    start, w = load_trajectory(args.forcing)
    if w.shape[1] != 1:
        raise InputError("the closed-form operator is scalar; "
                         f"got dimension {w.shape[1]}")
    pad = int(args.pad) if args.pad else 10
    sol = gamma_operator(start, w, range_start=start - pad,
                         range_stop=start + len(w) + pad)
    resid = solution_residual(collapsing_scalar_system(), sol.start,
                              sol.values, w_start=start, w=w)
    payload = {
        "start": sol.start,
        "values": sol.values,
        "sup_norm": sol.sup_norm,
        "forcing_sup": float(np.max(np.abs(w))) if len(w) else 0.0,
        "residual_max": resid,
    }
    _emit(args.out, payload)
    return EXIT_OK if resid <= 1e-12 else EXIT_PROPERTY


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="linshadow",
                     description="dichotomy/trichotomy certificates and "
                                 "shadowing for nonautonomous linear systems")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--horizon", type=float, default=None,
                       help="estimation window / flow horizon")
        p.add_argument("--tol", type=float, default=None,
                       help="tolerance (compat for analyze, tail for shadow, "
                            "slack for verify)")
        p.add_argument("--pad", type=float, default=None,
                       help="extra indices beyond the requested range")
        p.add_argument("--step", type=float, default=None,
                       help="integrator step for continuous systems")
        p.add_argument("--seed", type=int, default=None, help="rng seed")
        p.add_argument("--out", default=None, help="write the JSON report here")

    p = sub.add_parser("analyze", help="estimate splittings, fit certificates")
    p.add_argument("system", help="matrix-sequence JSON file")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("shadow", help="exact solution near a pseudo-orbit")
    p.add_argument("system", help="matrix-sequence JSON file")
    p.add_argument("pseudo", help="pseudo-orbit CSV (rows: n, y1..yd)")
    p.add_argument("--gamma", action="store_true",
                   help="use the collapsing-scalar closed form")
    common(p)
    p.set_defaults(func=cmd_shadow)

    p = sub.add_parser("shadow-c", help="exact ODE solution near a trajectory")
    p.add_argument("system", help="coefficient-path JSON file")
    p.add_argument("trajectory", help="sampled trajectory CSV (t, y.., dy..)")
    common(p)
    p.set_defaults(func=cmd_shadow_c)

    p = sub.add_parser("verify", help="re-check a stored certificate")
    p.add_argument("certificate", help="certificate JSON file")
    p.add_argument("system", nargs="?", default=None,
                   help="system file to re-measure against")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("selftest", help="run the property suite")
    p.add_argument("certificate", nargs="?", default=None,
                   help="also check this certificate file (negative control)")
    common(p)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("gamma", help="apply the collapsing-scalar inverse")
    p.add_argument("forcing", help="forcing CSV (rows: n, w)")
    common(p)
    p.set_defaults(func=cmd_gamma)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (InputError, DomainError, RangeError, OSError,
            json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
