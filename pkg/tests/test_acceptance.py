"""Top-level acceptance checks, one per shipped guarantee.

Each test measures the advertised figure, prints a single
``criterion NN PASS/FAIL`` line with the measured values and their
tolerances (bypassing capture so the line always shows), and then
asserts.  These are deliberately end-to-end: they exercise the public
API the way the command line does, not internal helpers.
"""

import math

import numpy as np
import scipy.linalg

from linshadow.cocycle import pseudo_orbit
from linshadow.evolution import (
    ApproximateSolution,
    CoefficientPath,
    EvolutionFamily,
)
from linshadow.oracles import bvp_segment_solve, dense_line_solve
from linshadow.shadowing import (
    gamma_operator,
    green_solve_line,
    shadow,
    solution_residual,
)
from linshadow.shadowing_ode import green_solve_c, shadow_c, splitting_witness
from linshadow.spectral import (
    DichotomyCertificate,
    ProjectionFamily,
    Refusal,
    assemble_trichotomy,
    backward_uniqueness_test,
    build_projection_family,
    estimate_stable,
    estimate_unstable,
    fit_dichotomy_constants,
    principal_angles,
)
from linshadow.summable import (
    ProjectionPath,
    verify_exponential_c,
    verify_summable,
)
from linshadow.systems import (
    collapsing_scalar_system,
    constant_diag_system,
    hyperbolic_constant_fixture,
    random_dichotomic_system,
    rotating_frame_fixture,
    scalar_decay_fixture,
    switching_scalar_system,
)


def _emit(capsys, num, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {num:02d} {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, detail


def test_criterion_01_gamma_operator_fidelity(capsys):
    rng = np.random.default_rng(1)
    seq = collapsing_scalar_system()
    worst_gain, worst_resid = 0.0, 0.0
    for _ in range(1000):
        w = rng.uniform(-1.0, 1.0, size=(81, 1))
        w /= np.max(np.abs(w))
        sol = gamma_operator(-40, w, range_start=-40, range_stop=41)
        worst_gain = max(worst_gain, sol.sup_norm)
        worst_resid = max(
            worst_resid,
            solution_residual(seq, sol.start, sol.values, w_start=-40, w=w),
        )
    ones = gamma_operator(-40, np.ones((81, 1)), range_start=-40, range_stop=41)
    hand = (ones.at(0)[0] == 1.0
            and ones.at(-2)[0] == -0.5
            and ones.at(-4)[0] == -0.875)
    ok = worst_gain <= 1.0 and worst_resid <= 1e-14 and hand
    _emit(capsys, 1, ok,
          f"gamma operator on 1000 unit-sup forcings: gain <= 1 "
          f"(max {worst_gain:.6f}), recurrence residual <= 1e-14 on "
          f"[-40, 40] (max {worst_resid:.2e}), hand values 1, -1/2, -7/8 "
          f"exact ({hand})")


def test_criterion_02_discrete_shadowing_bound(capsys):
    rng = np.random.default_rng(2)
    seq = constant_diag_system(0.5, 2.0)
    fam = ProjectionFamily("line", -90,
                           np.tile(np.diag([1.0, 0.0]), (181, 1, 1)))
    cert = fit_dichotomy_constants(seq, fam)
    assert isinstance(cert, DichotomyCertificate)
    worst_ratio, worst_resid = 0.0, 0.0
    for delta in (1e-3, 1e-2, 1e-1):
        for _ in range(200):
            values = rng.uniform(-delta / 6, delta / 6, size=(101, 2))
            pseudo = pseudo_orbit(seq, -50, values, delta=delta)
            res = shadow(pseudo, cert)
            worst_ratio = max(worst_ratio, res.sup_error / delta)
            worst_resid = max(worst_resid, res.residual_max)
    ok = (worst_ratio <= 4.0 * (1 + 1e-6) and worst_resid <= 1e-10
          and abs(cert.shadowing_gain - 4.0) <= 1e-6)
    _emit(capsys, 2, ok,
          f"diag(1/2, 2) on [-50, 50], 200 pseudo-orbits per delta in "
          f"{{1e-3, 1e-2, 1e-1}}: sup_error/delta <= 4(1+1e-6) "
          f"(max {worst_ratio:.4f}, gain {cert.shadowing_gain:.6f}), "
          f"per-step residual <= 1e-10 (max {worst_resid:.2e})")


def test_criterion_03_green_solver_oracle_equivalence(capsys):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 5))
        sd = int(rng.integers(1, d))
        seq, fam = random_dichotomic_system(d, sd, -60, 60, rng)
        cert = fit_dichotomy_constants(seq, fam)
        assert isinstance(cert, DichotomyCertificate)
        w = rng.uniform(-1.0, 1.0, size=(61, d))
        sol = green_solve_line(seq, cert, -30, w)
        dense, _info = dense_line_solve(seq, fam, -30, w, -45, 45)
        for k, n in enumerate(range(-30, 31)):
            worst = max(worst,
                        float(np.max(np.abs(sol.at(n) - dense[n + 45]))))
    ok = worst <= 1e-8
    _emit(capsys, 3, ok,
          f"50 random dichotomic systems (d <= 4): green_solve_line vs the "
          f"dense block-bidiagonal solve agree on the 60-wide window "
          f"[-30, 30] to 1e-8 (max {worst:.2e})")


def test_criterion_04_subspace_estimation(capsys):
    seq = constant_diag_system(0.25, 0.5, 2.0, 4.0)
    s_hat = estimate_stable(seq, 0, 40)
    u_hat = estimate_unstable(seq, 0, 40)
    eye = np.eye(4)
    ang_s = float(np.max(principal_angles(s_hat, eye[:, :2])))
    ang_u = float(np.max(principal_angles(u_hat, eye[:, 2:])))

    unique, witness = backward_uniqueness_test(collapsing_scalar_system(), 40)
    wit_ok = (not unique and witness is not None
              and witness.sup_norm == 1.0
              and witness.residual_max(collapsing_scalar_system()) == 0.0)
    ok = ang_s <= 1e-8 and ang_u <= 1e-8 and wit_ok
    _emit(capsys, 4, ok,
          f"diag(1/4, 1/2, 2, 4) at horizon 40: principal angles to the "
          f"coordinate splitting <= 1e-8 (stable {ang_s:.2e}, unstable "
          f"{ang_u:.2e}); collapsing scalar: backward uniqueness fails with "
          f"witness sup-norm 1 and residual exactly 0 ({wit_ok})")


def test_criterion_05_trichotomy_without_uniqueness(capsys):
    rng = np.random.default_rng(5)
    seq = switching_scalar_system()

    # every reasonable whole-line candidate family is turned away
    all_stable = ProjectionFamily("line", -40, np.ones((81, 1, 1)))
    none_stable = ProjectionFamily("line", -40, np.zeros((81, 1, 1)))
    line_refused = (isinstance(fit_dichotomy_constants(seq, all_stable), Refusal)
                    and isinstance(fit_dichotomy_constants(seq, none_stable),
                                   Refusal))

    # rate ln 2 needs ~40 pad indices for a 1e-12 tail cut
    plus = fit_dichotomy_constants(
        seq, ProjectionFamily("plus", 0, np.ones((81, 1, 1))))
    minus = fit_dichotomy_constants(
        seq, ProjectionFamily("minus", -80, np.zeros((81, 1, 1))))
    tri = assemble_trichotomy(plus, minus)
    tri_ok = (not isinstance(tri, Refusal) and tri.compat_residual == 0.0
              and not tri.degenerate_center)

    delta = 1e-3
    values = rng.uniform(-delta / 4, delta / 4, size=(31, 1))
    pseudo = pseudo_orbit(seq, -15, values, delta=delta)
    res = shadow(pseudo, tri)
    ns = np.arange(-15, 16)
    hom = np.where(ns <= 0, 2.0 ** ns, 2.0 ** (-ns))[:, None]
    hom_exact = solution_residual(seq, -15, hom) == 0.0
    second = res.solution + delta * hom
    resid2 = solution_residual(seq, -15, second)
    diff_err = float(np.max(np.abs((second - res.solution) - delta * hom)))
    distinct = float(np.max(np.abs(second - res.solution))) > 0.0
    ok = (line_refused and tri_ok and not res.unique
          and res.residual_max <= 1e-10 and resid2 <= 1e-10
          and hom_exact and diff_err <= 1e-10 and distinct)
    _emit(capsys, 5, ok,
          f"switching scalar (2 then 1/2): whole-line fits refused "
          f"({line_refused}), trichotomy accepted with compat residual 0 "
          f"({tri_ok}); two distinct exact shadows of one pseudo-orbit "
          f"(residuals {res.residual_max:.2e}, {resid2:.2e} <= 1e-10) "
          f"differ by the bounded homogeneous solution to 1e-10 "
          f"(diff error {diff_err:.2e})")


def test_criterion_06_continuous_flow_accuracy(capsys):
    fam, _path, exact = hyperbolic_constant_fixture(step=1e-3)
    pairs = [(-10.0, 0.0), (0.0, -10.0), (10.0, 0.0), (0.0, 10.0),
             (7.5, -2.5), (-3.0, 4.5), (1.25, 0.0)]
    err_h = max(float(np.max(np.abs(fam.propagate(t, s) - exact(t, s))))
                for t, s in pairs)

    rfam, _rpath, rexact = rotating_frame_fixture(step=1e-3)
    rpairs = [(-4.0, 0.0), (0.0, -4.0), (5.0, 0.0), (2.0, -1.5), (0.0, 3.0)]
    err_r = max(float(np.max(np.abs(rfam.propagate(t, s) - rexact(t, s))))
                for t, s in rpairs)

    mat = np.array([[-1.0, 0.0], [0.0, 1.0]])
    want = scipy.linalg.expm(2.0 * mat)
    errs = []
    for h in (0.08, 0.04):
        f = EvolutionFamily(CoefficientPath.constant(mat), step=h, horizon=5.0)
        errs.append(float(np.max(np.abs(f.propagate(2.0, 0.0) - want))))
    ratio = errs[0] / errs[1]
    ok = err_h <= 1e-8 and err_r <= 1e-7 and ratio >= 8.0
    _emit(capsys, 6, ok,
          f"constant diag(-1, 1) propagator vs exp over |t-s| <= 10 at "
          f"h=1e-3: {err_h:.2e} <= 1e-8; rotating frame vs closed form: "
          f"{err_r:.2e} <= 1e-7; halving h=0.08 shrinks the error by "
          f"{ratio:.1f}x (>= 8, order 4)")


def test_criterion_07_summable_verification(capsys):
    rng = np.random.default_rng(7)
    fam, path, _ = hyperbolic_constant_fixture()
    cert = verify_summable(fam, path, [-2.0, -1.0, 0.0, 1.0, 2.0], rng=rng)
    k_err = abs(cert.K - 2.0)

    contained = True
    margins = []
    for f, p, _e in (hyperbolic_constant_fixture(), rotating_frame_fixture(),
                     scalar_decay_fixture()):
        grid = [-1.5, 0.0, 1.5]
        e = verify_exponential_c(f, p, grid)
        s = verify_summable(f, p, grid, rng=rng)
        good = (not isinstance(e, Refusal) and not isinstance(s, Refusal)
                and s.K <= e.summable_bound * (1 + 5e-2))
        contained = contained and good
        if not isinstance(s, Refusal) and not isinstance(e, Refusal):
            margins.append(s.K / e.summable_bound)

    neutral = EvolutionFamily(CoefficientPath.constant([[0.0]]), horizon=40.0)
    flat = ProjectionPath(side="line", kind="constant", mat=[[1.0]])
    ref = verify_summable(neutral, flat, [0.0], rng=rng)
    refused = (isinstance(ref, Refusal) and ref.reason == "no_decay"
               and "side" in ref.witness and "edge_value" in ref.witness)
    ok = k_err <= 2e-3 and contained and refused
    _emit(capsys, 7, ok,
          f"diag(-1, 1) with P = diag(1, 0): K = 2 +/- 2e-3 (off by "
          f"{k_err:.2e}); exponentially certified fixtures all land under "
          f"2D/rate * 1.05 (K ratios {['%.3f' % m for m in margins]}); "
          f"neutral path refused with a no-decay tail flag ({refused})")


def test_criterion_08_continuous_shadowing(capsys):
    rng = np.random.default_rng(8)
    fam = EvolutionFamily(CoefficientPath.constant([[-1.0]]), step=1e-3,
                          horizon=40.0)
    path = ProjectionPath(side="line", kind="constant", mat=[[1.0]])
    cert = verify_summable(fam, path, [-10.0, -5.0, 0.0, 5.0, 10.0], rng=rng)

    ts = np.linspace(-10.0, 10.0, 401)
    value_fn = lambda t: np.array([math.exp(-t) + 0.01 * math.sin(t)])
    deriv_fn = lambda t: np.array([-math.exp(-t) + 0.01 * math.cos(t)])
    approx = ApproximateSolution(ts, [value_fn(t) for t in ts],
                                 value_fn=value_fn, deriv_fn=deriv_fn)
    res = shadow_c(fam, approx, cert)
    bound_nominal = 2.0 * 0.01 * math.sqrt(2.0)
    scalar_ok = res.sup_error <= bound_nominal and res.sup_error <= res.bound

    sol = green_solve_c(fam, cert, lambda t: np.array([1.0]),
                        support=(0.0, 4.0))
    probe = np.linspace(0.0, 4.0, 161)
    closed = 1.0 - np.exp(-probe)
    err_x1 = max(abs(sol.at_time(t)[0] - c) for t, c in zip(probe, closed))

    hfam, hpath, _ = hyperbolic_constant_fixture()
    hcert = verify_summable(hfam, hpath, [-2.0, 0.0, 2.0], rng=rng)
    z = lambda t: math.exp(-t * t) * np.array([1.0, 1.0])
    g = green_solve_c(hfam, hcert, z, support=(-6.0, 6.0))
    bvp = bvp_segment_solve(lambda t: hfam.path.sample([t])[0],
                            lambda t: z(t) if abs(t) <= 6.0 else np.zeros(2),
                            np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]]),
                            -20.0, 20.0, nodes=801)
    err_bvp = float(np.max(np.abs(g.values - bvp.sol(g.times).T)))
    ok = scalar_ok and err_x1 <= 1e-4 and err_bvp <= 1e-3
    _emit(capsys, 8, ok,
          f"a = -1 with y = exp(-t) + 0.01 sin t: sup_error "
          f"{res.sup_error:.4f} <= 2NK * 0.01*sqrt(2) = {bound_nominal:.4f} "
          f"(N={res.N:.3f}, K={res.K:.3f}); step-forcing closed form "
          f"1 - exp(-t) matched to 1e-4 ({err_x1:.2e}); collocation oracle "
          f"agreement on diag(-1, 1) <= 1e-3 ({err_bvp:.2e})")


def test_criterion_09_splitting_witness(capsys):
    rng = np.random.default_rng(9)
    fam, path, _ = hyperbolic_constant_fixture()
    cert = verify_summable(fam, path, [-2.0, 0.0, 2.0], rng=rng)
    v = np.array([1.0, 1.0])
    wit = splitting_witness(fam, cert, v)
    err_s = float(np.max(np.abs(wit.stable_part - np.array([1.0, 0.0]))))
    err_u = float(np.max(np.abs(wit.unstable_part - np.array([0.0, 1.0]))))
    sum_err = float(np.max(np.abs(wit.stable_part + wit.unstable_part - v)))
    ok = (err_s <= 1e-6 and err_u <= 1e-6 and sum_err <= 1e-12 and wit.ok
          and wit.forward_margin <= 1 + 1e-3
          and wit.backward_margin <= 1 + 1e-3)
    _emit(capsys, 9, ok,
          f"diag(-1, 1), v = (1, 1): parts recover ((1,0), (0,1)) to 1e-6 "
          f"(errors {err_s:.2e}, {err_u:.2e}), sum identity to 1e-12 "
          f"({sum_err:.2e}); boundedness margins {wit.forward_margin:.5f}, "
          f"{wit.backward_margin:.5f} <= 1 + 1e-3")


def test_criterion_10_uniqueness_regimes(capsys):
    rng = np.random.default_rng(10)
    seq, fam = random_dichotomic_system(3, 2, -60, 60, rng)
    cert_a = fit_dichotomy_constants(seq, fam)
    stables = {n: estimate_stable(seq, n, 12) for n in range(-40, 41)}
    unstables = {n: estimate_unstable(seq, n, 12) for n in range(-40, 41)}
    fam_b = build_projection_family(seq, stables, side="line",
                                    rule="within_unstable",
                                    unstable=unstables)
    cert_b = fit_dichotomy_constants(seq, fam_b)
    assert isinstance(cert_b, DichotomyCertificate)
    delta = 1e-3
    values = rng.uniform(-delta / 6, delta / 6, size=(21, 3))
    pseudo = pseudo_orbit(seq, -10, values)
    res_a, res_b = shadow(pseudo, cert_a), shadow(pseudo, cert_b)
    diff_discrete = float(np.max(np.abs(res_a.solution - res_b.solution)))
    rerun = shadow(pseudo, cert_a)
    deterministic = np.array_equal(rerun.solution, res_a.solution)

    cpath = CoefficientPath.constant([[-1.0, 0.0], [0.0, 1.0]])
    ppath = ProjectionPath(side="line", kind="constant",
                           mat=np.diag([1.0, 0.0]))
    fam1 = EvolutionFamily(cpath, step=1e-3, horizon=40.0)
    fam2 = EvolutionFamily(cpath, step=2e-3, horizon=40.0)
    cert1 = verify_summable(fam1, ppath, [-2.0, 0.0, 2.0], rng=rng)
    cert2 = verify_summable(fam2, ppath, [-2.0, 0.0, 2.0], rng=rng)
    ts = np.linspace(-5.0, 5.0, 201)
    vfn = lambda t: np.array([math.exp(-t) + 0.005 * math.sin(t), 0.0])
    dfn = lambda t: np.array([-math.exp(-t) + 0.005 * math.cos(t), 0.0])
    approx = ApproximateSolution(ts, [vfn(t) for t in ts],
                                 value_fn=vfn, deriv_fn=dfn)
    r1, r2 = shadow_c(fam1, approx, cert1), shadow_c(fam2, approx, cert2)
    grids_match = np.array_equal(r1.times, r2.times)
    diff_continuous = float(np.max(np.abs(r1.solution - r2.solution)))

    zero_d = green_solve_line(seq, cert_a, -5, np.zeros((11, 3)))
    zero_c = green_solve_c(fam1, cert1, lambda t: np.zeros(2),
                           support=(-1.0, 1.0))
    only_zero = (np.all(zero_d.values == 0.0) and np.all(zero_c.values == 0.0))
    ok = (diff_discrete <= 1e-10 and deterministic and grids_match
          and diff_continuous <= 1e-10 and only_zero)
    _emit(capsys, 10, ok,
          f"shadows from independently fitted certificates coincide to "
          f"1e-10 (discrete {diff_discrete:.2e}); reruns bit-identical "
          f"({deterministic}); two-grid continuous shadows coincide to "
          f"1e-10 ({diff_continuous:.2e}); zero forcing returns exactly "
          f"zero ({only_zero})")
