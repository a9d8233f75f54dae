"""Continuous Green solves, shadowing of approximate ODE solutions,
bounded-solution splitting of initial vectors."""

import math

import numpy as np
import pytest

from linshadow import systems
from linshadow.errors import InputError
from linshadow.evolution import ApproximateSolution, CoefficientPath, EvolutionFamily
from linshadow.shadowing_ode import (
    default_bump,
    fd_residual,
    green_solve_c,
    shadow_c,
    splitting_witness,
)
from linshadow.summable import (
    ProjectionPath,
    SummableCertificate,
    verify_summable,
)


def _hyperbolic_cert():
    fam, path, exact = systems.hyperbolic_constant_fixture(-1.0, 1.0)
    cert = verify_summable(fam, path, [0.0], horizon=30.0)
    assert isinstance(cert, SummableCertificate)
    return fam, cert, exact


def test_green_solve_c_closed_form_indicator():
    fam, cert, _exact = _hyperbolic_cert()

    def z(t):
        return np.array([1.0, 0.0])

    sol = green_solve_c(fam, cert, z, support=(0.0, 4.0))
    ts = sol.times
    # stable scalar driven by 1 on [0, 4]: e^{-t}(e^{min(t,4)} - 1) for t >= 0
    want = np.where(ts >= 0.0,
                    np.exp(-ts) * (np.exp(np.minimum(ts, 4.0)) - 1.0), 0.0)
    err = np.max(np.abs(sol.values[:, 0] - want))
    assert err <= 1e-9, f"closed form off by {err:.2e}"
    assert np.max(np.abs(sol.values[:, 1])) <= 1e-12  # unforced direction
    assert sol.sup_norm <= sol.gain * 1.0 + 1e-9


def test_green_solve_c_coefficient_jump_at_seam():
    # the coefficients themselves switch at the gluing time; each side's
    # sweep has to read its own one-sided limit of A(0)
    path = CoefficientPath.piecewise(
        [0.0], [np.diag([-1.0, 1.0]), np.diag([-1.0, 2.0])])
    fam = EvolutionFamily(path)
    ppath = ProjectionPath(side="line", kind="constant",
                           mat=np.diag([1.0, 0.0]))
    cert = verify_summable(fam, ppath, [-2.0, 0.0, 2.0], horizon=30.0)
    assert isinstance(cert, SummableCertificate)

    sol = green_solve_c(fam, cert, lambda t: np.array([1.0, 1.0]),
                        support=(-2.0, 2.0))
    ts = sol.times
    x1 = 1.0 - np.exp(-(ts + 2.0))  # stable slot, constant rate -1
    c = (1.0 - math.exp(-4.0)) / 2.0
    x2 = np.where(ts >= 0.0,
                  -(1.0 - np.exp(2.0 * (ts - 2.0))) / 2.0,
                  -(1.0 - np.exp(ts)) - np.exp(ts) * c)
    exact = np.column_stack([x1, x2])
    err = np.max(np.abs(sol.values - exact))
    assert err <= 1e-8, f"piecewise closed form off by {err:.2e}"
    assert sol.info["residual_max"] <= 1e-6


def test_green_solve_c_smooth_forcing_residual():
    fam, cert, _exact = _hyperbolic_cert()

    def z(t):
        return np.array([math.sin(t), math.cos(t)]) * math.exp(-t * t / 4.0)

    sol = green_solve_c(fam, cert, z, support=(-6.0, 6.0))
    assert sol.info["residual_max"] <= 1e-7
    assert sol.sup_norm <= sol.gain * 1.0 + 1e-9


def test_green_solve_c_sampled_matches_callable():
    fam, cert, _exact = _hyperbolic_cert()

    def z(t):
        return np.array([math.tanh(t), 1.0 / (1.0 + t * t)])

    ts = np.linspace(-4.0, 4.0, 801)
    sampled = (ts, np.array([z(t) for t in ts]))
    a = green_solve_c(fam, cert, z, support=(-4.0, 4.0))
    b = green_solve_c(fam, cert, sampled)
    assert np.array_equal(a.times, b.times)
    gap = np.max(np.abs(a.values - b.values))
    assert gap <= 1e-4, f"sampled forcing drifted {gap:.2e} from callable"


def test_green_solve_c_input_guards():
    fam, cert, _exact = _hyperbolic_cert()
    with pytest.raises(InputError):
        green_solve_c(fam, cert, lambda t: np.zeros(2))  # support missing
    with pytest.raises(InputError):
        green_solve_c(fam, cert, lambda t: np.zeros(2), support=(1.0, 2.0),
                      out_lo=1.0, out_hi=2.0)  # window missing time 0
    half = SummableCertificate(
        path=ProjectionPath(side="plus", kind="constant", mat=np.diag([1.0, 0.0])),
        K=1.0, horizon=10.0, quad_step=1e-2)
    with pytest.raises(InputError):
        green_solve_c(fam, half, lambda t: np.zeros(2), support=(0.0, 1.0))
    sol = green_solve_c(fam, cert, lambda t: np.ones(2), support=(0.0, 1.0))
    with pytest.raises(InputError):
        sol.at_time(0.005)  # between grid nodes


def test_shadow_c_exact_input_needs_no_correction():
    fam, cert, _exact = _hyperbolic_cert()
    ts = np.linspace(-3.0, 3.0, 121)
    approx = ApproximateSolution(
        times=ts,
        values=[[math.exp(-t), 0.0] for t in ts],
        value_fn=lambda t: [math.exp(-t), 0.0],
        deriv_fn=lambda t: [-math.exp(-t), 0.0],
    )
    out = shadow_c(fam, approx, cert)
    assert out.info["delta"] <= 1e-13
    assert out.sup_error <= 1e-10
    assert out.residual_max <= 1e-6
    # the shadow is the input itself up to rounding
    gap = np.max(np.abs(out.solution - approx.value_at(out.times)))
    assert gap <= 1e-10


def test_shadow_c_perturbed_callable():
    fam, cert, _exact = _hyperbolic_cert()
    eps = 1e-2
    ts = np.linspace(-3.0, 3.0, 121)

    def y(t):
        return [math.exp(-t) + eps * math.sin(t), eps * math.cos(2 * t)]

    def dy(t):
        return [-math.exp(-t) + eps * math.cos(t), -2 * eps * math.sin(2 * t)]

    approx = ApproximateSolution(times=ts, values=[y(t) for t in ts],
                                 value_fn=y, deriv_fn=dy)
    out = shadow_c(fam, approx, cert)
    assert out.info["delta"] > eps / 2  # genuinely defective input
    assert out.sup_error <= out.bound * (1.0 + 1e-6)
    assert out.bound == out.gain * out.info["delta"]
    assert out.gain == 2.0 * out.N * out.K
    assert out.residual_max <= 1e-6, \
        f"shadow is not an actual solution (residual {out.residual_max:.2e})"


def test_shadow_c_sampled_input():
    fam, cert, _exact = _hyperbolic_cert()
    ts = np.arange(-3.0, 3.0 + 1e-12, 0.05)
    vals = np.array([[math.exp(-t) + 1e-2 * math.sin(t), 0.0] for t in ts])
    approx = ApproximateSolution(times=ts, values=vals)  # centered derivs
    out = shadow_c(fam, approx, cert)
    assert out.info["derivative_source"] == "centered"
    assert out.sup_error <= out.bound * (1.0 + 1e-6)
    # residual measures the correction against its own driving forcing, so
    # the caller's interpolation error mostly stays out; the floor left is
    # the one-sided derivative fill at the grid edge kinking the first
    # forcing segment, an order below the defect itself
    assert out.residual_max <= out.info["delta"] * 0.1
    assert out.residual_max <= 2e-3


def test_splitting_witness_recovers_the_splitting():
    fam, cert, _exact = _hyperbolic_cert()
    v = np.array([1.0, 1.0])
    w = splitting_witness(fam, cert, v)
    assert w.ok
    assert np.allclose(w.stable_part + w.unstable_part, v, atol=1e-12)
    # for the constant diagonal system the split is the coordinate one
    assert np.max(np.abs(w.stable_part - [1.0, 0.0])) <= 1e-6
    assert np.max(np.abs(w.unstable_part - [0.0, 1.0])) <= 1e-6
    assert w.forward_margin <= 1.0 + 1e-3
    assert w.backward_margin <= 1.0 + 1e-3

    zero = splitting_witness(fam, cert, np.zeros(2))
    assert zero.ok and np.all(zero.stable_part == 0.0)

    with pytest.raises(InputError):
        splitting_witness(fam, cert, np.ones(3))


def test_default_bump_properties():
    ts = np.linspace(-0.5, 1.5, 4001)
    vals = default_bump(ts)
    assert np.all(vals >= 0.0)
    assert vals[0] == 0.0 and vals[-1] == 0.0
    mass = np.trapezoid(vals, ts) if hasattr(np, "trapezoid") else np.trapz(vals, ts)
    assert abs(mass - 1.0) <= 1e-6


def test_fd_residual_seam_split_matters():
    # x = e^{-|t|} solves x' = sign(-t) x; collocation must not straddle 0
    path = CoefficientPath.piecewise([0.0], [[[1.0]], [[-1.0]]])
    fam = EvolutionFamily(path)
    ts = np.linspace(-1.0, 1.0, 201)
    xs = np.exp(-np.abs(ts)).reshape(-1, 1)
    split = fd_residual(fam, ts, xs, split_at=0.0)
    assert split <= 1e-6
    naive = fd_residual(fam, ts, xs, split_at=99.0)  # no segment boundary
    assert naive > 1e-2, "the kink at 0 should dominate unsplit stencils"
