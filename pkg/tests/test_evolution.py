"""Coefficient paths, RK4 evolution families, candidate trajectories."""

import math

import numpy as np
import pytest
import scipy.linalg

from linshadow import systems
from linshadow.errors import InputError, RangeError
from linshadow.evolution import (
    ApproximateSolution,
    CoefficientPath,
    EvolutionFamily,
    coefficient_path_from_dict,
    defect_c,
    load_approximate_solution,
    load_coefficient_path,
    save_approximate_solution,
    save_coefficient_path,
)


def test_coefficient_path_kinds(rng):
    m = rng.standard_normal((2, 2))
    const = CoefficientPath.constant(m)
    assert np.array_equal(const.at(3.7), m)

    m0, m1 = np.eye(2), 2 * np.eye(2)
    pw = CoefficientPath.piecewise([0.0], [m0, m1])
    assert np.array_equal(pw.at(-1.0), m0)
    assert np.array_equal(pw.at(0.5), m1)
    assert np.array_equal(pw.at(0.0), m1)  # right-continuous at the break

    times = np.array([0.0, 1.0, 2.0])
    mats = np.array([m0, m1, 3 * np.eye(2)])
    sm = CoefficientPath.sampled(times, mats)
    assert np.allclose(sm.at(0.5), 1.5 * np.eye(2), atol=1e-14)
    assert np.array_equal(sm.at(-5.0), m0)  # clamped outside the samples
    assert np.array_equal(sm.at(9.0), 3 * np.eye(2))

    ex = CoefficientPath.expressions([["cos(t)", "0"], ["t", "1"]])
    a = ex.at(0.3)
    assert abs(a[0, 0] - math.cos(0.3)) <= 1e-15
    assert a[1, 0] == 0.3 and a[1, 1] == 1.0

    fn = CoefficientPath.from_callable(1, lambda t: [[t * t]])
    assert fn.at(2.0)[0, 0] == 4.0

    with pytest.raises(InputError):
        CoefficientPath(2, "spline", matrix=m)
    with pytest.raises(InputError):
        CoefficientPath.piecewise([1.0, 0.0], [m0, m1, m0])
    with pytest.raises(InputError):
        CoefficientPath.sampled([0.0], [m0])


def test_coefficient_path_json_roundtrip(tmp_path, rng):
    ts = np.linspace(-2, 2, 17)
    paths = [
        CoefficientPath.constant(rng.standard_normal((2, 2))),
        CoefficientPath.piecewise([-1.0, 1.0], rng.standard_normal((3, 2, 2))),
        CoefficientPath.sampled([0.0, 1.0], rng.standard_normal((2, 2, 2))),
        CoefficientPath.expressions([["sin(t)", "1"], ["0", "exp(-t)"]]),
    ]
    for p in paths:
        back = coefficient_path_from_dict(p.to_json_dict())
        assert back.kind == p.kind
        assert np.allclose(back.sample(ts), p.sample(ts), atol=1e-15)
    f = tmp_path / "path.json"
    save_coefficient_path(f, paths[0])
    assert np.allclose(load_coefficient_path(f).sample(ts),
                       paths[0].sample(ts), atol=0)

    with pytest.raises(InputError):
        CoefficientPath.from_callable(1, lambda t: [[t]]).to_json_dict()
    with pytest.raises(InputError):
        coefficient_path_from_dict({"dim": 1, "kind": "nope"})
    with pytest.raises(InputError):
        coefficient_path_from_dict({"kind": "constant"})


def test_propagate_matches_matrix_exponential(rng):
    m = rng.standard_normal((3, 3)) * 0.8
    fam = EvolutionFamily(CoefficientPath.constant(m))
    for t, s in [(1.0, 0.0), (-2.0, 1.5), (0.25, -0.25)]:
        exact = scipy.linalg.expm(m * (t - s))
        err = np.max(np.abs(fam.propagate(t, s) - exact))
        assert err <= 1e-8, f"T({t},{s}) off by {err:.2e}"
    assert np.array_equal(fam.propagate(2.0, 2.0), np.eye(3))


def test_propagate_cocycle_property(rng):
    fam, _path, exact = systems.rotating_frame_fixture()
    lhs = fam.propagate(2.0, -1.0)
    rhs = fam.propagate(2.0, 0.5) @ fam.propagate(0.5, -1.0)
    assert np.max(np.abs(lhs - rhs)) <= 1e-8
    assert np.max(np.abs(lhs - exact(2.0, -1.0))) <= 1e-8


def test_propagate_guards():
    fam = EvolutionFamily(CoefficientPath.constant([[5.0]]), horizon=20.0,
                          guard=1e10)
    with pytest.raises(RangeError):
        fam.propagate(30.0, 0.0)  # beyond the horizon
    with pytest.raises(RangeError):
        fam.propagate(10.0, 0.0)  # e^50 trips the overflow guard
    with pytest.raises(InputError):
        EvolutionFamily(CoefficientPath.constant([[1.0]]), step=0.0)


def test_sweep_affine_variation_of_constants():
    a, g = -0.7, 1.3
    fam = EvolutionFamily(CoefficientPath.constant([[a]]))
    x0 = np.array([2.0])
    t = 3.0
    got = fam.sweep_affine(0.0, t, x0, lambda ts: np.full((len(ts), 1), g))
    exact = math.exp(a * t) * x0[0] + (math.exp(a * t) - 1.0) / a * g
    assert abs(got[0] - exact) <= 1e-9


def test_sweep_matrix_adjoint_is_inverse_transpose(rng):
    fam, _path, _exact = systems.rotating_frame_fixture()
    t, s = 1.5, -0.5
    fwd = fam.propagate(t, s)
    # Y' = -Y A propagates the functional frame: Y(t) = Y(s) T(s,t)
    adj = fam.sweep_matrix(s, t, np.eye(2), adjoint=True)
    assert np.max(np.abs(adj @ fwd - np.eye(2))) <= 1e-7


def test_approximate_solution_derivative_fill():
    ts = np.linspace(0, 1, 51)
    vals = np.column_stack([np.sin(ts), np.cos(ts)])
    approx = ApproximateSolution(times=ts, values=vals)
    assert approx.derivative_source == "centered"
    mid = np.column_stack([np.cos(ts), -np.sin(ts)])
    assert np.max(np.abs(approx.derivs - mid)) <= 1e-3  # second order in 0.02

    exact = ApproximateSolution(
        times=ts, values=vals,
        value_fn=lambda t: [math.sin(t), math.cos(t)],
        deriv_fn=lambda t: [math.cos(t), -math.sin(t)])
    assert exact.derivative_source == "analytic"
    assert np.max(np.abs(exact.derivs - mid)) <= 1e-15
    assert np.allclose(exact.value_at([0.123]), [math.sin(0.123), math.cos(0.123)])

    # interpolation fallback for gridded input
    lin = approx.value_at([0.01])
    assert abs(lin[0, 0] - np.interp(0.01, ts, vals[:, 0])) <= 1e-15

    assert approx.span == (0.0, 1.0) and approx.dim == 2


def test_approximate_solution_validation():
    with pytest.raises(InputError):
        ApproximateSolution(times=[0.0, 0.0], values=[[1.0], [2.0]])
    with pytest.raises(InputError):
        ApproximateSolution(times=[0.0], values=[[1.0]])
    with pytest.raises(InputError):
        ApproximateSolution(times=[0.0, 1.0], values=[[1.0]])
    with pytest.raises(InputError):
        ApproximateSolution(times=[0.0, 1.0], values=[[1.0], [2.0]],
                            value_fn=lambda t: [t])  # missing deriv_fn
    with pytest.raises(InputError):
        ApproximateSolution(times=[0.0, 1.0], values=[[1.0], [2.0]],
                            derivs=[[1.0, 2.0], [3.0, 4.0]])


def test_defect_c_flags_forced_trajectories():
    fam, _path, _exact = systems.hyperbolic_constant_fixture()
    ts = np.linspace(-1, 1, 41)

    def y(t):
        return [math.exp(-t), 0.0]

    def dy(t):
        return [-math.exp(-t), 0.0]

    exact = ApproximateSolution(times=ts, values=[y(t) for t in ts],
                                value_fn=y, deriv_fn=dy)
    _samples, delta = defect_c(fam, exact)
    assert delta <= 1e-14

    off = ApproximateSolution(times=ts, values=[y(t) for t in ts],
                              derivs=[[dy(t)[0] + 0.25, 0.0] for t in ts])
    samples, delta = defect_c(fam, off)
    assert abs(delta - 0.25) <= 1e-12
    assert np.allclose(samples[:, 0], 0.25, atol=1e-12)

    with pytest.raises(InputError):
        defect_c(fam, ApproximateSolution(times=[0.0, 1.0],
                                          values=[[1.0], [1.0]]))  # dim 1 != 2


def test_approximate_solution_csv_roundtrip(tmp_path, rng):
    ts = np.linspace(0, 2, 11)
    vals = rng.standard_normal((11, 2))
    derivs = rng.standard_normal((11, 2))
    approx = ApproximateSolution(times=ts, values=vals, derivs=derivs)
    f = tmp_path / "approx.csv"
    save_approximate_solution(f, approx)
    back = load_approximate_solution(f)
    assert np.array_equal(back.times, ts)
    assert np.array_equal(back.values, vals)
    assert np.array_equal(back.derivs, derivs)
    assert back.derivative_source == "supplied"

    # headerless, values only: odd data column count resolves the layout
    g = tmp_path / "plain.csv"
    g.write_text("0.0,1.0\n0.5,2.0\n1.0,3.0\n")
    back = load_approximate_solution(g)
    assert back.dim == 1 and back.derivative_source == "centered"

    # headerless with derivatives needs the dimension spelled out
    h = tmp_path / "ambiguous.csv"
    h.write_text("0.0,1.0,0.5\n1.0,2.0,0.5\n")
    with pytest.raises(InputError):
        load_approximate_solution(h)
    back = load_approximate_solution(h, dim=1)
    assert back.derivs[0, 0] == 0.5

    bad = tmp_path / "bad.csv"
    bad.write_text("t,y1\n0.0,1.0\n1.0\n")
    with pytest.raises(InputError):
        load_approximate_solution(bad)
    bad.write_text("t,y1\n0.0,one\n1.0,2.0\n")
    with pytest.raises(InputError):
        load_approximate_solution(bad)
