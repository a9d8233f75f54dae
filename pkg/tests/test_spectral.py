"""Subspace estimation, projection families, dichotomy/trichotomy fits."""

import copy
import math

import numpy as np
import pytest

from linshadow import systems
from linshadow.errors import InputError
from linshadow.spectral import (
    DichotomyCertificate,
    ProjectionFamily,
    Refusal,
    Subspace,
    assemble_trichotomy,
    backward_uniqueness_test,
    build_projection_family,
    carry_stable_forward,
    certificate_from_dict,
    check_certificate_dict,
    estimate_stable,
    estimate_unstable,
    fit_dichotomy_constants,
    principal_angles,
    subspace_gap,
)
from linshadow.cocycle import spectral_norm


def test_subspace_validation():
    s = Subspace(np.eye(3)[:, :2])
    assert s.rank == 2 and s.ambient_dim == 3
    p = s.orthogonal_projector()
    assert np.allclose(p @ p, p, atol=1e-14)
    with pytest.raises(InputError):
        Subspace(np.array([[1.0, 1.0], [0.0, 1.0]]))  # not orthonormal


def test_principal_angles_and_gap():
    e1 = np.array([[1.0], [0.0]])
    e2 = np.array([[0.0], [1.0]])
    assert abs(subspace_gap(e1, e2) - math.pi / 2) <= 1e-12
    assert subspace_gap(e1, e1) <= 1e-8
    assert principal_angles(np.zeros((2, 0)), e1).size == 0
    assert subspace_gap(np.zeros((2, 0)), e1) == 0.0


def test_estimate_stable_matches_construction(rng):
    # horizon 15 keeps the cocycle norm ~5^15 well inside what the SVD can
    # resolve against the split at 1; much longer and eps * 5^h drowns the
    # contracted directions
    for seed in range(4):
        r = np.random.default_rng(seed)
        seq, fam = systems.random_dichotomic_system(4, 2, -40, 40, r)
        sub = estimate_stable(seq, 0, 15)
        assert sub.rank == 2
        err = spectral_norm(sub.orthogonal_projector() - fam.at(0))
        assert err <= 1e-9, f"seed {seed}: stable space off by {err:.2e}"


def test_estimate_unstable_matches_construction(rng):
    seq, fam = systems.random_dichotomic_system(3, 1, -40, 40, rng)
    sub = estimate_unstable(seq, 0, 15)
    assert sub.rank == 2
    err = spectral_norm(sub.orthogonal_projector() - (np.eye(3) - fam.at(0)))
    assert err <= 1e-9


def test_estimate_unstable_drops_kernel_directions():
    # expanding scalar that dies at -1: nothing survives with a bounded
    # backward branch through the zero step
    seq = systems.collapsing_scalar_system()
    sub = estimate_unstable(seq, 0, 10)
    assert sub.rank == 0
    # but on the far left half-line the expansion is honest
    sub = estimate_unstable(seq, -20, 10)
    assert sub.rank == 1


def test_estimate_stable_warns_near_split():
    seq = systems.constant_diag_system(1.0, 1.0)  # neutral: s = 1 everywhere
    sub = estimate_stable(seq, 0, 5)
    assert sub.warnings, "split sitting on a singular value should warn"


def test_carry_stable_forward_picks_up_kernels():
    seq = systems.collapsing_scalar_system()
    start = estimate_stable(seq, -10, 5)
    assert start.rank == 0  # pure expansion on the left tail
    carried = carry_stable_forward(seq, -10, start, 3)
    assert carried[-2].rank == 0
    assert carried[-1].rank == 1  # ker A_{-1} joins the bundle
    assert carried[0].rank == 1
    assert carried[3].rank == 1


def test_backward_uniqueness(rng):
    seq, _ = systems.random_dichotomic_system(2, 1, -30, 30, rng)
    ok, wit = backward_uniqueness_test(seq, 10)
    assert ok and wit is None

    seq = systems.collapsing_scalar_system()
    ok, wit = backward_uniqueness_test(seq, 10)
    assert not ok
    assert abs(wit.sup_norm - 1.0) <= 1e-12
    assert np.linalg.norm(wit.values[-1]) <= 1e-12  # hits zero at time 0
    assert wit.residual_max(seq) <= 1e-12  # and really is an orbit


def test_build_family_from_estimates(rng):
    seq, truth = systems.random_dichotomic_system(3, 2, -20, 20, rng)
    stables = {n: estimate_stable(seq, n, 15) for n in range(-5, 6)}
    unstables = {n: estimate_unstable(seq, n, 15) for n in range(-5, 6)}
    fam = build_projection_family(seq, stables, unstable=unstables)
    report = fam.validate(seq)
    assert report["projection_residual_ok"]
    assert report["invariance_residual_ok"]
    assert report["rank_constant"]
    for n in range(-5, 6):
        assert spectral_norm(fam.at(n) - truth.at(n)) <= 1e-9


def test_build_family_input_checks(rng):
    seq, _ = systems.random_dichotomic_system(2, 1, -5, 5, rng)
    sub = estimate_stable(seq, 0, 4)
    with pytest.raises(InputError):
        build_projection_family(seq, {0: sub}, rule="within_unstable")
    with pytest.raises(InputError):
        build_projection_family(seq, [sub], rule="orthogonal")  # no start
    with pytest.raises(InputError):
        build_projection_family(seq, {0: sub, 2: sub}, rule="orthogonal")


def test_fit_dichotomy_certificate(rng):
    for seed in (0, 3, 11):
        r = np.random.default_rng(seed)
        seq, fam = systems.random_dichotomic_system(3, 1, -25, 25, r)
        cert = fit_dichotomy_constants(seq, fam)
        assert isinstance(cert, DichotomyCertificate), f"seed {seed}"
        assert cert.rate > 0.5
        assert cert.prefactor >= 1.0
        # the fitted envelope dominates every measured norm on the window
        for k in range(len(cert.forward_norms)):
            cap = cert.bound_at(k) * (1.0 + 1e-9)
            assert cert.forward_norms[k] <= cap
            assert cert.backward_norms[k] <= cap
        ok, why = cert.check(seq)
        assert ok, why
        gain = 2.0 * cert.prefactor / (1.0 - math.exp(-cert.rate))
        assert abs(cert.shadowing_gain - gain) <= 1e-12


def test_fit_refuses_without_decay():
    seq = systems.constant_system(np.eye(2))
    fam = ProjectionFamily(side="line", start=-5,
                           mats=np.tile(np.eye(2), (11, 1, 1)))
    out = fit_dichotomy_constants(seq, fam)
    assert isinstance(out, Refusal)
    assert out.reason == "no_decay"
    assert out.witness["norm"] >= 1.0


def test_fit_refuses_singular_kernel_bundle():
    seq = systems.collapsing_scalar_system()
    fam = ProjectionFamily(side="line", start=-5,
                           mats=np.zeros((11, 1, 1)))  # claims all unstable
    out = fit_dichotomy_constants(seq, fam)
    assert isinstance(out, Refusal)
    assert out.reason == "noninvertible_kernel"


def test_fit_rejects_non_invariant_family(rng):
    seq, fam = systems.random_dichotomic_system(2, 1, -10, 10, rng)
    mats = fam.mats.copy()
    mats[10] = np.eye(2) - mats[10]  # flip one projection
    bad = ProjectionFamily(side="line", start=fam.start, mats=mats)
    with pytest.raises(InputError):
        fit_dichotomy_constants(seq, bad)


def test_pad_for_matches_envelope(rng):
    seq, fam = systems.random_dichotomic_system(2, 1, -20, 20, rng)
    cert = fit_dichotomy_constants(seq, fam)
    pad = cert.pad_for(1e-12)
    assert cert.bound_at(pad) <= 1e-12
    assert cert.bound_at(pad - 2) > 1e-12 * math.exp(-cert.rate)
    assert cert.pad_for(1e-6) <= pad


def test_assemble_trichotomy_switching_scalar():
    seq = systems.switching_scalar_system(0.25, 3.0)
    plus = fit_dichotomy_constants(
        seq, ProjectionFamily("plus", 0, np.ones((41, 1, 1))))
    minus = fit_dichotomy_constants(
        seq, ProjectionFamily("minus", -40, np.zeros((41, 1, 1))))
    assert isinstance(plus, DichotomyCertificate)
    assert isinstance(minus, DichotomyCertificate)
    tri = assemble_trichotomy(plus, minus)
    assert tri.compat_residual <= 1e-12
    assert not tri.degenerate_center
    assert abs(tri.center_projector()[0, 0] - 1.0) <= 1e-12
    assert tri.half_line_gain >= max(plus.shadowing_gain, minus.shadowing_gain) - 1e-12


def test_assemble_refuses_non_nested_projections():
    plus = DichotomyCertificate(
        family=ProjectionFamily("plus", 0, np.diag([1.0, 0.0])[None]),
        prefactor=1.0, rate=1.0)
    minus = DichotomyCertificate(
        family=ProjectionFamily("minus", 0, np.diag([0.0, 1.0])[None]),
        prefactor=1.0, rate=1.0)
    out = assemble_trichotomy(plus, minus)
    assert isinstance(out, Refusal)
    assert out.reason == "compat_residual"
    assert abs(out.witness["residual"] - 1.0) <= 1e-12


def test_certificate_json_roundtrip(rng):
    seq, fam = systems.random_dichotomic_system(2, 1, -15, 15, rng)
    cert = fit_dichotomy_constants(seq, fam)
    data = cert.to_json_dict()
    back = certificate_from_dict(data)
    assert back.prefactor == cert.prefactor and back.rate == cert.rate
    assert np.allclose(back.family.mats, cert.family.mats, atol=0)
    checks = check_certificate_dict(data, seq)
    assert all(ok for _name, ok, _detail in checks), checks

    corrupted = copy.deepcopy(data)
    corrupted["projections"][0] = [0.5, 0.0, 0.0, 0.5]
    checks = check_certificate_dict(corrupted, seq)
    assert any(not ok for _name, ok, _detail in checks)

    refusal = Refusal(reason="no_decay", detail="x")
    back = certificate_from_dict(refusal.to_json_dict())
    assert isinstance(back, Refusal) and back.reason == "no_decay"

    with pytest.raises(InputError):
        certificate_from_dict({"type": "banana"})
