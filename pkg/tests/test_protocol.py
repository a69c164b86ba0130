import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factories import random_observable, random_pointer, random_post, random_snr_config, random_state
from wvalab import fock
from wvalab import protocol as P
from wvalab.errors import (
    InvalidDimension,
    NonHermitianGenerator,
    OrthogonalSelection,
    UnachievableWeakValue,
    WeakCouplingViolation,
    ZeroProbability,
)

DIM = 128


@pytest.fixture(scope="module")
def qp():
    return fock.quadrature_ops(DIM)


def test_weak_value_examples():
    pre = P.plus_state()
    post = P.SystemState(np.array([1, 1j]) / np.sqrt(2))
    assert abs(P.weak_value(pre, post, P.sigma_z()) - 1j) < 1e-12
    ident = P.SystemObservable(np.eye(3))
    rng = np.random.default_rng(0)
    a, b = random_state(rng, 3), random_state(rng, 3)
    assert abs(P.weak_value(a, b, ident) - 1) < 1e-12
    z0 = P.basis_state(0)
    assert P.weak_value(z0, z0, P.sigma_z()) == pytest.approx(1)


def test_weak_value_orthogonal():
    with pytest.raises(OrthogonalSelection):
        P.weak_value(P.basis_state(0), P.basis_state(1), P.sigma_z())


def test_state_validation():
    with pytest.raises(InvalidDimension):
        P.SystemState(np.ones(17))
    with pytest.raises(ValueError):
        P.SystemState(np.zeros(2))
    with pytest.raises(NonHermitianGenerator):
        P.SystemObservable(np.array([[0, 1], [0, 0]]))
    s = P.SystemState(np.array([3.0, 4.0]))
    np.testing.assert_allclose(s.amplitudes, [0.6, 0.8])


def test_evolve_joint_trivial_cases(qp):
    q, _ = qp
    pointer = fock.squeezed_coherent_state(0.4j, 0.3, DIM)
    pre = P.plus_state()
    joint = P.evolve_joint(pre, pointer, 0.0, P.sigma_z(), q)
    np.testing.assert_allclose(joint.amplitudes, np.outer(pre.amplitudes, pointer.amplitudes), atol=1e-15)
    z0 = P.basis_state(0)
    joint = P.evolve_joint(z0, pointer, 0.2, P.sigma_z(), q)
    expect = fock.evolve_hermitian(pointer, q, 0.2).amplitudes
    np.testing.assert_allclose(joint.amplitudes[0], expect, atol=1e-14)
    assert not np.any(joint.amplitudes[1])


def test_unitarity_random(qp):
    q, _ = qp
    rng = np.random.default_rng(1)
    for _ in range(20):
        d = int(rng.integers(2, 6))
        joint = P.evolve_joint(random_state(rng, d), random_pointer(rng, DIM), rng.uniform(-1, 1), random_observable(rng, d), q)
        assert abs(joint.norm2 - 1.0) < 1e-10


def test_degenerate_eigenvalues_share_branch(qp):
    q, _ = qp
    A = P.SystemObservable(np.diag([1.0, 1.0, -2.0]))
    assert len(A.eigenspaces()) == 2
    pre = P.SystemState(np.array([1, 1j, 1]))
    pointer = fock.coherent_state(0.5, DIM)
    joint = P.evolve_joint(pre, pointer, 0.3, A, q)
    up = fock.evolve_hermitian(pointer, q, 0.3).amplitudes
    np.testing.assert_allclose(joint.amplitudes[1], 1j / np.sqrt(3) * up, atol=1e-14)


def test_postselect_g0(qp):
    q, _ = qp
    rng = np.random.default_rng(2)
    pre, post = random_state(rng, 3), random_state(rng, 3)
    pointer = random_pointer(rng, DIM)
    out = P.postselected_pointer(pre, post, pointer, 0.0, random_observable(rng, 3), q)
    assert out.prob == pytest.approx(abs(np.vdot(post.amplitudes, pre.amplitudes)) ** 2, rel=1e-12)
    assert abs(abs(out.pointer.overlap(pointer)) - 1) < 1e-12


def test_zero_probability(qp):
    q, _ = qp
    with pytest.raises(ZeroProbability):
        P.postselected_pointer(P.basis_state(0), P.basis_state(1), fock.vacuum(DIM), 0.0, P.sigma_z(), q)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), g=st.floats(-0.5, 0.5))
def test_completeness(seed, g):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 5))
    q, _ = fock.quadrature_ops(DIM)
    joint = P.evolve_joint(random_state(rng, d), random_pointer(rng, DIM), g, random_observable(rng, d), q)
    basis = P.completed_basis(random_state(rng, d))
    total = 0.0
    for b in basis:
        raw = b.amplitudes.conj() @ joint.amplitudes
        total += np.vdot(raw, raw).real
    assert abs(total - 1.0) < 1e-10


def test_completed_basis_orthonormal():
    rng = np.random.default_rng(3)
    post = random_state(rng, 4)
    basis = P.completed_basis(post)
    mat = np.column_stack([b.amplitudes for b in basis])
    np.testing.assert_allclose(mat.conj().T @ mat, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(basis[0].amplitudes, post.amplitudes)


def test_optimal_postselection_examples():
    pre, A = P.plus_state(), P.sigma_z()
    post = P.optimal_postselection(pre, A, 20j)
    assert abs(P.weak_value(pre, post, A) - 20j) < 1e-10
    assert abs(np.vdot(post.amplitudes, pre.amplitudes)) ** 2 == pytest.approx(1 / 401, rel=1e-12)
    assert P.max_ps_given_weak_value(pre, A, 20j) == pytest.approx(1 / 401, rel=1e-14)
    post = P.optimal_postselection(pre, A, 1j)
    assert abs(P.weak_value(pre, post, A) - 1j) < 1e-10
    # A_w = <A>: post = pre
    post = P.optimal_postselection(pre, A, 0.0)
    assert abs(abs(np.vdot(post.amplitudes, pre.amplitudes)) - 1) < 1e-12


def test_optimal_postselection_exact_probability(qp):
    q, _ = qp
    pre, A = P.plus_state(), P.sigma_z()
    post = P.optimal_postselection(pre, A, 20j)
    out = P.postselected_pointer(pre, post, fock.vacuum(DIM), 1e-5, A, q)
    assert out.prob == pytest.approx(1 / 401, abs=1e-5 * 20)


def test_eigenstate_preselection_reaches_only_mean():
    z0, A = P.basis_state(0), P.sigma_z()
    assert P.max_ps_given_weak_value(z0, A, 1.0) == 1.0
    assert P.max_ps_given_weak_value(z0, A, 3.0) == 0.0
    with pytest.raises(UnachievableWeakValue):
        P.optimal_postselection(z0, A, 3.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), re=st.floats(-30, 30), im=st.floats(-30, 30))
def test_weak_value_consistency(seed, re, im):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 5))
    pre, A = random_state(rng, d), random_observable(rng, d)
    if A.variance(pre) < 1e-3:
        return
    A_w = complex(re, im)
    post = P.optimal_postselection(pre, A, A_w)
    assert abs(P.weak_value(pre, post, A) - A_w) <= 1e-8 * max(1, abs(A_w))
    ps = abs(np.vdot(post.amplitudes, pre.amplitudes)) ** 2
    assert ps == pytest.approx(P.max_ps_given_weak_value(pre, A, A_w), rel=1e-8)


def test_max_ps_is_upper_bound():
    # no post reaching a given A_w beats the closed form
    rng = np.random.default_rng(4)
    pre, A = P.plus_state(), P.sigma_z()
    for _ in range(200):
        post = random_state(rng, 2)
        A_w = P.weak_value(pre, post, A)
        ps = abs(np.vdot(post.amplitudes, pre.amplitudes)) ** 2
        assert ps <= P.max_ps_given_weak_value(pre, A, A_w) * (1 + 1e-10)
    vec = P.max_ps_given_weak_value(pre, A, np.array([0, 1j, 20j]))
    np.testing.assert_allclose(vec, [1, 0.5, 1 / 401])


def test_reduced_pointer_purity(qp):
    q, _ = qp
    vac = fock.vacuum(DIM)
    rho = P.reduced_pointer_std(P.evolve_joint(P.plus_state(), vac, 0.0, P.sigma_z(), q))
    np.testing.assert_allclose(rho, np.outer(vac.amplitudes, vac.amplitudes.conj()), atol=1e-15)
    rho = P.reduced_pointer_std(P.evolve_joint(P.basis_state(1), vac, 0.4, P.sigma_z(), q))
    assert np.trace(rho @ rho).real == pytest.approx(1.0, abs=1e-12)
    rho = P.reduced_pointer_std(P.evolve_joint(P.plus_state(), vac, 1e-3, P.sigma_z(), q))
    assert np.trace(rho @ rho).real >= 1 - 1e-5


def test_first_order_shift_examples(qp):
    q, p = qp
    rng = np.random.default_rng(5)
    pointer = random_pointer(rng, DIM)
    assert P.first_order_shift_post(2.5, pointer, q, p, 1e-5) == pytest.approx(-2.5e-5, rel=1e-10)
    assert P.first_order_shift_post(0.0, pointer, q, p, 1e-5) == 0.0
    sq = fock.squeezed_coherent_state(1j, 0, 256)
    q2, p2 = fock.quadrature_ops(256)
    assert P.first_order_shift_post(20j, sq, q2, p2, 1e-5) == pytest.approx(1e-5 * 20 * -np.sinh(2), rel=1e-10)


def test_coupling_guard(qp):
    q, p = qp
    vac = fock.vacuum(DIM)
    with pytest.warns(UserWarning):
        P.first_order_shift_post(20j, vac, q, p, 0.01)
    with pytest.raises(WeakCouplingViolation):
        P.first_order_shift_post(20j, vac, q, p, 0.1)


def test_exact_shift_examples(qp):
    q, p = qp
    vac = fock.vacuum(DIM)
    assert P.exact_shift(vac, p, vac) == 0.0
    joint = P.evolve_joint(P.basis_state(0), vac, 0.3, P.sigma_z(), q)
    assert P.exact_shift(P.reduced_pointer_std(joint), p, vac) == pytest.approx(-0.3, abs=1e-12)


def test_shift_residual_quarters_when_g_halves(qp):
    q, p = qp
    rng = np.random.default_rng(6)
    cfg = random_snr_config(rng, dim=DIM)
    post = random_post(rng, cfg.pre)
    A_w = P.weak_value(cfg.pre, post, cfg.A)

    def residual(g):
        out = P.postselected_pointer(cfg.pre, post, cfg.pointer, g, cfg.A, q)
        return abs(P.exact_shift(out.pointer, p, cfg.pointer) - P.first_order_shift_post(A_w, cfg.pointer, q, p, g))

    assert 3.5 <= residual(1e-4) / residual(5e-5) <= 4.5


def test_first_order_fidelity_bounded(qp):
    q, p = qp
    rng = np.random.default_rng(7)
    for _ in range(10):
        cfg = random_snr_config(rng, dim=DIM)
        post = random_post(rng, cfg.pre)
        A_w = P.weak_value(cfg.pre, post, cfg.A)
        scaled = []
        for g in (1e-4, 1e-5, 1e-6):
            out = P.postselected_pointer(cfg.pre, post, cfg.pointer, g, cfg.A, q)
            res = P.exact_shift(out.pointer, p, cfg.pointer) - P.first_order_shift_post(A_w, cfg.pointer, q, p, g)
            scaled.append(abs(res) / g**2)
        assert max(scaled) / min(scaled) <= 1.3


def test_standard_shift(qp):
    q, p = qp
    rng = np.random.default_rng(8)
    pointer = random_pointer(rng, DIM)
    A = P.sigma_z()
    pre = random_state(rng, 2)
    assert P.first_order_shift_std(pre, A, pointer, q, p, 1e-5) == pytest.approx(-1e-5 * A.mean(pre), rel=1e-10)
    assert P.first_order_shift_std(P.plus_state(), A, pointer, q, p, 1e-5) == pytest.approx(0, abs=1e-20)
    for _ in range(20):
        d = int(rng.integers(2, 5))
        pre, A, pointer = random_state(rng, d), random_observable(rng, d), random_pointer(rng, DIM)
        g = 1e-4
        rho = P.reduced_pointer_std(P.evolve_joint(pre, pointer, g, A, q))
        exact = P.exact_shift(rho, p, pointer)
        first = P.first_order_shift_std(pre, A, pointer, q, p, g)
        assert abs(exact - first) < 50 * g**2 * max(1.0, A.second_moment(pre))


def test_eigenstate_pre_matches_standard(qp):
    q, p = qp
    rng = np.random.default_rng(9)
    pointer = random_pointer(rng, DIM)
    z1, A = P.basis_state(1), P.sigma_z()
    joint = P.evolve_joint(z1, pointer, 0.05, A, q)
    rho = P.reduced_pointer_std(joint)
    assert np.trace(rho @ rho).real == pytest.approx(1, abs=1e-12)
    post_out = P.postselect(joint, z1)
    assert post_out.prob == pytest.approx(1, abs=1e-12)
    assert P.exact_shift(post_out.pointer, p, pointer) == pytest.approx(P.exact_shift(rho, p, pointer), abs=1e-12)


def test_no_warning_in_weak_regime(qp):
    q, p = qp
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        P.first_order_shift_post(20j, fock.vacuum(DIM), q, p, 1e-5)
