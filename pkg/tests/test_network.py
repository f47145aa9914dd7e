import numpy as np
import pytest

from mipdmn.errors import AllWeightsZero, ConfigError, PhaseHasNoWeight
from mipdmn.network import (DmnInstance, active_nodes, dmn_orientation_tensors, dmn_vf, forward_conductivity,
                            forward_cte, forward_stiffness, identity_quaternions, propagate_weights,
                            random_instance)
from mipdmn.oracle import layered_stiffness, loewner_slack, reference_bounds
from mipdmn.tensors import iso_conductivity, iso_cte, quat_to_rotmat, rotate_stiffness

from conftest import FIBER, MATRIX, random_ortho


def test_propagate_weights_fractions():
    w = np.array([1.0, 3.0, 0.0, 0.0])
    t = propagate_weights(w)
    assert t.sums[0][0] == pytest.approx(4.0)
    assert np.allclose(t.fractions, [1.0, 0.25, 0.0])
    assert list(t.inert) == [False, False, True]
    with pytest.raises(AllWeightsZero):
        propagate_weights(np.zeros(4))


def test_single_laminate_matches_direct_solve():
    m = DmnInstance(np.array([0.3, 0.7]), identity_quaternions(1))
    assert np.allclose(forward_stiffness(m, MATRIX, FIBER), layered_stiffness(MATRIX, FIBER, 0.3), rtol=1e-12)


def test_identical_phases_and_weight_scaling(rng):
    m = random_instance(4, rng)
    C = random_ortho(rng)
    assert np.allclose(forward_stiffness(DmnInstance(m.w, identity_quaternions(15)), C, C), C, rtol=1e-10)
    assert np.allclose(forward_stiffness(m.scaled(3.7), MATRIX, FIBER), forward_stiffness(m, MATRIX, FIBER),
                       rtol=1e-12)


def test_isotropic_phases_rotation_invariance(rng):
    m = random_instance(3, rng)
    C = forward_stiffness(m, MATRIX, FIBER)
    th = m.theta.copy()
    th[0] = [1.0, 0, 0, 0]
    C0 = forward_stiffness(DmnInstance(m.w, th), MATRIX, FIBER)
    R = quat_to_rotmat(m.theta[0])
    assert np.allclose(rotate_stiffness(C0, R), C, rtol=1e-12, atol=1e-9)


def test_batched_materials(rng):
    m = random_instance(3, rng)
    C1 = np.stack([random_ortho(rng) for _ in range(4)])
    C2 = np.stack([random_ortho(rng, 10.0) for _ in range(4)])
    Cb = forward_stiffness(m, C1, C2)
    for i in range(4):
        assert np.allclose(Cb[i], forward_stiffness(m, C1[i], C2[i]), rtol=1e-13)


def test_bounds_and_positive_definiteness(rng):
    for _ in range(20):
        m = random_instance(4, rng)
        vf = dmn_vf(m)
        C = forward_stiffness(m, MATRIX, FIBER)
        lo, hi = reference_bounds(MATRIX, FIBER, vf)
        s = loewner_slack(lo, C, hi)
        assert min(s) >= -1e-8 * np.linalg.norm(C)
        k = forward_conductivity(m, iso_conductivity(0.2), iso_conductivity(1.0))
        lo, hi = reference_bounds(iso_conductivity(0.2), iso_conductivity(1.0), vf)
        assert min(loewner_slack(lo, k, hi)) >= -1e-8 * np.linalg.norm(k)


def test_cte_identical_expansion(rng):
    m = random_instance(3, rng)
    C, a = forward_cte(m, MATRIX, FIBER, iso_cte(5e-5), iso_cte(5e-5))
    assert np.allclose(a, iso_cte(5e-5), rtol=1e-8)
    assert np.allclose(C, forward_stiffness(m, MATRIX, FIBER), rtol=1e-12)


def test_vf_and_active_nodes():
    w = np.array([1.0, 1.0, 0.0, 2.0])
    assert dmn_vf(w) == pytest.approx(0.75)
    a = active_nodes(w)
    assert a.counts == (1, 2)
    assert a.ratios == (0.5, 1.0)
    with pytest.raises(AllWeightsZero):
        dmn_vf(np.zeros(4))


def test_orientation_tensors(rng):
    m = random_instance(3, rng)
    a = dmn_orientation_tensors(m)
    assert a.shape == (2, 3, 3, 3)
    assert np.allclose(np.trace(a, axis1=-2, axis2=-1), 1.0)
    assert np.allclose(a.sum(1), np.eye(3))
    ident = DmnInstance(m.w, identity_quaternions(7))
    assert np.allclose(dmn_orientation_tensors(ident)[:, 0], np.diag([1.0, 0, 0]))
    w = m.w.copy()
    w[1::2] = 0
    with pytest.raises(PhaseHasNoWeight):
        dmn_orientation_tensors(DmnInstance(w, m.theta))


def test_instance_validation():
    with pytest.raises(ConfigError):
        DmnInstance(np.ones(4), identity_quaternions(2))
    with pytest.raises(ConfigError):
        DmnInstance(-np.ones(4), identity_quaternions(3))
    with pytest.raises(ConfigError):
        DmnInstance(np.ones(4), identity_quaternions(3), theta_in=identity_quaternions(3))


def test_input_rotations_identity(rng):
    m = random_instance(3, rng)
    C = forward_stiffness(m, MATRIX, FIBER)
    mi = DmnInstance(m.w, m.theta, identity_quaternions(8))
    assert np.allclose(forward_stiffness(mi, MATRIX, FIBER), C, rtol=1e-13)
