import numpy as np
import pytest

from mipdmn.errors import DegenerateQuaternion, NotPositiveDefinite
from mipdmn.tensors import (axis_angle_quat, from_mandel, iso_stiffness, mandel_inner, mandel_to_tensor4,
                            ortho_stiffness, quat_to_rotmat, rotate_stiffness, rotate_sym2, tensor4_to_mandel,
                            to_mandel, transiso_stiffness)

from conftest import random_ortho


def random_rot(rng):
    q = rng.standard_normal(4)
    return quat_to_rotmat(q)


def test_mandel_round_trip_and_inner(rng):
    A = rng.standard_normal((3, 3))
    A = A + A.T
    B = rng.standard_normal((3, 3))
    B = B + B.T
    assert np.array_equal(from_mandel(to_mandel(A)), A)
    assert mandel_inner(to_mandel(A), to_mandel(B)) == pytest.approx(np.sum(A * B), rel=1e-14)


def test_quaternion_examples(rng):
    assert np.allclose(quat_to_rotmat(np.array([1.0, 0, 0, 0])), np.eye(3))
    assert np.allclose(quat_to_rotmat(np.array([0.0, 0, 0, 1])), np.diag([-1.0, -1.0, 1.0]), atol=1e-15)
    for _ in range(20):
        q = rng.standard_normal(4)
        R = quat_to_rotmat(q)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(quat_to_rotmat(7.3 * q), R, atol=1e-14)


def test_degenerate_quaternion():
    with pytest.raises(DegenerateQuaternion):
        quat_to_rotmat(np.zeros(4))
    with pytest.raises(DegenerateQuaternion):
        quat_to_rotmat(np.array([1e-9, 0, 0, 0]))


def test_rotate_stiffness_matches_index_transform(rng):
    C = random_ortho(rng)
    R = random_rot(rng)
    T = mandel_to_tensor4(C)
    T2 = np.einsum("ia,jb,kc,ld,abcd->ijkl", R, R, R, R, T)
    assert np.allclose(rotate_stiffness(C, R), tensor4_to_mandel(T2), rtol=1e-12, atol=1e-9)


def test_rotate_stiffness_properties(rng):
    C = random_ortho(rng)
    assert np.allclose(rotate_stiffness(C, np.eye(3)), C)
    Ci = iso_stiffness(3300.0, 0.41)
    R1, R2 = random_rot(rng), random_rot(rng)
    assert np.allclose(rotate_stiffness(Ci, R1), Ci, rtol=0, atol=1e-10 * np.abs(Ci).max())
    C12 = rotate_stiffness(rotate_stiffness(C, R1), R2)
    assert np.allclose(C12, rotate_stiffness(C, R2 @ R1), rtol=0, atol=1e-10 * np.abs(C).max())
    Cr = rotate_stiffness(C, R1)
    assert np.linalg.norm(Cr) == pytest.approx(np.linalg.norm(C), rel=1e-12)
    assert np.allclose(np.linalg.eigvalsh(Cr), np.linalg.eigvalsh(C), rtol=1e-10)


def test_quarter_turn_swaps_axes():
    C = ortho_stiffness(1000.0, 2000.0, 3000.0, 0.2, 0.25, 0.3, 400.0, 500.0, 600.0)
    R = quat_to_rotmat(axis_angle_quat([0, 0, 1], np.pi / 2))
    Cr = rotate_stiffness(C, R)
    T, Tr = mandel_to_tensor4(C), mandel_to_tensor4(Cr)
    perm = [1, 0, 2]
    assert np.allclose(Tr, T[np.ix_(perm, perm, perm, perm)], atol=1e-9)
    assert Cr[0, 0] == pytest.approx(C[1, 1])
    assert Cr[4, 4] == pytest.approx(C[5, 5])


def test_rotate_sym2():
    R = quat_to_rotmat(axis_angle_quat([0, 0, 1], np.pi / 2))
    assert np.allclose(rotate_sym2(np.diag([1.0, 2.0, 3.0]), R), np.diag([2.0, 1.0, 3.0]))
    assert np.allclose(rotate_sym2(2.5 * np.eye(3), R), 2.5 * np.eye(3))


def test_iso_stiffness_values():
    C = iso_stiffness(3300.0, 0.41)
    G = 3300.0 / (2 * 1.41)
    lam = 3300.0 * 0.41 / (1.41 * (1 - 0.82))
    assert np.allclose(np.diag(C)[[2, 4, 5]], 2 * G)
    assert C[0, 0] == pytest.approx(lam + 2 * G)
    assert C[0, 1] == pytest.approx(lam)
    assert np.all(np.linalg.eigvalsh(C) > 0)
    S = np.linalg.inv(C)
    assert np.allclose(C @ S, np.eye(6), atol=1e-10)
    assert np.all(np.linalg.eigvalsh(iso_stiffness(72000.0, 0.22)) > 0)


def test_near_incompressible_still_spd():
    C = iso_stiffness(1000.0, 0.5 - 1e-3)
    ev = np.linalg.eigvalsh(C)
    assert ev.min() > 0
    assert ev.max() / ev.min() > 100


def test_inadmissible_constants():
    with pytest.raises(NotPositiveDefinite):
        iso_stiffness(1000.0, 0.6)
    with pytest.raises(NotPositiveDefinite):
        ortho_stiffness(1e3, 1e3, 1e3, 0.9, 0.9, 0.9, 300.0, 300.0, 300.0)


def test_transiso_axis():
    C = transiso_stiffness(72000.0, 8000.0, 0.22, 0.3, 4000.0)
    assert C[0, 0] > C[1, 1]
    assert C[1, 1] == pytest.approx(C[3, 3])
    assert C[2, 2] == pytest.approx(C[4, 4])
