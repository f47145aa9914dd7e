import numpy as np
import pytest

from mipdmn.errors import ConfigError, MaxIterationsExceeded
from mipdmn.inelastic import (DriverConfig, LoadPath, MaterialLaw, NodeState, Simulator, aitken_update,
                              cyclic_path, matint, run_path, temporal_error, von_mises)
from mipdmn.network import DmnInstance, forward_stiffness, random_instance
from mipdmn.tensors import iso_stiffness

J2 = MaterialLaw("j2", E=3300.0, nu=0.41)
FIBER = MaterialLaw.elastic(E=72000.0, nu=0.22)


def test_law_validation():
    with pytest.raises(ConfigError):
        MaterialLaw("viscous")
    with pytest.raises(ConfigError):
        MaterialLaw("j2", E=1.0, nu=0.3, n=2.0)
    assert np.allclose(MaterialLaw.elastic(E=3300.0, nu=0.41).C, iso_stiffness(3300.0, 0.41))


def test_j2_return_mapping_consistency():
    de = np.array([[0.02, -0.01, 0.005, -0.01, 0.0, 0.0]])
    st = matint(J2, NodeState.initial(1, J2.C), de)
    assert st.peq[0] > 0
    assert von_mises(st.sig)[0] == pytest.approx(J2.yield_stress(st.peq[0]), rel=1e-12)
    # plastic flow is deviatoric
    assert st.eps_p[0, [0, 1, 3]].sum() == pytest.approx(0.0, abs=1e-14)


def test_j2_elastic_below_yield():
    de = np.array([[1e-4, 0, 0, 0, 0, 0]])
    st = matint(J2, NodeState.initial(1, J2.C), de)
    assert st.peq[0] == 0 and np.allclose(st.sig, de @ J2.C.T) and not st.ds.any()


def test_consistent_tangent_matches_finite_differences():
    st0 = matint(J2, NodeState.initial(1, J2.C), np.array([[0.01, 0.0, 0.0, 0.0, 0.0, 0.0]]))
    de = np.array([[0.003, -0.001, 0.002, 0.0005, 0.0, 0.001]])
    st = matint(J2, st0, de)
    h = 1e-7
    fd = np.zeros((6, 6))
    for j in range(6):
        d = np.zeros((1, 6))
        d[0, j] = h
        fd[:, j] = (matint(J2, st0, de + d).sig - matint(J2, st0, de - d).sig)[0] / (2 * h)
    assert np.allclose(st.C[0], fd, rtol=1e-5, atol=1e-5 * np.abs(fd).max())
    assert np.allclose(st.C[0] @ de[0] + st.ds[0], st.sig[0] - st0.sig[0], atol=1e-10)


def test_aitken_update():
    x, Fx = np.zeros(3), np.ones(3)
    r = Fx - x
    xn, om = aitken_update(x, Fx, r, None, 1.0)
    assert om == 1.0 and np.array_equal(xn, Fx)
    _, om = aitken_update(x, Fx, r, r.copy(), 1.7)
    assert om == 1.7
    _, om = aitken_update(x, Fx, r, 10 * r, 1.0, omega_max=1.5)
    assert 1.0 <= om <= 1.5


def test_elastic_path_matches_linear_response(rng):
    m = random_instance(3, rng)
    laws = (MaterialLaw.elastic(E=3300.0, nu=0.41), FIBER)
    path = cyclic_path(steps_per_segment=4)
    res = run_path(m, laws, path)
    C = forward_stiffness(m, laws[0].C, laws[1].C)
    assert np.allclose(res.sig, path.eps @ C.T, rtol=0, atol=1e-10 * np.abs(res.sig).max())
    active = np.linalg.norm(np.diff(path.eps, axis=0), axis=-1) > 1e-8
    assert np.all(res.iterations[1:][active] == 1)


def test_j2_path_energy_and_dissipation():
    m = random_instance(3, np.random.default_rng(2))
    res = run_path(m, (J2, FIBER), cyclic_path(steps_per_segment=8))
    assert res.dissipation.min() >= -1e-12
    assert res.peq_mean[-1] > 0
    assert res.power_gap() < 1.5e-2


def test_iteration_cap():
    m = random_instance(3, np.random.default_rng(2))
    sim = Simulator(m, (J2, FIBER), DriverConfig(rtol=1e-14, max_iter=2, aitken=False))
    with pytest.raises(MaxIterationsExceeded):
        sim.solve_increment(np.array([0.05, 0, 0, 0, 0, 0]))


def test_load_path_validation_and_temporal_error():
    with pytest.raises(ConfigError):
        LoadPath([0.0, 1.0], np.ones((2, 6)))
    with pytest.raises(ConfigError):
        LoadPath([0.0, 0.0], np.zeros((2, 6)))
    p = cyclic_path(steps_per_segment=5)
    assert len(p.t) == 21 and np.allclose(p.eps[-1], 0)
    t = np.linspace(0, 1, 11)
    y = np.ones((11, 6))
    assert temporal_error(1.01 * y, y, t) == pytest.approx(0.01)


def test_input_rotations_rejected(rng):
    m = random_instance(2, rng)
    mi = DmnInstance(m.w, m.theta, np.tile([1.0, 0, 0, 0], (4, 1)))
    with pytest.raises(ConfigError):
        Simulator(mi, (J2, FIBER))
