import numpy as np
import pytest

from mipdmn.errors import ConfigError, DegenerateBase, DimensionMismatch, NoAnchors
from mipdmn.network import DmnInstance, dmn_vf, random_instance
from mipdmn.parametric import (ParamNet, count_params, eval_params, from_instance, init_params,
                               interpolate_instances, param_shapes, transfer_scale)


@pytest.mark.parametrize("L", range(1, 10))
@pytest.mark.parametrize("q", range(5))
def test_param_count_formulas(L, q):
    N = 2**L
    mi, fc = count_params(L, q, "mi"), count_params(L, q, "fc")
    assert mi["weights"] == 2 * N and mi["rotations"] == 4 * (q + 1) * (N - 1)
    assert fc["weights"] == N * (q + 2) and fc["rotations"] == 4 * (q + 2) * (N - 1)


def test_relu_example_and_softplus_limit():
    net = ParamNet(1, 0, "mi", {"w0": np.array([0.5, -0.2]), "w1": np.array([1.0, 1.0]),
                                "theta0": np.array([[1.0, 0, 0, 0]]), "Theta1": np.zeros((1, 4, 0))})
    w, _ = eval_params(net, [0.3])
    assert np.allclose(w, [0.8, 0.1])
    z = np.r_[-np.linspace(0.1, 3, 16), np.linspace(0.1, 3, 16)]
    relu = ParamNet(5, 0, "plain", {"w0": z, "theta0": np.ones((31, 4))})
    soft = ParamNet(5, 0, "plain", dict(relu.params), activation="softplus", beta=100.0)
    assert np.abs(eval_params(soft, [0.5])[0] - eval_params(relu, [0.5])[0]).max() < 0.01


def test_param_counts():
    assert count_params(5, 0, "mi") == {"weights": 64, "rotations": 124, "total": 188}
    assert count_params(5, 2, "mi")["rotations"] == 31 * 4 * 3
    assert count_params(5, 2, "fc")["weights"] == 32 * 4
    assert count_params(3, 0, "plain")["total"] == 8 + 28
    with pytest.raises(ConfigError):
        param_shapes(3, 0, "xyz")


def test_init_params():
    net = init_params(4, 2, "mi", seed=3)
    assert np.all((net.params["w0"] >= 0.2) & (net.params["w0"] <= 0.8))
    assert np.allclose(np.linalg.norm(net.params["theta0"], axis=-1), 1.0)
    assert not net.params["w1"].any() and not net.params["Theta1"].any()
    again = init_params(4, 2, "mi", seed=3)
    assert all(np.array_equal(net.params[k], again.params[k]) for k in net.params)


def test_mi_separates_vf_and_q(rng):
    net = init_params(3, 2, "mi", seed=0)
    net.params["w1"] = rng.standard_normal(8)
    net.params["Theta1"] = rng.standard_normal((7, 4, 2))
    w_a, th_a = eval_params(net, [0.3, 0.1, 0.9])
    w_b, th_b = eval_params(net, [0.3, 0.7, 0.2])
    w_c, th_c = eval_params(net, [0.6, 0.1, 0.9])
    assert np.array_equal(w_a, w_b) and not np.array_equal(th_a, th_b)
    assert np.array_equal(th_a, th_c) and not np.array_equal(w_a, w_c)
    assert np.all(w_a >= 0)


def test_fc_depends_on_all(rng):
    net = init_params(3, 1, "fc", seed=0)
    net.params["w1"] = rng.standard_normal((8, 2))
    w_a, _ = eval_params(net, [0.3, 0.1])
    w_b, _ = eval_params(net, [0.3, 0.8])
    assert not np.array_equal(w_a, w_b)


def test_batched_eval_and_dimension_check():
    net = init_params(3, 1, "mi", seed=0)
    w, th = eval_params(net, np.array([[0.2, 0.5], [0.4, 0.5]]))
    assert w.shape == (2, 8) and th.shape == (2, 7, 4)
    with pytest.raises(DimensionMismatch):
        eval_params(net, [0.2])
    with pytest.raises(DimensionMismatch):
        ParamNet(3, 0, "mi", {"w0": np.ones(8), "w1": np.ones(8), "theta0": np.ones((6, 4)),
                              "Theta1": np.ones((7, 4, 0))})


def test_softplus_weights_positive():
    net = init_params(3, 0, "mi", seed=0, activation="softplus", beta=2.0)
    net.params["w0"][:] = -50
    w, _ = eval_params(net, [0.5])
    assert np.all(w > 0)


def test_from_instance_round_trip(rng):
    m = random_instance(3, rng)
    net = from_instance(m, q=1)
    w, th = eval_params(net, [0.77, 0.3])
    assert np.array_equal(w, m.w) and np.array_equal(th, m.theta)


def test_normalization_of_q():
    net = init_params(2, 1, "mi", seed=0)
    net.p_offset = np.array([0.0, 10.0])
    net.p_scale = np.array([1.0, 5.0])
    assert np.allclose(net.normalize([0.4, 12.5]), [0.4, 0.5])


def test_transfer_scale(rng):
    w = rng.uniform(0.1, 1, 16)
    vf = dmn_vf(w)
    for target in (0.05, 0.5, 0.9):
        assert dmn_vf(transfer_scale(w, vf, target)) == pytest.approx(target, abs=1e-14)
    with pytest.raises(DegenerateBase):
        transfer_scale(w, 0.0, 0.5)


def test_interpolate_instances(rng):
    a, b = random_instance(3, rng), random_instance(3, rng)
    anchors = [(0.6, b), (0.2, a)]
    mid = interpolate_instances(anchors, 0.4)
    assert np.allclose(mid.w, 0.5 * (a.w + b.w))
    assert interpolate_instances(anchors, 0.2) is a
    out = interpolate_instances(anchors, 0.9)
    assert dmn_vf(out) == pytest.approx(0.9)
    assert np.array_equal(out.theta, b.theta)
    with pytest.raises(NoAnchors):
        interpolate_instances([], 0.5)
    assert isinstance(mid, DmnInstance)
