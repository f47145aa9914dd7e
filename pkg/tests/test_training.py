import numpy as np
import pytest
import torch

from mipdmn.errors import ConfigError, EmptySampling, NonFiniteGradient
from mipdmn.network import dmn_orientation_tensors
from mipdmn.oracle import TeacherSpec, gen_dataset, gen_teacher
from mipdmn.parametric import init_params
from mipdmn.sampling import sample_materials
from mipdmn.training import (ORIENTATION_PENALTY, VF_PENALTY, ConstraintTargets, TrainConfig, data_loss,
                             loss_gradient, orientation_constraint_loss, quantile_report, restart_seeds,
                             rprop_fit, rprop_minimize, sample_errors, total_loss, unidirectional_targets,
                             vf_constraint_loss, vf_points)


@pytest.fixture(scope="module")
def small_problem():
    teacher = gen_teacher(TeacherSpec(L=3, seed=1))
    C1, C2 = sample_materials(12, seed=1)
    ds = gen_dataset(teacher, [[0.3], [0.6]], C1, C2, seed=1, test_P=[[0.45]])
    return teacher, ds


def test_config_validation_and_round_trip():
    cfg = TrainConfig(epochs=5, restarts=2, etas=[0.4, 1.3])
    assert TrainConfig.from_dict(dict(cfg.to_dict(), unknown=1)) == cfg
    with pytest.raises(ConfigError):
        TrainConfig(precision="f16")
    with pytest.raises(ConfigError):
        TrainConfig(lambda_vf=-1)
    with pytest.raises(ConfigError):
        ConstraintTargets("spiral")


def test_teacher_reproduces_its_own_data(small_problem):
    teacher, ds = small_problem
    e = sample_errors(teacher, ds)
    assert e.max() < 1e-13
    loss, _ = data_loss(teacher, ds)
    assert loss < 1e-26


def test_teacher_is_volume_fraction_consistent(small_problem):
    teacher, _ = small_problem
    for vf in (0.1, 0.37, 0.9):
        w = teacher.instance([vf]).w
        assert w[1::2].sum() / w.sum() == pytest.approx(vf, abs=1e-14)
    cfg = TrainConfig(lambda_a=0)
    assert total_loss(teacher, None, None, cfg) < 1e-28


def test_vf_loss_penalty_for_empty_weights():
    net = init_params(2, 0, "mi", seed=0)
    net.params["w0"][:] = -1.0
    params = net.torch_params()
    p = torch.as_tensor(vf_points(2, 0, "mi"))
    assert float(vf_constraint_loss(params, "mi", p)) == pytest.approx(VF_PENALTY)


def test_orientation_loss():
    net = init_params(2, 0, "mi", seed=0)
    net.params["theta0"][:] = [1.0, 0, 0, 0]
    params = net.torch_params()
    tgt = ConstraintTargets.both(unidirectional_targets())
    mask, t = tgt.evaluate(np.array([[0.5]]))
    args = (params, "mi", torch.tensor([[0.5]]), torch.as_tensor(t), torch.as_tensor(mask))
    assert float(orientation_constraint_loss(*args)) == pytest.approx(0.0, abs=1e-28)
    net.params["w0"][1::2] = -1.0
    params = net.torch_params()
    args = (params,) + args[1:]
    assert float(orientation_constraint_loss(*args)) == pytest.approx(ORIENTATION_PENALTY)


def test_targets_callable_and_mask():
    tgt = ConstraintTargets(None, lambda p: np.broadcast_to(unidirectional_targets(), (len(p), 3, 3, 3)))
    mask, t = tgt.evaluate(np.zeros((4, 1)))
    assert list(mask) == [False, True]
    assert t.shape == (4, 2, 3, 3, 3) and not t[:, 0].any()


def test_gradient_against_finite_differences(small_problem):
    _, ds = small_problem
    train = ds.where("train")
    net = init_params(3, 0, "mi", seed=4)
    net.params["w1"] = np.random.default_rng(0).normal(scale=0.1, size=8)
    tg = ConstraintTargets(*dmn_orientation_tensors(gen_teacher(TeacherSpec(L=3, seed=1)).instance([0.4])))
    cfg = TrainConfig()
    _, g = loss_gradient(net, train, tg, cfg)
    rng = np.random.default_rng(1)
    for k in ("w0", "w1", "theta0"):
        for _ in range(3):
            idx = tuple(rng.integers(0, s) for s in net.params[k].shape)
            h = 1e-5
            vals = []
            for sgn in (1, -1):
                pr = {n: v.copy() for n, v in net.params.items()}
                pr[k][idx] += sgn * h
                vals.append(total_loss(net.with_params(pr), train, tg, cfg))
            fd = (vals[0] - vals[1]) / (2 * h)
            assert abs(fd - g[k][idx]) <= 1e-4 * max(abs(fd), 1e-8)


def test_rprop_on_quadratic():
    target = torch.tensor([3.0, -2.0, 0.5], dtype=torch.float64)
    params = {"x": torch.zeros(3, dtype=torch.float64, requires_grad=True)}
    seen = []
    loss = rprop_minimize(lambda p: (((p["x"] - target) ** 2).sum(), None), params, 200,
                          callback=lambda e, l, i: seen.append(l))
    assert len(seen) == 201
    # sign flips overshoot, so only the running minimum is monotone
    assert min(seen) < 1e-10 and loss < 1e-10
    assert torch.allclose(params["x"], target, atol=1e-5)


def test_rprop_matches_reference_update():
    """Hand-rolled iRprop- on a separable quartic gives the same iterates."""
    x0 = np.array([1.0, -0.5, 2.0])
    params = {"x": torch.tensor(x0, requires_grad=True)}
    rprop_minimize(lambda p: ((p["x"] ** 4).sum(), None), params, 25)
    x, step, g_prev = x0.copy(), np.full(3, 1e-2), np.zeros(3)
    for _ in range(25):
        g = 4 * x**3
        s = g * g_prev
        step = np.clip(np.where(s > 0, step * 1.2, np.where(s < 0, step * 0.5, step)), 1e-6, 50)
        g = np.where(s < 0, 0.0, g)
        x = x - step * np.sign(g)
        g_prev = g
    assert np.allclose(params["x"].detach().numpy(), x, rtol=1e-12)


def test_rprop_tolerance_and_non_finite():
    params = {"x": torch.ones(1, dtype=torch.float64, requires_grad=True)}
    seen = []
    rprop_minimize(lambda p: ((p["x"] ** 2).sum(), None), params, 1000, tol=0.5,
                   callback=lambda e, l, i: seen.append(e))
    assert len(seen) < 1000
    with pytest.raises(NonFiniteGradient):
        rprop_minimize(lambda p: (torch.log(p["x"] - 2).sum(), None), params, 3)


def test_fit_reduces_loss_and_is_deterministic(small_problem):
    _, ds = small_problem
    train = ds.where("train")
    cfg = TrainConfig(epochs=30, restarts=2, seed=5)
    r1 = rprop_fit(None, train, None, cfg, L=3)
    r2 = rprop_fit(None, train, None, cfg, L=3)
    assert r1.history[-1, -1] < r1.history[0, -1]
    assert r1.history.shape == (31, len(r1.history_columns))
    assert r1.loss == r2.loss and r1.best_restart == r2.best_restart
    assert all(np.array_equal(r1.net.params[k], r2.net.params[k]) for k in r1.net.params)
    assert r1.net.meta["train"]["epochs"] == 30
    assert len(set(restart_seeds(0, 20))) == 20
    with pytest.raises(EmptySampling):
        rprop_fit(None, ds.subset(np.zeros(len(ds), bool)), None, cfg, L=3)


def test_quantile_report():
    e = np.arange(11, dtype=float)
    p = np.r_[np.zeros(11)]
    rows = quantile_report(e, p)
    assert rows[0]["q10"] == pytest.approx(1.0) and rows[0]["q50"] == pytest.approx(5.0)
    assert rows[0]["q90"] == pytest.approx(9.0) and rows[0]["n"] == 11
    rows = quantile_report(np.r_[e, e], np.r_[p, p + 1], np.array(["train"] * 11 + ["test"] * 11))
    assert [r["split"] for r in rows] == ["train", "test"]
