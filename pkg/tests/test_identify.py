import numpy as np
import pytest

from mipdmn.errors import ConfigError
from mipdmn.identify import PhaseGuess, identify, identify_many
from mipdmn.oracle import TeacherSpec, gen_teacher
from mipdmn.tensors import iso_stiffness, transiso_stiffness
from mipdmn.training import predict_stiffness


def test_phase_guess():
    assert np.allclose(PhaseGuess("iso", [3300.0, 0.41]).stiffness(), iso_stiffness(3300.0, 0.41))
    tc = [72000.0, 8000.0, 0.22, 0.3, 4000.0]
    assert np.allclose(PhaseGuess("transiso", tc).stiffness(), transiso_stiffness(*tc))
    with pytest.raises(ConfigError):
        PhaseGuess("cubic", [1.0])
    with pytest.raises(ConfigError):
        PhaseGuess("iso", [1.0, 0.2, 3.0])


def test_identify_recovers_modest_perturbation():
    net = gen_teacher(TeacherSpec(L=3, seed=4))
    g1 = PhaseGuess("iso", [3300.0, 0.35])
    g2 = PhaseGuess("iso", [72000.0, 0.22])
    Cd = predict_stiffness(net, [0.4], g1.stiffness(), g2.stiffness())[0]
    res = identify(net, Cd, PhaseGuess("iso", [3600.0, 0.32]), PhaseGuess("iso", [65000.0, 0.24]), 0.45,
                   iterations=400)
    assert res.relative_error < 5e-3
    assert res.history[-1, 1] <= res.history[0, 1]
    assert res.history.shape == (401, 3)


def test_identify_rejects_bad_vf():
    net = gen_teacher(TeacherSpec(L=2, seed=0))
    g = PhaseGuess("iso", [1000.0, 0.3])
    with pytest.raises(ConfigError):
        identify(net, np.eye(6), g, g, 1.2)


def test_batched_runs_match_single_runs():
    net = gen_teacher(TeacherSpec(L=2, seed=1))
    g1, g2 = PhaseGuess("iso", [3300.0, 0.35]), PhaseGuess("iso", [72000.0, 0.22])
    Cd = predict_stiffness(net, [0.5], g1.stiffness(), g2.stiffness())[0]
    starts = [(PhaseGuess("iso", [3000.0, 0.3]), PhaseGuess("iso", [80000.0, 0.2]), 0.4),
              (PhaseGuess("iso", [3900.0, 0.4]), PhaseGuess("iso", [60000.0, 0.25]), 0.6)]
    batch = identify_many(net, Cd, starts, iterations=60)
    for (a, b, v), r in zip(starts, batch):
        single = identify(net, Cd, a, b, v, iterations=60)
        assert np.array_equal(single.history, r.history)
        assert np.array_equal(single.phase2.constants, r.phase2.constants)
    with pytest.raises(ConfigError):
        identify_many(net, Cd, [starts[0], (PhaseGuess("transiso", [1.0, 1.0, 0.2, 0.2, 0.4]), g2, 0.5)])


def test_truth_start_has_zero_loss():
    net = gen_teacher(TeacherSpec(L=3, seed=2))
    g1, g2 = PhaseGuess("iso", [3300.0, 0.35]), PhaseGuess("iso", [72000.0, 0.22])
    Cd = predict_stiffness(net, [0.3], g1.stiffness(), g2.stiffness())[0]
    res = identify(net, Cd, g1, g2, 0.3, iterations=0)
    assert res.loss < 1e-12
