"""Synthetic ground truth: direct two-layer solves, bounds, teachers, datasets.

The layer solvers here build the interface continuity equations from scratch
as a dense linear system per load case. They share nothing with the block
algebra of :mod:`mipdmn.laminate` and serve as its independent check.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset
from .errors import EmptySampling
from .network import dmn_vf, forward_stiffness
from .parametric import ParamNet, param_shapes
from .sampling import split_indices

_T = [0, 1, 2]
_N = [3, 4, 5]


# --------------------------------------------------------------------------
# Direct two-layer solves
# --------------------------------------------------------------------------


def layered_stiffness(C1, C2, f):
    """Effective stiffness of a two-layer stack with normal ``e3``.

    For each of the six unit average strains the unknown normal strains of
    both layers (six numbers) follow from the average-strain and normal-stress
    continuity equations. Batched over leading dimensions.
    """
    C1 = np.asarray(C1, dtype=float)
    C2 = np.asarray(C2, dtype=float)
    f = np.asarray(f, dtype=float)[..., None, None]
    batch = np.broadcast_shapes(C1.shape[:-2], C2.shape[:-2], f.shape[:-2])
    C1 = np.broadcast_to(C1, batch + (6, 6))
    C2 = np.broadcast_to(C2, batch + (6, 6))
    f = np.broadcast_to(f, batch + (1, 1))
    M = np.zeros(batch + (6, 6))
    rhs = np.zeros(batch + (6, 6))
    eye = np.eye(6)
    # rows 0..2: f e1n + (1 - f) e2n = ebar_n
    M[..., 0:3, 0:3] = f * np.eye(3)
    M[..., 0:3, 3:6] = (1 - f) * np.eye(3)
    rhs[..., 0:3, :] = eye[_N, :]
    # rows 3..5: C1[n,t] ebar_t + C1[n,n] e1n = C2[n,t] ebar_t + C2[n,n] e2n
    M[..., 3:6, 0:3] = C1[..., 3:6, 3:6]
    M[..., 3:6, 3:6] = -C2[..., 3:6, 3:6]
    rhs[..., 3:6, :] = (C2[..., 3:6, 0:3] - C1[..., 3:6, 0:3]) @ eye[_T, :]
    sol = np.linalg.solve(M, rhs)
    e1 = np.zeros(batch + (6, 6))
    e2 = np.zeros(batch + (6, 6))
    e1[..., 0:3, :] = e2[..., 0:3, :] = eye[_T, :]
    e1[..., 3:6, :] = sol[..., 0:3, :]
    e2[..., 3:6, :] = sol[..., 3:6, :]
    Cbar = f * (C1 @ e1) + (1 - f) * (C2 @ e2)
    return 0.5 * (Cbar + np.swapaxes(Cbar, -1, -2))


def layered_conductivity(k1, k2, f):
    """Effective conductivity of a two-layer stack with normal ``e3``.

    Two unknowns per unit average gradient: the normal gradient in each layer.
    """
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    f = np.asarray(f, dtype=float)
    batch = np.broadcast_shapes(k1.shape[:-2], k2.shape[:-2], f.shape)
    kbar = np.zeros(batch + (3, 3))
    for j in range(3):
        g = np.zeros(3)
        g[j] = 1.0
        # [f, 1-f; k1_33, -k2_33] [g1; g2] = [g_3; (k2_3t - k1_3t) g_t]
        a11 = np.broadcast_to(f, batch)
        a12 = 1 - a11
        a21 = np.broadcast_to(k1[..., 2, 2], batch)
        a22 = -np.broadcast_to(k2[..., 2, 2], batch)
        b1 = np.full(batch, g[2])
        b2 = np.broadcast_to((k2[..., 2, :2] - k1[..., 2, :2]) @ g[:2], batch)
        det = a11 * a22 - a12 * a21
        g1 = (b1 * a22 - a12 * b2) / det
        g2 = (a11 * b2 - a21 * b1) / det
        G1 = np.broadcast_to(g, batch + (3,)).copy()
        G2 = G1.copy()
        G1[..., 2] = g1
        G2[..., 2] = g2
        fv = np.broadcast_to(f, batch)[..., None]
        kbar[..., :, j] = fv * (k1 @ G1[..., None])[..., 0] + (1 - fv) * (k2 @ G2[..., None])[..., 0]
    return 0.5 * (kbar + np.swapaxes(kbar, -1, -2))


def layered_cte(C1, C2, a1, a2, f):
    """Effective expansion of a two-layer stack under a unit temperature rise.

    With zero average stress the normal stress vanishes in both layers and the
    tangential stresses balance. The shared tangential strain and both normal
    strains (nine unknowns) are solved for directly.
    """
    C1 = np.asarray(C1, dtype=float)
    C2 = np.asarray(C2, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    f = np.asarray(f, dtype=float)
    batch = np.broadcast_shapes(C1.shape[:-2], C2.shape[:-2], a1.shape[:-1], a2.shape[:-1], f.shape)
    C1 = np.broadcast_to(C1, batch + (6, 6))
    C2 = np.broadcast_to(C2, batch + (6, 6))
    fv = np.broadcast_to(f, batch)[..., None, None]
    s1 = (C1 @ np.broadcast_to(a1, batch + (6,))[..., None])[..., 0]
    s2 = (C2 @ np.broadcast_to(a2, batch + (6,))[..., None])[..., 0]
    # unknowns x = (et[3], e1n[3], e2n[3]); stress_k = C_k (e_k - a_k)
    M = np.zeros(batch + (9, 9))
    b = np.zeros(batch + (9,))
    M[..., 0:3, 0:3] = C1[..., 3:6, 0:3]
    M[..., 0:3, 3:6] = C1[..., 3:6, 3:6]
    b[..., 0:3] = s1[..., 3:6]
    M[..., 3:6, 0:3] = C2[..., 3:6, 0:3]
    M[..., 3:6, 6:9] = C2[..., 3:6, 3:6]
    b[..., 3:6] = s2[..., 3:6]
    M[..., 6:9, 0:3] = fv * C1[..., 0:3, 0:3] + (1 - fv) * C2[..., 0:3, 0:3]
    M[..., 6:9, 3:6] = fv * C1[..., 0:3, 3:6]
    M[..., 6:9, 6:9] = (1 - fv) * C2[..., 0:3, 3:6]
    b[..., 6:9] = fv[..., 0] * s1[..., 0:3] + (1 - fv[..., 0]) * s2[..., 0:3]
    x = np.linalg.solve(M, b[..., None])[..., 0]
    f1 = fv[..., 0]
    return np.concatenate([x[..., 0:3], f1 * x[..., 3:6] + (1 - f1) * x[..., 6:9]], -1)


def series_parallel_oracle(k1, k2, f):
    """Scalar isotropic layers: (arithmetic, harmonic) mean of ``k1``, ``k2``.

    ``f`` is the fraction of the first layer.
    """
    return f * k1 + (1 - f) * k2, 1.0 / (f / k1 + (1 - f) / k2)


# --------------------------------------------------------------------------
# Bounds
# --------------------------------------------------------------------------


def reference_bounds(X1, X2, vf):
    """Volume-weighted (harmonic, arithmetic) means of two SPD tensors.

    ``vf`` is the phase-2 fraction. For stiffnesses these are the Reuss and
    Voigt bounds, for conductivities the Wiener bounds.
    """
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    vf = np.asarray(vf, dtype=float)[..., None, None]
    upper = (1 - vf) * X1 + vf * X2
    lower = np.linalg.inv((1 - vf) * np.linalg.inv(X1) + vf * np.linalg.inv(X2))
    return lower, upper


def loewner_slack(lower, X, upper):
    """Smallest eigenvalues of ``X - lower`` and ``upper - X``."""
    sym = lambda M: 0.5 * (M + np.swapaxes(M, -1, -2))
    return np.linalg.eigvalsh(sym(X - lower))[..., 0], np.linalg.eigvalsh(sym(upper - X))[..., 0]


# --------------------------------------------------------------------------
# Teachers and datasets
# --------------------------------------------------------------------------


@dataclass
class TeacherSpec:
    """Recipe for a hidden reference network.

    ``vf_consistent`` teachers carry exactly the requested volume fraction at
    every ``vf``: the base weights are rescaled phase-wise, which an ``mi``
    ReLU net reproduces with ``w0 = b / (1 - vf_b), w1 = -w0`` for phase 1
    and ``w0 = 0, w1 = b / vf_b`` for phase 2.
    """

    L: int = 4
    q: int = 0
    seed: int = 0
    vf_consistent: bool = True
    rotation_slope: float = 0.5
    w_range: tuple = (0.2, 1.0)
    noise: float = 0.0


def gen_teacher(spec: TeacherSpec):
    """Build a deterministic ``mi`` teacher net from ``spec``."""
    rng = np.random.default_rng(spec.seed)
    N, M = 2**spec.L, 2**spec.L - 1
    b = rng.uniform(*spec.w_range, size=N)
    th = rng.standard_normal((M, 4))
    th /= np.linalg.norm(th, axis=-1, keepdims=True)
    params = {k: np.zeros(s) for k, s in param_shapes(spec.L, spec.q, "mi").items()}
    params["theta0"] = th
    if spec.q:
        params["Theta1"] = spec.rotation_slope * rng.standard_normal((M, 4, spec.q))
    if spec.vf_consistent:
        vfb = float(dmn_vf(b))
        params["w0"][0::2] = b[0::2] / (1 - vfb)
        params["w1"][0::2] = -params["w0"][0::2]
        params["w1"][1::2] = b[1::2] / vfb
    else:
        params["w0"] = b
        params["w1"] = rng.normal(scale=0.5, size=N)
    return ParamNet(spec.L, spec.q, "mi", params, role="teacher", meta={"teacher": _spec_dict(spec)})


def _spec_dict(spec):
    d = asdict(spec)
    d["w_range"] = list(d["w_range"])
    return d


def teacher_stiffness(teacher, p, C1, C2):
    """Effective stiffness of ``teacher`` at one parameter point for a batch of materials."""
    return forward_stiffness(teacher.instance(p), C1, C2)


def gen_dataset(teacher, P, C1, C2, train_fraction: float = 0.8, seed=None, test_P=None, noise: float = 0.0):
    """Cartesian product of parameter points and material pairs labelled by ``teacher``.

    The same train/validation split of the material pairs is used at every
    point of ``P``. Records at the points of ``test_P`` are all labelled
    ``'test'``.

    Raises
    ------
    EmptySampling
        If there are no parameter points or no material pairs.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    test_P = np.zeros((0, P.shape[1])) if test_P is None else np.atleast_2d(np.asarray(test_P, dtype=float))
    C1 = np.asarray(C1, dtype=float).reshape(-1, 6, 6)
    C2 = np.asarray(C2, dtype=float).reshape(-1, 6, 6)
    if P.size == 0 or len(C1) == 0:
        raise EmptySampling("parameter points and material samples must be nonempty")
    nm = len(C1)
    rng = np.random.default_rng(seed)
    train = split_indices(nm, train_fraction, rng)
    rows = []
    for pts, label in ((P, None), (test_P, "test")):
        for p in pts:
            Cbar = teacher_stiffness(teacher, p, C1, C2)
            if noise > 0:
                Cbar = Cbar * np.exp(noise * rng.standard_normal(nm))[:, None, None]
            split = np.where(train, "train", "val") if label is None else np.full(nm, label)
            rows.append((np.tile(p, (nm, 1)), C1, C2, Cbar, split, np.arange(nm)))
    cols = [np.concatenate(c) for c in zip(*rows)]
    return Dataset(*cols)
