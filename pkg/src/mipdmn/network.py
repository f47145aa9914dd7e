"""Binary-tree laminate network.

Laminates are numbered breadth-first from 0 (the root). Level ``i`` holds the
laminates ``2**i - 1 .. 2**(i + 1) - 2`` and the children of laminate ``k``
are ``2k + 1`` and ``2k + 2``. The ``N = 2**L`` material nodes sit below the
leaf level: leaf ``j`` receives nodes ``2j`` (phase 1) and ``2j + 1``
(phase 2), so phase-1 nodes are the even 0-based indices.

Every forward function is written in torch, vectorized over arbitrary
leading batch dimensions of the weights, rotations and input tensors. The
public helpers taking a :class:`DmnInstance` return numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch

from .errors import AllWeightsZero, ConfigError, PhaseHasNoWeight
from .laminate import lam_conductivity, lam_cte, lam_stiffness
from .tensors import as_tensor, mandel_rotation, quat_to_rotmat, to_numpy


def depth_from_laminates(n_lam: int) -> int:
    L = (int(n_lam) + 1).bit_length() - 1
    if L < 1 or 2**L - 1 != n_lam:
        raise ConfigError(f"{n_lam} laminates do not form a perfect binary tree")
    return L


def level_slice(i: int) -> slice:
    return slice(2**i - 1, 2 ** (i + 1) - 1)


def parent(k: int) -> int:
    return (k - 1) // 2


@dataclass(frozen=True)
class DmnInstance:
    """Weights and rotations of one network.

    Parameters
    ----------
    w : ndarray, shape (2**L,)
        Nonnegative material node weights.
    theta : ndarray, shape (2**L - 1, 4)
        Scalar-first quaternions of the laminates, not necessarily unit.
    theta_in : ndarray, shape (2**L, 4), optional
        Extra rotations of the material nodes. Off by default.
    """

    w: np.ndarray
    theta: np.ndarray
    theta_in: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "theta", theta)
        L = depth_from_laminates(theta.shape[-2])
        if theta.shape[-1] != 4 or w.shape[-1] != 2**L:
            raise ConfigError(f"inconsistent shapes w{w.shape} theta{theta.shape}")
        if (w < 0).any():
            raise ConfigError("weights must be nonnegative")
        if self.theta_in is not None:
            ti = np.asarray(self.theta_in, dtype=float)
            if ti.shape[-2:] != (2**L, 4):
                raise ConfigError(f"input rotations need shape ({2**L}, 4)")
            object.__setattr__(self, "theta_in", ti)

    @property
    def L(self) -> int:
        return depth_from_laminates(self.theta.shape[-2])

    @property
    def n_nodes(self) -> int:
        return 2**self.L

    def scaled(self, k: float) -> "DmnInstance":
        return DmnInstance(k * self.w, self.theta, self.theta_in)

    def tensors(self):
        ti = None if self.theta_in is None else as_tensor(self.theta_in)
        return as_tensor(self.w), as_tensor(self.theta), ti


class WeightTree(NamedTuple):
    """Propagated weights: ``sums[i]`` holds the level-``i`` laminate sums
    (``sums[L]`` are the node weights), ``fractions`` the phase-1 fraction of
    every laminate in breadth-first order and ``inert`` flags laminates whose
    subtree carries no weight."""

    sums: list
    fractions: np.ndarray
    inert: np.ndarray


def _fractions_t(w, L):
    """Per-level phase-1 fractions; a laminate with zero total weight gets 0."""
    fs = [None] * L
    s = w
    for i in range(L - 1, -1, -1):
        s1, s2 = s[..., 0::2], s[..., 1::2]
        s = s1 + s2
        pos = s > 0
        fs[i] = torch.where(pos, s1 / torch.where(pos, s, torch.ones_like(s)), torch.zeros_like(s))
    return fs


def propagate_weights(w) -> WeightTree:
    """Sum node weights up the tree and compute each laminate's fraction.

    Raises
    ------
    AllWeightsZero
        If the weights sum to zero.
    """
    w = np.asarray(w, dtype=float)
    L = int(round(np.log2(w.shape[-1])))
    if (w.sum(-1) <= 0).any():
        raise AllWeightsZero("all material node weights are zero")
    sums = [None] * (L + 1)
    sums[L] = w
    for i in range(L - 1, -1, -1):
        sums[i] = sums[i + 1][..., 0::2] + sums[i + 1][..., 1::2]
    fs = _fractions_t(torch.from_numpy(w), L)
    fractions = np.concatenate([f.numpy() for f in fs], -1)
    inert = np.concatenate([sums[i] <= 0 for i in range(L)], -1)
    return WeightTree(sums, fractions, inert)


def _check_total(w):
    if bool((w.sum(-1) <= 0).any()):
        raise AllWeightsZero("all material node weights are zero")


def _congruence(Q, C):
    """``Q C Q^T`` for batches where ``Q`` broadcasts against ``C``.

    ``einsum`` folds broadcast dimensions into the matrix products, which is
    several times faster than chained ``@`` for stacks of tiny matrices.
    """
    return torch.einsum("...ij,...jk,...lk->...il", Q, C, Q)


def _sym(M):
    """Exactly symmetric part; rotations leave rounding-level asymmetry."""
    return 0.5 * (M + M.transpose(-1, -2))


def _node_rotations(theta_in):
    return None if theta_in is None else mandel_rotation(quat_to_rotmat(theta_in))


def forward_stiffness_t(w, theta, C1, C2, theta_in=None):
    """Effective stiffness of the network (torch, batched).

    ``w`` is (..., N), ``theta`` (..., 2**L - 1, 4) and ``C1``, ``C2``
    (..., 6, 6); the leading dimensions broadcast against each other.
    """
    L = depth_from_laminates(theta.shape[-2])
    _check_total(w)
    fs = _fractions_t(w, L)
    Q = mandel_rotation(quat_to_rotmat(theta))
    a, b = C1.unsqueeze(-3), C2.unsqueeze(-3)
    Qin = _node_rotations(theta_in)
    if Qin is not None:
        a = _congruence(Qin[..., 0::2, :, :], a)
        b = _congruence(Qin[..., 1::2, :, :], b)
    for i in range(L - 1, -1, -1):
        C = _congruence(Q[..., level_slice(i), :, :], lam_stiffness(a, b, fs[i], localization=False).C)
        a, b = C[..., 0::2, :, :], C[..., 1::2, :, :]
    return _sym(C[..., 0, :, :])


def forward_conductivity_t(w, theta, k1, k2, theta_in=None):
    L = depth_from_laminates(theta.shape[-2])
    _check_total(w)
    fs = _fractions_t(w, L)
    R = quat_to_rotmat(theta)
    a, b = k1.unsqueeze(-3), k2.unsqueeze(-3)
    if theta_in is not None:
        Rin = quat_to_rotmat(theta_in)
        a = _congruence(Rin[..., 0::2, :, :], a)
        b = _congruence(Rin[..., 1::2, :, :], b)
    for i in range(L - 1, -1, -1):
        k = _congruence(R[..., level_slice(i), :, :], lam_conductivity(a, b, fs[i], localization=False).C)
        a, b = k[..., 0::2, :, :], k[..., 1::2, :, :]
    return _sym(k[..., 0, :, :])


def forward_cte_t(w, theta, C1, C2, a1, a2, theta_in=None):
    """Effective stiffness and expansion, computed laminate by laminate."""
    L = depth_from_laminates(theta.shape[-2])
    _check_total(w)
    fs = _fractions_t(w, L)
    Q = mandel_rotation(quat_to_rotmat(theta))
    Ca, Cb = C1.unsqueeze(-3), C2.unsqueeze(-3)
    aa, ab = a1.unsqueeze(-2), a2.unsqueeze(-2)
    Qin = _node_rotations(theta_in)
    if Qin is not None:
        Q1, Q2 = Qin[..., 0::2, :, :], Qin[..., 1::2, :, :]
        Ca, Cb = _congruence(Q1, Ca), _congruence(Q2, Cb)
        aa, ab = torch.einsum("...ij,...j->...i", Q1, aa), torch.einsum("...ij,...j->...i", Q2, ab)
    for i in range(L - 1, -1, -1):
        Qi = Q[..., level_slice(i), :, :]
        res = lam_cte(Ca, Cb, aa, ab, fs[i], localization=False)
        C = _congruence(Qi, res.C)
        al = torch.einsum("...ij,...j->...i", Qi, res.alpha)
        Ca, Cb, aa, ab = C[..., 0::2, :, :], C[..., 1::2, :, :], al[..., 0::2, :], al[..., 1::2, :]
    return _sym(C[..., 0, :, :]), al[..., 0, :]


def forward_stiffness(m: DmnInstance, C1, C2):
    """Effective Mandel stiffness in the global frame."""
    w, th, ti = m.tensors()
    return to_numpy(forward_stiffness_t(w, th, as_tensor(C1), as_tensor(C2), ti))


def forward_conductivity(m: DmnInstance, k1, k2):
    """Effective 3x3 conductivity in the global frame."""
    w, th, ti = m.tensors()
    return to_numpy(forward_conductivity_t(w, th, as_tensor(k1), as_tensor(k2), ti))


def forward_cte(m: DmnInstance, C1, C2, a1, a2):
    """Effective stiffness and Mandel expansion vector in the global frame."""
    w, th, ti = m.tensors()
    out = forward_cte_t(w, th, as_tensor(C1), as_tensor(C2), as_tensor(a1), as_tensor(a2), ti)
    return to_numpy(out)


# --------------------------------------------------------------------------
# Diagnostics
# --------------------------------------------------------------------------


def dmn_vf_t(w):
    return w[..., 1::2].sum(-1) / w.sum(-1)


def dmn_vf(w) -> float | np.ndarray:
    """Phase-2 volume fraction carried by the node weights."""
    if isinstance(w, DmnInstance):
        w = w.w
    w = np.asarray(w, dtype=float)
    total = w.sum(-1)
    if (total <= 0).any():
        raise AllWeightsZero("all material node weights are zero")
    return w[..., 1::2].sum(-1) / total


def leaf_rotations_t(theta):
    """Composed rotation from each leaf laminate frame to the global frame.

    Returns shape (..., 2**(L - 1), 3, 3), built with one root-to-leaf pass.
    """
    L = depth_from_laminates(theta.shape[-2])
    R = quat_to_rotmat(theta)
    Rt = R[..., 0:1, :, :]
    for i in range(1, L):
        Rt = torch.repeat_interleave(Rt, 2, dim=-3) @ R[..., level_slice(i), :, :]
    return Rt


def node_rotations_t(theta, theta_in=None):
    """Composed rotation of every material node, shape (..., N, 3, 3)."""
    Rt = torch.repeat_interleave(leaf_rotations_t(theta), 2, dim=-3)
    if theta_in is not None:
        Rt = Rt @ quat_to_rotmat(theta_in)
    return Rt


def effective_rotations(m: DmnInstance):
    """Rotation of each leaf laminate (shared by its two material nodes)."""
    return to_numpy(leaf_rotations_t(as_tensor(m.theta)))


def orientation_tensors_t(w, theta, theta_in=None):
    """Weighted orientation tensors of the three material axes per phase.

    Returns ``(a, totals)`` with ``a`` of shape (..., 2, 3, 3, 3) indexed as
    ``[phase, axis, row, col]`` and ``totals`` the per-phase weight sums.
    A phase with no weight yields zeros.
    """
    Rn = node_rotations_t(theta, theta_in)
    out, totals = [], []
    for ph in (0, 1):
        wp = w[..., ph::2]
        Rp = Rn[..., ph::2, :, :]
        tot = wp.sum(-1)
        num = torch.einsum("...n,...nji,...nki->...ijk", wp, Rp, Rp)
        safe = torch.where(tot > 0, tot, torch.ones_like(tot))
        out.append(num / safe[..., None, None, None])
        totals.append(tot)
    return torch.stack(out, -4), torch.stack(totals, -1)


def dmn_orientation_tensors(m: DmnInstance):
    """Orientation tensors ``a[phase, axis]`` (each 3x3, trace 1).

    Raises
    ------
    PhaseHasNoWeight
        If a phase carries zero total weight.
    """
    w, th, ti = m.tensors()
    a, tot = orientation_tensors_t(w, th, ti)
    if bool((tot <= 0).any()):
        raise PhaseHasNoWeight("a phase has zero total weight")
    return to_numpy(a)


class ActiveNodes(NamedTuple):
    counts: tuple
    ratios: tuple


def active_nodes(w, eps: float | None = None) -> ActiveNodes:
    """Count nodes with weight above ``eps`` (machine epsilon by default) per phase."""
    if isinstance(w, DmnInstance):
        w = w.w
    w = np.asarray(w, dtype=float)
    eps = np.finfo(float).eps if eps is None else eps
    half = w.shape[-1] // 2
    counts = tuple((w[..., ph::2] > eps).sum(-1) for ph in (0, 1))
    return ActiveNodes(counts, tuple(c / half for c in counts))


def identity_quaternions(n: int) -> np.ndarray:
    q = np.zeros((n, 4))
    q[:, 0] = 1.0
    return q


def random_instance(L: int, rng: np.random.Generator, w_range=(0.2, 0.8)) -> DmnInstance:
    w = rng.uniform(*w_range, size=2**L)
    theta = rng.standard_normal((2**L - 1, 4))
    return DmnInstance(w, theta / np.linalg.norm(theta, axis=-1, keepdims=True))
