"""Mandel-notation tensor algebra, rotations and constituent stiffness builders.

Symmetric second-order tensors are stored as 6-vectors in the Mandel order
``(11, 22, 12, 33, 13, 23)`` with a ``sqrt(2)`` factor on shear entries, and
fourth-order tensors with minor and major symmetries as 6x6 matrices in the
same order. With this ordering the first three entries form the in-plane
(tangential) block of a laminate whose normal is ``e3`` and the last three the
normal block.

The kernels are written against torch so that they can sit inside an autograd
graph. Called with numpy arrays or plain floats they return numpy arrays.
"""

from __future__ import annotations

import functools
import math

import numpy as np
import torch

from .errors import DegenerateQuaternion, NotPositiveDefinite

MANDEL_PAIRS = ((0, 0), (1, 1), (0, 1), (2, 2), (0, 2), (1, 2))
TANGENTIAL = slice(0, 3)
NORMAL = slice(3, 6)

_SQRT2 = math.sqrt(2.0)
_PAIR_I = torch.tensor([i for i, _ in MANDEL_PAIRS])
_PAIR_J = torch.tensor([j for _, j in MANDEL_PAIRS])
_MANDEL_W = torch.tensor([1.0 if i == j else _SQRT2 for i, j in MANDEL_PAIRS], dtype=torch.float64)


def _is_tensor_call(args, kwargs):
    return any(isinstance(a, torch.Tensor) for a in (*args, *kwargs.values()))


def to_numpy(obj):
    """Recursively convert tensors (also inside tuples/lists/dicts) to numpy."""
    if isinstance(obj, torch.Tensor):
        return obj.detach().cpu().numpy()
    if isinstance(obj, tuple) and hasattr(obj, "_fields"):
        return type(obj)(*(to_numpy(x) for x in obj))
    if isinstance(obj, (tuple, list)):
        return type(obj)(to_numpy(x) for x in obj)
    if isinstance(obj, dict):
        return {k: to_numpy(v) for k, v in obj.items()}
    return obj


def as_tensor(x, dtype=torch.float64):
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=dtype)


def numpy_io(fn):
    """Run a torch kernel on numpy inputs and hand numpy back.

    If any argument already is a tensor the call goes through untouched so the
    kernel can be used inside autograd graphs.
    """

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        if _is_tensor_call(args, kwargs):
            return fn(*args, **kwargs)
        conv = lambda a: torch.from_numpy(np.array(a, dtype=np.float64)) if isinstance(a, np.ndarray) else a
        out = fn(*(conv(a) for a in args), **{k: conv(v) for k, v in kwargs.items()})
        return to_numpy(out)

    return wrapper


# --------------------------------------------------------------------------
# Mandel conversions
# --------------------------------------------------------------------------


@numpy_io
def to_mandel(A):
    """3x3 symmetric matrix (..., 3, 3) -> Mandel 6-vector (..., 6)."""
    A = as_tensor(A)
    w = _MANDEL_W.to(A.dtype)
    return A[..., _PAIR_I, _PAIR_J] * w


@numpy_io
def from_mandel(v):
    """Mandel 6-vector (..., 6) -> symmetric 3x3 matrix (..., 3, 3)."""
    v = as_tensor(v)
    c = v / _MANDEL_W.to(v.dtype)
    rows = [
        torch.stack([c[..., 0], c[..., 2], c[..., 4]], -1),
        torch.stack([c[..., 2], c[..., 1], c[..., 5]], -1),
        torch.stack([c[..., 4], c[..., 5], c[..., 3]], -1),
    ]
    return torch.stack(rows, -2)


def mandel_inner(a, b):
    """Mandel dot product, equal to the double contraction of the 3x3 forms."""
    return (np.asarray(a) * np.asarray(b)).sum(-1)


def tensor4_to_mandel(T):
    """Full 3x3x3x3 array with minor symmetries -> 6x6 Mandel matrix."""
    T = np.asarray(T, dtype=float)
    w = _MANDEL_W.numpy()
    M = np.empty(T.shape[:-4] + (6, 6))
    for I, (i, j) in enumerate(MANDEL_PAIRS):
        for J, (k, l) in enumerate(MANDEL_PAIRS):
            M[..., I, J] = w[I] * w[J] * T[..., i, j, k, l]
    return M


def mandel_to_tensor4(M):
    """6x6 Mandel matrix -> full 3x3x3x3 array with minor symmetries."""
    M = np.asarray(M, dtype=float)
    w = _MANDEL_W.numpy()
    T = np.empty(M.shape[:-2] + (3, 3, 3, 3))
    for I, (i, j) in enumerate(MANDEL_PAIRS):
        for J, (k, l) in enumerate(MANDEL_PAIRS):
            val = M[..., I, J] / (w[I] * w[J])
            for a, b in ((i, j), (j, i)):
                for c, d in ((k, l), (l, k)):
                    T[..., a, b, c, d] = val
    return T


# --------------------------------------------------------------------------
# Rotations
# --------------------------------------------------------------------------


@numpy_io
def quat_to_rotmat(q, eps: float = 1e-8):
    """Rotation matrix of a scalar-first quaternion ``(w, x, y, z)``.

    The quaternion is normalized internally, so any nonzero multiple gives the
    same rotation. Batched over leading dimensions.
    """
    q = as_tensor(q)
    norm = torch.linalg.vector_norm(q, dim=-1, keepdim=True)
    if bool((norm <= eps).any()):
        raise DegenerateQuaternion(f"quaternion norm below {eps}")
    w, x, y, z = (q / norm).unbind(-1)
    rows = [
        torch.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        torch.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        torch.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ]
    return torch.stack(rows, -2)


def axis_angle_quat(axis, angle):
    """Unit quaternion for a rotation of ``angle`` radians about ``axis``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[math.cos(angle / 2)], math.sin(angle / 2) * axis])


@numpy_io
def mandel_rotation(R):
    """6x6 orthogonal operator ``Q`` acting on Mandel vectors for rotation ``R``.

    ``Q[I, J] = w_I w_J (R_ik R_jl + R_il R_jk) / 2`` with ``I = (i, j)``,
    ``J = (k, l)`` and ``w`` the Mandel weights.
    """
    R = as_tensor(R)
    i, j = _PAIR_I, _PAIR_J
    Rik = R[..., i[:, None], i[None, :]]
    Rjl = R[..., j[:, None], j[None, :]]
    Ril = R[..., i[:, None], j[None, :]]
    Rjk = R[..., j[:, None], i[None, :]]
    w = _MANDEL_W.to(R.dtype)
    return 0.5 * (w[:, None] * w[None, :]) * (Rik * Rjl + Ril * Rjk)


@numpy_io
def rotate_stiffness(C, R):
    """Rotate a Mandel 6x6 tensor: ``Q C Q^T`` with ``Q = mandel_rotation(R)``."""
    Q = mandel_rotation(as_tensor(R))
    return Q @ as_tensor(C) @ Q.transpose(-1, -2)


@numpy_io
def rotate_sym2(t, R):
    """Rotate a 3x3 second-order tensor: ``R t R^T``."""
    R = as_tensor(R)
    return R @ as_tensor(t) @ R.transpose(-1, -2)


@numpy_io
def rotate_mandel_vector(v, R):
    Q = mandel_rotation(as_tensor(R))
    return (Q @ as_tensor(v).unsqueeze(-1)).squeeze(-1)


# --------------------------------------------------------------------------
# Constituent builders
# --------------------------------------------------------------------------


def _check_spd(M, what):
    eig = torch.linalg.eigvalsh(0.5 * (M + M.transpose(-1, -2)))
    if bool((eig <= 0).any()):
        raise NotPositiveDefinite(f"{what} is not positive definite (min eigenvalue {float(eig.min()):.3e})")


def _ortho_compliance_t(E1, E2, E3, nu12, nu13, nu23, G12, G13, G23):
    E1, E2, E3, nu12, nu13, nu23, G12, G13, G23 = torch.broadcast_tensors(
        *(as_tensor(x) for x in (E1, E2, E3, nu12, nu13, nu23, G12, G13, G23))
    )
    z = torch.zeros_like(E1)
    s12 = -nu12 / E1
    s13 = -nu13 / E1
    s23 = -nu23 / E2
    # Mandel order (11, 22, 12, 33, 13, 23); shear compliance is 1/(2G)
    rows = [
        [1 / E1, s12, z, s13, z, z],
        [s12, 1 / E2, z, s23, z, z],
        [z, z, 1 / (2 * G12), z, z, z],
        [s13, s23, z, 1 / E3, z, z],
        [z, z, z, z, 1 / (2 * G13), z],
        [z, z, z, z, z, 1 / (2 * G23)],
    ]
    return torch.stack([torch.stack(r, -1) for r in rows], -2)


@numpy_io
def ortho_compliance(E1, E2, E3, nu12, nu13, nu23, G12, G13, G23):
    """Mandel compliance of an orthotropic solid from its nine engineering constants."""
    return _ortho_compliance_t(E1, E2, E3, nu12, nu13, nu23, G12, G13, G23)


@numpy_io
def ortho_stiffness(E1, E2, E3, nu12, nu13, nu23, G12, G13, G23, check: bool = True):
    """Orthotropic Mandel stiffness; ``nu_ij`` follows ``nu_ij / E_i = nu_ji / E_j``.

    Raises
    ------
    NotPositiveDefinite
        If the constants are thermodynamically inadmissible.
    """
    S = _ortho_compliance_t(E1, E2, E3, nu12, nu13, nu23, G12, G13, G23)
    if check:
        _check_spd(S, "compliance")
    C = torch.linalg.inv(S)
    return 0.5 * (C + C.transpose(-1, -2))


def transiso_constants(EL, ET, nuLT, nuTT, GLT):
    """Nine orthotropic constants of a transversely isotropic solid with axis e1."""
    GTT = ET / (2 * (1 + nuTT))
    return (EL, ET, ET, nuLT, nuLT, nuTT, GLT, GLT, GTT)


def transiso_stiffness(EL, ET, nuLT, nuTT, GLT, check: bool = True):
    """Transversely isotropic stiffness, symmetry axis along local e1."""
    return ortho_stiffness(*transiso_constants(EL, ET, nuLT, nuTT, GLT), check=check)


def iso_constants(E, nu):
    G = E / (2 * (1 + nu))
    return (E, E, E, nu, nu, nu, G, G, G)


def iso_stiffness(E, nu, check: bool = True):
    """Isotropic Mandel stiffness ``3K J + 2G K`` from Young's modulus and Poisson ratio."""
    return ortho_stiffness(*iso_constants(E, nu), check=check)


def iso_conductivity(k):
    return float(k) * np.eye(3)


def ortho_conductivity(k1, k2, k3):
    return np.diag([float(k1), float(k2), float(k3)])


def iso_cte(alpha):
    """Isotropic expansion tensor as a Mandel 6-vector."""
    return float(alpha) * np.array([1.0, 1.0, 0.0, 1.0, 0.0, 0.0])


def ortho_cte(a1, a2, a3):
    return np.array([a1, a2, 0.0, a3, 0.0, 0.0], dtype=float)


def is_spd(M, tol: float = 0.0) -> bool:
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, np.swapaxes(M, -1, -2), rtol=1e-10, atol=1e-12 * np.abs(M).max()):
        return False
    return bool((np.linalg.eigvalsh(M) > tol).all())


IDENTITY_MANDEL = np.array([1.0, 1.0, 0.0, 1.0, 0.0, 0.0])
