"""Closed-form rank-1 laminate homogenization.

The lamination direction is the local ``e3`` axis. In Mandel order the
first three components of a strain/stress are the tangential part and the
last three the normal part, so every block partition below is a plain slice.

All kernels accept leading batch dimensions. The stiffness, conductivity
and expansion kernels are torch functions that also take numpy input; the
incremental tangent kernel used by the nonlinear driver is plain numpy.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import torch

from .errors import NearIdenticalPhases, SingularInterfaceMatrix
from .tensors import as_tensor, numpy_io

T = slice(0, 3)
N = slice(3, 6)
IDENTICAL_TOL = 1e-9


class LaminateResult(NamedTuple):
    """Effective tensor and the strain (or gradient) localization of phase 1.

    ``A2`` is the localization tensor of phase 2, so that
    ``f * A + (1 - f) * A2 = I``.
    """

    C: object
    A: object
    A2: object
    alpha: object = None


class TangentResidual(NamedTuple):
    """Laminate response under an incrementally affine phase behaviour.

    ``dsig`` is the effective residual stress increment. The phase strain
    increments follow from ``A @ de + (1 - f) * g`` and ``A2 @ de - f * g``
    where ``g`` has zero tangential part and normal part ``gn``.
    """

    C: np.ndarray
    dsig: np.ndarray
    A: np.ndarray
    A2: np.ndarray
    gn: np.ndarray


def _fraction(f, like):
    f = as_tensor(f).to(like.dtype)
    return f


def _sym(M):
    return 0.5 * (M + M.transpose(-1, -2))


def _inv_small(Y):
    """Inverse of a batch of SPD 1x1 or 3x3 blocks through the adjugate.

    Cheaper than a batched LAPACK call for tiny matrices and differentiable.
    """
    n = Y.shape[-1]
    if n == 1:
        det = Y[..., 0, 0]
        inv = 1.0 / Y
    else:
        a, b, c = Y[..., 0, 0], Y[..., 0, 1], Y[..., 0, 2]
        d, e, g = Y[..., 1, 0], Y[..., 1, 1], Y[..., 1, 2]
        h, k, m = Y[..., 2, 0], Y[..., 2, 1], Y[..., 2, 2]
        c00, c01, c02 = e * m - g * k, g * h - d * m, d * k - e * h
        det = a * c00 + b * c01 + c * c02
        adj = torch.stack(
            [
                torch.stack([c00, c * k - b * m, b * g - c * e], -1),
                torch.stack([c01, a * m - c * h, c * d - a * g], -1),
                torch.stack([c02, b * h - a * k, a * e - b * d], -1),
            ],
            -2,
        )
        inv = adj / det[..., None, None]
    if not bool((det > 0).all()):
        raise SingularInterfaceMatrix("interface matrix is not invertible; check that the inputs are SPD")
    return inv


def _mm(A, B):
    return torch.einsum("...ij,...jk->...ik", A, B)


def _split_kernel(K1, K2, f, nt: int, localization: bool = True):
    """Shared block algebra for both 6x6 stiffness and 3x3 conductivity.

    ``nt`` is the size of the tangential block. Returns the effective tensor
    and, if requested, the localization tensors of both phases.
    """
    n = K1.shape[-1]
    fb = f[..., None, None]
    t, nn = slice(0, nt), slice(nt, n)
    Y = (1 - fb) * K1[..., nn, nn] + fb * K2[..., nn, nn]
    Yinv = _inv_small(Y)
    D = K1 - K2
    # blocks written without differences of phase tensors where possible, so
    # that high contrast and f in {0, 1} lose no accuracy
    Y1, Y2 = _mm(K1[..., nn, nn], Yinv), _mm(K2[..., nn, nn], Yinv)
    Kbar_nn = _mm(Y1, K2[..., nn, nn])
    Kbar_nt = fb * _mm(Y2, K1[..., nn, t]) + (1 - fb) * _mm(Y1, K2[..., nn, t])
    Kbar_tt = (fb * K1[..., t, t] + (1 - fb) * K2[..., t, t]
               - fb * (1 - fb) * _mm(D[..., t, nn], _mm(Yinv, D[..., nn, t])))
    Kbar = _sym(torch.cat([torch.cat([Kbar_tt, Kbar_nt.transpose(-1, -2)], -1), torch.cat([Kbar_nt, Kbar_nn], -1)],
                          -2))
    if not localization:
        return Kbar, None, None
    Ant = _mm(Yinv, (1 - fb) * (K2[..., nn, t] - K1[..., nn, t]))
    Ann = _mm(Yinv, K2[..., nn, nn])
    top = torch.cat([torch.eye(nt, dtype=K1.dtype), torch.zeros(nt, n - nt, dtype=K1.dtype)], -1)
    batch = Ant.shape[:-2]
    A = torch.cat([top.expand(*batch, nt, n), torch.cat([Ant, Ann], -1)], -2)
    A2nt = Yinv @ (fb * (K1[..., nn, t] - K2[..., nn, t]))
    A2 = torch.cat([top.expand(*batch, nt, n), torch.cat([A2nt, Yinv @ K1[..., nn, nn]], -1)], -2)
    return Kbar, A, A2


@numpy_io
def lam_stiffness(C1, C2, f, localization: bool = True):
    """Effective stiffness of a two-phase laminate with normal ``e3``.

    Parameters
    ----------
    C1, C2 : array_like, shape (..., 6, 6)
        Mandel stiffnesses of the two phases in the laminate frame.
    f : float or array_like
        Volume fraction of phase 1.
    localization : bool, optional
        Skip the localization tensors (left as ``None``) when false.

    Returns
    -------
    LaminateResult
        ``C`` is the symmetrized effective stiffness; ``A`` maps the average
        strain to the phase-1 strain.

    Raises
    ------
    SingularInterfaceMatrix
        If the normal-normal interface block cannot be factorized.
    """
    C1, C2 = as_tensor(C1), as_tensor(C2)
    f = _fraction(f, C1)
    C, A, A2 = _split_kernel(C1, C2, f, 3, localization)
    return LaminateResult(C, A, A2)


@numpy_io
def lam_conductivity(k1, k2, f, localization: bool = True):
    """Effective 3x3 conductivity of a laminate with normal ``e3``.

    The gradient localization of phase 1 is returned as ``A``.
    """
    k1, k2 = as_tensor(k1), as_tensor(k2)
    f = _fraction(f, k1)
    k, A, A2 = _split_kernel(k1, k2, f, 2, localization)
    return LaminateResult(k, A, A2)


def _rel_gap(C1, C2):
    d = torch.linalg.matrix_norm(C1 - C2)
    s = torch.maximum(torch.linalg.matrix_norm(C1), torch.linalg.matrix_norm(C2))
    return d / s


@numpy_io
def cte_from_compliance(Sbar, S1, S2, a1, a2):
    """Effective expansion from the effective compliance of a two-phase body.

    ``a1 + (Sbar - S1) (S1 - S2)^-1 (a1 - a2)``, valid for any two-phase
    microstructure whose phases have a fixed orientation.
    """
    Sbar, S1, S2 = as_tensor(Sbar), as_tensor(S1), as_tensor(S2)
    a1, a2 = as_tensor(a1).to(S1.dtype), as_tensor(a2).to(S1.dtype)
    y = torch.linalg.solve(S1 - S2, (a1 - a2).unsqueeze(-1))
    return a1 + ((Sbar - S1) @ y).squeeze(-1)


@numpy_io
def lam_cte(C1, C2, a1, a2, f, strict: bool = False, localization: bool = True):
    """Effective stiffness and thermal expansion of a laminate.

    The expansion tensors are Mandel 6-vectors. When the two stiffnesses are
    practically identical the compliance difference cannot be inverted and
    the exact limit ``f a1 + (1 - f) a2`` is returned instead, unless
    ``strict`` is set, in which case :class:`NearIdenticalPhases` is raised.
    No rotation is applied here.
    """
    C1, C2 = as_tensor(C1), as_tensor(C2)
    a1, a2 = as_tensor(a1).to(C1.dtype), as_tensor(a2).to(C1.dtype)
    f = _fraction(f, C1)
    res = lam_stiffness(C1, C2, f, localization=localization)
    near = _rel_gap(C1, C2) < IDENTICAL_TOL
    if bool(near.any()) and strict:
        raise NearIdenticalPhases("phase stiffnesses coincide to within 1e-9")
    S1, S2, Sbar = torch.linalg.inv(C1), torch.linalg.inv(C2), torch.linalg.inv(res.C)
    eye = torch.eye(6, dtype=C1.dtype)
    nb = near[..., None, None]
    dS = torch.where(nb, eye, S1 - S2)
    y = torch.linalg.solve(dS, (a1 - a2).expand(*dS.shape[:-1]).unsqueeze(-1)).squeeze(-1)
    alpha = a1 + ((Sbar - S1) @ y.unsqueeze(-1)).squeeze(-1)
    limit = f[..., None] * a1 + (1 - f[..., None]) * a2
    alpha = torch.where(near[..., None], limit, alpha)
    return res._replace(alpha=alpha)


# --------------------------------------------------------------------------
# Incrementally affine laminate (numpy, used by the nonlinear driver)
# --------------------------------------------------------------------------


def lam_tangent_residual(C1, C2, ds1, ds2, f):
    """Laminate of two phases that obey ``dsig = C de + ds``.

    Parameters
    ----------
    C1, C2 : ndarray, shape (..., 6, 6)
        Tangent stiffnesses of the two phases.
    ds1, ds2 : ndarray, shape (..., 6)
        Residual stress increments of the two phases.
    f : float or ndarray, shape (...)
        Volume fraction of phase 1.

    Returns
    -------
    TangentResidual
        Effective tangent, effective residual stress increment and the data
        needed to localize an average strain increment back to the phases.
    """
    C1 = np.asarray(C1, dtype=float)
    C2 = np.asarray(C2, dtype=float)
    ds1 = np.asarray(ds1, dtype=float)
    ds2 = np.asarray(ds2, dtype=float)
    f = np.asarray(f, dtype=float)
    fb = f[..., None, None]
    X = (1 - fb) * C1[..., N, T] + fb * C2[..., N, T]
    Y = (1 - fb) * C1[..., N, N] + fb * C2[..., N, N]
    try:
        Yinv = np.linalg.inv(Y)
    except np.linalg.LinAlgError as exc:
        raise SingularInterfaceMatrix(str(exc)) from None
    batch = np.broadcast_shapes(C1.shape[:-2], C2.shape[:-2], fb.shape[:-2])

    def localization(K):
        A = np.zeros(batch + (6, 6))
        A[..., T, T] = np.eye(3)
        A[..., N, T] = Yinv @ (K[..., N, T] - X)
        A[..., N, N] = Yinv @ K[..., N, N]
        return A

    A = localization(C2)
    A2 = localization(C1)
    Cbar = fb * (C1 - C2) @ A + C2
    Cbar = 0.5 * (Cbar + np.swapaxes(Cbar, -1, -2))
    gn = (Yinv @ (ds2[..., N] - ds1[..., N])[..., None])[..., 0]
    g = np.zeros(batch + (6,))
    g[..., N] = gn
    fv = f[..., None]
    dsig = fv * (1 - fv) * ((C1 - C2) @ g[..., None])[..., 0] + fv * ds1 + (1 - fv) * ds2
    return TangentResidual(Cbar, dsig, A, A2, gn)


def localize_increment(res: TangentResidual, de, f):
    """Split an average strain increment into the two phase increments."""
    de = np.asarray(de, dtype=float)
    f = np.asarray(f, dtype=float)[..., None]
    g = np.zeros(np.broadcast_shapes(res.gn.shape[:-1], de.shape[:-1]) + (6,))
    g[..., N] = res.gn
    e1 = (res.A @ de[..., None])[..., 0] + (1 - f) * g
    e2 = (res.A2 @ de[..., None])[..., 0] - f * g
    return e1, e2
