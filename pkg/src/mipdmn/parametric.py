"""Parametric layer: microstructure parameters ``p = (vf, q)`` to network
weights and rotations.

Three architectures are provided:

``mi``
    weights depend on ``vf`` only, rotations on ``q`` only.
``fc``
    weights and rotations both depend on the full ``p``.
``plain``
    constant weights and rotations (a single network).

Morphological parameters are stored in physical units in datasets and mapped
affinely to ``[0, 1]`` with the ``p_offset``/``p_scale`` kept on the net. The
volume fraction is used as is.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .errors import ConfigError, DegenerateBase, DimensionMismatch, NoAnchors
from .network import DmnInstance, dmn_vf

ARCHS = ("mi", "fc", "plain")
ACTIVATIONS = ("relu", "softplus")
PARAM_NAMES = ("w0", "w1", "theta0", "Theta1")


def param_shapes(L: int, q: int, arch: str) -> dict:
    """Shapes of the fitting parameters of each architecture."""
    N, M = 2**L, 2**L - 1
    if arch == "mi":
        return {"w0": (N,), "w1": (N,), "theta0": (M, 4), "Theta1": (M, 4, q)}
    if arch == "fc":
        return {"w0": (N,), "w1": (N, q + 1), "theta0": (M, 4), "Theta1": (M, 4, q + 1)}
    if arch == "plain":
        return {"w0": (N,), "theta0": (M, 4)}
    raise ConfigError(f"unknown architecture {arch!r}")


def count_params(L: int, q: int, arch: str) -> dict:
    """Number of fitting parameters split into weights and rotations."""
    shapes = param_shapes(L, q, arch)
    size = lambda k: int(np.prod(shapes[k])) if k in shapes else 0
    w = size("w0") + size("w1")
    r = size("theta0") + size("Theta1")
    return {"weights": w, "rotations": r, "total": w + r}


@dataclass
class ParamNet:
    """Single-layer map from ``p`` to ``(w, theta)``.

    Attributes
    ----------
    L, q : int
        Tree depth and number of morphological parameters.
    arch : {'mi', 'fc', 'plain'}
    activation : {'relu', 'softplus'}
    beta : float
        Softplus sharpness.
    params : dict of ndarray
        Fitting parameters keyed by ``w0``, ``w1``, ``theta0``, ``Theta1``.
    p_offset, p_scale : ndarray, shape (q + 1,)
        Affine map of physical ``p`` onto the unit box.
    theta_in : ndarray, optional
        Constant input rotations of the material nodes.
    """

    L: int
    q: int
    arch: str
    params: dict
    activation: str = "relu"
    beta: float = 1.0
    p_offset: np.ndarray = None
    p_scale: np.ndarray = None
    theta_in: np.ndarray | None = None
    role: str = "model"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        shapes = param_shapes(self.L, self.q, self.arch)
        self.params = {k: np.asarray(v, dtype=float) for k, v in self.params.items() if k in shapes}
        for k, s in shapes.items():
            if k not in self.params:
                raise DimensionMismatch(f"missing parameter {k}")
            if self.params[k].shape != s:
                raise DimensionMismatch(f"{k} has shape {self.params[k].shape}, expected {s}")
        if self.p_offset is None:
            self.p_offset = np.zeros(self.q + 1)
        if self.p_scale is None:
            self.p_scale = np.ones(self.q + 1)
        self.p_offset = np.asarray(self.p_offset, dtype=float)
        self.p_scale = np.asarray(self.p_scale, dtype=float)

    @property
    def n_nodes(self) -> int:
        return 2**self.L

    def n_params(self) -> dict:
        return count_params(self.L, self.q, self.arch)

    def normalize(self, p):
        """Map physical parameters to the unit box (``vf`` is left alone)."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if p.shape[-1] != self.q + 1:
            raise DimensionMismatch(f"expected {self.q + 1} parameters, got {p.shape[-1]}")
        return (p - self.p_offset) / self.p_scale

    def torch_params(self, dtype=torch.float64, requires_grad=False) -> dict:
        return {k: torch.tensor(v, dtype=dtype, requires_grad=requires_grad) for k, v in self.params.items()}

    def with_params(self, params: dict) -> "ParamNet":
        new = {k: (v.detach().cpu().numpy() if isinstance(v, torch.Tensor) else v) for k, v in params.items()}
        return replace(self, params={k: np.array(v, dtype=float) for k, v in new.items()})

    def instance(self, p) -> DmnInstance:
        """Network instance at one parameter point ``p`` (physical units)."""
        w, theta = eval_params(self, p)
        return DmnInstance(w, theta, self.theta_in)


def activate(z, activation: str = "relu", beta: float = 1.0):
    if activation == "relu":
        return torch.relu(z)
    return torch.nn.functional.softplus(z, beta=beta)


def eval_params_t(params: dict, arch: str, p, activation="relu", beta=1.0):
    """Weights ``(..., N)`` and quaternions ``(..., M, 4)`` at normalized ``p``.

    ``p`` has shape (..., q + 1) with the volume fraction first.
    """
    if arch == "mi":
        vf, qv = p[..., 0], p[..., 1:]
        z = vf[..., None] * params["w1"] + params["w0"]
        theta = torch.einsum("mkj,...j->...mk", params["Theta1"], qv) + params["theta0"]
    elif arch == "fc":
        z = torch.einsum("nj,...j->...n", params["w1"], p) + params["w0"]
        theta = torch.einsum("mkj,...j->...mk", params["Theta1"], p) + params["theta0"]
    else:
        batch = p.shape[:-1]
        z = params["w0"].expand(*batch, -1)
        theta = params["theta0"].expand(*batch, -1, -1)
    return activate(z, activation, beta), theta


def eval_params(net: ParamNet, p):
    """Network weights and rotations at physical parameters ``p``.

    Returns numpy arrays ``w`` of shape (..., N) and ``theta`` of shape
    (..., 2**L - 1, 4). Quaternions are not normalized.

    Raises
    ------
    DimensionMismatch
        If ``p`` does not have ``q + 1`` entries.
    """
    pn = torch.as_tensor(net.normalize(p))
    squeeze = np.ndim(p) <= 1
    with torch.no_grad():
        w, th = eval_params_t(net.torch_params(), net.arch, pn, net.activation, net.beta)
    w, th = w.numpy(), th.numpy()
    if squeeze:
        w, th = w.reshape(-1), th.reshape(th.shape[-2:])
    return w, th


def init_params(L: int, q: int, arch: str = "mi", seed=None, activation: str = "relu", beta: float = 1.0,
                w_range=(0.2, 0.8)) -> ParamNet:
    """Random initial net: ``w0 ~ U(0.2, 0.8)``, unit random ``theta0`` and
    zero slopes ``w1``, ``Theta1``."""
    rng = np.random.default_rng(seed)
    shapes = param_shapes(L, q, arch)
    params = {k: np.zeros(s) for k, s in shapes.items()}
    params["w0"] = rng.uniform(*w_range, size=shapes["w0"])
    th = rng.standard_normal(shapes["theta0"])
    params["theta0"] = th / np.linalg.norm(th, axis=-1, keepdims=True)
    return ParamNet(L, q, arch, params, activation=activation, beta=beta)


def from_instance(m: DmnInstance, q: int = 0, arch: str = "mi") -> ParamNet:
    """Parametric net with zero slopes reproducing a fixed instance under ReLU."""
    shapes = param_shapes(m.L, q, arch)
    params = {k: np.zeros(s) for k, s in shapes.items()}
    params["w0"] = m.w.copy()
    params["theta0"] = m.theta.copy()
    return ParamNet(m.L, q, arch, params, theta_in=m.theta_in)


# --------------------------------------------------------------------------
# Interpolation baseline
# --------------------------------------------------------------------------


def transfer_scale(base_w, vf_base: float, vf_new: float):
    """Rescale phase weights so the phase-2 fraction moves from ``vf_base`` to ``vf_new``.

    Phase-1 entries are multiplied by ``(1 - vf_new) / (1 - vf_base)`` and
    phase-2 entries by ``vf_new / vf_base``. If ``vf_base`` is the fraction
    carried by ``base_w`` the result carries exactly ``vf_new``.

    Raises
    ------
    DegenerateBase
        If ``vf_base`` is 0 or 1.
    """
    if not 0.0 < vf_base < 1.0:
        raise DegenerateBase(f"base volume fraction {vf_base} must lie strictly inside (0, 1)")
    w = np.array(base_w, dtype=float)
    w[..., 0::2] *= (1 - vf_new) / (1 - vf_base)
    w[..., 1::2] *= vf_new / vf_base
    return w


def interpolate_instances(anchors, vf: float) -> DmnInstance:
    """Piecewise-linear blend of fixed instances trained at scalar anchors.

    ``anchors`` is a sequence of ``(vf_i, DmnInstance)``. Inside the anchor
    range weights and quaternions are interpolated componentwise; outside it
    the nearest end instance is rescaled with :func:`transfer_scale`.

    Raises
    ------
    NoAnchors
        If ``anchors`` is empty.
    """
    if len(anchors) == 0:
        raise NoAnchors("at least one anchor instance is required")
    anchors = sorted(anchors, key=lambda a: a[0])
    ps = np.array([a[0] for a in anchors], dtype=float)
    if vf <= ps[0] or vf >= ps[-1]:
        p0, m = anchors[0] if vf <= ps[0] else anchors[-1]
        if vf == p0:
            return m
        return DmnInstance(transfer_scale(m.w, dmn_vf(m.w), vf), m.theta, m.theta_in)
    j = int(np.searchsorted(ps, vf, side="right")) - 1
    (pa, ma), (pb, mb) = anchors[j], anchors[j + 1]
    t = (vf - pa) / (pb - pa)
    ti = None if ma.theta_in is None else (1 - t) * ma.theta_in + t * mb.theta_in
    return DmnInstance((1 - t) * ma.w + t * mb.w, (1 - t) * ma.theta + t * mb.theta, ti)
