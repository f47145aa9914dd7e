"""Inverse identification of phase constants and volume fraction.

The phase stiffnesses are parameterized by multipliers of their initial
engineering constants, so the symmetry class chosen for each phase is kept
during the search. The volume fraction is clamped to the open unit interval
after every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError, Diverged
from .network import forward_stiffness_t
from .parametric import ParamNet, eval_params_t
from .tensors import iso_constants, ortho_stiffness, transiso_constants
from .training import rprop_minimize

N_CONSTANTS = {"iso": 2, "transiso": 5, "ortho": 9}
VF_CLAMP = 1e-6


def _expand(kind, c):
    if kind == "iso":
        return iso_constants(c[0], c[1])
    if kind == "transiso":
        return transiso_constants(*c)
    return tuple(c)


@dataclass
class PhaseGuess:
    """Symmetry class and engineering constants of one phase.

    ``iso``: (E, nu). ``transiso``: (EL, ET, nuLT, nuTT, GLT) with axis e1.
    ``ortho``: (E1, E2, E3, nu12, nu13, nu23, G12, G13, G23).
    """

    kind: str
    constants: np.ndarray

    def __post_init__(self):
        if self.kind not in N_CONSTANTS:
            raise ConfigError(f"unknown symmetry class {self.kind!r}")
        self.constants = np.asarray(self.constants, dtype=float)
        if self.constants.shape != (N_CONSTANTS[self.kind],):
            raise ConfigError(f"{self.kind} needs {N_CONSTANTS[self.kind]} constants")

    def stiffness(self, scale=None):
        c = self.constants if scale is None else scale * torch.as_tensor(self.constants)
        return ortho_stiffness(*_expand(self.kind, c), check=scale is None)


@dataclass
class IdentifyResult:
    """Identified phases and volume fraction.

    ``history`` rows are ``(iteration, loss, vf)``. ``diverged`` is set when
    the loss grew to ten times its starting value.
    """

    phase1: PhaseGuess
    phase2: PhaseGuess
    vf: float
    loss: float
    history: np.ndarray
    diverged: bool = False

    @property
    def relative_error(self) -> float:
        """Relative Frobenius error of the identified effective stiffness."""
        return float(np.sqrt(self.loss))


def _check_start(g1: PhaseGuess, g2: PhaseGuess, vf0: float):
    if not 0 < vf0 < 1:
        raise ConfigError("initial volume fraction must lie in (0, 1)")
    g1.stiffness()
    g2.stiffness()


def identify_many(net: ParamNet, Cbar_data, starts, q=(), iterations: int = 1000, lr: float = 1e-2,
                  tol: float = 0.0):
    """Run several independent identifications in one batched Rprop loop.

    ``starts`` is a sequence of ``(phase1, phase2, vf0)``; all first phases
    share one symmetry class, as do all second phases. The batched loss is
    the sum of the individual losses, and since Rprop acts coordinate by
    coordinate on gradient signs each run follows exactly the trajectory it
    would follow alone. ``tol`` stops the loop once every loss is below it.

    Returns
    -------
    list of IdentifyResult
    """
    starts = list(starts)
    if not starts:
        raise ConfigError("at least one starting guess is required")
    k1, k2 = starts[0][0].kind, starts[0][1].kind
    if any(g1.kind != k1 or g2.kind != k2 for g1, g2, _ in starts):
        raise ConfigError("all starts must use the same symmetry classes")
    for g1, g2, v in starts:
        _check_start(g1, g2, v)
    B = len(starts)
    c1 = torch.as_tensor(np.stack([g1.constants for g1, _, _ in starts]))
    c2 = torch.as_tensor(np.stack([g2.constants for _, g2, _ in starts]))
    Cd = torch.as_tensor(np.asarray(Cbar_data, dtype=float))
    ref = float(torch.sum(Cd * Cd))
    tp = net.torch_params()
    q = np.asarray(q, dtype=float).reshape(-1)
    qn = (torch.as_tensor(q) - torch.as_tensor(net.p_offset[1:])) / torch.as_tensor(net.p_scale[1:])
    ti = None if net.theta_in is None else torch.as_tensor(net.theta_in)
    params = {
        "z1": torch.ones(B, N_CONSTANTS[k1], dtype=torch.float64, requires_grad=True),
        "z2": torch.ones(B, N_CONSTANTS[k2], dtype=torch.float64, requires_grad=True),
        "vf": torch.tensor([float(v) for _, _, v in starts], dtype=torch.float64, requires_grad=True),
    }

    def stiffness(kind, c):
        return ortho_stiffness(*_expand(kind, c.T), check=False)

    def loss_fn(x):
        with torch.no_grad():
            x["vf"].clamp_(VF_CLAMP, 1 - VF_CLAMP)
        vf_n = (x["vf"] - net.p_offset[0]) / net.p_scale[0]
        p = torch.cat([vf_n[:, None], qn.expand(B, -1)], -1)
        w, th = eval_params_t(tp, net.arch, p, net.activation, net.beta)
        C = forward_stiffness_t(w, th, stiffness(k1, x["z1"] * c1), stiffness(k2, x["z2"] * c2), ti)
        per = torch.sum((C - Cd) ** 2, (-1, -2)) / ref
        return per.sum(), (per.detach().numpy().copy(), x["vf"].detach().numpy().copy())

    rows = []
    start = {}

    def record(it, total, info):
        per, vf = info
        start.setdefault("loss", per)
        rows.append((it, per, vf))
        if tol > 0 and np.all(per < tol):
            raise _Converged

    try:
        rprop_minimize(loss_fn, params, iterations, lr=lr, callback=record)
    except _Converged:
        pass
    z1, z2 = params["z1"].detach().numpy(), params["z2"].detach().numpy()
    its = np.array([r[0] for r in rows], dtype=float)
    losses = np.stack([r[1] for r in rows])
    vfs = np.stack([r[2] for r in rows])
    l0 = start["loss"]
    out = []
    for b, (g1, g2, _) in enumerate(starts):
        hist = np.column_stack([its, losses[:, b], vfs[:, b]])
        div = bool(l0[b] > 0 and np.any(losses[:, b] > 10 * l0[b]))
        out.append(IdentifyResult(PhaseGuess(k1, g1.constants * z1[b]), PhaseGuess(k2, g2.constants * z2[b]),
                                  float(vfs[-1, b]), float(losses[-1, b]), hist, div))
    return out


class _Converged(Exception):
    pass


def identify(net: ParamNet, Cbar_data, phase1: PhaseGuess, phase2: PhaseGuess, vf0: float, q=(),
             iterations: int = 1000, lr: float = 1e-2, tol: float = 0.0) -> IdentifyResult:
    """Fit phase constants and volume fraction so that ``net`` reproduces ``Cbar_data``.

    The loss is ``||Cbar(net) - Cbar_data||^2 / ||Cbar_data||^2``. ``q`` holds
    the fixed morphological parameters in physical units. ``tol`` stops the
    iteration once the loss drops below it.

    Raises
    ------
    Diverged
        If the loss grows to ten times its starting value.
    """
    res = identify_many(net, Cbar_data, [(phase1, phase2, vf0)], q, iterations, lr, tol)[0]
    if res.diverged:
        raise Diverged(f"identification loss grew from {res.history[0, 1]:.3e} to {res.history[:, 1].max():.3e}")
    return res
