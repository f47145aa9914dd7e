"""Offline training of parametric networks.

The total loss is the mean squared relative Frobenius error on the effective
stiffness, averaged per parameter point and then over points, plus weighted
penalties that pull the learned volume fraction and orientation tensors
towards their targets at collocation points. Gradients come from torch
autograd and the optimizer is full-batch iRprop- with restarts.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import torch

from .data import Dataset
from .errors import ConfigError, EmptySampling, NonFiniteGradient
from .network import forward_stiffness_t, orientation_tensors_t
from .parametric import ParamNet, eval_params_t, init_params
from .sampling import sobol_collocation, vf_collocation

VF_PENALTY = 1.0
ORIENTATION_PENALTY = 3.0
DTYPES = {"f64": torch.float64, "f32": torch.float32}


# --------------------------------------------------------------------------
# Configuration and targets
# --------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Optimizer and loss settings.

    ``n_vf`` and ``n_a`` are the collocation counts for the two constraints;
    ``None`` means ``2**L``. ``tol`` stops a restart early once the total
    loss drops below it (0 disables).
    """

    epochs: int = 10000
    lr: float = 1e-2
    restarts: int = 20
    etas: tuple = (0.5, 1.2)
    step_sizes: tuple = (1e-6, 50.0)
    lambda_vf: float = 1.0
    lambda_a: float = 1.0
    n_vf: int | None = None
    n_a: int | None = None
    activation: str = "relu"
    beta: float = 1.0
    seed: int = 0
    precision: str = "f64"
    tol: float = 0.0

    def __post_init__(self):
        self.etas = tuple(self.etas)
        self.step_sizes = tuple(self.step_sizes)
        if self.epochs < 0 or self.restarts < 1 or self.lr <= 0:
            raise ConfigError("epochs, restarts and lr must be positive")
        if self.lambda_vf < 0 or self.lambda_a < 0:
            raise ConfigError("constraint weights must be nonnegative")
        if self.precision not in DTYPES:
            raise ConfigError(f"precision must be one of {sorted(DTYPES)}")

    @property
    def dtype(self):
        return DTYPES[self.precision]

    def to_dict(self):
        d = asdict(self)
        d["etas"], d["step_sizes"] = list(self.etas), list(self.step_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def unidirectional_targets():
    """Every material axis aligned with the matching global axis."""
    a = np.zeros((3, 3, 3))
    for i in range(3):
        a[i, i, i] = 1.0
    return a


def planar_isotropic_targets():
    """Axes 1 and 2 spread evenly in the 1-2 plane, axis 3 along ``e3``."""
    a = np.zeros((3, 3, 3))
    a[0] = a[1] = np.diag([0.5, 0.5, 0.0])
    a[2, 2, 2] = 1.0
    return a


PRESETS = {"unidirectional": unidirectional_targets, "planar_isotropic": planar_isotropic_targets}


@dataclass
class ConstraintTargets:
    """Target orientation tensors per phase.

    Attributes
    ----------
    phase1, phase2 : ndarray (3, 3, 3), callable, str or None
        Constant tensors ``a[axis]``, a preset name, or a callable mapping
        normalized parameter points (n, q + 1) to (n, 3, 3, 3). ``None``
        leaves a phase unconstrained.
    """

    phase1: object = None
    phase2: object = None

    def __post_init__(self):
        self.phase1 = self._resolve(self.phase1)
        self.phase2 = self._resolve(self.phase2)

    @staticmethod
    def _resolve(t):
        if isinstance(t, str):
            if t not in PRESETS:
                raise ConfigError(f"unknown orientation preset {t!r}")
            return PRESETS[t]()
        if t is None or callable(t):
            return t
        t = np.asarray(t, dtype=float)
        if t.shape != (3, 3, 3):
            raise ConfigError("orientation targets must have shape (3, 3, 3)")
        return t

    @classmethod
    def both(cls, t):
        return cls(t, t)

    @property
    def active(self) -> bool:
        return self.phase1 is not None or self.phase2 is not None

    def evaluate(self, p):
        """Targets at points ``p`` as ``(mask, tensor)`` with tensor (n, 2, 3, 3, 3)."""
        p = np.atleast_2d(p)
        out = np.zeros((len(p), 2, 3, 3, 3))
        mask = np.zeros(2, dtype=bool)
        for k, t in enumerate((self.phase1, self.phase2)):
            if t is None:
                continue
            mask[k] = True
            out[:, k] = t(p) if callable(t) else t
        return mask, out


# --------------------------------------------------------------------------
# Losses
# --------------------------------------------------------------------------


def _vf_penalty(w, vf):
    tot = w.sum(-1)
    pos = tot > 0
    vd = w[..., 1::2].sum(-1) / torch.where(pos, tot, torch.ones_like(tot))
    return torch.where(pos, (vd - vf) ** 2, torch.full_like(vd, VF_PENALTY))


def vf_points(L: int, q: int, arch: str, n: int | None = None):
    """Normalized collocation points for the volume fraction constraint.

    ``mi`` weights only see ``vf`` so a uniform grid is used. ``fc`` weights
    see the whole ``p``; they are probed on Sobol points and the constraint
    uses their ``vf`` components.
    """
    n = n or 2**L
    if arch == "fc" and q > 0:
        return sobol_collocation(n, q + 1)
    vf = vf_collocation(n)
    return np.concatenate([vf[:, None], np.full((n, q), 0.5)], -1)


def orientation_points(L: int, q: int, n: int | None = None):
    """Normalized Sobol collocation points for the orientation constraint."""
    return sobol_collocation(n or 2**L, q + 1)


def vf_constraint_loss(params, arch, p, activation="relu", beta=1.0):
    """Mean squared gap between the learned and requested volume fraction.

    A point where every weight vanishes contributes ``VF_PENALTY``.
    """
    w, _ = eval_params_t(params, arch, p, activation, beta)
    return _vf_penalty(w, p[..., 0]).mean()


def orientation_constraint_loss(params, arch, p, target, mask, activation="relu", beta=1.0, theta_in=None):
    """Squared Frobenius gap of the orientation tensors summed over phases, averaged over points.

    ``target`` is (n, 2, 3, 3, 3) and ``mask`` selects the constrained phases.
    A phase with no weight at a point contributes ``ORIENTATION_PENALTY``.
    """
    w, th = eval_params_t(params, arch, p, activation, beta)
    a, tot = orientation_tensors_t(w, th, theta_in)
    gap = ((a - target) ** 2).sum((-1, -2, -3))
    gap = torch.where(tot > 0, gap, torch.full_like(gap, ORIENTATION_PENALTY))
    return (gap * mask).sum(-1).mean()


def relative_errors_t(Cd, Cref):
    """Relative Frobenius error per sample."""
    return torch.linalg.norm(Cd - Cref, dim=(-2, -1)) / torch.linalg.norm(Cref, dim=(-2, -1))


class _Batch:
    """Training records arranged for batched evaluation.

    If every parameter point carries the same number of records the data is
    stored as dense (P, K, 6, 6) stacks; otherwise each point is kept apart.
    """

    def __init__(self, net: ParamNet, ds: Dataset, dtype):
        if len(ds) == 0:
            raise EmptySampling("training set is empty")
        P, _ = ds.unique_p()
        groups = ds.groups()
        t = lambda x: torch.as_tensor(np.asarray(x), dtype=dtype)
        self.P = P
        self.pn = t(net.normalize(P))
        sizes = {len(ix) for _, ix in groups}
        self.dense = len(sizes) == 1
        if self.dense:
            ix = np.stack([ix for _, ix in groups])
            self.C1, self.C2, self.Cbar = (t(x[ix]) for x in (ds.C1, ds.C2, ds.Cbar))
        else:
            self.parts = [tuple(t(x[ix]) for x in (ds.C1, ds.C2, ds.Cbar)) for _, ix in groups]

    def per_point(self, params, arch, activation, beta, theta_in=None):
        """Data loss per parameter point, shape (P,)."""
        w, th = eval_params_t(params, arch, self.pn, activation, beta)
        if self.dense:
            Cd = forward_stiffness_t(w[:, None], th[:, None], self.C1, self.C2, theta_in)
            return (relative_errors_t(Cd, self.Cbar) ** 2).mean(-1)
        out = []
        for k, (C1, C2, Cb) in enumerate(self.parts):
            Cd = forward_stiffness_t(w[k], th[k], C1, C2, theta_in)
            out.append((relative_errors_t(Cd, Cb) ** 2).mean())
        return torch.stack(out)


def data_loss(net: ParamNet, ds: Dataset):
    """Data term and per-sample relative errors of ``net`` on ``ds``.

    Returns
    -------
    loss : float
        Mean over parameter points of the mean squared error per point.
    e : ndarray, shape (len(ds),)
    """
    e = sample_errors(net, ds)
    _, idx = ds.unique_p()
    per_p = np.array([np.mean(e[idx == k] ** 2) for k in range(idx.max() + 1)])
    return float(per_p.mean()), e


def predict_stiffness(net: ParamNet, p, C1, C2):
    """Effective stiffness predicted by ``net`` for records ``(p, C1, C2)`` (numpy)."""
    p = np.atleast_2d(p)
    with torch.no_grad():
        w, th = eval_params_t(net.torch_params(), net.arch, torch.as_tensor(net.normalize(p)), net.activation,
                              net.beta)
        ti = None if net.theta_in is None else torch.as_tensor(net.theta_in)
        return forward_stiffness_t(w, th, torch.as_tensor(C1), torch.as_tensor(C2), ti).numpy()


def sample_errors(net: ParamNet, ds: Dataset):
    """Relative Frobenius error of ``net`` on every record of ``ds``."""
    out = np.empty(len(ds))
    for p, ix in ds.groups():
        Cd = predict_stiffness(net, p, ds.C1[ix], ds.C2[ix])
        out[ix] = np.linalg.norm(Cd - ds.Cbar[ix], axis=(-2, -1)) / np.linalg.norm(ds.Cbar[ix], axis=(-2, -1))
    return out


# --------------------------------------------------------------------------
# Objective
# --------------------------------------------------------------------------


class Objective:
    """Total training loss of one architecture on one dataset.

    Parameters
    ----------
    net : ParamNet
        Template fixing the architecture, activation and input scaling.
    ds : Dataset or None
        Training records; ``None`` trains on the constraints alone.
    targets : ConstraintTargets, optional
    cfg : TrainConfig
    """

    def __init__(self, net: ParamNet, ds: Dataset | None, targets: ConstraintTargets | None, cfg: TrainConfig):
        self.net, self.cfg = net, cfg
        self.dtype = cfg.dtype
        t = lambda x: torch.as_tensor(np.asarray(x), dtype=self.dtype)
        self.batch = None if ds is None else _Batch(net, ds, self.dtype)
        self.p_vf = t(vf_points(net.L, net.q, net.arch, cfg.n_vf))
        self.targets = targets if targets is not None else ConstraintTargets()
        pa = orientation_points(net.L, net.q, cfg.n_a)
        mask, tgt = self.targets.evaluate(pa)
        self.p_a, self.mask, self.tgt = t(pa), t(mask), t(tgt)
        self.theta_in = None if net.theta_in is None else t(net.theta_in)

    def terms(self, params):
        """Data term per point, vf term and orientation term (torch scalars).

        A term whose weight is zero is computed without a graph; it only
        feeds the history.
        """
        net, cfg = self.net, self.cfg
        args = (net.arch,)
        kw = dict(activation=cfg.activation, beta=cfg.beta)
        if self.batch is None:
            per_p = torch.zeros(0, dtype=self.dtype)
        else:
            per_p = self.batch.per_point(params, net.arch, cfg.activation, cfg.beta, self.theta_in)
        with torch.set_grad_enabled(cfg.lambda_vf > 0 and torch.is_grad_enabled()):
            lvf = vf_constraint_loss(params, *args, self.p_vf, **kw)
        if self.targets.active:
            with torch.set_grad_enabled(cfg.lambda_a > 0 and torch.is_grad_enabled()):
                la = orientation_constraint_loss(params, *args, self.p_a, self.tgt, self.mask,
                                                 theta_in=self.theta_in, **kw)
        else:
            la = torch.zeros((), dtype=self.dtype)
        return per_p, lvf, la

    def total(self, params):
        per_p, lvf, la = self.terms(params)
        data = per_p.mean() if len(per_p) else torch.zeros((), dtype=self.dtype)
        tot = data
        if self.cfg.lambda_vf > 0:
            tot = tot + self.cfg.lambda_vf * lvf
        if self.cfg.lambda_a > 0:
            tot = tot + self.cfg.lambda_a * la
        return tot, (per_p.detach(), float(lvf.detach()), float(la.detach()))


def total_loss(net: ParamNet, ds: Dataset | None, targets: ConstraintTargets | None = None,
               cfg: TrainConfig | None = None) -> float:
    """Data term plus weighted volume-fraction and orientation penalties."""
    cfg = cfg or TrainConfig(activation=net.activation, beta=net.beta)
    obj = Objective(net, ds, targets, cfg)
    with torch.no_grad():
        return float(obj.total(net.torch_params(cfg.dtype))[0])


def loss_gradient(net: ParamNet, ds: Dataset | None, targets: ConstraintTargets | None = None,
                  cfg: TrainConfig | None = None):
    """Total loss and its exact gradient with respect to every fitting parameter.

    At ReLU kinks the zero subgradient is used.

    Raises
    ------
    NonFiniteGradient
        If the loss or any gradient entry is not finite.
    """
    cfg = cfg or TrainConfig(activation=net.activation, beta=net.beta)
    obj = Objective(net, ds, targets, cfg)
    params = net.torch_params(cfg.dtype, requires_grad=True)
    tot, _ = obj.total(params)
    tot.backward()
    grads = {k: v.grad.detach().numpy().copy() for k, v in params.items()}
    if not np.isfinite(float(tot.detach())) or not all(np.isfinite(g).all() for g in grads.values()):
        raise NonFiniteGradient("loss or gradient is not finite")
    return float(tot.detach()), grads


# --------------------------------------------------------------------------
# Optimizer
# --------------------------------------------------------------------------


def rprop_minimize(fn: Callable, params: dict, epochs: int, lr: float = 1e-2, etas=(0.5, 1.2),
                   step_sizes=(1e-6, 50.0), tol: float = 0.0, callback: Callable | None = None):
    """Full-batch iRprop- on a dict of leaf tensors.

    ``fn(params)`` returns ``(loss, info)``. Each coordinate's step grows by
    ``etas[1]`` while its gradient keeps its sign and shrinks by ``etas[0]``
    on a sign flip, in which case that coordinate is not moved. ``callback``
    receives ``(epoch, loss, info)`` for every evaluated point, including the
    final one.

    Returns the final loss.

    Raises
    ------
    NonFiniteGradient
    """
    leaves = list(params.values())
    opt = torch.optim.Rprop(leaves, lr=lr, etas=tuple(etas), step_sizes=tuple(step_sizes))
    for epoch in range(epochs + 1):
        opt.zero_grad()
        loss, info = fn(params)
        if not torch.isfinite(loss):
            raise NonFiniteGradient(f"loss became {float(loss.detach())} at epoch {epoch}")
        if callback is not None:
            callback(epoch, float(loss.detach()), info)
        if epoch == epochs or float(loss.detach()) < tol:
            break
        loss.backward()
        for x in leaves:
            if x.grad is not None and not torch.isfinite(x.grad).all():
                raise NonFiniteGradient(f"gradient became non-finite at epoch {epoch}")
        opt.step()
    return float(loss.detach())


@dataclass
class FitResult:
    """Best net over restarts and the per-restart records.

    ``history`` rows are ``(epoch, data per point..., vf, orientation, total)``
    for the selected restart.
    """

    net: ParamNet
    loss: float
    history: np.ndarray
    history_columns: list
    restart_losses: list = field(default_factory=list)
    best_restart: int = 0
    seconds: float = 0.0


def restart_seeds(seed, n: int):
    """Independent integer seeds for ``n`` restarts."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def rprop_fit(net: ParamNet | None, ds: Dataset | None, targets: ConstraintTargets | None = None,
              cfg: TrainConfig | None = None, L: int | None = None, q: int | None = None,
              arch: str = "mi", p_offset=None, p_scale=None, log: Callable | None = None) -> FitResult:
    """Train a parametric net with restarts and keep the least final loss.

    If ``net`` is given a single run starts from its parameters. Otherwise
    ``cfg.restarts`` nets of depth ``L`` are initialized from independent
    seeds derived from ``cfg.seed``.

    Raises
    ------
    EmptySampling
        If ``ds`` is given but empty.
    NonFiniteGradient
        If every restart fails.
    """
    cfg = cfg or TrainConfig()
    if ds is not None and len(ds) == 0:
        raise EmptySampling("training set is empty")
    t0 = time.perf_counter()
    if net is not None:
        starts = [net]
    else:
        if L is None:
            raise ConfigError("either a starting net or the depth L is required")
        q = ds.q if q is None and ds is not None else (q or 0)
        starts = []
        for s in restart_seeds(cfg.seed, cfg.restarts):
            n = init_params(L, q, arch, seed=s, activation=cfg.activation, beta=cfg.beta)
            n.p_offset = n.p_offset if p_offset is None else np.asarray(p_offset, dtype=float)
            n.p_scale = n.p_scale if p_scale is None else np.asarray(p_scale, dtype=float)
            starts.append(n)
    obj = Objective(starts[0], ds, targets, cfg)
    n_p = 0 if obj.batch is None else len(obj.batch.P)
    cols = ["epoch"] + [f"data_p{k}" for k in range(n_p)] + ["vf", "orientation", "total"]
    best, losses = None, []
    for r, start in enumerate(starts):
        rows = []

        def record(epoch, loss, info):
            per_p, lvf, la = info
            rows.append([epoch, *per_p.tolist(), lvf, la, loss])

        params = start.torch_params(cfg.dtype, requires_grad=True)
        try:
            loss = rprop_minimize(obj.total, params, cfg.epochs, cfg.lr, cfg.etas, cfg.step_sizes, cfg.tol, record)
        except NonFiniteGradient as exc:
            losses.append(float("nan"))
            if log:
                log(f"restart {r}: {exc}")
            continue
        losses.append(loss)
        if log:
            log(f"restart {r}: final loss {loss:.6e}")
        if best is None or loss < best[0]:
            best = (loss, r, start.with_params(params), np.array(rows, dtype=float))
    if best is None:
        raise NonFiniteGradient("every restart failed")
    loss, r, trained, hist = best
    trained.meta = dict(trained.meta, train=cfg.to_dict(), best_restart=r)
    return FitResult(trained, loss, hist, cols, losses, r, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# Reporting
# --------------------------------------------------------------------------


QUANTILES = (0.1, 0.5, 0.9)


def quantile_report(errors, p, split=None):
    """Empirical 0.1, 0.5 and 0.9 quantiles of errors per parameter point and split.

    Quantiles interpolate linearly between order statistics.

    Returns
    -------
    list of dict
        One row per (split, p) with keys ``split``, ``p``, ``n``, ``q10``,
        ``q50``, ``q90``.
    """
    errors = np.asarray(errors, dtype=float)
    p = np.asarray(p, dtype=float).reshape(len(errors), -1)
    split = np.full(len(errors), "all") if split is None else np.asarray(split, dtype=str)
    rows = []
    for s in dict.fromkeys(split):
        ms = split == s
        P = np.unique(p[ms], axis=0)
        for pt in P:
            m = ms & np.all(p == pt, axis=-1)
            q10, q50, q90 = np.quantile(errors[m], QUANTILES)
            rows.append({"split": str(s), "p": pt.tolist(), "n": int(m.sum()), "q10": float(q10),
                         "q50": float(q50), "q90": float(q90)})
    return rows


def evaluate(net: ParamNet, ds: Dataset):
    """Per-sample errors and the quantile table of ``net`` on ``ds``."""
    e = sample_errors(net, ds)
    return e, quantile_report(e, ds.p, ds.split)
