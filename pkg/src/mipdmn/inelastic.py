"""Nonlinear online prediction with a trained network.

Every material node obeys the incrementally affine law
``dsig = C de + ds`` over a time step, with ``C`` the consistent tangent and
``ds`` the residual stress increment returned by its constitutive update.
One fixed-point iteration integrates all nodes, homogenizes the affine laws
up the tree and localizes the macroscopic strain increment back down to the
nodes. Aitken relaxation accelerates the iteration.

Node quantities live in the frame of their leaf laminate. Macroscopic
quantities are in the global frame. Everything here is plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, MaxIterationsExceeded, ReturnMappingDiverged
from .laminate import TangentResidual, lam_tangent_residual, localize_increment
from .network import DmnInstance, level_slice, propagate_weights
from .tensors import IDENTITY_MANDEL, iso_stiffness, mandel_rotation, quat_to_rotmat

SKIP_NORM = 1e-8
_J = np.outer(IDENTITY_MANDEL, IDENTITY_MANDEL) / 3.0
_IDEV = np.eye(6) - _J


# --------------------------------------------------------------------------
# Constitutive laws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MaterialLaw:
    """Isotropic linear elasticity, optionally with J2 power-law hardening.

    The yield stress is ``sigma0 + k * (p + eps_reg)**n``. ``stiffness``
    overrides the isotropic elastic stiffness for purely elastic laws.
    """

    kind: str = "elastic"
    E: float = 1.0
    nu: float = 0.3
    sigma0: float = 30.0
    k: float = 293.0
    n: float = 0.34
    eps_reg: float = 1e-6
    stiffness: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("elastic", "j2"):
            raise ConfigError(f"unknown material law {self.kind!r}")
        if self.kind == "j2":
            if self.stiffness is not None:
                raise ConfigError("J2 nodes use isotropic elasticity")
            if self.sigma0 <= 0 or self.k <= 0 or not 0 < self.n <= 1 or self.eps_reg <= 0:
                raise ConfigError("J2 constants need sigma0, k, eps_reg > 0 and 0 < n <= 1")

    @property
    def C(self) -> np.ndarray:
        if self.stiffness is not None:
            return np.asarray(self.stiffness, dtype=float)
        return iso_stiffness(self.E, self.nu)

    @property
    def G(self) -> float:
        return self.E / (2 * (1 + self.nu))

    @property
    def K(self) -> float:
        return self.E / (3 * (1 - 2 * self.nu))

    def yield_stress(self, p):
        return self.sigma0 + self.k * (p + self.eps_reg) ** self.n

    def hardening(self, p):
        return self.n * self.k * (p + self.eps_reg) ** (self.n - 1)

    @classmethod
    def elastic(cls, C=None, E=None, nu=None):
        if C is not None:
            return cls("elastic", stiffness=np.asarray(C, dtype=float))
        return cls("elastic", E=E, nu=nu)


def von_mises(sig):
    """Equivalent stress of Mandel stress vectors."""
    s = sig @ _IDEV
    return np.sqrt(1.5 * np.sum(s * s, -1))


@dataclass
class NodeState:
    """State of a set of material nodes (arrays over nodes).

    Attributes
    ----------
    eps, sig, eps_p : ndarray, shape (n, 6)
        Strain, stress (MPa) and plastic strain.
    peq : ndarray, shape (n,)
        Equivalent plastic strain.
    C : ndarray, shape (n, 6, 6)
        Tangent of the last update.
    ds : ndarray, shape (n, 6)
        Residual stress increment of the last update.
    """

    eps: np.ndarray
    sig: np.ndarray
    eps_p: np.ndarray
    peq: np.ndarray
    C: np.ndarray
    ds: np.ndarray

    @classmethod
    def initial(cls, n: int, C):
        z = np.zeros((n, 6))
        return cls(z.copy(), z.copy(), z.copy(), np.zeros(n), np.broadcast_to(C, (n, 6, 6)).copy(), z.copy())

    def copy(self) -> "NodeState":
        return NodeState(*(np.array(getattr(self, k)) for k in ("eps", "sig", "eps_p", "peq", "C", "ds")))

    def take(self, ix) -> "NodeState":
        return NodeState(*(getattr(self, k)[ix] for k in ("eps", "sig", "eps_p", "peq", "C", "ds")))

    def put(self, ix, other: "NodeState"):
        for k in ("eps", "sig", "eps_p", "peq", "C", "ds"):
            getattr(self, k)[ix] = getattr(other, k)


def matint(law: MaterialLaw, state: NodeState, de, max_newton: int = 50) -> NodeState:
    """Integrate ``law`` over strain increments ``de`` from ``state``.

    Returns the updated state carrying the consistent tangent ``C`` and the
    residual stress increment ``ds = dsig - C de``. J2 nodes use radial
    return with a scalar Newton solve of the consistency condition.

    Raises
    ------
    ReturnMappingDiverged
        If the Newton solve needs more than ``max_newton`` iterations.
    """
    de = np.atleast_2d(np.asarray(de, dtype=float))
    n = len(de)
    Ce = law.C
    trial = state.sig + de @ Ce.T
    new = NodeState(state.eps + de, trial, state.eps_p.copy(), state.peq.copy(), np.broadcast_to(Ce, (n, 6, 6)).copy(),
                    np.zeros((n, 6)))
    if law.kind == "elastic":
        return new
    G = law.G
    s = trial @ _IDEV
    snorm = np.linalg.norm(s, axis=-1)
    q_tr = np.sqrt(1.5) * snorm
    plastic = q_tr - law.yield_stress(state.peq) > 0
    if not plastic.any():
        return new
    ix = np.flatnonzero(plastic)
    p0, qt = state.peq[ix], q_tr[ix]
    dp = np.zeros(len(ix))
    tol = 1e-13 * np.maximum(qt, 1.0)
    for it in range(max_newton + 1):
        g = qt - 3 * G * dp - law.yield_stress(p0 + dp)
        if np.all(np.abs(g) <= tol):
            break
        if it == max_newton:
            raise ReturnMappingDiverged(f"return mapping did not converge in {max_newton} iterations")
        dp = dp + g / (3 * G + law.hardening(p0 + dp))
        dp = np.maximum(dp, 0.0)
    nhat = s[ix] / snorm[ix, None]
    flow = np.sqrt(1.5) * nhat
    new.sig[ix] = trial[ix] - 2 * G * dp[:, None] * flow
    new.eps_p[ix] += dp[:, None] * flow
    new.peq[ix] += dp
    H = law.hardening(p0 + dp)
    th = 1 - 3 * G * dp / qt
    thb = 1 / (1 + H / (3 * G)) - (1 - th)
    Ct = (3 * law.K * _J + 2 * G * th[:, None, None] * _IDEV - 2 * G * thb[:, None, None]
          * np.einsum("ni,nj->nij", nhat, nhat))
    new.C[ix] = Ct
    dsig = new.sig[ix] - state.sig[ix]
    new.ds[ix] = dsig - np.einsum("nij,nj->ni", Ct, de[ix])
    return new


# --------------------------------------------------------------------------
# Tree passes
# --------------------------------------------------------------------------


class TreeData(NamedTuple):
    """Per-level laminate data of one forward pass (index 0 is the root level).

    ``C`` and ``ds`` are the rotated effective tangent and residual stress
    increment of every laminate, in the frame of its parent.
    """

    levels: list
    C: list
    ds: list


class Tree:
    """Fixed geometry of an instance: fractions, rotations and node weights."""

    def __init__(self, m: DmnInstance):
        if m.theta_in is not None:
            raise ConfigError("input rotations of material nodes are not supported by the nonlinear driver")
        self.m = m
        self.L = m.L
        wt = propagate_weights(m.w)
        self.f = [wt.fractions[level_slice(i)] for i in range(self.L)]
        R = quat_to_rotmat(m.theta)
        self.Q = [mandel_rotation(R[level_slice(i)]) for i in range(self.L)]
        self.weights = m.w / m.w.sum()
        self.phase = np.arange(m.n_nodes) % 2


def forward_pass(tree: Tree, C, ds) -> TreeData:
    """Homogenize the affine node laws up the tree.

    ``C`` is (N, 6, 6) and ``ds`` (N, 6). The root entries of the returned
    data are the macroscopic tangent and residual stress increment.
    """
    levels, Cs, dss = [None] * tree.L, [None] * tree.L, [None] * tree.L
    a_C, b_C = C[0::2], C[1::2]
    a_s, b_s = ds[0::2], ds[1::2]
    for i in range(tree.L - 1, -1, -1):
        res = lam_tangent_residual(a_C, b_C, a_s, b_s, tree.f[i])
        Q = tree.Q[i]
        Cr = Q @ res.C @ np.swapaxes(Q, -1, -2)
        sr = np.einsum("kij,kj->ki", Q, res.dsig)
        levels[i], Cs[i], dss[i] = res, Cr, sr
        a_C, b_C, a_s, b_s = Cr[0::2], Cr[1::2], sr[0::2], sr[1::2]
    return TreeData(levels, Cs, dss)


def backward_pass(tree: Tree, data: TreeData, de_bar, residual: bool = True):
    """Localize a macroscopic strain increment to the material nodes.

    With ``residual=False`` the residual stress corrections are dropped and
    only the strain concentration of the tangents is applied.

    Returns an (N, 6) array of node strain increments in leaf frames.
    """
    e = np.asarray(de_bar, dtype=float)[None, :]
    for i in range(tree.L):
        res: TangentResidual = data.levels[i]
        if not residual:
            res = res._replace(gn=np.zeros_like(res.gn))
        Q = tree.Q[i]
        local = np.einsum("kji,kj->ki", Q, e)
        e1, e2 = localize_increment(res, local, tree.f[i])
        e = np.empty((2 * len(local), 6))
        e[0::2], e[1::2] = e1, e2
    return e


def _integrate(laws, states: NodeState, x, tree: Tree) -> NodeState:
    new = states.copy()
    for ph, law in enumerate(laws):
        ix = np.flatnonzero(tree.phase == ph)
        new.put(ix, matint(law, states.take(ix), x[ix]))
    return new


def fixed_point_step(tree: Tree, laws, states: NodeState, de_bar, x):
    """One evaluation of ``F = backward . forward . matint`` at node increments ``x``.

    Returns ``(F(x), trial states, tree data)``.
    """
    trial = _integrate(laws, states, x, tree)
    data = forward_pass(tree, trial.C, trial.ds)
    return backward_pass(tree, data, de_bar), trial, data


def aitken_update(x, Fx, r, r_prev, omega_prev, omega_min: float = 1.0, omega_max: float = 2.0,
                  omega0: float = 1.0):
    """Aitken-relaxed next iterate.

    With ``r_prev`` ``None`` (first iteration) the relaxation is ``omega0``.
    When consecutive residuals coincide the previous factor is kept.

    Returns ``(x_next, omega)`` with ``x_next = F(x) + (omega - 1) r``.
    """
    if r_prev is None:
        omega = omega0
    else:
        dr = (r - r_prev).ravel()
        den = float(dr @ dr)
        if np.sqrt(den) < 1e-30:
            omega = omega_prev
        else:
            omega = -omega_prev * float(r_prev.ravel() @ dr) / den
        omega = float(np.clip(omega, omega_min, omega_max))
    return Fx + (omega - 1) * r, omega


@dataclass
class DriverConfig:
    """Fixed-point settings; ``rtol`` bounds ``||F(x) - x|| / ||de_bar||``."""

    rtol: float = 1e-1
    aitken: bool = True
    max_iter: int = 200
    omega0: float = 1.0
    omega_min: float = 1.0
    omega_max: float = 2.0


class IncrementResult(NamedTuple):
    C: np.ndarray
    dsig: np.ndarray
    iterations: int
    omegas: list
    states: NodeState
    data: TreeData


class Simulator:
    """Nonlinear response of one network with one law per phase."""

    def __init__(self, m: DmnInstance, laws, cfg: DriverConfig | None = None):
        if len(laws) != 2:
            raise ConfigError("one material law per phase is required")
        self.tree = Tree(m)
        self.laws = tuple(laws)
        self.cfg = cfg or DriverConfig()
        C0 = np.stack([self.laws[ph].C for ph in self.tree.phase])
        self.states = NodeState.initial(m.n_nodes, 0)
        self.states.C = C0
        self.data = forward_pass(self.tree, C0, np.zeros((m.n_nodes, 6)))
        self.sig_bar = np.zeros(6)
        self.eps_bar = np.zeros(6)

    def solve_increment(self, de_bar) -> IncrementResult:
        """Converge one macroscopic strain increment and commit the node states.

        The first iterate localizes ``de_bar`` with the concentration tensors
        of the last converged increment.

        Raises
        ------
        MaxIterationsExceeded
            If ``cfg.max_iter`` iterations do not converge; states are kept.
        """
        cfg, tree = self.cfg, self.tree
        de_bar = np.asarray(de_bar, dtype=float)
        scale = np.linalg.norm(de_bar)
        x = backward_pass(tree, self.data, de_bar, residual=False)
        r_prev, omega, omegas = None, cfg.omega0, []
        for it in range(1, cfg.max_iter + 1):
            Fx, trial, data = fixed_point_step(tree, self.laws, self.states, de_bar, x)
            r = Fx - x
            if np.linalg.norm(r) < cfg.rtol * scale:
                break
            if cfg.aitken:
                x, omega = aitken_update(x, Fx, r, r_prev, omega, cfg.omega_min, cfg.omega_max, cfg.omega0)
            else:
                x = Fx
            omegas.append(omega)
            r_prev = r
        else:
            raise MaxIterationsExceeded(f"no convergence after {cfg.max_iter} fixed-point iterations")
        Cbar, dsb = data.C[0][0], data.ds[0][0]
        dsig = Cbar @ de_bar + dsb
        self.states, self.data = trial, data
        self.sig_bar = self.sig_bar + dsig
        self.eps_bar = self.eps_bar + de_bar
        return IncrementResult(Cbar, dsig, it, omegas, trial, data)

    def node_average(self, v):
        """Weighted average of a per-node scalar."""
        return float(self.tree.weights @ v)


def mechanical_power(sig_n, sig_np1, de, dt):
    """Trapezoidal power ``(sig_n + sig_np1) . de / (2 dt)``."""
    return float(np.dot(np.asarray(sig_n) + np.asarray(sig_np1), np.asarray(de))) / (2 * dt)


def node_power(sig_n, sig_np1, de, weights, dt):
    """Weighted average over nodes of the trapezoidal power (arrays over nodes)."""
    p = np.sum((np.asarray(sig_n) + np.asarray(sig_np1)) * np.asarray(de), -1) / (2 * dt)
    w = np.asarray(weights, dtype=float)
    return float(w @ p / w.sum())


def temporal_error(y, y_ref, t):
    """``int ||y - y_ref|| dt / int ||y_ref|| dt`` by the trapezoidal rule."""
    y = np.asarray(y, dtype=float).reshape(len(t), -1)
    y_ref = np.asarray(y_ref, dtype=float).reshape(len(t), -1)
    num = np.trapezoid(np.linalg.norm(y - y_ref, axis=-1), t)
    den = np.trapezoid(np.linalg.norm(y_ref, axis=-1), t)
    return float(num / den)


# --------------------------------------------------------------------------
# Load paths
# --------------------------------------------------------------------------


CYCLIC_AMPLITUDE = np.array([0.01, 0.04, np.sqrt(2) * 0.04, -0.02, 0.0, 0.0])


@dataclass
class LoadPath:
    """Macroscopic strain history starting from zero.

    ``t`` has shape (T + 1,) and ``eps`` shape (T + 1, 6) with ``eps[0] = 0``.
    """

    t: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.eps = np.asarray(self.eps, dtype=float).reshape(len(self.t), 6)
        if not np.all(np.isfinite(self.eps)) or not np.allclose(self.eps[0], 0.0):
            raise ConfigError("load path must be finite and start from zero strain")
        if np.any(np.diff(self.t) <= 0):
            raise ConfigError("load path times must increase")

    @classmethod
    def profile(cls, amplitude, knots, values, steps_per_segment: int = 20):
        """Proportional path ``amplitude * f(t)`` with piecewise-linear ``f``."""
        knots = np.asarray(knots, dtype=float)
        t = np.concatenate([np.linspace(knots[j], knots[j + 1], steps_per_segment + 1)[(j > 0):]
                            for j in range(len(knots) - 1)])
        f = np.interp(t, knots, values)
        return cls(t, f[:, None] * np.asarray(amplitude, dtype=float))


def cyclic_path(amplitude=CYCLIC_AMPLITUDE, steps_per_segment: int = 20, cycles: int = 1):
    """Load to the amplitude, unload, reverse and return to zero, ``cycles`` times."""
    vals = [0.0] + [1.0, 0.0, -1.0, 0.0] * cycles
    return LoadPath.profile(amplitude, np.arange(len(vals)), vals, steps_per_segment)


@dataclass
class PathResult:
    """Time series of a simulation; node arrays are per step after commit."""

    t: np.ndarray
    eps: np.ndarray
    sig: np.ndarray
    iterations: np.ndarray
    omegas: list
    peq_mean: np.ndarray
    power: np.ndarray
    node_power: np.ndarray
    dissipation: np.ndarray
    states: list = field(default_factory=list)

    @property
    def total_iterations(self) -> int:
        return int(self.iterations.sum())

    def power_gap(self) -> float:
        """Relative L1 gap between macroscopic and node-averaged power over time."""
        num = np.trapezoid(np.abs(self.power - self.node_power), self.t)
        den = np.trapezoid(np.abs(self.power), self.t)
        return float(num / den)


def run_path(m: DmnInstance, laws, path: LoadPath, cfg: DriverConfig | None = None,
             keep_states: bool = False) -> PathResult:
    """Drive the network along ``path`` increment by increment.

    Increments with ``||de_bar|| <= 1e-8`` are skipped (the state is kept).
    ``power`` and ``node_power`` are the trapezoidal powers of each step;
    ``dissipation`` is the node-averaged plastic work of each step.
    """
    sim = Simulator(m, laws, cfg)
    T = len(path.t)
    sig = np.zeros((T, 6))
    its = np.zeros(T, dtype=int)
    peq = np.zeros(T)
    pw = np.zeros(T)
    npw = np.zeros(T)
    dis = np.zeros(T)
    omegas, states = [[]], [sim.states.copy()] if keep_states else []
    for j in range(1, T):
        de = path.eps[j] - path.eps[j - 1]
        dt = path.t[j] - path.t[j - 1]
        old = sim.states
        if np.linalg.norm(de) <= SKIP_NORM:
            sig[j], peq[j] = sim.sig_bar, peq[j - 1]
            omegas.append([])
            if keep_states:
                states.append(sim.states.copy())
            continue
        s0 = sim.sig_bar.copy()
        res = sim.solve_increment(de)
        new = sim.states
        sig[j], its[j] = sim.sig_bar, res.iterations
        omegas.append(res.omegas)
        peq[j] = sim.node_average(new.peq)
        pw[j] = mechanical_power(s0, sim.sig_bar, de, dt)
        npw[j] = node_power(old.sig, new.sig, new.eps - old.eps, sim.tree.weights, dt)
        dep = new.eps_p - old.eps_p
        dis[j] = sim.node_average(np.sum(new.sig * dep, -1))
        if keep_states:
            states.append(new.copy())
    return PathResult(path.t, path.eps, sig, its, omegas, peq, pw, npw, dis, states)
