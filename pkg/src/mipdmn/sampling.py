"""Material and parameter-space sampling."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, EmptySampling, RejectionBudgetExceeded
from .tensors import is_spd, ortho_compliance, ortho_stiffness


@dataclass
class MaterialRanges:
    """Ranges of the 19-dimensional material design.

    Moduli are log-uniform, Poisson ratios uniform. The contrast factor is
    log-uniform and multiplies every modulus of phase 2.
    """

    E: tuple = (1.0e3, 1.0e4)
    nu: tuple = (0.15, 0.45)
    G: tuple = (3.0e2, 4.0e3)
    contrast: tuple = (1.0e-1, 1.0e4)

    def to_dict(self):
        return {k: list(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) for k, v in d.items()})


def _log_map(u, lo, hi):
    if lo <= 0 or hi <= 0:
        raise ConfigError("log-uniform ranges must be positive")
    return np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo)))


def _constants(u, r: MaterialRanges):
    """Nine orthotropic constants from nine unit-interval coordinates."""
    E = _log_map(u[..., 0:3], *r.E)
    nu = r.nu[0] + u[..., 3:6] * (r.nu[1] - r.nu[0])
    G = _log_map(u[..., 6:9], *r.G)
    return np.concatenate([E, nu, G], -1)


def sample_materials(n: int, ranges: MaterialRanges | None = None, seed=None, max_reject: float = 0.9,
                     return_constants: bool = False):
    """Latin-hypercube draws of two orthotropic phases and a contrast factor.

    Draws whose compliance is not positive definite are discarded and the
    design is topped up with fresh Latin-hypercube batches.

    Parameters
    ----------
    n : int
        Number of material pairs.
    ranges : MaterialRanges, optional
    seed : int or SeedSequence, optional
    max_reject : float
        Largest tolerated fraction of rejected draws.

    Returns
    -------
    C1, C2 : ndarray, shape (n, 6, 6)
    constants : ndarray, shape (n, 19), only if ``return_constants``
        Nine constants of phase 1, nine of phase 2 (after contrast), contrast.

    Raises
    ------
    RejectionBudgetExceeded
        If more than ``max_reject`` of all draws fail the SPD check.
    """
    if n < 1:
        raise EmptySampling("at least one material sample is required")
    r = ranges or MaterialRanges()
    rng = np.random.default_rng(seed)
    kept, drawn = [], 0
    while len(kept) < n:
        batch = max(n - len(kept), 8)
        u = qmc.LatinHypercube(d=19, seed=rng).random(batch)
        drawn += batch
        for row in u:
            c1 = _constants(row[0:9], r)
            c2 = _constants(row[9:18], r)
            k = _log_map(row[18], *r.contrast)
            c2 = c2.copy()
            c2[[0, 1, 2, 6, 7, 8]] *= k
            if is_spd(ortho_compliance(*c1)) and is_spd(ortho_compliance(*c2)):
                kept.append(np.concatenate([c1, c2, [k]]))
                if len(kept) == n:
                    break
        if drawn > 20 and 1 - len(kept) / drawn > max_reject:
            raise RejectionBudgetExceeded(f"{drawn - len(kept)} of {drawn} draws were not positive definite")
    consts = np.array(kept)
    C1 = ortho_stiffness(*consts[:, 0:9].T)
    C2 = ortho_stiffness(*consts[:, 9:18].T)
    return (C1, C2, consts) if return_constants else (C1, C2)


def youngs_contrast(consts):
    """Ratio of geometric-mean Young's moduli (phase 2 over phase 1)."""
    consts = np.asarray(consts)
    g1 = np.exp(np.log(consts[:, 0:3]).mean(-1))
    g2 = np.exp(np.log(consts[:, 9:12]).mean(-1))
    return g2 / g1


def vf_collocation(n: int):
    """Uniform volume fractions ``i / (n - 1)``, ``i = 0 .. n - 1``."""
    if n < 1:
        raise EmptySampling("need at least one collocation point")
    if n == 1:
        return np.array([0.5])
    return np.arange(n) / (n - 1)


def sobol_collocation(n: int, dim: int):
    """First ``n`` points of the unscrambled Sobol sequence in ``[0, 1]^dim``.

    The leading all-zero point is skipped, so in one dimension the sequence
    starts 0.5, 0.75, 0.25.
    """
    if n < 1 or dim < 1:
        raise EmptySampling("need at least one point in at least one dimension")
    eng = qmc.Sobol(d=dim, scramble=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        pts = eng.random(n + 1)
    return pts[1:]


def split_indices(n: int, train_fraction: float = 0.8, seed=None):
    """Random boolean mask selecting ``round(train_fraction * n)`` training items."""
    rng = np.random.default_rng(seed)
    n_train = int(round(train_fraction * n))
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[:n_train]] = True
    return mask
