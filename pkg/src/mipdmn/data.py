"""Records of (p, C1, C2, Cbar) and their grouping by parameter point."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptySampling

SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    """Flat collection of samples.

    Attributes
    ----------
    p : ndarray, shape (S, q + 1)
        Microstructure parameters, volume fraction first.
    C1, C2, Cbar : ndarray, shape (S, 6, 6)
        Phase and effective Mandel stiffnesses.
    split : ndarray of str, shape (S,)
        ``'train'``, ``'val'`` or ``'test'``.
    m_index : ndarray of int, shape (S,)
        Index of the material pair in the material design.
    """

    p: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    Cbar: np.ndarray
    split: np.ndarray
    m_index: np.ndarray

    def __post_init__(self):
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if self.p.shape[0] != len(self.C1) and len(self.C1) > 0:
            self.p = self.p.reshape(len(self.C1), -1)
        self.C1 = np.asarray(self.C1, dtype=float).reshape(-1, 6, 6)
        self.C2 = np.asarray(self.C2, dtype=float).reshape(-1, 6, 6)
        self.Cbar = np.asarray(self.Cbar, dtype=float).reshape(-1, 6, 6)
        self.split = np.asarray(self.split, dtype=str)
        self.m_index = np.asarray(self.m_index, dtype=int)
        n = len(self.C1)
        if not (len(self.C2) == len(self.Cbar) == len(self.split) == len(self.m_index) == n):
            raise DataError("inconsistent record counts")
        if n and len(self.p) != n:
            raise DataError("inconsistent parameter rows")
        bad = set(np.unique(self.split)) - set(SPLITS)
        if bad:
            raise DataError(f"unknown split labels {sorted(bad)}")

    def __len__(self):
        return len(self.C1)

    @property
    def q(self) -> int:
        return self.p.shape[1] - 1

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(self.p[mask], self.C1[mask], self.C2[mask], self.Cbar[mask], self.split[mask],
                       self.m_index[mask])

    def where(self, *splits) -> "Dataset":
        return self.subset(np.isin(self.split, splits))

    def unique_p(self):
        """Distinct parameter points (in order of appearance) and the group index of every record."""
        if len(self) == 0:
            raise EmptySampling("dataset is empty")
        _, first, inv = np.unique(self.p, axis=0, return_index=True, return_inverse=True)
        order = np.argsort(first)
        remap = np.empty_like(order)
        remap[order] = np.arange(len(order))
        return self.p[np.sort(first)], remap[inv.reshape(-1)]

    def groups(self):
        """List of ``(p, record indices)`` per distinct parameter point."""
        P, idx = self.unique_p()
        return [(P[k], np.flatnonzero(idx == k)) for k in range(len(P))]
