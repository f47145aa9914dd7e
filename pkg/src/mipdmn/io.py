"""File formats: datasets, models, histories, load paths and run manifests.

Floats are written with ``repr`` so every value reads back bit for bit.
Stiffnesses are stored as their 21 upper-triangle Mandel entries.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DataError
from .parametric import ParamNet

FORMAT_VERSION = 1
QUATERNION_CONVENTION = "scalar-first (w, x, y, z), normalized on use"
TRIU = np.triu_indices(6)
MANDEL_LABELS = ("11", "22", "12", "33", "13", "23")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (str, np.str_)):
        return str(x)
    return repr(float(x))


def triu_entries(C):
    """Upper-triangle entries (21) of Mandel matrices, row by row."""
    return np.asarray(C)[..., TRIU[0], TRIU[1]]


def from_triu(v):
    v = np.asarray(v, dtype=float)
    C = np.zeros(v.shape[:-1] + (6, 6))
    C[..., TRIU[0], TRIU[1]] = v
    C[..., TRIU[1], TRIU[0]] = v
    return C


def triu_names(prefix: str):
    return [f"{prefix}_{i + 1}{j + 1}" for i, j in zip(*TRIU)]


def p_names(q: int):
    return ["vf"] + [f"q{k + 1}" for k in range(q)]


# --------------------------------------------------------------------------
# Generic CSV
# --------------------------------------------------------------------------


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(x) for x in r])


def read_csv(path):
    """Header and rows (as strings) of a CSV file."""
    try:
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            return header, [r for r in rd if r]
    except (OSError, StopIteration) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def read_numeric_csv(path):
    header, rows = read_csv(path)
    try:
        return header, np.array([[float(x) for x in r] for r in rows], dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# Datasets
# --------------------------------------------------------------------------


def dataset_header(q: int):
    return p_names(q) + triu_names("C1") + triu_names("C2") + triu_names("Cbar") + ["split", "m_index"]


def save_dataset(ds: Dataset, path):
    """Write ``ds`` as CSV or JSON depending on the file suffix."""
    path = Path(path)
    if path.suffix == ".json":
        recs = [
            {"p": ds.p[i].tolist(), "C1": triu_entries(ds.C1[i]).tolist(), "C2": triu_entries(ds.C2[i]).tolist(),
             "Cbar": triu_entries(ds.Cbar[i]).tolist(), "split": str(ds.split[i]), "m_index": int(ds.m_index[i])}
            for i in range(len(ds))
        ]
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(recs, indent=1) + "\n")
        return
    rows = (
        [*ds.p[i], *triu_entries(ds.C1[i]), *triu_entries(ds.C2[i]), *triu_entries(ds.Cbar[i]), ds.split[i],
         ds.m_index[i]]
        for i in range(len(ds))
    )
    write_csv(path, dataset_header(ds.q), rows)


def load_dataset(path) -> Dataset:
    """Read a dataset written by :func:`save_dataset`.

    Raises
    ------
    DataError
        If the file is missing or malformed.
    """
    path = Path(path)
    if path.suffix == ".json":
        try:
            recs = json.loads(path.read_text())
            return Dataset(
                np.array([r["p"] for r in recs], dtype=float).reshape(len(recs), -1),
                from_triu([r["C1"] for r in recs]).reshape(-1, 6, 6),
                from_triu([r["C2"] for r in recs]).reshape(-1, 6, 6),
                from_triu([r["Cbar"] for r in recs]).reshape(-1, 6, 6),
                np.array([r.get("split", "train") for r in recs], dtype=str),
                np.array([r.get("m_index", i) for i, r in enumerate(recs)], dtype=int),
            )
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise DataError(f"cannot read dataset {path}: {exc}") from None
    header, rows = read_csv(path)
    try:
        nq = header.index("C1_11")
        cols = {h: k for k, h in enumerate(header)}
        num = lambda names: np.array([[float(r[cols[n]]) for n in names] for r in rows], dtype=float).reshape(
            len(rows), len(names))
        p = num(header[:nq])
        C1, C2, Cb = (from_triu(num(triu_names(k))) for k in ("C1", "C2", "Cbar"))
        split = np.array([r[cols["split"]] for r in rows], dtype=str)
        m_index = np.array([int(r[cols["m_index"]]) for r in rows], dtype=int)
    except (ValueError, KeyError, IndexError) as exc:
        raise DataError(f"malformed dataset {path}: {exc}") from None
    return Dataset(p, C1, C2, Cb, split, m_index)


# --------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------


def model_to_dict(net: ParamNet) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "role": net.role,
        "L": net.L,
        "architecture": net.arch,
        "activation": net.activation,
        "beta": net.beta,
        "quaternion_convention": QUATERNION_CONVENTION,
        "q": net.q,
        "parameters": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in net.params.items()},
        "p_offset": net.p_offset.tolist(),
        "p_scale": net.p_scale.tolist(),
        "theta_in": None if net.theta_in is None else {"shape": list(net.theta_in.shape),
                                                       "data": net.theta_in.ravel().tolist()},
        "meta": net.meta,
    }
    return doc


def model_from_dict(doc: dict) -> ParamNet:
    try:
        if doc.get("format_version") != FORMAT_VERSION:
            raise DataError(f"unsupported model format version {doc.get('format_version')}")
        arr = lambda d: np.array(d["data"], dtype=float).reshape(d["shape"])
        params = {k: arr(v) for k, v in doc["parameters"].items()}
        ti = doc.get("theta_in")
        return ParamNet(int(doc["L"]), int(doc["q"]), doc["architecture"], params, activation=doc["activation"],
                        beta=float(doc.get("beta", 1.0)), p_offset=np.array(doc["p_offset"], dtype=float),
                        p_scale=np.array(doc["p_scale"], dtype=float), theta_in=None if ti is None else arr(ti),
                        role=doc.get("role", "model"), meta=doc.get("meta", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model document: {exc}") from None


def save_model(net: ParamNet, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(net), indent=1) + "\n")


def load_model(path) -> ParamNet:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read model {path}: {exc}") from None
    return model_from_dict(doc)


# --------------------------------------------------------------------------
# Load paths and manifests
# --------------------------------------------------------------------------


def save_load_path(path, t, eps):
    write_csv(path, ["t"] + [f"eps_{k}" for k in MANDEL_LABELS], np.column_stack([t, eps]))


def load_load_path(path):
    """Times and Mandel strains of a load path CSV."""
    header, data = read_numeric_csv(path)
    if len(header) != 7:
        raise DataError(f"{path}: a load path needs columns t and six strain components")
    return data[:, 0], data[:, 1:]


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, seeds, inputs, outputs, seconds: float):
    """Record a run: command, configuration, seeds, paths, wall time and output checksums."""
    out_dir = Path(out_dir)
    doc = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): sha256(p) if os.path.isfile(p) else None for p in inputs},
        "outputs": {str(p): sha256(p) for p in outputs},
        "wall_time_s": seconds,
        "python": platform.python_version(),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=1, default=str) + "\n")
    return path
