import json

import numpy as np
import pytest

from mipdmn.data import Dataset
from mipdmn.errors import DataError
from mipdmn.io import (from_triu, load_dataset, load_load_path, load_model, save_dataset, save_load_path,
                       save_model, triu_entries, triu_names, write_manifest)
from mipdmn.oracle import TeacherSpec, gen_dataset, gen_teacher
from mipdmn.parametric import init_params
from mipdmn.sampling import sample_materials
from mipdmn.inelastic import cyclic_path


@pytest.fixture(scope="module")
def dataset():
    t = gen_teacher(TeacherSpec(L=3, q=1, seed=2))
    C1, C2 = sample_materials(6, seed=2)
    return gen_dataset(t, [[0.3, 0.1], [0.5, 0.7]], C1, C2, seed=2, test_P=[[0.4, 0.4]])


def same(a: Dataset, b: Dataset):
    return all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("p", "C1", "C2", "Cbar", "split", "m_index"))


def test_triu_round_trip(rng):
    A = rng.standard_normal((3, 6, 6))
    A = A + np.swapaxes(A, -1, -2)
    assert np.array_equal(from_triu(triu_entries(A)), A)
    assert triu_names("C1")[:3] == ["C1_11", "C1_12", "C1_13"]


@pytest.mark.parametrize("suffix", [".csv", ".json"])
def test_dataset_round_trip(dataset, tmp_path, suffix):
    path = tmp_path / f"data{suffix}"
    save_dataset(dataset, path)
    assert same(load_dataset(path), dataset)


def test_dataset_errors(tmp_path, dataset):
    with pytest.raises(DataError):
        load_dataset(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("vf,C1_11\n0.2,abc\n")
    with pytest.raises(DataError):
        load_dataset(bad)
    with pytest.raises(DataError):
        Dataset(dataset.p, dataset.C1, dataset.C2, dataset.Cbar, np.full(len(dataset), "holdout"),
                dataset.m_index)


def test_dataset_grouping(dataset):
    P, idx = dataset.unique_p()
    assert len(P) == 3 and idx.max() == 2
    assert len(dataset.where("train")) + len(dataset.where("val")) == 12
    assert len(dataset.where("test")) == 6


def test_model_round_trip(tmp_path):
    net = init_params(3, 2, "fc", seed=1, activation="softplus", beta=3.0)
    net.p_offset = np.array([0.0, 1.5, -2.0])
    net.meta = {"note": "x"}
    save_model(net, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.arch == "fc" and back.beta == 3.0 and back.meta == {"note": "x"}
    assert all(np.array_equal(back.params[k], net.params[k]) for k in net.params)
    assert np.array_equal(back.p_offset, net.p_offset)
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["format_version"] = 99
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(DataError):
        load_model(tmp_path / "m.json")


def test_load_path_round_trip_and_manifest(tmp_path):
    p = cyclic_path(steps_per_segment=3)
    save_load_path(tmp_path / "path.csv", p.t, p.eps)
    t, eps = load_load_path(tmp_path / "path.csv")
    assert np.array_equal(t, p.t) and np.array_equal(eps, p.eps)
    man = write_manifest(tmp_path, "simulate", {"a": 1}, [0], [tmp_path / "path.csv"], [tmp_path / "path.csv"], 0.1)
    doc = json.loads(man.read_text())
    assert len(doc["outputs"][str(tmp_path / "path.csv")]) == 64
