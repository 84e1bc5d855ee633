import json

import numpy as np
import pytest

from tpi.container import load_matrix, load_tensor, save_matrix, save_tensor
from tpi.errors import InvalidArgumentError
from tpi.rng import stream
from tpi.tensors import FactoredTensor3, densify, random_components, symmetrize


def test_factored_round_trip(tmp_path):
    A = random_components(8, 13, seed=4)
    lam = stream(4, 2).uniform(0.5, 3.0, size=13)
    T = FactoredTensor3(A, lam)
    path = tmp_path / "t.tpi3"
    save_tensor(path, T, meta={"note": "round trip"})
    back, meta = load_tensor(path)
    assert isinstance(back, FactoredTensor3)
    assert np.array_equal(back.components, A)
    assert np.array_equal(back.weights, lam)
    assert meta["note"] == "round trip"
    side = json.loads((tmp_path / "t.tpi3.json").read_text())
    assert side == meta


def test_dense_round_trip_bit_exact(tmp_path):
    T = symmetrize(stream(5, 2).standard_normal((6, 6, 6)))
    path = tmp_path / "dense.tpi3"
    save_tensor(path, T)
    back, meta = load_tensor(path)
    assert np.array_equal(back.entries, T.entries)
    assert back.symmetric and meta["symmetric"]


def test_asymmetric_factored_refused(tmp_path):
    A = random_components(6, 9, seed=1)
    B = random_components(6, 9, seed=2)
    T = FactoredTensor3(A, np.ones(9), B, B)
    with pytest.raises(InvalidArgumentError):
        save_tensor(tmp_path / "asym.tpi3", T)


def test_matrix_round_trip(tmp_path):
    M = stream(6, 2).standard_normal((11, 4))
    path = tmp_path / "m.tpi3"
    save_matrix(path, M)
    back, meta = load_matrix(path)
    assert np.array_equal(back, M)
    assert meta is None


def test_densified_load_agrees(tmp_path):
    A = random_components(5, 7, seed=8)
    T = FactoredTensor3(A, np.ones(7))
    path = tmp_path / "f.tpi3"
    save_tensor(path, T)
    back, _ = load_tensor(path)
    assert np.max(np.abs(densify(back).entries - densify(T).entries)) == 0.0


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.tpi3"
    path.write_bytes(b"NOPE" + bytes(64))
    with pytest.raises(InvalidArgumentError):
        load_tensor(path)


def test_truncated_payload_rejected(tmp_path):
    A = random_components(8, 3, seed=0)
    T = FactoredTensor3(A, np.ones(3))
    path = tmp_path / "trunc.tpi3"
    save_tensor(path, T)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 16])
    with pytest.raises(InvalidArgumentError):
        load_tensor(path)


def test_matrix_loader_refuses_tensor_kind(tmp_path):
    A = random_components(4, 4, seed=0)
    path = tmp_path / "t.tpi3"
    save_tensor(path, FactoredTensor3(A, np.ones(4)))
    with pytest.raises(InvalidArgumentError):
        load_matrix(path)
    with pytest.raises(InvalidArgumentError):
        m = tmp_path / "m.tpi3"
        save_matrix(m, np.eye(3))
        load_tensor(m)
