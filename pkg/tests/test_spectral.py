import json

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import random_hermitian, random_unitary
from spectralshift.funcspace import Exponential, Polynomial
from spectralshift.spectral import (
    HermitianError,
    apply_function,
    as_hermitian,
    counting_step,
    decompose,
    hs_norm,
    load_matrix,
    matrix_from_record,
    matrix_to_record,
    save_matrix,
)


def test_validation_and_symmetrisation():
    a = np.array([[1.0, 2 + 1e-13j], [2, 3]])
    h = as_hermitian(a)
    assert np.array_equal(h, h.conj().T)
    with pytest.raises(HermitianError):
        as_hermitian([[0, 1], [0, 0]])
    with pytest.raises(HermitianError):
        as_hermitian(np.ones((2, 3)))
    with pytest.raises(HermitianError):
        as_hermitian([[np.nan]])
    assert as_hermitian(2.0).shape == (1, 1)


def test_diagonal_decomposition():
    D = decompose(np.diag([1.0, 1.0, 2.0]), 1e-8)
    assert np.allclose(D.eigenvalues, [1, 2])
    assert D.multiplicities == (2, 1)
    assert np.allclose(D.projections[0], np.diag([1, 1, 0]))


def test_near_coincident_clustering():
    D = decompose(np.diag([1.0, 1.0 + 1e-12, 2.0]), 1e-8)
    assert D.r == 2 and D.multiplicities == (2, 1)
    D0 = decompose(np.diag([1.0, 1.0 + 1e-12, 2.0]), 0.0)
    assert D0.r == 3


def test_negative_tolerance_rejected():
    with pytest.raises(ValueError):
        decompose(np.eye(2), -1.0)


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_projection_invariants(n):
    rng = np.random.default_rng(n)
    H = random_hermitian(rng, n)
    D = decompose(H)
    I = sum(D.projections)
    assert np.allclose(I, np.eye(n), atol=1e-9)
    for i, P in enumerate(D.projections):
        for j, Q in enumerate(D.projections):
            assert np.allclose(P @ Q, P if i == j else 0, atol=1e-9)
    assert np.allclose(D.reconstruct(), H, atol=1e-8 * (1 + np.linalg.norm(H, 2)))
    assert np.all(np.diff(D.eigenvalues) > 0)


def test_degenerate_cluster_is_orthonormalised():
    rng = np.random.default_rng(3)
    U = random_unitary(rng, 4)
    H = U @ np.diag([0.5, 0.5 + 1e-11, 0.5 - 1e-11, 2.0]) @ U.conj().T
    D = decompose(H)
    P = D.projections[0]
    assert D.multiplicities == (3, 1)
    assert np.allclose(P @ P, P, atol=1e-12)
    assert np.allclose(D.vectors.conj().T @ D.vectors, np.eye(4), atol=1e-12)


def test_apply_function_examples():
    rng = np.random.default_rng(0)
    H = random_hermitian(rng, 4)
    D = decompose(H)
    assert np.allclose(apply_function(Polynomial((0, 1)), D), H, atol=1e-12)
    assert np.allclose(apply_function(Polynomial((1,)), D), np.eye(4), atol=1e-12)
    E = apply_function(np.exp, decompose(np.diag([0.0, 2.0])))
    assert np.allclose(E, np.diag([1, np.exp(2)]))


def test_apply_function_matches_scipy_expm():
    rng = np.random.default_rng(1)
    H = random_hermitian(rng, 5)
    assert np.allclose(apply_function(Exponential(0.7), decompose(H)), expm(0.7j * H), atol=1e-12)


def test_polynomial_matches_matrix_algebra():
    rng = np.random.default_rng(2)
    H = random_hermitian(rng, 6)
    c = (0.3, -1.0, 0.5, 2.0)
    direct = c[0] * np.eye(6) + c[1] * H + c[2] * H @ H + c[3] * H @ H @ H
    tol = 1e-9 * (1 + np.linalg.norm(H, 2) ** 3)
    assert np.max(np.abs(apply_function(Polynomial(c), decompose(H)) - direct)) <= tol


def test_unitary_covariance():
    rng = np.random.default_rng(4)
    U = random_unitary(rng, 3)
    H = np.diag([-1.0, 0.5, 2.0])
    D, DU = decompose(H), decompose(U @ H @ U.conj().T)
    for P, Q in zip(D.projections, DU.projections):
        assert np.allclose(U @ P @ U.conj().T, Q, atol=1e-8)


def test_counting_step():
    N = counting_step(decompose(np.diag([0.0, 2.0])))
    assert N(-0.1) == 0 and N(0) == 1 and N(1.9) == 1 and N(2) == 2 and N(50) == 2
    Nc = counting_step(decompose(3.0 * np.eye(4)))
    assert Nc(2.99) == 0 and Nc(3.0) == 4
    rng = np.random.default_rng(5)
    assert counting_step(decompose(random_hermitian(rng, 7)))(1e6) == 7


def test_hs_norm():
    assert hs_norm(np.zeros((3, 3))) == 0
    assert hs_norm([[0, 1], [1, 0]]) == pytest.approx(np.sqrt(2))
    assert hs_norm(np.eye(5)) == pytest.approx(np.sqrt(5))


def test_matrix_records(tmp_path):
    rng = np.random.default_rng(6)
    H = random_hermitian(rng, 3)
    path = tmp_path / "h.json"
    save_matrix(path, H)
    assert np.array_equal(load_matrix(path), H)
    real = matrix_to_record(np.eye(2))
    assert "im" not in real and real["n"] == 2
    assert np.array_equal(matrix_from_record(real), np.eye(2))


@pytest.mark.parametrize("rec", [
    {"n": 2, "re": [[0, 1], [0, 0]]},
    {"n": 3, "re": [[0, 1], [1, 0]]},
    {"re": [[1]]},
    {"n": 1, "re": [[1]], "im": [[0, 1]]},
])
def test_bad_matrix_records(rec, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(rec))
    with pytest.raises(HermitianError):
        load_matrix(path)


def test_non_json_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(HermitianError):
        load_matrix(path)
