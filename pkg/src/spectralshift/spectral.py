"""Hermitian matrices, clustered spectral decompositions and matrix functions."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .funcspace import SmoothFunction
from .splines import PiecewisePolynomial, step_function

__all__ = [
    "HermitianError",
    "HermitianOperator",
    "SpectralDecomposition",
    "as_hermitian",
    "decompose",
    "apply_function",
    "counting_step",
    "hs_norm",
    "load_matrix",
    "save_matrix",
    "matrix_to_record",
    "matrix_from_record",
]

HERMITIAN_RTOL = 1e-10


class HermitianError(ValueError):
    """Matrix is not square or not Hermitian within tolerance."""


# Hermitian matrices are plain complex ndarrays validated by ``as_hermitian``.
HermitianOperator = np.ndarray


def as_hermitian(data, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Validate ``data`` as Hermitian and return the symmetrised ``(A + A^*)/2``."""
    a = np.array(data, dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise HermitianError(f"expected a nonempty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise HermitianError("matrix has non-finite entries")
    scale = 1.0 + np.max(np.abs(a))
    dev = np.max(np.abs(a - a.conj().T))
    if dev > rtol * scale:
        raise HermitianError(f"matrix deviates from Hermitian by {dev:.3e} (allowed {rtol * scale:.3e})")
    h = 0.5 * (a + a.conj().T)
    return h


@dataclass(frozen=True)
class SpectralDecomposition:
    """Distinct (clustered) eigenvalues with their orthogonal projections.

    ``vectors`` holds an orthonormal eigenbasis ordered by eigenvalue; the
    columns ``starts[i]:starts[i+1]`` span the range of ``projections[i]``.
    """

    eigenvalues: np.ndarray
    projections: tuple
    multiplicities: tuple
    vectors: np.ndarray
    starts: tuple

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def r(self) -> int:
        return self.eigenvalues.size

    @property
    def labels(self) -> np.ndarray:
        """Cluster index of every eigenbasis column."""
        return np.repeat(np.arange(self.r), self.multiplicities)

    def to_eigenbasis(self, A) -> np.ndarray:
        return self.vectors.conj().T @ np.asarray(A) @ self.vectors

    def from_eigenbasis(self, A) -> np.ndarray:
        return self.vectors @ np.asarray(A) @ self.vectors.conj().T

    def reconstruct(self) -> np.ndarray:
        return sum(lam * P for lam, P in zip(self.eigenvalues, self.projections))


def default_cluster_tol(H) -> float:
    return 1e-8 * (1.0 + np.linalg.norm(np.asarray(H), 2))


def _orthonormalize(Q: np.ndarray) -> np.ndarray:
    # symmetric (Loewdin) orthogonalisation: Q (Q^* Q)^(-1/2)
    g = Q.conj().T @ Q
    w, u = np.linalg.eigh(g)
    return Q @ (u * (1.0 / np.sqrt(w))) @ u.conj().T


def decompose(H, cluster_tol: float | None = None) -> SpectralDecomposition:
    """Eigendecomposition with eigenvalues closer than ``cluster_tol`` merged.

    Sorted eigenvalues are chained into a cluster while consecutive gaps stay
    within the tolerance; the cluster is represented by its mean.
    """
    H = as_hermitian(H)
    if cluster_tol is None:
        cluster_tol = default_cluster_tol(H)
    if cluster_tol < 0:
        raise ValueError("cluster tolerance must be nonnegative")
    try:
        w, U = np.linalg.eigh(np.asarray(H))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed: {exc}") from exc
    groups = []
    start = 0
    for i in range(1, w.size + 1):
        if i == w.size or w[i] - w[i - 1] > cluster_tol:
            groups.append((start, i))
            start = i
    vals, projs, mults, blocks = [], [], [], []
    for lo, hi in groups:
        Q = U[:, lo:hi]
        if hi - lo > 1:
            Q = _orthonormalize(Q)
        blocks.append(Q)
        vals.append(w[lo:hi].mean())
        projs.append(Q @ Q.conj().T)
        mults.append(hi - lo)
    starts = tuple(int(s) for s in np.concatenate([[0], np.cumsum(mults)]))
    return SpectralDecomposition(
        eigenvalues=np.array(vals),
        projections=tuple(projs),
        multiplicities=tuple(mults),
        vectors=np.hstack(blocks),
        starts=starts,
    )


def apply_function(f, D: SpectralDecomposition) -> np.ndarray:
    """``f(H) = sum_i f(lambda_i) P_i``; ``f`` is a SmoothFunction or a callable."""
    if isinstance(f, SmoothFunction):
        vals = np.atleast_1d(f.eval_derivative(D.eigenvalues, 0))
    else:
        vals = np.asarray([f(x) for x in D.eigenvalues], dtype=complex)
    diag = np.repeat(vals, D.multiplicities)
    return (D.vectors * diag) @ D.vectors.conj().T


def counting_step(D: SpectralDecomposition) -> PiecewisePolynomial:
    """Eigenvalue counting function ``N(t) = #{eigenvalues <= t}``."""
    return step_function(D.eigenvalues, D.multiplicities, 0.0).real_if_close(0.0)


def hs_norm(V) -> float:
    """Hilbert-Schmidt (Frobenius) norm."""
    return float(np.sqrt(np.sum(np.abs(np.asarray(V)) ** 2)))


def matrix_to_record(A) -> dict:
    a = np.asarray(A, dtype=complex)
    rec = {"n": int(a.shape[0]), "re": a.real.tolist()}
    if np.any(a.imag):
        rec["im"] = a.imag.tolist()
    return rec


def matrix_from_record(rec: dict) -> np.ndarray:
    try:
        n = int(rec["n"])
        re = np.asarray(rec["re"], dtype=float)
        im = np.asarray(rec["im"], dtype=float) if "im" in rec else np.zeros_like(re)
    except (KeyError, TypeError, ValueError) as exc:
        raise HermitianError(f"malformed matrix record: {exc}") from exc
    if re.shape != (n, n) or im.shape != (n, n):
        raise HermitianError(f"matrix record declares n={n} but arrays have shapes {re.shape}, {im.shape}")
    return as_hermitian(re + 1j * im)


def load_matrix(path) -> np.ndarray:
    with open(path) as fh:
        try:
            rec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise HermitianError(f"{path}: not valid JSON ({exc})") from exc
    return matrix_from_record(rec)


def save_matrix(path, A) -> None:
    with open(path, "w") as fh:
        json.dump(matrix_to_record(A), fh)
