"""Discrete multiple spectral measures of a Hermitian pair.

For ``H0 = sum_i lambda_i P_i`` the measures are finite sums of atoms:

* ``m``  on p-tuples:      ``w(i_1..i_p)       = Tr[P_i1 V P_i2 V ... P_ip V]``
* ``m1`` on (p+1)-tuples:  ``w(i_1..i_{p+1})   = Tr[P_i1 V ... P_ip V P_i{p+1}]``

``m`` is computed in the eigenbasis by a chain contraction, ``m1`` from
products of the projections in the original basis, so the two routes check
each other through the marginal identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpectralDecomposition, as_hermitian

__all__ = [
    "EnvelopeError",
    "MultiSpectralMeasure",
    "MAX_ATOMS",
    "build_m",
    "cyclic_shift",
    "eigen_chain",
    "build_m1",
    "integrate_measure",
    "total_variation",
]

MAX_ATOMS = 10**7


class EnvelopeError(ValueError):
    """Requested tensor would exceed the desk-scale atom budget."""


def check_envelope(r: int, arity: int, limit: int = MAX_ATOMS) -> None:
    if r**arity > limit:
        raise EnvelopeError(f"{r}^{arity} = {r**arity} atoms exceeds the limit of {limit}")


@dataclass(frozen=True)
class MultiSpectralMeasure:
    """Weights on index tuples of the atom grid (the distinct eigenvalues)."""

    order: int
    variant: str
    atoms: np.ndarray
    weights: np.ndarray

    @property
    def arity(self) -> int:
        return self.weights.ndim

    @property
    def mass(self) -> complex:
        return complex(self.weights.sum())

    def grid(self) -> list:
        """Coordinate arrays, one per tuple slot, broadcastable to ``weights``."""
        return np.meshgrid(*([self.atoms] * self.arity), indexing="ij")

    def symmetric_groups(self) -> dict:
        """Weights summed over all orderings of each index multiset.

        Keys are sorted index tuples; useful whenever the integrand is a
        symmetric function such as a divided difference.
        """
        groups: dict = {}
        for idx in np.ndindex(self.weights.shape):
            key = tuple(sorted(idx))
            groups[key] = groups.get(key, 0j) + self.weights[idx]
        return groups

    def to_records(self) -> list:
        out = []
        for idx in np.ndindex(self.weights.shape):
            w = self.weights[idx]
            out.append({
                "indices": list(idx),
                "lambda_tuple": [float(self.atoms[i]) for i in idx],
                "weight_re": float(w.real),
                "weight_im": float(w.imag),
            })
        return out


def _check_inputs(D: SpectralDecomposition, V, p: int):
    V = as_hermitian(V)
    if V.shape[0] != D.n:
        raise ValueError(f"dimension mismatch: H0 is {D.n}x{D.n}, V is {V.shape[0]}x{V.shape[0]}")
    if p < 1:
        raise ValueError(f"order must be >= 1, got {p}")
    return V


def eigen_chain(D: SpectralDecomposition, V, links: int) -> np.ndarray:
    """Chain ``X[a1, i2, ..., i_links, b]`` of ``links`` factors of V in the eigenbasis.

    ``X = sum over a_k in cluster i_k of V~[a1,a2] V~[a2,a3] ... V~[a_links, b]``,
    with the end indices left as eigenbasis columns.
    """
    Vt = D.to_eigenbasis(V)
    starts = np.asarray(D.starts[:-1])
    X = Vt
    for _ in range(1, links):
        X = X[..., :, None] * Vt
        X = np.add.reduceat(X, starts, axis=-2)
    return X


def build_m(D: SpectralDecomposition, V, p: int) -> MultiSpectralMeasure:
    """Weights ``Tr[P_i1 V ... P_ip V]`` over all p-tuples of clusters."""
    V = _check_inputs(D, V, p)
    check_envelope(D.r, p)
    starts = np.asarray(D.starts[:-1])
    X = eigen_chain(D, V, p)
    # close the cycle a_{p+1} = a1, then gather a1 into clusters
    closed = np.moveaxis(np.diagonal(X, axis1=0, axis2=-1), -1, 0)
    w = np.add.reduceat(closed, starts, axis=0)
    return MultiSpectralMeasure(p, "m", D.eigenvalues.copy(), np.asarray(w, dtype=complex))


def build_m1(D: SpectralDecomposition, V, p: int) -> MultiSpectralMeasure:
    """Weights ``Tr[P_i1 V ... P_ip V P_i(p+1)]`` over all (p+1)-tuples."""
    V = _check_inputs(D, V, p)
    r = D.r
    check_envelope(r, p + 1)
    P = np.stack(D.projections)                 # (r, n, n)
    PV = P @ V                                  # P_i V
    w = np.empty((r,) * (p + 1), dtype=complex)
    for i1 in range(r):
        Y = PV[i1][None]                        # products over the tuple prefix
        for _ in range(1, p):
            Y = np.einsum("kab,jbc->kjac", Y, PV).reshape(-1, D.n, D.n)
        # Tr[Y P_j] for the closing projection
        tr = np.einsum("kab,jba->kj", Y, P)
        w[i1] = tr.reshape((r,) * p)
    return MultiSpectralMeasure(p, "m1", D.eigenvalues.copy(), w)


def integrate_measure(mu: MultiSpectralMeasure, phi) -> complex:
    """``sum over atoms of w * phi(lambda tuple)``.

    ``phi`` is either an array shaped like ``mu.weights`` or a vectorised
    callable taking one coordinate array per tuple slot.
    """
    if callable(phi):
        vals = np.asarray(phi(*mu.grid()), dtype=complex)
        vals = np.broadcast_to(vals, mu.weights.shape)
    else:
        vals = np.asarray(phi, dtype=complex)
        if vals.shape != mu.weights.shape:
            raise ValueError(f"phi has shape {vals.shape}, weights have {mu.weights.shape}")
    return complex(np.sum(mu.weights * vals))


def total_variation(mu: MultiSpectralMeasure) -> float:
    return float(np.sum(np.abs(mu.weights)))


def cyclic_shift(weights: np.ndarray, k: int = 1) -> np.ndarray:
    """``w'(i_1..i_p) = w(i_{1+k}..i_p, i_1..i_k)``."""
    p = weights.ndim
    axes = [(j + k) % p for j in range(p)]
    return np.transpose(weights, axes)
