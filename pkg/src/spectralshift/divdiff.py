"""Confluent divided differences.

The workhorse is a Newton table over the knot multiset sorted so that equal
knots are adjacent; a run of ``m`` equal knots is seeded with the scaled
derivatives ``f^(j)(x)/j!``.  Entries whose knots are close but not equal are
summed from a Taylor expansion instead of the difference quotient, which
would lose about ``log10(1/gap)`` digits per level.  The table only needs ring
arithmetic on its entries, so :func:`newton_table` is reused with
polynomial-valued entries by the spline code.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .funcspace import SmoothFunction

__all__ = [
    "KnotMultiset",
    "default_cluster_tol",
    "cluster_knots",
    "newton_table",
    "divided_difference",
    "partial_fraction_dd",
    "repeated_knot_formula",
    "exponential_simplex_dd",
    "dd_tensor",
]

SIMPLEX_NODES = 32
MAX_SIMPLEX_ORDER = 3
# table entries spanning at most this much are summed as Taylor series
NEAR_SPAN = 0.1
TAYLOR_TERMS = 80
TAYLOR_RTOL = 1e-17


def default_cluster_tol(knots) -> float:
    knots = np.asarray(knots, dtype=float)
    return 1e-8 * (1.0 + (np.max(np.abs(knots)) if knots.size else 0.0))


def cluster_knots(knots, tol: float | None = None) -> np.ndarray:
    """Sort ``knots`` and snap near-coincident runs to their mean.

    Consecutive sorted knots closer than ``tol`` are chained into one cluster.
    """
    z = np.sort(np.asarray(knots, dtype=float).ravel())
    if z.size == 0:
        raise ValueError("empty knot list")
    if tol is None:
        tol = default_cluster_tol(z)
    if tol < 0:
        raise ValueError("cluster tolerance must be nonnegative")
    out = z.copy()
    start = 0
    for i in range(1, z.size + 1):
        if i == z.size or z[i] - z[i - 1] > tol:
            # exactly equal runs stay put: the float mean of copies can move by an ulp
            if i - start > 1 and z[i - 1] != z[start]:
                out[start:i] = z[start:i].mean()
            start = i
    return out


@dataclass(frozen=True)
class KnotMultiset:
    """Clustered knots of a divided difference of order ``len(knots) - 1``."""

    knots: tuple
    cluster_tolerance: float

    @classmethod
    def from_values(cls, values, tol: float | None = None) -> "KnotMultiset":
        if tol is None:
            tol = default_cluster_tol(values)
        return cls(tuple(cluster_knots(values, tol)), float(tol))

    @property
    def order(self) -> int:
        return len(self.knots) - 1

    @property
    def distinct(self) -> np.ndarray:
        return np.unique(np.asarray(self.knots))

    @property
    def multiplicities(self) -> dict:
        vals, counts = np.unique(np.asarray(self.knots), return_counts=True)
        return {float(v): int(c) for v, c in zip(vals, counts)}

    @property
    def max_multiplicity(self) -> int:
        return max(self.multiplicities.values())


def _as_clustered(knots, tol=None) -> np.ndarray:
    if isinstance(knots, KnotMultiset):
        return np.asarray(knots.knots, dtype=float)
    return cluster_knots(knots, tol)


def _magnitude(x) -> float:
    coef = getattr(x, "coef", None)
    return float(np.max(np.abs(coef))) if coef is not None else abs(x)


def _taylor_entry(z: Sequence[float], scaled_derivative: Callable):
    """Divided difference over the close knots ``z`` (sorted) by expansion about ``z[0]``.

    Uses ``Delta(z)((x - z0)^k) = h_(k-q)(z - z0)`` with ``h`` the complete
    homogeneous symmetric polynomial; the offsets are nonnegative, so the
    ``h`` values carry no cancellation.  Returns None when a derivative is
    unavailable or the series has not settled after ``TAYLOR_TERMS`` terms.
    """
    q = len(z) - 1
    x0 = z[0]
    d = [x - x0 for x in z]
    h = [1.0] * (q + 1)  # h[i] = h_m(d_0, ..., d_i)
    total = None
    settled = 0
    for m in range(TAYLOR_TERMS):
        a = scaled_derivative(x0, q + m)
        if a is None:
            return None
        if m:
            acc = 0.0
            for i in range(q + 1):
                acc = acc + d[i] * h[i]
                h[i] = acc
        term = a * h[q]
        total = term if total is None else total + term
        if _magnitude(term) <= TAYLOR_RTOL * _magnitude(total):
            settled += 1
            if settled == 4:
                return total
        else:
            settled = 0
    return None


def newton_table(z: Sequence[float], scaled_derivative: Callable, *, breaks: Sequence[float] = (),
                 near_span: float = NEAR_SPAN):
    """Top entry of the confluent Newton divided-difference table.

    ``z`` must be sorted with equal values adjacent.  ``scaled_derivative(x, j)``
    returns ``f^(j)(x)/j!``, or None if that order is unavailable (allowed only
    for ``j`` at or above the local multiplicity of ``x``).  Entries whose knots
    span at most ``near_span`` are summed as Taylor series unless a point of
    ``breaks`` lies in ``(z_lo, z_hi]``, where the function changes formula.
    Entries may be any objects supporting ``+``, ``-``, ``*`` by a float and
    division by a float.
    """
    z = list(z)
    col = [scaled_derivative(x, 0) for x in z]
    for level in range(1, len(z)):
        nxt = []
        for i in range(len(z) - level):
            lo, hi = z[i], z[i + level]
            if hi == lo:
                nxt.append(scaled_derivative(lo, level))
                continue
            val = None
            if hi - lo <= near_span and not any(lo < b <= hi for b in breaks):
                val = _taylor_entry(z[i:i + level + 1], scaled_derivative)
            if val is None:
                val = (col[i + 1] - col[i]) / (hi - lo)
            nxt.append(val)
        col = nxt
    return col[0]


def _scaled_derivatives(f: SmoothFunction, points, offset: int = 0) -> Callable:
    """``(x, j) -> f^(offset + j)(x)/j!`` for ``x`` in ``points``, one vectorised call per order."""
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    where = {float(x): i for i, x in enumerate(pts)}
    cols = {}

    def scaled(x, j):
        if offset + j > f.max_order:
            return None
        if j not in cols:
            cols[j] = np.atleast_1d(f.eval_derivative(pts, offset + j)) / math.factorial(j)
        return complex(cols[j][where[x]])

    return scaled


def divided_difference(f: SmoothFunction, knots, cluster_tol: float | None = None) -> complex:
    """Divided difference of ``f`` over ``knots`` (any order, repeats allowed).

    >>> from spectralshift.funcspace import Polynomial
    >>> divided_difference(Polynomial((0, 0, 1)), [1, 3])
    (4+0j)
    """
    z = _as_clustered(knots, cluster_tol)
    vals, counts = np.unique(z, return_counts=True)
    needed = int(counts.max()) - 1
    if needed > f.max_order:
        raise ValueError(
            f"knot multiplicity {needed + 1} needs derivative order {needed}, "
            f"function provides {f.max_order}"
        )
    return complex(newton_table(z, _scaled_derivatives(f, vals)))


def partial_fraction_dd(f: SmoothFunction, knots) -> complex:
    """``sum_j f(x_j) / prod_{k != j} (x_j - x_k)`` for pairwise distinct knots."""
    z = np.asarray(knots, dtype=float).ravel()
    if np.unique(z).size != z.size:
        raise ValueError("partial-fraction formula needs pairwise distinct knots")
    fz = np.atleast_1d(f.eval_derivative(z, 0))
    total = 0j
    for j in range(z.size):
        others = np.delete(z, j)
        total += fz[j] / np.prod(z[j] - others)
    return complex(total)


def repeated_knot_formula(f: SmoothFunction, base_knots, i: int) -> complex:
    """Divided difference over ``base_knots`` with ``base_knots[i]`` doubled.

    Closed form in terms of ``f'(x_i)`` and the values of ``f``; the base knots
    must be pairwise distinct.
    """
    x = np.asarray(base_knots, dtype=float).ravel()
    p = x.size
    if np.unique(x).size != p:
        raise ValueError("base knots must be pairwise distinct")
    if not 0 <= i < p:
        raise IndexError(f"knot index {i} out of range for {p} knots")
    xi = x[i]
    fx = np.atleast_1d(f.eval_derivative(x, 0))
    rest = np.delete(np.arange(p), i)
    total = complex(f.eval_derivative(xi, 1)) / np.prod(xi - x[rest])
    for j in rest:
        others = [k for k in range(p) if k != i and k != j]
        pj = np.prod(x[j] - x[others]) if others else 1.0
        pi = np.prod(xi - x[others]) if others else 1.0
        total += (fx[j] / pj - fx[i] / pi) / (xi - x[j]) ** 2
    return complex(total)


@lru_cache(maxsize=None)
def _simplex_rule(p: int, nodes: int):
    """Nodes/weights for ``{1 >= u_1 >= ... >= u_p >= 0}`` via a collapsed cube."""
    g, w = np.polynomial.legendre.leggauss(nodes)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([g] * p), indexing="ij")
    wgrids = np.meshgrid(*([w] * p), indexing="ij")
    v = [a.ravel() for a in grids]
    weight = np.ones_like(v[0])
    for a in wgrids:
        weight = weight * a.ravel()
    # u_k = v_1 * ... * v_k, Jacobian prod_k v_k^(p-k)
    u = []
    acc = np.ones_like(v[0])
    for k in range(p):
        acc = acc * v[k]
        u.append(acc)
        weight = weight * v[k] ** (p - 1 - k)
    return np.array(u), weight


def exponential_simplex_dd(s: float, knots, nodes: int = SIMPLEX_NODES) -> complex:
    """Divided difference of ``exp(i*s*x)`` as an integral over an ordered simplex.

    Integrates ``i^p exp(i[(s0-s1)x_1 + ... + (s_{p-1}-s_p)x_p + s_p x_{p+1}])``
    over ``|s_p| <= ... <= |s_1| <= |s0| = |s|`` (all of the sign of ``s``) with
    tensor Gauss-Legendre on the cube.  Independent of the Newton table.
    """
    x = np.asarray(knots.knots if isinstance(knots, KnotMultiset) else knots, dtype=float).ravel()
    p = x.size - 1
    if p > MAX_SIMPLEX_ORDER:
        raise ValueError(f"simplex quadrature supports order <= {MAX_SIMPLEX_ORDER}, got {p}")
    if p == 0:
        return complex(np.exp(1j * s * x[0]))
    if s == 0:
        return 0j
    u, w = _simplex_rule(p, nodes)
    sk = np.vstack([np.ones(u.shape[1]), u]) * s  # s_0 .. s_p
    phase = np.zeros(u.shape[1])
    for k in range(p):
        phase += (sk[k] - sk[k + 1]) * x[k]
    phase += sk[p] * x[p]
    # oriented volume element ds_1...ds_p = s^p du_1...du_p
    return complex((1j ** p) * s**p * np.sum(w * np.exp(1j * phase)))


def dd_tensor(f: SmoothFunction, points, order: int, derivative: int = 0) -> np.ndarray:
    """Divided differences of ``f^(derivative)`` over all index tuples.

    Returns ``T`` of shape ``(r,) * (order + 1)`` with
    ``T[i_0, ..., i_order] = Delta(f^(derivative))`` at ``points[i_0], ...``.
    ``points`` must be pairwise distinct; repeated indices give confluent knots.
    Symmetry is used: one Newton table per index multiset.
    """
    pts = np.asarray(points, dtype=float)
    r = pts.size
    if order < 0:
        raise ValueError("order must be nonnegative")
    if order + derivative > f.max_order:
        raise ValueError(f"derivative order {order + derivative} unavailable")
    scaled = _scaled_derivatives(f, pts, derivative)
    out = np.empty((r,) * (order + 1), dtype=complex)
    for combo in itertools.combinations_with_replacement(range(r), order + 1):
        # combo is sorted by index; sort by value so equal knots stay adjacent
        knots = sorted(pts[i] for i in combo)
        val = newton_table(knots, scaled)
        for perm in set(itertools.permutations(combo)):
            out[perm] = val
    return out
