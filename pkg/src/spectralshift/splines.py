"""Piecewise polynomials, truncated powers and the splines of divided differences.

Every function here is constant outside a finite breakpoint set, so a
:class:`PiecewisePolynomial` stores one polynomial per breakpoint interval
plus two tail constants.  Intervals are half open, ``[b_k, b_{k+1})``.

The splines ``t -> Delta(knots)((x - t)_+^k)`` are built exactly: on each
interval between consecutive distinct knots the map is a polynomial in ``t``,
obtained by running the confluent Newton table with polynomial-valued entries.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial as _P

from .divdiff import KnotMultiset, cluster_knots, newton_table
from .funcspace import SmoothFunction

__all__ = [
    "PiecewisePolynomial",
    "truncated_power",
    "step_function",
    "basic_spline",
    "spline_antiderivative",
    "pp_combine",
    "pp_cumulative",
    "pp_integrate_against",
    "dd_via_peano",
    "dd_via_antiderivative",
]

GAUSS_NODES = 24
MAX_PANEL = 0.5


def _shift(coeffs: np.ndarray, delta: float) -> np.ndarray:
    """Coefficients of ``s -> q(s + delta)`` given those of ``q`` (lowest first)."""
    n = coeffs.size
    if delta == 0 or n <= 1:
        return coeffs.copy()
    out = np.zeros(n, dtype=complex)
    for i in range(n):
        for j in range(i + 1):
            out[j] += coeffs[i] * math.comb(i, j) * delta ** (i - j)
    return out


class PiecewisePolynomial:
    """Piecewise polynomial on ``b_0 < ... < b_K`` with constant tails.

    ``coeffs[k]`` holds the coefficients (lowest degree first) of the piece on
    ``[b_k, b_{k+1})`` in the local variable ``t - b_k``.  The function equals
    ``left_value`` for ``t < b_0`` and ``right_value`` for ``t >= b_K``.
    """

    def __init__(self, breakpoints, coeffs, left_value=0.0, right_value=0.0):
        bp = np.asarray(breakpoints, dtype=float).ravel()
        if bp.size > 1 and np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        npieces = max(bp.size - 1, 0)
        rows = [np.atleast_1d(np.asarray(c, dtype=complex)) for c in coeffs]
        if len(rows) != npieces:
            raise ValueError(f"{bp.size} breakpoints need {npieces} pieces, got {len(rows)}")
        width = max([r.size for r in rows] + [1])
        mat = np.zeros((npieces, width), dtype=complex)
        for k, r in enumerate(rows):
            mat[k, : r.size] = r
        if bp.size == 0 and left_value != right_value:
            raise ValueError("without breakpoints the function is a single constant")
        self.breakpoints = bp
        self.coeffs = mat
        self.left_value = complex(left_value)
        self.right_value = complex(right_value)

    @classmethod
    def constant(cls, value=0.0):
        return cls([], [], value, value)

    @property
    def pieces(self) -> list:
        return [row.copy() for row in self.coeffs]

    @property
    def degree(self) -> int:
        nz = np.nonzero(np.any(self.coeffs != 0, axis=0))[0]
        return int(nz[-1]) if nz.size else 0

    @property
    def hull(self) -> tuple:
        if self.breakpoints.size == 0:
            return (math.nan, math.nan)
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        flat = t_arr.ravel()
        out = np.empty(flat.shape, dtype=complex)
        bp = self.breakpoints
        if bp.size == 0:
            out[:] = self.left_value
        else:
            idx = np.searchsorted(bp, flat, side="right") - 1
            left = idx < 0
            right = idx >= bp.size - 1
            mid = ~(left | right)
            out[left] = self.left_value
            out[right] = self.right_value
            if np.any(mid):
                k = idx[mid]
                s = flat[mid] - bp[k]
                c = self.coeffs[k]
                acc = np.zeros(s.shape, dtype=complex)
                for j in range(c.shape[1] - 1, -1, -1):
                    acc = acc * s + c[:, j]
                out[mid] = acc
        out = out.reshape(t_arr.shape)
        return complex(out) if t_arr.ndim == 0 else out

    def refine(self, breakpoints) -> "PiecewisePolynomial":
        """Same function re-expressed on a superset of the breakpoints."""
        new = np.union1d(self.breakpoints, np.asarray(breakpoints, dtype=float))
        if new.size == self.breakpoints.size:
            return self
        bp = self.breakpoints
        rows = []
        for c in new[:-1]:
            k = np.searchsorted(bp, c, side="right") - 1 if bp.size else -1
            if k < 0:
                rows.append(np.array([self.left_value]))
            elif k >= bp.size - 1:
                rows.append(np.array([self.right_value]))
            else:
                rows.append(_shift(self.coeffs[k], c - bp[k]))
        return PiecewisePolynomial(new, rows, self.left_value, self.right_value)

    def scaled(self, a) -> "PiecewisePolynomial":
        a = complex(a)
        return PiecewisePolynomial(self.breakpoints, self.coeffs * a, self.left_value * a,
                                   self.right_value * a)

    def shifted(self, c: float) -> "PiecewisePolynomial":
        """``t -> P(t - c)``."""
        return PiecewisePolynomial(self.breakpoints + c, self.coeffs, self.left_value,
                                   self.right_value)

    def real_if_close(self, tol: float) -> "PiecewisePolynomial":
        """Drop imaginary parts when every one of them is below ``tol``."""
        parts = [self.coeffs.imag, np.array([self.left_value.imag, self.right_value.imag])]
        if max((np.max(np.abs(p)) if p.size else 0.0) for p in parts) > tol:
            return self
        return PiecewisePolynomial(self.breakpoints, self.coeffs.real, self.left_value.real,
                                   self.right_value.real)

    def __add__(self, other):
        return pp_combine([1.0, 1.0], [self, other])

    def __sub__(self, other):
        return pp_combine([1.0, -1.0], [self, other])

    def __neg__(self):
        return self.scaled(-1.0)

    def to_dict(self) -> dict:
        """Serialisable record; imaginary parts go to ``*_im`` keys when present."""
        rec = {
            "breakpoints": self.breakpoints.tolist(),
            "pieces": self.coeffs.real.tolist(),
            "left_value": self.left_value.real,
            "right_value": self.right_value.real,
        }
        if np.any(self.coeffs.imag) or self.left_value.imag or self.right_value.imag:
            rec["pieces_im"] = self.coeffs.imag.tolist()
            rec["left_value_im"] = self.left_value.imag
            rec["right_value_im"] = self.right_value.imag
        return rec

    @classmethod
    def from_dict(cls, rec: dict) -> "PiecewisePolynomial":
        pieces = np.asarray(rec["pieces"], dtype=float)
        if "pieces_im" in rec:
            pieces = pieces + 1j * np.asarray(rec["pieces_im"], dtype=float)
        left = complex(rec["left_value"], rec.get("left_value_im", 0.0))
        right = complex(rec["right_value"], rec.get("right_value_im", 0.0))
        return cls(rec["breakpoints"], list(pieces), left, right)

    def __repr__(self):
        return (f"PiecewisePolynomial(breakpoints={self.breakpoints.tolist()}, "
                f"degree={self.degree}, left={self.left_value}, right={self.right_value})")


def truncated_power(x, k: int):
    """``x**k`` for ``x >= 0`` and 0 otherwise; ``0**0 == 1``."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, np.power(np.maximum(x, 0.0), k), 0.0)
    return float(out) if out.ndim == 0 else out


def step_function(points, jumps, left_value=0.0) -> PiecewisePolynomial:
    """Right-continuous step function jumping by ``jumps[i]`` at ``points[i]``."""
    pts = np.asarray(points, dtype=float)
    jmp = np.asarray(jumps, dtype=complex)
    order = np.argsort(pts, kind="stable")
    pts, jmp = pts[order], jmp[order]
    uniq, inv = np.unique(pts, return_inverse=True)
    total = np.zeros(uniq.size, dtype=complex)
    np.add.at(total, inv, jmp)
    levels = left_value + np.cumsum(total)
    if uniq.size == 0:
        return PiecewisePolynomial.constant(left_value)
    return PiecewisePolynomial(uniq, [[v] for v in levels[:-1]], left_value, levels[-1])


def _knot_array(knots) -> np.ndarray:
    if isinstance(knots, KnotMultiset):
        return np.asarray(knots.knots, dtype=float)
    return cluster_knots(knots)


@lru_cache(maxsize=4096)
def _truncated_power_spline(z: tuple, k: int) -> PiecewisePolynomial:
    """``t -> Delta(z)((x - t)_+^k)`` for sorted clustered ``z`` and ``k <= len(z) - 1``."""
    p = len(z) - 1
    d = np.unique(np.asarray(z))
    left = 1.0 if k == p else 0.0
    zero = _P([0.0])
    rows = []
    for j in range(d.size - 1):
        lo, hi = d[j], d[j + 1]

        def scaled(x, m, lo=lo, hi=hi):
            # knot x is active (x > t) on the whole interval iff x >= hi
            if x < hi or m > k:
                return zero
            return math.comb(k, m) * _P([x - lo, -1.0]) ** (k - m)

        # knots below hi are inactive; no Taylor entry may straddle that switch
        poly = newton_table(z, scaled, breaks=(hi,))
        rows.append(np.asarray(poly.coef, dtype=float))
    return PiecewisePolynomial(d, rows, left, 0.0)


def basic_spline(knots) -> PiecewisePolynomial:
    """``t -> Delta(knots)((x - t)_+^(p-1))``; nonnegative with integral ``1/p``.

    For two knots this is ``1/|x_2 - x_1|`` on the interval between them.
    """
    z = _knot_array(knots)
    p = z.size - 1
    if p < 1:
        raise ValueError("basic spline needs at least two knots")
    if z[0] == z[-1]:
        raise ValueError("basic spline needs at least two distinct knot values")
    return _truncated_power_spline(tuple(z), p - 1)


def spline_antiderivative(knots) -> PiecewisePolynomial:
    """``t -> Delta(knots)((x - t)_+^p)``: decreasing from 1 to 0 across the knots."""
    z = _knot_array(knots)
    return _truncated_power_spline(tuple(z), z.size - 1)


def pp_combine(scalars, terms) -> PiecewisePolynomial:
    """Exact linear combination on the merged breakpoint set."""
    terms = list(terms)
    scalars = [complex(a) for a in scalars]
    if len(scalars) != len(terms):
        raise ValueError("scalars and terms differ in length")
    if not terms:
        return PiecewisePolynomial.constant(0.0)
    bp = np.unique(np.concatenate([t.breakpoints for t in terms]))
    width = max(t.coeffs.shape[1] for t in terms)
    npieces = max(bp.size - 1, 0)
    mat = np.zeros((npieces, width), dtype=complex)
    left = right = 0j
    for a, t in zip(scalars, terms):
        if a == 0:
            continue
        r = t.refine(bp)
        mat[:, : r.coeffs.shape[1]] += a * r.coeffs
        left += a * t.left_value
        right += a * t.right_value
    return PiecewisePolynomial(bp, list(mat), left, right)


def pp_cumulative(P: PiecewisePolynomial) -> PiecewisePolynomial:
    """``t -> integral of P over (-inf, t]`` (exact, continuous, degree + 1)."""
    if P.left_value != 0:
        raise ValueError(f"cumulative integral diverges: left tail is {P.left_value}")
    if P.right_value != 0:
        raise ValueError(f"cumulative integral is not constant on the right: tail {P.right_value}")
    bp = P.breakpoints
    if bp.size == 0:
        return PiecewisePolynomial.constant(0.0)
    deg = P.coeffs.shape[1]
    rows = []
    acc = 0j
    div = np.arange(1, deg + 1)
    for k in range(bp.size - 1):
        anti = np.zeros(deg + 1, dtype=complex)
        anti[1:] = P.coeffs[k] / div
        anti[0] = acc
        rows.append(anti)
        h = bp[k + 1] - bp[k]
        acc = _horner(anti, h)
    return PiecewisePolynomial(bp, rows, 0.0, acc)


def _horner(c, s):
    acc = 0j
    for v in c[::-1]:
        acc = acc * s + v
    return acc


@lru_cache(maxsize=8)
def _gauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _hull_quadrature(P: PiecewisePolynomial, nodes: int, max_panel: float):
    """Composite Gauss-Legendre nodes/weights over the pieces, with P evaluated."""
    bp = P.breakpoints
    gx, gw = _gauss(nodes)
    ts, ws, vals = [], [], []
    for k in range(bp.size - 1):
        lo, hi = bp[k], bp[k + 1]
        npan = max(1, int(math.ceil((hi - lo) / max_panel)))
        edges = np.linspace(lo, hi, npan + 1)
        half = 0.5 * np.diff(edges)
        mids = 0.5 * (edges[:-1] + edges[1:])
        t = (mids[:, None] + half[:, None] * gx[None, :]).ravel()
        w = (half[:, None] * gw[None, :]).ravel()
        s = t - lo
        c = P.coeffs[k]
        acc = np.zeros(s.shape, dtype=complex)
        for j in range(c.size - 1, -1, -1):
            acc = acc * s + c[j]
        ts.append(t)
        ws.append(w)
        vals.append(acc)
    if not ts:
        return np.zeros(0), np.zeros(0), np.zeros(0, dtype=complex)
    return np.concatenate(ts), np.concatenate(ws), np.concatenate(vals)


def pp_integrate_against(P: PiecewisePolynomial, f: SmoothFunction, k: int = 0, *,
                         tails: str = "error", nodes: int = GAUSS_NODES,
                         max_panel: float = MAX_PANEL) -> complex:
    """``integral of f^(k)(t) P(t) dt`` by composite Gauss-Legendre.

    Each piece is split into panels no longer than ``max_panel``.  With
    ``tails="error"`` nonzero tails raise; ``tails="ignore"`` integrates over
    the breakpoint hull only.
    """
    if tails not in ("error", "ignore"):
        raise ValueError(f"tails must be 'error' or 'ignore', got {tails!r}")
    if tails == "error" and (P.left_value != 0 or P.right_value != 0):
        raise ValueError("integrand has nonzero tails; integral over the real line diverges")
    t, w, vals = _hull_quadrature(P, nodes, max_panel)
    if t.size == 0:
        return 0j
    return complex(np.sum(w * vals * f.eval_derivative(t, k)))


def dd_via_peano(f: SmoothFunction, knots) -> complex:
    """Divided difference from its Peano kernel (the basic spline)."""
    z = _knot_array(knots)
    p = z.size - 1
    if z[0] == z[-1]:
        return complex(f.eval_derivative(z[0], p)) / math.factorial(p)
    B = basic_spline(z)
    return pp_integrate_against(B, f, p) / math.factorial(p - 1)


def dd_via_antiderivative(f: SmoothFunction, knots) -> complex:
    """``f^(p)(a)/p! + (1/p!) * integral_a^b f^(p+1)(t) Delta((x - t)_+^p) dt``."""
    z = _knot_array(knots)
    p = z.size - 1
    A = spline_antiderivative(z)
    head = complex(f.eval_derivative(z[0], p))
    return (head + pp_integrate_against(A, f, p + 1, tails="ignore")) / math.factorial(p)
