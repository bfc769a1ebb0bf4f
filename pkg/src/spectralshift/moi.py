"""Operator derivatives as finite multiple operator integrals, and their traces.

In finite dimensions

    d^p/dx^p f(H0 + xV)|_{x=0} = p! sum Delta(f)[l_i1..l_i(p+1)] P_i1 V P_i2 V ... V P_i(p+1)

summed over all (p+1)-tuples of distinct eigenvalues of H0.  Traces of these
derivatives reduce to integrals of divided differences against the multiple
spectral measures; :func:`trace_derivative` exposes four routes to the same
number and :func:`kernel_trace_identity` the spline-kernel form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .divdiff import dd_tensor
from .funcspace import SmoothFunction
from .multimeasure import (
    MultiSpectralMeasure,
    build_m,
    build_m1,
    check_envelope,
    eigen_chain,
    integrate_measure,
)
from .spectral import SpectralDecomposition, apply_function, as_hermitian, hs_norm
from .splines import PiecewisePolynomial, pp_combine, pp_integrate_against, spline_antiderivative

__all__ = [
    "METHODS",
    "operator_derivative",
    "trace_derivative",
    "finite_difference_trace",
    "central_weights",
    "kernel_spline",
    "kernel_trace_identity",
    "KernelIdentity",
]

METHODS = ("m1_form", "m_form", "operator_trace", "finite_difference")


def operator_derivative(f: SmoothFunction, D: SpectralDecomposition, V, p: int) -> np.ndarray:
    """``p``-th derivative of ``x -> f(H0 + xV)`` at ``x = 0`` (``p = 0`` gives ``f(H0)``)."""
    if p < 0:
        raise ValueError(f"order must be nonnegative, got {p}")
    if p == 0:
        return apply_function(f, D)
    V = as_hermitian(V)
    check_envelope(D.r, p + 1)
    dd = dd_tensor(f, D.eigenvalues, p)
    X = eigen_chain(D, V, p)                    # X[a, i2, ..., ip, b]
    labels = D.labels
    dd = np.take(np.take(dd, labels, axis=0), labels, axis=-1)
    inner = "".join(chr(ord("c") + k) for k in range(p - 1))
    R = np.einsum(f"a{inner}b,a{inner}b->ab", dd, X)
    return math.factorial(p) * D.from_eigenbasis(R)


def central_weights(order: int, offsets) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative on integer ``offsets``."""
    offs = np.asarray(offsets, dtype=float)
    A = np.vander(offs, increasing=True).T
    rhs = np.zeros(offs.size)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(A, rhs)


# (stencil half-width, base step) per derivative order; measured on random
# n <= 6 pairs so that round-off and truncation both stay below ~1e-6
FD_STENCIL = {1: (2, 3e-2), 2: (2, 3e-2), 3: (4, 0.15), 4: (4, 0.25)}


def finite_difference_trace(f: SmoothFunction, H0, V, p: int, h: float | None = None) -> complex:
    """``p``-th derivative of ``x -> Tr f(H0 + xV)`` at 0 by a central stencil.

    The trace is evaluated from fresh eigenvalues of ``H0 + xV``, so this route
    shares no code with the divided-difference formulas.  One Richardson
    extrapolation step from ``h`` to ``h/2`` follows the stencil.
    """
    H0 = as_hermitian(H0)
    V = as_hermitian(V)
    if p == 0:
        return complex(np.sum(f.eval_derivative(np.linalg.eigvalsh(H0), 0)))
    half, base = FD_STENCIL.get(p, (p // 2 + 2, 0.3))
    offsets = np.arange(-half, half + 1)
    w = central_weights(p, offsets)
    accuracy = 2 * half + 1 - p
    accuracy += accuracy % 2   # symmetric stencils gain one order for free
    if h is None:
        h = base / (1.0 + hs_norm(V))

    def trace_f(x):
        return complex(np.sum(f.eval_derivative(np.linalg.eigvalsh(H0 + x * V), 0)))

    def stencil(step):
        return sum(wk * trace_f(k * step) for wk, k in zip(w, offsets)) / step**p

    coarse, fine = stencil(h), stencil(h / 2)
    gain = 2.0**accuracy
    return (gain * fine - coarse) / (gain - 1.0)


def trace_derivative(f: SmoothFunction, D: SpectralDecomposition, V, p: int,
                     method: str = "m1_form", *, measures: dict | None = None,
                     h: float | None = None) -> complex:
    """``Tr d^p/dx^p f(H0 + xV)`` at 0 by one of :data:`METHODS`.

    ``measures`` may carry prebuilt ``{"m": ..., "m1": ...}`` for this order.
    """
    if p < 1:
        raise ValueError(f"order must be >= 1, got {p}")
    measures = measures or {}
    if method == "m1_form":
        mu = measures.get("m1") or build_m1(D, V, p)
        return math.factorial(p) * integrate_measure(mu, dd_tensor(f, D.eigenvalues, p))
    if method == "m_form":
        mu = measures.get("m") or build_m(D, V, p)
        dd = dd_tensor(f, D.eigenvalues, p - 1, derivative=1)
        return math.factorial(p - 1) * integrate_measure(mu, dd)
    if method == "operator_trace":
        return complex(np.trace(operator_derivative(f, D, V, p)))
    if method == "finite_difference":
        return finite_difference_trace(f, D.reconstruct(), V, p, h=h)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def kernel_spline(mu: MultiSpectralMeasure) -> PiecewisePolynomial:
    """``t -> integral of Delta((x - t)_+^k) dmu`` with ``k = arity - 1``.

    Built exactly as a combination of antiderivative splines, one per index
    multiset of the measure.
    """
    groups = mu.symmetric_groups()
    scalars, terms = [], []
    for key, w in groups.items():
        if w == 0:
            continue
        scalars.append(w)
        terms.append(spline_antiderivative(mu.atoms[list(key)]))
    return pp_combine(scalars, terms)


@dataclass(frozen=True)
class KernelIdentity:
    lhs: complex
    rhs_m1: complex
    rhs_m: complex
    interval: tuple


def kernel_trace_identity(f: SmoothFunction, D: SpectralDecomposition, V, p: int,
                          interval=None, *, slack: float = 1e-9) -> KernelIdentity:
    """Three evaluations of ``Tr[d^p f(H0 + xV)] - Tr(V^p) f^(p)(a)``.

    ``lhs`` uses the operator derivative directly; ``rhs_m1`` and ``rhs_m``
    integrate ``f^(p+1)`` over ``[a, b]`` against the kernel splines of the
    measures ``m1`` (order p) and ``m`` (order p - 1).  ``[a, b]`` must contain
    the spectra of ``H0`` and ``H0 + V``; it defaults to their convex hull.
    """
    V = as_hermitian(V)
    H0 = D.reconstruct()
    spec = np.concatenate([D.eigenvalues, np.linalg.eigvalsh(H0 + V)])
    lo, hi = float(spec.min()), float(spec.max())
    if interval is None:
        a, b = lo, hi
    else:
        a, b = map(float, interval)
        tol = slack * (1.0 + max(abs(lo), abs(hi)))
        if a > lo + tol or b < hi - tol:
            raise ValueError(f"interval [{a}, {b}] does not contain the spectra hull [{lo}, {hi}]")
    trVp = complex(np.trace(np.linalg.matrix_power(V, p)))
    lhs = trace_derivative(f, D, V, p, "operator_trace") - trVp * complex(f.eval_derivative(a, p))
    rhs = {}
    for name, builder in (("m1", build_m1), ("m", build_m)):
        K = kernel_spline(builder(D, V, p)).refine([a, b])
        rhs[name] = pp_integrate_against(K, f, p + 1, tails="ignore")
    return KernelIdentity(lhs, rhs["m1"], rhs["m"], (a, b))
