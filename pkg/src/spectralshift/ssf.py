"""Taylor remainders and the higher-order spectral shift densities eta_p.

``eta_1`` is Krein's function ``xi = N_{H0} - N_{H0+V}``.  Higher orders
follow the recursion

    eta_p(t) = Tr(V^(p-1))/(p-1)! - int_{-inf}^t eta_{p-1} - K_{p-1}(t)/(p-1)!

where ``K_{p-1}`` integrates an antiderivative spline against a multiple
spectral measure of order ``p - 1``.  Variant ``nup1`` uses ``m1`` with the
order ``p - 1`` spline; ``nup2`` uses ``m`` with the order ``p - 2`` spline.
Every term is an exact piecewise polynomial, so the densities are too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .funcspace import SmoothFunction
from .moi import kernel_spline, operator_derivative
from .multimeasure import build_m, build_m1, check_envelope
from .spectral import SpectralDecomposition, apply_function, as_hermitian, counting_step, decompose
from .splines import PiecewisePolynomial, pp_cumulative, pp_integrate_against

__all__ = [
    "VARIANTS",
    "SsfResult",
    "TailError",
    "taylor_remainder",
    "krein_xi",
    "ssf_density",
    "ssf_densities",
    "trace_formula_check",
    "spectral_hull",
    "random_pair",
]

VARIANTS = ("nup1", "nup2")
TAIL_RTOL = 1e-8


class TailError(RuntimeError):
    """Recursion produced a density that does not vanish off the spectral hull."""


@dataclass(frozen=True)
class SsfResult:
    order: int
    density: PiecewisePolynomial
    variant: str
    hull: tuple
    mass: complex
    tail_residual: float = 0.0


def _pair(H0, V, cluster_tol):
    H0 = as_hermitian(H0)
    V = as_hermitian(V)
    if H0.shape != V.shape:
        raise ValueError(f"shape mismatch: H0 {H0.shape}, V {V.shape}")
    return H0, V, decompose(H0, cluster_tol), decompose(H0 + V, cluster_tol)


def spectral_hull(H0, V) -> tuple:
    """Smallest interval containing the spectra of ``H0`` and ``H0 + V``."""
    ev = np.concatenate([np.linalg.eigvalsh(as_hermitian(H0)),
                         np.linalg.eigvalsh(as_hermitian(H0) + as_hermitian(V))])
    return float(ev.min()), float(ev.max())


def taylor_remainder(f: SmoothFunction, H0, V, p: int, cluster_tol: float | None = None) -> np.ndarray:
    """``f(H0 + V) - sum_{j < p} (1/j!) d^j/dx^j f(H0 + xV)|_0``."""
    if p < 1:
        raise ValueError(f"order must be >= 1, got {p}")
    H0, V, D0, D1 = _pair(H0, V, cluster_tol)
    R = apply_function(f, D1)
    for j in range(p):
        R = R - operator_derivative(f, D0, V, j) / math.factorial(j)
    return R


def krein_xi(H0, V, cluster_tol: float | None = None) -> PiecewisePolynomial:
    """``xi = N_{H0} - N_{H0+V}``; for ``H0 = [0], V = [2]`` this is the indicator of [0, 2)."""
    _, _, D0, D1 = _pair(H0, V, cluster_tol)
    return _xi(D0, D1)


def _xi(D0: SpectralDecomposition, D1: SpectralDecomposition) -> PiecewisePolynomial:
    return counting_step(D0) - counting_step(D1)


def _snap_tails(P: PiecewisePolynomial, scale: float) -> tuple:
    resid = max(abs(P.left_value), abs(P.right_value))
    if resid > TAIL_RTOL * (1.0 + scale):
        raise TailError(f"density tails {P.left_value}, {P.right_value} do not vanish")
    return PiecewisePolynomial(P.breakpoints, P.coeffs, 0.0, 0.0), float(resid)


def _recursion(D0, D1, V, p_max: int, variant: str) -> list:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if p_max < 1:
        raise ValueError(f"order must be >= 1, got {p_max}")
    if p_max >= 2:
        # largest measure of the recursion, checked before any work is done
        check_envelope(D0.r, p_max if variant == "nup1" else p_max - 1)
    eta = _xi(D0, D1)
    out = [(eta, 0.0)]
    Vpow = np.eye(V.shape[0], dtype=complex)
    for q in range(2, p_max + 1):
        Vpow = Vpow @ V                                 # V^(q-1)
        fact = math.factorial(q - 1)
        const = complex(np.trace(Vpow)) / fact
        if variant == "nup1":
            K = kernel_spline(build_m1(D0, V, q - 1))
        else:
            K = kernel_spline(build_m(D0, V, q - 1))
        raw = PiecewisePolynomial.constant(const) - pp_cumulative(eta) - K.scaled(1.0 / fact)
        eta, resid = _snap_tails(raw, abs(const))
        out.append((eta, resid))
    return out


def _result(p, eta, resid, variant, hull):
    mass = complex(pp_cumulative(eta).right_value)
    return SsfResult(p, eta, variant, hull, mass, resid)


def ssf_densities(H0, V, p_max: int, variant: str = "nup1",
                  cluster_tol: float | None = None) -> list:
    """``[eta_1, ..., eta_{p_max}]`` as :class:`SsfResult` records."""
    H0, V, D0, D1 = _pair(H0, V, cluster_tol)
    ev = np.concatenate([D0.eigenvalues, D1.eigenvalues])
    hull = (float(ev.min()), float(ev.max()))
    levels = _recursion(D0, D1, V, p_max, variant)
    return [_result(p, eta, resid, variant, hull) for p, (eta, resid) in enumerate(levels, start=1)]


def ssf_density(H0, V, p: int, variant: str = "nup1",
                cluster_tol: float | None = None) -> SsfResult:
    """The order-``p`` spectral shift density of the pair ``(H0, V)``."""
    return ssf_densities(H0, V, p, variant, cluster_tol)[-1]


def trace_formula_check(H0, V, p: int, f: SmoothFunction, variant: str = "nup1", *,
                        density: PiecewisePolynomial | None = None,
                        cluster_tol: float | None = None) -> dict:
    """Compare ``Tr R_p(f)`` with ``int f^(p) eta_p``.

    ``density`` may be passed to reuse an already computed ``eta_p``.
    """
    if density is None:
        density = ssf_density(H0, V, p, variant, cluster_tol).density
    trace_side = complex(np.trace(taylor_remainder(f, H0, V, p, cluster_tol)))
    integral_side = pp_integrate_against(density, f, p)
    abs_err = abs(trace_side - integral_side)
    return {
        "trace_side": trace_side,
        "integral_side": integral_side,
        "abs_err": abs_err,
        "rel_err": abs_err / (1.0 + abs(trace_side)),
    }


def random_pair(rng: np.random.Generator, n: int, v_norm: tuple = (0.2, 1.0)):
    """Random complex Hermitian ``H0`` (entries O(1)) and ``V`` with Hilbert-Schmidt norm in ``v_norm``."""
    def herm():
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        return 0.5 * (a + a.conj().T)

    H0 = herm()
    V = herm()
    V *= rng.uniform(*v_norm) / np.linalg.norm(V)
    return H0, V
