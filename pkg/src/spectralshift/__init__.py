"""Divided differences, multiple operator integrals and higher-order spectral shift densities
for finite Hermitian matrices."""

from .divdiff import (
    KnotMultiset,
    divided_difference,
    dd_tensor,
    exponential_simplex_dd,
    partial_fraction_dd,
    repeated_knot_formula,
)
from .funcspace import (
    Exponential,
    FunctionSpecError,
    Gaussian,
    LinearCombination,
    Polynomial,
    Rational,
    SmoothFunction,
    construct,
    parse_function_spec,
)
from .moi import kernel_spline, kernel_trace_identity, operator_derivative, trace_derivative
from .multimeasure import EnvelopeError, MultiSpectralMeasure, build_m, build_m1, integrate_measure
from .spectral import HermitianError, SpectralDecomposition, apply_function, decompose, load_matrix, save_matrix
from .splines import (
    PiecewisePolynomial,
    basic_spline,
    pp_integrate_against,
    spline_antiderivative,
)
from .ssf import SsfResult, krein_xi, ssf_densities, ssf_density, taylor_remainder, trace_formula_check

__version__ = "0.1.0"
