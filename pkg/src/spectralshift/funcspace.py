"""Scalar test functions with exact derivatives of every order.

Four closed-form families are provided (polynomials, imaginary exponentials
``exp(i*s*x)``, gaussians and rational functions with simple non-real poles)
together with finite linear combinations of them.  All evaluation is
vectorised over ``t``.

A small text format is understood by :func:`parse_function_spec`::

    poly:c0,c1,...        c0 + c1*x + ...
    exp:s                 exp(i*s*x)
    gauss:center,width    exp(-((x-center)/width)**2)
    rat:re+imi            1/(x - pole)
    sum:(spec;spec;...)   sum of members, each optionally prefixed by ``a*``
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import hermite as _herm
from numpy.polynomial import polynomial as _poly

__all__ = [
    "FunctionSpecError",
    "SmoothFunction",
    "Polynomial",
    "Exponential",
    "Gaussian",
    "Rational",
    "LinearCombination",
    "Derivative",
    "construct",
    "eval_derivative",
    "parse_function_spec",
    "parse_complex",
]

CLASS_TAGS = frozenset({"Wp", "R", "Rb", "Cc"})


class FunctionSpecError(ValueError):
    """Invalid function parameters or an unparsable function spec."""


class SmoothFunction:
    """Base class: a complex-valued function of a real variable.

    Subclasses implement ``_derivative(t, k)`` for an ndarray ``t``.
    """

    family: str = ""
    max_order: float = math.inf
    class_tags: frozenset = frozenset()

    def eval_derivative(self, t, k: int = 0):
        """Return the ``k``-th derivative at ``t`` (scalar or array)."""
        k = int(k)
        if k < 0:
            raise ValueError(f"derivative order must be nonnegative, got {k}")
        if k > self.max_order:
            raise ValueError(
                f"derivative of order {k} requested, {self.family} function "
                f"provides up to {self.max_order}"
            )
        arr = np.asarray(t, dtype=float)
        out = np.asarray(self._derivative(arr, k), dtype=complex)
        if out.shape != arr.shape:
            out = np.broadcast_to(out, arr.shape).copy()
        if arr.ndim == 0:
            return complex(out)
        return out

    def __call__(self, t):
        return self.eval_derivative(t, 0)

    def _derivative(self, t: np.ndarray, k: int) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def to_spec(self) -> str:  # pragma: no cover
        raise NotImplementedError

    def __add__(self, other):
        if not isinstance(other, SmoothFunction):
            return NotImplemented
        return LinearCombination([(1.0, self), (1.0, other)])

    def __mul__(self, scalar):
        if isinstance(scalar, SmoothFunction):
            return NotImplemented
        return LinearCombination([(complex(scalar), self)])

    __rmul__ = __mul__

    def __sub__(self, other):
        if not isinstance(other, SmoothFunction):
            return NotImplemented
        return LinearCombination([(1.0, self), (-1.0, other)])

    def __repr__(self):
        return f"<{type(self).__name__} {self.to_spec()}>"


def _fmt_complex(z: complex) -> str:
    z = complex(z)
    if z.imag == 0:
        return repr(z.real)
    return f"{z.real!r}{z.imag:+}i"


@dataclass(frozen=True, repr=False)
class Polynomial(SmoothFunction):
    """``sum_j coeffs[j] * x**j`` with complex coefficients."""

    coeffs: tuple
    family: str = field(default="polynomial", init=False)
    class_tags: frozenset = field(default=frozenset({"R"}), init=False)

    def __post_init__(self):
        if len(self.coeffs) == 0:
            raise FunctionSpecError("polynomial needs at least one coefficient")
        object.__setattr__(self, "coeffs", tuple(complex(c) for c in self.coeffs))

    @property
    def degree(self) -> int:
        nz = [j for j, c in enumerate(self.coeffs) if c != 0]
        return nz[-1] if nz else 0

    def _derivative(self, t, k):
        c = np.array(self.coeffs, dtype=complex)
        if k >= len(c):
            return np.zeros_like(t, dtype=complex)
        return _poly.polyval(t, _poly.polyder(c, k))

    def to_spec(self):
        return "poly:" + ",".join(_fmt_complex(c) for c in self.coeffs)


@dataclass(frozen=True, repr=False)
class Exponential(SmoothFunction):
    """``exp(i*s*x)``; its Fourier measure is a unit point mass at ``s``."""

    s: float
    family: str = field(default="exponential", init=False)
    class_tags: frozenset = field(default=frozenset({"Wp"}), init=False)

    def __post_init__(self):
        object.__setattr__(self, "s", float(self.s))

    def _derivative(self, t, k):
        return (1j * self.s) ** k * np.exp(1j * self.s * t)

    def to_spec(self):
        return f"exp:{self.s!r}"


@dataclass(frozen=True, repr=False)
class Gaussian(SmoothFunction):
    """``exp(-((x - center)/width)**2)``."""

    center: float
    width: float
    family: str = field(default="gaussian", init=False)
    class_tags: frozenset = field(default=frozenset({"Wp"}), init=False)

    def __post_init__(self):
        if not self.width > 0:
            raise FunctionSpecError(f"gaussian width must be positive, got {self.width}")
        object.__setattr__(self, "center", float(self.center))
        object.__setattr__(self, "width", float(self.width))

    def _derivative(self, t, k):
        # d^k/du^k exp(-u^2) = (-1)^k H_k(u) exp(-u^2), physicists' Hermite H_k
        u = (t - self.center) / self.width
        e = np.zeros(k + 1)
        e[k] = 1.0
        return (-1.0 / self.width) ** k * _herm.hermval(u, e) * np.exp(-u * u)

    def to_spec(self):
        return f"gauss:{self.center!r},{self.width!r}"


@dataclass(frozen=True, repr=False)
class Rational(SmoothFunction):
    """``sum_j residues[j] / (x - poles[j])``, all poles off the real axis."""

    poles: tuple
    residues: tuple = None
    family: str = field(default="rational", init=False)
    class_tags: frozenset = field(default=frozenset({"Wp", "R", "Rb"}), init=False)

    def __post_init__(self):
        poles = tuple(complex(z) for z in self.poles)
        if not poles:
            raise FunctionSpecError("rational function needs at least one pole")
        residues = self.residues
        if residues is None:
            residues = (1.0,) * len(poles)
        residues = tuple(complex(r) for r in residues)
        if len(residues) != len(poles):
            raise FunctionSpecError("poles and residues differ in length")
        for z in poles:
            if z.imag == 0:
                raise FunctionSpecError(f"rational pole {z} lies on the real axis")
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "residues", residues)

    def _derivative(self, t, k):
        out = np.zeros(np.shape(t), dtype=complex)
        scale = (-1) ** k * math.factorial(k)
        for z, r in zip(self.poles, self.residues):
            out = out + r * scale * (t - z) ** (-(k + 1))
        return out

    def to_spec(self):
        parts = []
        for z, r in zip(self.poles, self.residues):
            spec = f"rat:{_fmt_complex(z)}"
            parts.append(spec if r == 1 else f"({_fmt_complex(r)})*{spec}")
        return parts[0] if len(parts) == 1 else "sum:(" + ";".join(parts) + ")"


class LinearCombination(SmoothFunction):
    """Finite linear combination ``sum a_j f_j`` of other functions."""

    family = "linear-combination"

    def __init__(self, terms: Sequence[tuple]):
        terms = [(complex(a), f) for a, f in terms]
        if not terms:
            raise FunctionSpecError("empty linear combination")
        for _, f in terms:
            if not isinstance(f, SmoothFunction):
                raise TypeError(f"not a SmoothFunction: {f!r}")
        self.terms = tuple(terms)
        self.max_order = min(f.max_order for _, f in terms)
        tags = CLASS_TAGS
        for _, f in terms:
            tags = tags & f.class_tags
        self.class_tags = frozenset(tags)

    def _derivative(self, t, k):
        out = np.zeros(np.shape(t), dtype=complex)
        for a, f in self.terms:
            out = out + a * f._derivative(t, k)
        return out

    def to_spec(self):
        parts = []
        for a, f in self.terms:
            spec = f.to_spec()
            parts.append(spec if a == 1 else f"({_fmt_complex(a)})*{spec}")
        return "sum:(" + ";".join(parts) + ")"


class Derivative(SmoothFunction):
    """The ``order``-th derivative of another function, as a function in its own right."""

    family = "derivative"

    def __init__(self, base: SmoothFunction, order: int = 1):
        if order < 0:
            raise FunctionSpecError("derivative order must be nonnegative")
        self.base = base
        self.order = int(order)
        self.max_order = base.max_order - order
        self.class_tags = base.class_tags

    def _derivative(self, t, k):
        return self.base._derivative(t, k + self.order)

    def to_spec(self):
        raise FunctionSpecError("derivatives have no spec form")


def construct(family: str, parameters) -> SmoothFunction:
    """Build a function of the named family.

    ``parameters`` is the coefficient list for ``polynomial``, ``s`` for
    ``exponential``, ``(center, width)`` for ``gaussian``, a pole list or
    ``(poles, residues)`` for ``rational`` and a list of ``(scalar, function)``
    pairs for ``linear-combination``.
    """
    if family == "polynomial":
        return Polynomial(tuple(parameters))
    if family == "exponential":
        if np.ndim(parameters):
            (parameters,) = parameters
        return Exponential(parameters)
    if family == "gaussian":
        center, width = parameters
        return Gaussian(center, width)
    if family == "rational":
        params = list(parameters)
        if len(params) == 2 and all(np.ndim(x) for x in params):
            return Rational(tuple(params[0]), tuple(params[1]))
        return Rational(tuple(params))
    if family == "linear-combination":
        return LinearCombination(parameters)
    raise FunctionSpecError(f"unknown function family {family!r}")


def eval_derivative(f: SmoothFunction, t, k: int):
    """Exact ``k``-th derivative of ``f`` at ``t``."""
    return f.eval_derivative(t, k)


def parse_complex(text: str) -> complex:
    """Parse ``1``, ``-2.5``, ``1+2i``, ``3-0.5j``, ``i`` and friends."""
    s = text.strip().replace(" ", "")
    if s.startswith("(") and s.endswith(")"):
        s = s[1:-1]
    if not s:
        raise FunctionSpecError("empty number")
    s = s.replace("I", "i").replace("J", "j")
    if s.endswith("i"):
        s = s[:-1] + "j"
    if s in ("j", "+j", "-j"):
        s = s.replace("j", "1j")
    s = re.sub(r"([+-])j$", r"\g<1>1j", s)
    try:
        return complex(s)
    except ValueError:
        raise FunctionSpecError(f"cannot parse number {text!r}") from None


def _split_top(text: str, sep: str) -> list:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise FunctionSpecError(f"unbalanced parentheses in {text!r}")
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise FunctionSpecError(f"unbalanced parentheses in {text!r}")
    parts.append("".join(cur))
    return parts


def parse_function_spec(text: str) -> SmoothFunction:
    """Parse the CLI function mini-language (see module docstring)."""
    s = text.strip()
    head, sep, body = s.partition(":")
    if not sep:
        # scalar prefix ``a*spec`` without a family keyword in front
        pieces = _split_top(s, "*")
        if len(pieces) >= 2:
            scale = parse_complex(pieces[0])
            return LinearCombination([(scale, parse_function_spec("*".join(pieces[1:])))])
        raise FunctionSpecError(f"missing family prefix in {text!r}")
    head = head.strip()
    if "*" in head:
        pieces = _split_top(s, "*")
        scale = parse_complex(pieces[0])
        return LinearCombination([(scale, parse_function_spec("*".join(pieces[1:])))])
    if head == "poly":
        if not body.strip():
            raise FunctionSpecError("poly: needs at least one coefficient")
        return Polynomial(tuple(parse_complex(c) for c in body.split(",")))
    if head == "exp":
        s_val = parse_complex(body)
        if s_val.imag != 0:
            raise FunctionSpecError("exp: frequency must be real")
        return Exponential(s_val.real)
    if head == "gauss":
        args = body.split(",")
        if len(args) != 2:
            raise FunctionSpecError("gauss: expects center,width")
        c, w = (parse_complex(a) for a in args)
        return Gaussian(c.real, w.real)
    if head == "rat":
        return Rational((parse_complex(body),))
    if head == "sum":
        b = body.strip()
        if not (b.startswith("(") and b.endswith(")")):
            raise FunctionSpecError("sum: expects a parenthesised ';'-separated list")
        members = [m for m in _split_top(b[1:-1], ";") if m.strip()]
        if not members:
            raise FunctionSpecError("sum: empty member list")
        terms = []
        for m in members:
            f = parse_function_spec(m)
            if isinstance(f, LinearCombination) and len(f.terms) == 1:
                terms.append(f.terms[0])
            else:
                terms.append((1.0, f))
        return LinearCombination(terms)
    raise FunctionSpecError(f"unknown function family {head!r} in {text!r}")
