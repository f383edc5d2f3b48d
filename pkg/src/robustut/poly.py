"""Dense multivariate polynomials over float coefficients.

Monomials are plain tuples of non-negative integer exponents, one entry per
variable.  The monomial basis is graded lexicographic: sorted by total degree
first, then lexicographically with earlier variables dominating, so that
``basis(2, 2) == [1, x1, x2, x1^2, x1*x2, x2^2]``.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

Monomial = Tuple[int, ...]

# Terms with |coefficient| below this are dropped to keep polynomials canonical.
COEFF_DROP_TOL = 1e-14


def monomial_degree(m: Monomial) -> int:
    return sum(m)


def _graded_lex_key(m: Monomial):
    return (sum(m), tuple(-e for e in m))


def _degree_block(n_vars: int, degree: int) -> Iterable[Monomial]:
    """All exponent tuples of total degree ``degree``, first variable dominant."""
    if n_vars == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _degree_block(n_vars - 1, degree - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def basis(n_vars: int, max_degree: int) -> Tuple[Monomial, ...]:
    """Graded-lex ordered monomials of total degree <= max_degree.

    The list has length C(n_vars + max_degree, max_degree) and starts with the
    constant monomial.
    """
    if n_vars < 1:
        raise ValueError(f"n_vars must be >= 1, got {n_vars}")
    if max_degree < 0:
        raise ValueError(f"max_degree must be >= 0, got {max_degree}")
    out = []
    for d in range(max_degree + 1):
        out.extend(_degree_block(n_vars, d))
    assert len(out) == math.comb(n_vars + max_degree, max_degree)
    return tuple(out)


@lru_cache(maxsize=None)
def _basis_index(n_vars: int, max_degree: int) -> Dict[Monomial, int]:
    return {m: i for i, m in enumerate(basis(n_vars, max_degree))}


def monomial_index(m: Monomial, max_degree: int) -> int:
    """Position of ``m`` in ``basis(len(m), max_degree)``."""
    d = monomial_degree(m)
    if d > max_degree:
        raise ValueError(f"monomial {m} has degree {d} > max_degree {max_degree}")
    return _basis_index(len(m), max_degree)[tuple(m)]


class Polynomial:
    """Polynomial in ``n_vars`` real variables, stored as {monomial: coeff}.

    Canonical form: no stored coefficient has magnitude below COEFF_DROP_TOL.
    Instances are treated as immutable; all arithmetic returns new objects.
    """

    __slots__ = ("n_vars", "terms")

    def __init__(self, n_vars: int, terms: Mapping[Monomial, float] | None = None):
        if n_vars < 1:
            raise ValueError(f"n_vars must be >= 1, got {n_vars}")
        self.n_vars = int(n_vars)
        clean: Dict[Monomial, float] = {}
        for mono, coeff in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != n_vars:
                raise ValueError(
                    f"monomial {mono} has {len(mono)} exponents, expected {n_vars}"
                )
            if any(e < 0 for e in mono):
                raise ValueError(f"negative exponent in monomial {mono}")
            c = float(coeff)
            if abs(c) >= COEFF_DROP_TOL:
                clean[mono] = c
        self.terms = clean

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, n_vars: int) -> "Polynomial":
        return cls(n_vars, {})

    @classmethod
    def constant(cls, n_vars: int, value: float) -> "Polynomial":
        return cls(n_vars, {(0,) * n_vars: value})

    @classmethod
    def variable(cls, n_vars: int, index: int) -> "Polynomial":
        if not 0 <= index < n_vars:
            raise ValueError(f"variable index {index} out of range for n_vars {n_vars}")
        mono = tuple(1 if i == index else 0 for i in range(n_vars))
        return cls(n_vars, {mono: 1.0})

    # -- queries -------------------------------------------------------------

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree 0."""
        if not self.terms:
            return 0
        return max(sum(m) for m in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, mono: Monomial) -> float:
        return self.terms.get(tuple(mono), 0.0)

    # -- arithmetic ----------------------------------------------------------

    def _check_same_ring(self, other: "Polynomial") -> None:
        if self.n_vars != other.n_vars:
            raise ValueError(
                f"variable count mismatch: {self.n_vars} vs {other.n_vars}"
            )

    def add(self, other: "Polynomial") -> "Polynomial":
        self._check_same_ring(other)
        out = dict(self.terms)
        for mono, coeff in other.terms.items():
            out[mono] = out.get(mono, 0.0) + coeff
        return Polynomial(self.n_vars, out)

    def mul(self, other: "Polynomial") -> "Polynomial":
        self._check_same_ring(other)
        out: Dict[Monomial, float] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                mono = tuple(a + b for a, b in zip(ma, mb))
                out[mono] = out.get(mono, 0.0) + ca * cb
        return Polynomial(self.n_vars, out)

    def scale(self, factor: float) -> "Polynomial":
        return Polynomial(
            self.n_vars, {m: c * factor for m, c in self.terms.items()}
        )

    def power(self, exponent: int) -> "Polynomial":
        if exponent < 0:
            raise ValueError("negative powers are not polynomials")
        result = Polynomial.constant(self.n_vars, 1.0)
        base = self
        e = exponent
        while e:
            if e & 1:
                result = result.mul(base)
            base = base.mul(base)
            e >>= 1
        return result

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.n_vars, other)
        return self.add(other)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.n_vars, other)
        return self.add(-other)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(float(other))
        return self.mul(other)

    __rmul__ = __mul__

    def __pow__(self, exponent: int):
        return self.power(exponent)

    def __eq__(self, other):
        return (
            isinstance(other, Polynomial)
            and self.n_vars == other.n_vars
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.n_vars, frozenset(self.terms.items())))

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, point: Sequence[float]) -> float:
        if len(point) != self.n_vars:
            raise ValueError(
                f"point has {len(point)} coordinates, expected {self.n_vars}"
            )
        total = 0.0
        for mono, coeff in self.terms.items():
            v = coeff
            for x, e in zip(point, mono):
                if e:
                    v *= x**e
            total += v
        return total

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        """Evaluate on an (N, n_vars) array of points, returning shape (N,)."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.n_vars:
            raise ValueError(
                f"points must be (N, {self.n_vars}), got {points.shape}"
            )
        out = np.zeros(points.shape[0])
        for mono, coeff in self.terms.items():
            term = np.full(points.shape[0], coeff)
            for j, e in enumerate(mono):
                if e:
                    term *= points[:, j] ** e
            out += term
        return out

    def __call__(self, point):
        return self.evaluate(point)

    # -- substitution --------------------------------------------------------

    def affine_substitute(
        self, centers: Sequence[float], scales: Sequence[float]
    ) -> "Polynomial":
        """Compose with x_i = centers[i] + scales[i] * t_i, returning p(t)."""
        if len(centers) != self.n_vars or len(scales) != self.n_vars:
            raise ValueError("centers/scales must have one entry per variable")
        maps = [
            Polynomial(self.n_vars, {(0,) * self.n_vars: c}).add(
                Polynomial.variable(self.n_vars, i).scale(s)
            )
            for i, (c, s) in enumerate(zip(centers, scales))
        ]
        result = Polynomial.zero(self.n_vars)
        for mono, coeff in self.terms.items():
            term = Polynomial.constant(self.n_vars, coeff)
            for i, e in enumerate(mono):
                if e:
                    term = term.mul(maps[i].power(e))
            result = result.add(term)
        return result

    # -- display -------------------------------------------------------------

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        parts = []
        for mono in sorted(self.terms, key=_graded_lex_key):
            coeff = self.terms[mono]
            factors = [
                f"x{i + 1}" + (f"^{e}" if e > 1 else "")
                for i, e in enumerate(mono)
                if e
            ]
            body = "*".join(factors) if factors else "1"
            parts.append(f"{coeff:.6g}*{body}")
        return "Polynomial(" + " + ".join(parts) + ")"


def poly_add(a: Polynomial, b: Polynomial) -> Polynomial:
    return a.add(b)


def poly_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    return a.mul(b)


def poly_eval(p: Polynomial, point: Sequence[float]) -> float:
    return p.evaluate(point)
