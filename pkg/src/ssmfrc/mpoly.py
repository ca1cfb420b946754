"""Sparse truncated power series in two complex variables.

Series live in the parameterization coordinates ``(s1, s2)`` of a
two-dimensional invariant manifold, with complex coefficients keyed by the
exponent pair ``k = (k1, k2)``.  The module provides the recurrence-based
coefficient operations that make order-by-order manifold construction cheap:
the k-th coefficient of ``sum_j d(w)/d(s_j) * r_j``, the k-th coefficient of
an integer power ``w**a`` built from the previous power, and polynomial
composition ``g(w_1, ..., w_p)`` for a finite polynomial ``g``.

All iteration runs over the registry of nonzero coefficient indices in a
fixed graded ordering, so floating point summation order is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

MultiIndex = tuple[int, int]

#: Coefficients at or below this magnitude are dropped from the nonzero
#: registry (and from storage).  Below double-precision accumulation noise
#: for the expansion orders this library targets.
DROP_TOL = 1e-14


def index_order(k: MultiIndex) -> int:
    """Total order |k| = k1 + k2 of a multi-index."""
    return k[0] + k[1]


def grlex_key(k: MultiIndex):
    """Sort key for the library-wide graded lexicographic ordering.

    Indices sort by total order first; within one order, by decreasing
    power of the first variable, i.e. (2,0), (1,1), (0,2).
    """
    return (k[0] + k[1], k[1])


def indices_of_order(order: int) -> list[MultiIndex]:
    """All multi-indices with |k| == order, in graded-lex order."""
    return [(order - k2, k2) for k2 in range(order + 1)]


def indices_up_to(order: int) -> list[MultiIndex]:
    """All multi-indices with |k| <= order, in graded-lex order."""
    out: list[MultiIndex] = []
    for d in range(order + 1):
        out.extend(indices_of_order(d))
    return out


class OrderOverflowError(ValueError):
    """A coefficient was requested beyond a series' truncation order."""


@dataclass(frozen=True)
class MultiIndexPolynomial:
    """Truncated power series ``sum_k c_k s1^k1 s2^k2``.

    Parameters
    ----------
    coeffs : mapping
        Multi-index -> complex coefficient.  Entries with magnitude at or
        below `DROP_TOL` are dropped on construction; an absent key means
        the coefficient is exactly zero.
    truncation_order : int
        Largest total order through which the stored coefficients are
        meaningful.  Every stored key must satisfy |k| <= truncation_order.

    Instances are immutable after construction and safe to share.
    """

    coeffs: dict[MultiIndex, complex]
    truncation_order: int
    nonzero_index: tuple[MultiIndex, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.truncation_order < 0:
            raise ValueError("truncation_order must be non-negative")
        kept = {}
        for k, c in self.coeffs.items():
            k = (int(k[0]), int(k[1]))
            if k[0] < 0 or k[1] < 0:
                raise ValueError(f"negative exponent in multi-index {k}")
            if index_order(k) > self.truncation_order:
                raise OrderOverflowError(
                    f"index {k} exceeds truncation order {self.truncation_order}"
                )
            c = complex(c)
            if abs(c) > DROP_TOL:
                kept[k] = c
        object.__setattr__(self, "coeffs", kept)
        object.__setattr__(
            self, "nonzero_index", tuple(sorted(kept, key=grlex_key))
        )

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, truncation_order: int) -> "MultiIndexPolynomial":
        return cls({}, truncation_order)

    @classmethod
    def monomial(cls, k: MultiIndex, c: complex, truncation_order: int) -> "MultiIndexPolynomial":
        return cls({k: c}, truncation_order)

    # -- access ------------------------------------------------------------

    def coeff(self, k: MultiIndex) -> complex:
        """Coefficient at multi-index ``k`` (0 for absent keys)."""
        return self.coeffs.get(k, 0.0 + 0.0j)

    def degree(self) -> int:
        """Largest total order with a nonzero coefficient (-1 if zero)."""
        if not self.nonzero_index:
            return -1
        return index_order(self.nonzero_index[-1])

    def is_zero(self) -> bool:
        return not self.nonzero_index

    # -- evaluation --------------------------------------------------------

    def __call__(self, s1: complex, s2: complex) -> complex:
        total = 0.0 + 0.0j
        for k in self.nonzero_index:
            total += self.coeffs[k] * s1 ** k[0] * s2 ** k[1]
        return total

    def eval_derivative(self, j: int, s1: complex, s2: complex) -> complex:
        """Evaluate d/d(s_j) of the series at ``(s1, s2)``; j in {0, 1}."""
        if j not in (0, 1):
            raise ValueError("variable index must be 0 or 1")
        total = 0.0 + 0.0j
        for k in self.nonzero_index:
            if k[j] == 0:
                continue
            e = (k[0] - 1, k[1]) if j == 0 else (k[0], k[1] - 1)
            total += k[j] * self.coeffs[k] * s1 ** e[0] * s2 ** e[1]
        return total

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other: "MultiIndexPolynomial") -> "MultiIndexPolynomial":
        order = max(self.truncation_order, other.truncation_order)
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, 0.0) + c
        return MultiIndexPolynomial(out, order)

    def scale(self, c: complex) -> "MultiIndexPolynomial":
        return MultiIndexPolynomial(
            {k: c * v for k, v in self.coeffs.items()}, self.truncation_order
        )

    def conjugate_swap(self) -> "MultiIndexPolynomial":
        """Conjugate all coefficients and swap the two variables.

        Maps ``w(s1, s2)`` to ``conj(w)(s2, s1)``, the involution that pairs
        rows belonging to complex-conjugate eigenvalues.
        """
        return MultiIndexPolynomial(
            {(k[1], k[0]): v.conjugate() for k, v in self.coeffs.items()},
            self.truncation_order,
        )


def poly_mul(p: MultiIndexPolynomial, q: MultiIndexPolynomial, order: int) -> MultiIndexPolynomial:
    """Product of two series, truncated at total ``order``."""
    out: dict[MultiIndex, complex] = {}
    for m in p.nonzero_index:
        cm = p.coeffs[m]
        rem = order - index_order(m)
        if rem < 0:
            continue
        for n in q.nonzero_index:
            if index_order(n) > rem:
                continue
            k = (m[0] + n[0], m[1] + n[1])
            out[k] = out.get(k, 0.0) + cm * q.coeffs[n]
    return MultiIndexPolynomial(out, order)


def product_coefficient(p: MultiIndexPolynomial, q: MultiIndexPolynomial, k: MultiIndex) -> complex:
    """Single coefficient ``[p * q]_k`` without forming the product."""
    total = 0.0 + 0.0j
    for m in p.nonzero_index:
        if m[0] > k[0] or m[1] > k[1]:
            continue
        total += p.coeffs[m] * q.coeff((k[0] - m[0], k[1] - m[1]))
    return total


def derivative_product_coefficient(
    w: MultiIndexPolynomial,
    r1: MultiIndexPolynomial,
    r2: MultiIndexPolynomial,
    k: MultiIndex,
    skip_unit: bool = False,
    skip_k: bool = False,
) -> complex:
    """k-th coefficient of ``d(w)/d(s1) * r1 + d(w)/d(s2) * r2``.

    Iterates only over the nonzero registry of ``w``, restricted per
    variable j to indices ``m <= k + e_j`` with ``m_j > 0``; the matching
    ``r_j`` coefficient is looked up at ``k + e_j - m``.

    ``skip_unit`` drops the ``m == e_j`` terms and ``skip_k`` the
    ``m == k`` terms; the invariance-equation assembly uses these to leave
    out the contributions that sit on the left-hand side of its
    coefficient equations.
    """
    for p in (w, r1, r2):
        if index_order(k) > p.truncation_order:
            raise OrderOverflowError(
                f"coefficient {k} beyond truncation order {p.truncation_order}"
            )
    total = 0.0 + 0.0j
    for j, r in ((0, r1), (1, r2)):
        kt = (k[0] + 1, k[1]) if j == 0 else (k[0], k[1] + 1)
        unit = (1, 0) if j == 0 else (0, 1)
        for m in w.nonzero_index:
            if m[j] == 0 or m[0] > kt[0] or m[1] > kt[1]:
                continue
            if skip_unit and m == unit:
                continue
            if skip_k and m == k:
                continue
            total += m[j] * w.coeffs[m] * r.coeff((kt[0] - m[0], kt[1] - m[1]))
    return total


def _power_iteration_index(w: MultiIndexPolynomial, k: MultiIndex) -> int:
    """Pick the differentiation variable for the power recurrence.

    Chooses the admissible variable j (k_j > 0) that minimizes the number
    of nonzero indices ``m <= k`` with ``m_j > 0``, tie-breaking toward the
    first variable.
    """
    counts = []
    for j in (0, 1):
        if k[j] == 0:
            counts.append(None)
            continue
        counts.append(
            sum(
                1
                for m in w.nonzero_index
                if m[j] > 0 and m[0] <= k[0] and m[1] <= k[1]
            )
        )
    if counts[0] is None and counts[1] is None:
        raise ValueError("k must be nonzero")
    if counts[0] is None:
        return 1
    if counts[1] is None:
        return 0
    return 0 if counts[0] <= counts[1] else 1


def power_coefficient(
    w: MultiIndexPolynomial,
    a: int,
    k: MultiIndex,
    lower_power: MultiIndexPolynomial,
) -> complex:
    """k-th coefficient of ``w**a`` given the series of ``w**(a-1)``.

    Uses the derivative recurrence
    ``H[a, k] = (a / k_j) * sum_{m <= k, m_j > 0} m_j * w_m * H[a-1, k-m]``
    over the nonzero registry of ``w``.  The constant term (k == 0) is not
    covered by the recurrence and is rejected.
    """
    if a < 1:
        raise ValueError("exponent must be a positive integer")
    if k == (0, 0):
        raise ValueError("constant term is handled separately from the recurrence")
    if a == 1:
        return w.coeff(k)
    j = _power_iteration_index(w, k)
    total = 0.0 + 0.0j
    for m in w.nonzero_index:
        if m[j] == 0 or m[0] > k[0] or m[1] > k[1]:
            continue
        total += m[j] * w.coeffs[m] * lower_power.coeff((k[0] - m[0], k[1] - m[1]))
    return (a / k[j]) * total


def polynomial_power(w: MultiIndexPolynomial, a: int, order: int) -> MultiIndexPolynomial:
    """Full series of ``w**a`` truncated at total ``order``."""
    if a < 1:
        raise ValueError("exponent must be a positive integer")
    if w.truncation_order == order:
        current = w
    else:
        current = MultiIndexPolynomial(
            {k: c for k, c in w.coeffs.items() if index_order(k) <= order}, order
        )
    if a == 1:
        return current
    const = w.coeff((0, 0))
    for step in range(2, a + 1):
        coeffs: dict[MultiIndex, complex] = {}
        c0 = const * current.coeff((0, 0))
        if abs(c0) > DROP_TOL:
            coeffs[(0, 0)] = c0
        for k in indices_up_to(order):
            if k == (0, 0):
                continue
            coeffs[k] = power_coefficient(w, step, k, current)
        current = MultiIndexPolynomial(coeffs, order)
    return current


# -- polynomial nonlinearity descriptors ------------------------------------

NonlinearityTerm = tuple[complex, tuple[tuple[int, int], ...]]


def normalize_terms(terms: Iterable) -> tuple[NonlinearityTerm, ...]:
    """Validate and normalize a scalar polynomial descriptor.

    Each term is ``(coefficient, exponents)`` where ``exponents`` maps a
    variable index to a positive integer power (a mapping or an iterable of
    pairs).  Anything else is rejected as a non-polynomial descriptor.
    """
    out = []
    for term in terms:
        try:
            c, exps = term
            c = complex(c)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"not a polynomial term: {term!r}") from exc
        if isinstance(exps, Mapping):
            items = exps.items()
        else:
            items = list(exps)
        norm = []
        for v, e in items:
            v, e = int(v), int(e)
            if v < 0 or e <= 0:
                raise ValueError(f"bad variable power {v}:{e} in term {term!r}")
            norm.append((v, e))
        norm.sort()
        out.append((c, tuple(norm)))
    return tuple(out)


def compose_polynomial(
    terms: Iterable,
    rows: Mapping[int, MultiIndexPolynomial] | Sequence[MultiIndexPolynomial],
    order: int,
) -> MultiIndexPolynomial:
    """Series of ``g(w_0, w_1, ...)`` truncated at total ``order``.

    ``g`` is the finite polynomial described by ``terms``; ``rows`` supplies
    the series substituted for each variable index appearing in the terms.
    Powers of each row are cached across terms.
    """
    terms = normalize_terms(terms)
    power_cache: dict[tuple[int, int], MultiIndexPolynomial] = {}

    def row_power(v: int, e: int) -> MultiIndexPolynomial:
        key = (v, e)
        if key not in power_cache:
            power_cache[key] = polynomial_power(rows[v], e, order)
        return power_cache[key]

    total = MultiIndexPolynomial.zero(order)
    for c, exps in terms:
        part = None
        for v, e in exps:
            factor = row_power(v, e)
            part = factor if part is None else poly_mul(part, factor, order)
        if part is None:
            part = MultiIndexPolynomial.monomial((0, 0), 1.0, order)
        total = total + part.scale(c)
    return total


def compose_nonlinearity(
    terms: Iterable,
    rows: Mapping[int, MultiIndexPolynomial] | Sequence[MultiIndexPolynomial],
    k: MultiIndex,
) -> complex:
    """k-th coefficient of the scalar composition ``g(w_0, w_1, ...)``."""
    return compose_polynomial(terms, rows, index_order(k)).coeff(k)


def differentiate_terms(terms: Iterable, v: int) -> tuple[NonlinearityTerm, ...]:
    """Terms of ``dg/d(x_v)`` for a polynomial descriptor ``g``."""
    out = []
    for c, exps in normalize_terms(terms):
        emap = dict(exps)
        if v not in emap:
            continue
        e = emap.pop(v)
        if e > 1:
            emap[v] = e - 1
        out.append((c * e, tuple(sorted(emap.items()))))
    return tuple(out)
