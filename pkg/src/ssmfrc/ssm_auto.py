"""Autonomous invariant-manifold coefficients, solved order by order.

Builds the unforced manifold parameterization ``W(s)`` (one series per
phase-space row) and the autonomous reduced dynamics: the coefficient
equation at each multi-index either divides the assembled right-hand side
by ``lambda_i - k . lambda`` or, on the structurally near-resonant slots of
the master rows, moves the term into the reduced dynamics instead.  The
resulting odd-power reduced coefficients are independent of any forcing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .mpoly import (
    MultiIndexPolynomial,
    compose_polynomial,
    derivative_product_coefficient,
    indices_of_order,
)
from .spectral import ModalNonlinearity, SpectralDecomposition


class InnerResonanceError(RuntimeError):
    """A coefficient denominator vanished away from the reserved slots."""

    def __init__(self, row, index, value):
        super().__init__(
            f"inner resonance at row {row}, index {index}: denominator {value:.3e}"
        )
        self.row = row
        self.index = index


@dataclass(frozen=True)
class AutonomousSSM:
    """Unforced manifold parameterization and reduced dynamics.

    ``rows`` holds one series per phase-space row (the first two rows embed
    the parameterization coordinates at linear order).  ``gammas`` are the
    reduced-dynamics coefficients of the odd resonant monomials on the
    first master row; ``gammas_conj`` are the independently assembled
    second-row values, which must mirror them up to conjugation.
    """

    rows: tuple[MultiIndexPolynomial, ...]
    gammas: np.ndarray
    gammas_conj: np.ndarray
    lambda1: complex
    order: int           # truncation order 2*resonant_order + 1
    resonant_order: int  # number of reserved odd slots

    def reduced_rows(self) -> tuple[MultiIndexPolynomial, MultiIndexPolynomial]:
        """The two series of the autonomous reduced vector field."""
        r1 = {(1, 0): self.lambda1}
        r2 = {(0, 1): np.conj(self.lambda1)}
        for i, (g, gc) in enumerate(zip(self.gammas, self.gammas_conj), start=1):
            r1[(i + 1, i)] = g
            r2[(i, i + 1)] = gc
        return (
            MultiIndexPolynomial(r1, self.order),
            MultiIndexPolynomial(r2, self.order),
        )


def _physical_rows(nl: ModalNonlinearity, rows, order):
    """Series of the physical coordinates x_v = sum_i T[v, i] w_i(s)."""
    out = {}
    for v in nl.force.involved_variables():
        coeffs: dict = {}
        for i, w in enumerate(rows):
            tvi = nl.T[v, i]
            if tvi == 0:
                continue
            for k in w.nonzero_index:
                coeffs[k] = coeffs.get(k, 0.0) + tvi * w.coeffs[k]
        out[v] = MultiIndexPolynomial(coeffs, order)
    return out


def _composition_polys(nl: ModalNonlinearity, phys_rows, order):
    """Series of each physical force component composed with the manifold."""
    comps = {}
    for comp, terms in nl.force.component_terms().items():
        comps[comp] = compose_polynomial(terms, phys_rows, order)
    return comps


def modal_composition_coefficient(nl: ModalNonlinearity, comps, i: int, k) -> complex:
    """Coefficient ``[g_i(W(s))]_k`` of the modal force composition."""
    total = 0.0 + 0.0j
    for comp, poly in comps.items():
        total -= nl.B2[i, comp] * poly.coeff(k)
    return total


def build_autonomous(dec: SpectralDecomposition, nl: ModalNonlinearity,
                     resonant_order: int) -> AutonomousSSM:
    """Solve the autonomous coefficient equations through order ``2M + 1``.

    Starts from the linear embedding tangent to the master eigenplane and,
    for each total order from 2 upward, assembles the known right-hand side
    of every row's coefficient equation (derivative products against the
    reduced dynamics, minus the force composition).  On the reserved slots
    ``(c+1, c)`` of row one and ``(c, c+1)`` of row two the coefficient is
    absorbed into the reduced dynamics and the manifold coefficient set to
    zero; everywhere else the equation is divided through.

    Raises `InnerResonanceError` if a denominator vanishes off the
    reserved slots.
    """
    if resonant_order < 1:
        raise ValueError("resonant_order must be >= 1")
    lam = dec.lambdas
    n2 = len(lam)
    order = 2 * resonant_order + 1
    lam1 = complex(lam[0])
    lam2 = complex(lam[1])

    w_dicts: list[dict] = [dict() for _ in range(n2)]
    w_dicts[0][(1, 0)] = 1.0 + 0.0j
    w_dicts[1][(0, 1)] = 1.0 + 0.0j
    r1: dict = {(1, 0): lam1}
    r2: dict = {(0, 1): lam2}
    gammas = np.zeros(resonant_order, dtype=complex)
    gammas_conj = np.zeros(resonant_order, dtype=complex)

    for level in range(2, order + 1):
        rows = tuple(MultiIndexPolynomial(d, order) for d in w_dicts)
        r1_poly = MultiIndexPolynomial(r1, order)
        r2_poly = MultiIndexPolynomial(r2, order)
        phys = _physical_rows(nl, rows, level)
        comps = _composition_polys(nl, phys, level)
        resonant_c = (level - 1) // 2 if level % 2 == 1 else 0
        for k in indices_of_order(level):
            ksum = k[0] * lam1 + k[1] * lam2
            for i in range(n2):
                rhs = derivative_product_coefficient(
                    rows[i], r1_poly, r2_poly, k, skip_unit=True, skip_k=True
                )
                rhs -= modal_composition_coefficient(nl, comps, i, k)
                if resonant_c >= 1 and i == 0 and k == (resonant_c + 1, resonant_c):
                    gammas[resonant_c - 1] = -rhs
                    r1[k] = -rhs
                    continue
                if resonant_c >= 1 and i == 1 and k == (resonant_c, resonant_c + 1):
                    gammas_conj[resonant_c - 1] = -rhs
                    r2[k] = -rhs
                    continue
                denom = lam[i] - ksum
                if abs(denom) <= 1e-10 * (1.0 + abs(lam[i])):
                    raise InnerResonanceError(i, k, abs(denom))
                w_dicts[i][k] = rhs / denom

    rows = tuple(MultiIndexPolynomial(d, order) for d in w_dicts)
    return AutonomousSSM(
        rows=rows,
        gammas=gammas,
        gammas_conj=gammas_conj,
        lambda1=lam1,
        order=order,
        resonant_order=resonant_order,
    )


def evaluate_rows(rows, s1: complex, s2: complex) -> np.ndarray:
    return np.array([w(s1, s2) for w in rows])


def autonomous_invariance_residual(ssm: AutonomousSSM, dec: SpectralDecomposition,
                                   nl: ModalNonlinearity, samples) -> float:
    """Max-norm defect of the autonomous invariance identity over samples.

    For each sample ``s1`` (with ``s2 = conj(s1)``) evaluates
    ``Lam W(s) + G(W(s)) - DW(s) R(s)`` exactly; the result decays one
    order faster than the truncation as ``|s| -> 0``.
    """
    r1, r2 = ssm.reduced_rows()
    worst = 0.0
    for s1 in np.atleast_1d(samples):
        s1 = complex(s1)
        s2 = s1.conjugate()
        q = evaluate_rows(ssm.rows, s1, s2)
        lin = dec.lambdas * q
        gm = nl.evaluate(q)
        rv1 = r1(s1, s2)
        rv2 = r2(s1, s2)
        flow = np.array(
            [w.eval_derivative(0, s1, s2) * rv1 + w.eval_derivative(1, s1, s2) * rv2
             for w in ssm.rows]
        )
        worst = max(worst, float(np.abs(lin + gm - flow).max()))
    return worst


# -- coefficient cache -------------------------------------------------------

CACHE_FORMAT = "ssmfrc-autossm/1"


def model_hash(sys, resonant_order: int, master_pair: int = 0) -> str:
    """Stable hash of everything the autonomous coefficients depend on."""
    h = hashlib.sha256()
    h.update(CACHE_FORMAT.encode())
    for mat in (sys.mass, sys.damping, sys.stiffness):
        h.update(np.ascontiguousarray(mat).tobytes())
    h.update(repr(sys.nonlinearity.terms).encode())
    h.update(f"order={resonant_order};master={master_pair}".encode())
    return h.hexdigest()


def to_cache_dict(ssm: AutonomousSSM, key: str) -> dict:
    """JSON-ready snapshot of the autonomous coefficients.

    Rows are flat lists ``[k1, k2, re, im]``; the format string is bumped
    whenever the layout changes.
    """
    return {
        "format": CACHE_FORMAT,
        "model_hash": key,
        "order": ssm.order,
        "resonant_order": ssm.resonant_order,
        "lambda1": [ssm.lambda1.real, ssm.lambda1.imag],
        "gammas": [[g.real, g.imag] for g in ssm.gammas],
        "gammas_conj": [[g.real, g.imag] for g in ssm.gammas_conj],
        "rows": [
            [[k[0], k[1], w.coeffs[k].real, w.coeffs[k].imag] for k in w.nonzero_index]
            for w in ssm.rows
        ],
    }


def from_cache_dict(data: dict, key: str | None = None) -> AutonomousSSM:
    if data.get("format") != CACHE_FORMAT:
        raise ValueError(f"unsupported cache format {data.get('format')!r}")
    if key is not None and data.get("model_hash") != key:
        raise ValueError("cache entry does not match the requested model")
    order = int(data["order"])
    rows = tuple(
        MultiIndexPolynomial(
            {(int(k1), int(k2)): complex(re, im) for k1, k2, re, im in row}, order
        )
        for row in data["rows"]
    )
    return AutonomousSSM(
        rows=rows,
        gammas=np.array([complex(re, im) for re, im in data["gammas"]]),
        gammas_conj=np.array([complex(re, im) for re, im in data["gammas_conj"]]),
        lambda1=complex(*data["lambda1"]),
        order=order,
        resonant_order=int(data["resonant_order"]),
    )


def save_cache(path, ssm: AutonomousSSM, key: str):
    with open(path, "w") as fh:
        json.dump(to_cache_dict(ssm, key), fh)


def load_cache(path, key: str | None = None) -> AutonomousSSM:
    with open(path) as fh:
        return from_cache_dict(json.load(fh), key)
