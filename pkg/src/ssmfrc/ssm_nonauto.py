"""Forced manifold coefficients at one forcing frequency.

Solves the order-eps coefficient equations under a single-harmonic cosine
forcing: every coefficient of the time-periodic correction ``W1(s, phi)``
splits into an ``exp(i phi)`` and an ``exp(-i phi)`` part, each obtained by
dividing an assembled right-hand side by ``lambda_i - k . lambda -+ i
Omega``.  The slots whose denominators degenerate near resonance are
instead absorbed into the forced part of the reduced dynamics.  The whole
construction is a pure function of the autonomous manifold and ``Omega``,
so frequency sweeps parallelize without shared state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mpoly import (
    MultiIndexPolynomial,
    compose_polynomial,
    derivative_product_coefficient,
    differentiate_terms,
    indices_of_order,
    product_coefficient,
)
from .spectral import ModalNonlinearity, SpectralDecomposition
from .ssm_auto import AutonomousSSM, evaluate_rows


class ForcedResonanceError(RuntimeError):
    """A forced-coefficient denominator vanished off the reserved slots."""

    def __init__(self, row, index, sign, value):
        super().__init__(
            f"forced resonance at row {row}, index {index}, harmonic "
            f"{'+' if sign > 0 else '-'}: denominator {value:.3e}"
        )
        self.row = row
        self.index = index
        self.sign = sign


class ForcingError(ValueError):
    """The forcing does not fit the single-harmonic cosine assumption."""


@dataclass(frozen=True)
class NonAutonomousSSM:
    """Order-eps manifold correction and forced reduced dynamics.

    ``plus_rows`` / ``minus_rows`` hold the ``exp(+i phi)`` and
    ``exp(-i phi)`` coefficient series of each phase-space row.  ``c0`` is
    the constant forced coefficient of the first reduced row, ``c_diag``
    its balanced-slot coefficients and ``d_off`` the detuned-slot ones;
    the ``*_conj`` fields are the independently assembled second-row
    values, conjugate mirrors up to roundoff for real physical forcing.
    """

    omega: float
    plus_rows: tuple[MultiIndexPolynomial, ...]
    minus_rows: tuple[MultiIndexPolynomial, ...]
    c0: complex
    d0_conj: complex
    c_diag: np.ndarray
    d_off: np.ndarray
    d_diag_conj: np.ndarray
    c_off_conj: np.ndarray
    order: int
    resonant_order: int

    def reduced_harmonics(self):
        """Forced reduced-dynamics series: (row1+, row1-, row2+, row2-)."""
        M, order = self.resonant_order, self.order
        r1p = {(0, 0): self.c0}
        r1m = {}
        r2p = {}
        r2m = {(0, 0): self.d0_conj}
        for i in range(1, M + 1):
            r1p[(i, i)] = self.c_diag[i - 1]
            r1m[(i + 1, i - 1)] = self.d_off[i - 1]
            r2m[(i, i)] = self.d_diag_conj[i - 1]
            r2p[(i - 1, i + 1)] = self.c_off_conj[i - 1]
        return tuple(MultiIndexPolynomial(d, order) for d in (r1p, r1m, r2p, r2m))


class _ForcedBuilder:
    """Sequencing state for the order-by-order forced solve."""

    def __init__(self, auto: AutonomousSSM, dec: SpectralDecomposition,
                 nl: ModalNonlinearity, forcing: np.ndarray, Omega: float):
        forcing = np.asarray(forcing, dtype=complex)
        if forcing.shape != (len(dec.lambdas),):
            raise ForcingError("modal forcing vector has the wrong length")
        self.auto = auto
        self.dec = dec
        self.nl = nl
        self.forcing = forcing
        self.Omega = float(Omega)
        self.order = auto.order
        self.n2 = len(dec.lambdas)
        self.r0_row1, self.r0_row2 = auto.reduced_rows()

        # reduced forced coefficients, filled by the removal rules
        M = auto.resonant_order
        self.c0 = 0.0 + 0.0j
        self.d0_conj = 0.0 + 0.0j
        self.c_diag = np.zeros(M, dtype=complex)
        self.d_off = np.zeros(M, dtype=complex)
        self.d_diag_conj = np.zeros(M, dtype=complex)
        self.c_off_conj = np.zeros(M, dtype=complex)

        self.plus_dicts: list[dict] = [dict() for _ in range(self.n2)]
        self.minus_dicts: list[dict] = [dict() for _ in range(self.n2)]

        # force-jacobian compositions depend on the autonomous rows only
        involved = nl.force.involved_variables()
        phys0 = {}
        for v in involved:
            coeffs: dict = {}
            for i, w in enumerate(auto.rows):
                tvi = nl.T[v, i]
                if tvi == 0:
                    continue
                for k in w.nonzero_index:
                    coeffs[k] = coeffs.get(k, 0.0) + tvi * w.coeffs[k]
            phys0[v] = MultiIndexPolynomial(coeffs, self.order)
        self.force_gradients = {}
        for comp, terms in nl.force.component_terms().items():
            grads = {}
            for v in involved:
                dterms = differentiate_terms(terms, v)
                if dterms:
                    grads[v] = compose_polynomial(dterms, phys0, self.order)
            self.force_gradients[comp] = grads

        self._snapshot(0)

    def _snapshot(self, level):
        self.plus_rows = tuple(MultiIndexPolynomial(d, self.order) for d in self.plus_dicts)
        self.minus_rows = tuple(MultiIndexPolynomial(d, self.order) for d in self.minus_dicts)
        r1p, r1m, r2p, r2m = self._reduced_dicts()
        self.r1_plus_row1 = MultiIndexPolynomial(r1p, self.order)
        self.r1_minus_row1 = MultiIndexPolynomial(r1m, self.order)
        self.r1_plus_row2 = MultiIndexPolynomial(r2p, self.order)
        self.r1_minus_row2 = MultiIndexPolynomial(r2m, self.order)
        involved = self.nl.force.involved_variables()
        self.phys_plus = self._phys(self.plus_rows, involved)
        self.phys_minus = self._phys(self.minus_rows, involved)

    def _reduced_dicts(self):
        M = self.auto.resonant_order
        r1p = {(0, 0): self.c0}
        r1m = {}
        r2p = {}
        r2m = {(0, 0): self.d0_conj}
        for i in range(1, M + 1):
            r1p[(i, i)] = self.c_diag[i - 1]
            r1m[(i + 1, i - 1)] = self.d_off[i - 1]
            r2m[(i, i)] = self.d_diag_conj[i - 1]
            r2p[(i - 1, i + 1)] = self.c_off_conj[i - 1]
        return r1p, r1m, r2p, r2m

    def _phys(self, rows, involved):
        out = {}
        for v in involved:
            coeffs: dict = {}
            for i, w in enumerate(rows):
                tvi = self.nl.T[v, i]
                if tvi == 0:
                    continue
                for k in w.nonzero_index:
                    coeffs[k] = coeffs.get(k, 0.0) + tvi * w.coeffs[k]
            out[v] = MultiIndexPolynomial(coeffs, self.order)
        return out

    def assemble_rhs_harmonics(self, i: int, k) -> tuple[complex, complex]:
        """Known right-hand side of the (i, k) forced coefficient equation.

        Returns the pair of ``exp(+i phi)`` / ``exp(-i phi)`` components:
        derivative products of the autonomous rows against the forced
        reduced dynamics, plus derivative products of the forced rows
        against the autonomous reduced dynamics, minus the forcing term,
        minus the force-jacobian composition applied to the forced rows.
        """
        w0 = self.auto.rows[i]
        alpha = derivative_product_coefficient(
            w0, self.r1_plus_row1, self.r1_plus_row2, k, skip_unit=True
        )
        beta = derivative_product_coefficient(
            w0, self.r1_minus_row1, self.r1_minus_row2, k, skip_unit=True
        )
        alpha += derivative_product_coefficient(
            self.plus_rows[i], self.r0_row1, self.r0_row2, k, skip_k=True
        )
        beta += derivative_product_coefficient(
            self.minus_rows[i], self.r0_row1, self.r0_row2, k, skip_k=True
        )
        if k == (0, 0):
            alpha -= self.forcing[i] / 2.0
            beta -= self.forcing[i] / 2.0
        for comp, grads in self.force_gradients.items():
            b2 = self.nl.B2[i, comp]
            if b2 == 0:
                continue
            for v, grad in grads.items():
                # modal force is -B2 g(x); entering with the minus sign of
                # the jacobian term flips it back to +B2
                alpha += b2 * product_coefficient(grad, self.phys_plus[v], k)
                beta += b2 * product_coefficient(grad, self.phys_minus[v], k)
        return alpha, beta

    def solve(self) -> NonAutonomousSSM:
        lam = self.dec.lambdas
        lam1, lam2 = complex(lam[0]), complex(lam[1])
        for level in range(0, self.order + 1):
            self._snapshot(level)
            for k in indices_of_order(level):
                ksum = k[0] * lam1 + k[1] * lam2
                c = level // 2 if level % 2 == 0 else -1
                for i in range(self.n2):
                    alpha, beta = self.assemble_rhs_harmonics(i, k)
                    c_num = 0.0 + 0.0j
                    d_num = 0.0 + 0.0j
                    if c >= 0 and i == 0 and k == (c, c):
                        c_num = -alpha
                        if c == 0:
                            self.c0 = c_num
                        else:
                            self.c_diag[c - 1] = c_num
                    if c >= 1 and i == 0 and k == (c + 1, c - 1):
                        d_num = -beta
                        self.d_off[c - 1] = d_num
                    if c >= 0 and i == 1 and k == (c, c):
                        d_num = -beta
                        if c == 0:
                            self.d0_conj = d_num
                        else:
                            self.d_diag_conj[c - 1] = d_num
                    if c >= 1 and i == 1 and k == (c - 1, c + 1):
                        c_num = -alpha
                        self.c_off_conj[c - 1] = c_num

                    num_plus = alpha + (c_num if i in (0, 1) else 0.0)
                    num_minus = beta + (d_num if i in (0, 1) else 0.0)
                    den_plus = lam[i] - ksum - 1j * self.Omega
                    den_minus = lam[i] - ksum + 1j * self.Omega
                    scale = 1.0 + abs(lam[i]) + self.Omega
                    if abs(num_plus) > 0:
                        if abs(den_plus) <= 1e-10 * scale:
                            raise ForcedResonanceError(i, k, +1, abs(den_plus))
                        self.plus_dicts[i][k] = num_plus / den_plus
                    if abs(num_minus) > 0:
                        if abs(den_minus) <= 1e-10 * scale:
                            raise ForcedResonanceError(i, k, -1, abs(den_minus))
                        self.minus_dicts[i][k] = num_minus / den_minus

        return NonAutonomousSSM(
            omega=self.Omega,
            plus_rows=tuple(MultiIndexPolynomial(d, self.order) for d in self.plus_dicts),
            minus_rows=tuple(MultiIndexPolynomial(d, self.order) for d in self.minus_dicts),
            c0=self.c0,
            d0_conj=self.d0_conj,
            c_diag=self.c_diag,
            d_off=self.d_off,
            d_diag_conj=self.d_diag_conj,
            c_off_conj=self.c_off_conj,
            order=self.order,
            resonant_order=self.auto.resonant_order,
        )


def build_nonautonomous(auto: AutonomousSSM, dec: SpectralDecomposition,
                        nl: ModalNonlinearity, forcing: np.ndarray,
                        Omega: float) -> NonAutonomousSSM:
    """Solve the forced coefficient equations for one forcing frequency.

    ``forcing`` is the modal image of the cosine forcing shape (the vector
    multiplying ``(exp(i phi) + exp(-i phi)) / 2``).  Physically real
    forcing has its second entry conjugate to the first; the removal rules
    then make the second reduced row the conjugate mirror of the first,
    which `build_nonautonomous` verifies for the constant slot.
    """
    builder = _ForcedBuilder(auto, dec, nl, forcing, Omega)
    result = builder.solve()
    f = builder.forcing
    if abs(f[1] - np.conj(f[0])) <= 1e-9 * (1.0 + abs(f[0])):
        mismatch = abs(result.d0_conj - np.conj(result.c0))
        if mismatch > 1e-9 * (1.0 + abs(result.c0)):
            raise ForcingError(
                f"conjugate-mirror defect {mismatch:.2e} for real forcing"
            )
    return result


def assemble_rhs_harmonics(i: int, k, auto: AutonomousSSM, partial,
                           dec: SpectralDecomposition, nl: ModalNonlinearity,
                           forcing: np.ndarray, Omega: float):
    """One-shot right-hand-side assembly for tests and diagnostics.

    ``partial`` maps ``"plus"``/``"minus"`` to per-row coefficient dicts of
    already-solved lower-order forced coefficients.
    """
    builder = _ForcedBuilder(auto, dec, nl, forcing, Omega)
    if partial:
        for row, d in enumerate(partial.get("plus", ())):
            builder.plus_dicts[row].update(d)
        for row, d in enumerate(partial.get("minus", ())):
            builder.minus_dicts[row].update(d)
        builder.c0 = partial.get("c0", builder.c0)
        builder.d0_conj = partial.get("d0_conj", builder.d0_conj)
        for name in ("c_diag", "d_off", "d_diag_conj", "c_off_conj"):
            if name in partial:
                getattr(builder, name)[:] = partial[name]
    builder._snapshot(0)
    return builder.assemble_rhs_harmonics(i, k)


def evaluate_forced_rows(nonauto: NonAutonomousSSM, s1: complex, s2: complex,
                         phi: float) -> np.ndarray:
    """Forced correction vector ``W1(s, phi)`` at one sample."""
    ep = np.exp(1j * phi)
    em = np.exp(-1j * phi)
    return np.array(
        [
            a(s1, s2) * ep + b(s1, s2) * em
            for a, b in zip(nonauto.plus_rows, nonauto.minus_rows)
        ]
    )


def full_invariance_residual(auto: AutonomousSSM, nonauto: NonAutonomousSSM,
                             dec: SpectralDecomposition, nl: ModalNonlinearity,
                             forcing: np.ndarray, epsilon: float,
                             s_samples, phi_samples) -> float:
    """Max-norm defect of the full invariance identity.

    Substitutes the combined parameterization ``W0 + eps W1`` and reduced
    dynamics ``R0 + eps R1`` into the exact invariance relation at the
    sampled ``(s, phi)`` points.  The defect is of combined order
    truncation-plus-one in ``|s|`` and two in ``eps``.
    """
    Omega = nonauto.omega
    r0_1, r0_2 = auto.reduced_rows()
    r1p1, r1m1, r1p2, r1m2 = nonauto.reduced_harmonics()
    worst = 0.0
    for s1 in np.atleast_1d(s_samples):
        s1 = complex(s1)
        s2 = s1.conjugate()
        for phi in np.atleast_1d(phi_samples):
            ep, em = np.exp(1j * phi), np.exp(-1j * phi)
            q = evaluate_rows(auto.rows, s1, s2) + epsilon * evaluate_forced_rows(
                nonauto, s1, s2, phi
            )
            lin = dec.lambdas * q
            gm = nl.evaluate(q)
            fm = epsilon * forcing * (ep + em) / 2.0
            rv1 = r0_1(s1, s2) + epsilon * (r1p1(s1, s2) * ep + r1m1(s1, s2) * em)
            rv2 = r0_2(s1, s2) + epsilon * (r1p2(s1, s2) * ep + r1m2(s1, s2) * em)
            flow = np.empty(len(q), dtype=complex)
            for i, (w0, wa, wb) in enumerate(
                zip(auto.rows, nonauto.plus_rows, nonauto.minus_rows)
            ):
                d1 = w0.eval_derivative(0, s1, s2) + epsilon * (
                    wa.eval_derivative(0, s1, s2) * ep + wb.eval_derivative(0, s1, s2) * em
                )
                d2 = w0.eval_derivative(1, s1, s2) + epsilon * (
                    wa.eval_derivative(1, s1, s2) * ep + wb.eval_derivative(1, s1, s2) * em
                )
                dphi = epsilon * 1j * (wa(s1, s2) * ep - wb(s1, s2) * em)
                flow[i] = d1 * rv1 + d2 * rv2 + dphi * Omega
            worst = max(worst, float(np.abs(lin + gm + fm - flow).max()))
    return worst
