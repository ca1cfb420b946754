import numpy as np
import pytest

from ssmfrc.beam import analytic_ssm_coefficients
from ssmfrc.mpoly import indices_up_to
from ssmfrc.spectral import (
    ModalNonlinearity,
    PolynomialForce,
    SpectralDecomposition,
    modal_forcing,
)
from ssmfrc.ssm_auto import build_autonomous
from ssmfrc.ssm_nonauto import (
    ForcedResonanceError,
    ForcingError,
    assemble_rhs_harmonics,
    build_nonautonomous,
    full_invariance_residual,
)

import dense_ref as dr


def test_beam_closed_forms(beam10):
    for Om in (6.9, 7.0, 7.1):
        na = build_nonautonomous(beam10.auto, beam10.dec, beam10.nl,
                                 beam10.forcing, Om)
        _, c0, cd, do = analytic_ssm_coefficients(beam10.system, beam10.dec, Om)
        assert abs(na.c0 - c0) <= 1e-10 * abs(c0)
        assert abs(na.c_diag[0] - cd) <= 1e-10 * abs(cd)
        assert abs(na.d_off[0] - do) <= 1e-10 * abs(do)


def test_zero_forcing_vanishes(beam10):
    na = build_nonautonomous(beam10.auto, beam10.dec, beam10.nl,
                             np.zeros(20, dtype=complex), 7.0)
    assert na.c0 == 0 and na.d0_conj == 0
    assert np.all(na.c_diag == 0) and np.all(na.d_off == 0)
    for a, b in zip(na.plus_rows, na.minus_rows):
        assert a.is_zero() and b.is_zero()


def test_constant_coefficients_and_removed_slots(twodof):
    na = build_nonautonomous(twodof.auto, twodof.dec, twodof.nl,
                             twodof.forcing, 1.01)
    assert na.c0 == pytest.approx(twodof.forcing[0] / 2, rel=1e-14)
    assert na.d0_conj == pytest.approx(twodof.forcing[1] / 2, rel=1e-14)
    M = na.resonant_order
    for c in range(0, M + 1):
        assert na.plus_rows[0].coeff((c, c)) == 0
        assert na.minus_rows[1].coeff((c, c)) == 0
    for c in range(1, M + 1):
        assert na.minus_rows[0].coeff((c + 1, c - 1)) == 0
        assert na.plus_rows[1].coeff((c - 1, c + 1)) == 0


def test_conjugacy_invariants(beam10, twodof):
    for pipe, Om in ((beam10, 7.0), (twodof, 1.01)):
        na = build_nonautonomous(pipe.auto, pipe.dec, pipe.nl, pipe.forcing, Om)
        assert abs(na.d0_conj - np.conj(na.c0)) <= 1e-12 * (1 + abs(na.c0))
        for cd, dd in zip(na.c_diag, na.d_diag_conj):
            assert abs(dd - np.conj(cd)) <= 1e-12 * (1 + abs(cd))
        for do, co in zip(na.d_off, na.c_off_conj):
            assert abs(co - np.conj(do)) <= 1e-12 * (1 + abs(do))
        # row pairs mirror under conjugate-swap: minus of row 2i+1 vs plus of 2i
        for i in range(0, len(na.plus_rows), 2):
            mirror = na.plus_rows[i].conjugate_swap()
            for k in indices_up_to(na.order):
                assert abs(na.minus_rows[i + 1].coeff(k) - mirror.coeff(k)) <= (
                    1e-12 * (1 + abs(mirror.coeff(k)))
                )


def test_linearity_in_forcing(twodof):
    scale = 0.7 - 1.3j
    na1 = build_nonautonomous(twodof.auto, twodof.dec, twodof.nl,
                              twodof.forcing, 1.01)
    na2 = build_nonautonomous(twodof.auto, twodof.dec, twodof.nl,
                              scale * twodof.forcing, 1.01)
    assert na2.c0 == pytest.approx(scale * na1.c0, rel=1e-12)
    assert np.allclose(na2.c_diag, scale * na1.c_diag, rtol=1e-12)
    assert np.allclose(na2.d_off, scale * na1.d_off, rtol=1e-12)
    for r1, r2 in zip(na1.plus_rows + na1.minus_rows,
                      na2.plus_rows + na2.minus_rows):
        for k in indices_up_to(na1.order):
            assert abs(r2.coeff(k) - scale * r1.coeff(k)) <= 1e-12 * (
                1 + abs(r1.coeff(k))
            )


def test_rebuild_is_bit_identical(twodof):
    kw = (twodof.auto, twodof.dec, twodof.nl, twodof.forcing, 1.01)
    na1, na2 = build_nonautonomous(*kw), build_nonautonomous(*kw)
    assert na1.c0 == na2.c0
    assert np.array_equal(na1.c_diag, na2.c_diag)
    for r1, r2 in zip(na1.plus_rows, na2.plus_rows):
        assert r1.coeffs == r2.coeffs


def test_constant_assembly_forcing_only(beam10_linear):
    pipe = beam10_linear
    for i in (0, 3, 7):
        alpha, beta = assemble_rhs_harmonics(
            i, (0, 0), pipe.auto, {}, pipe.dec, pipe.nl, pipe.forcing, 7.0
        )
        assert alpha == pytest.approx(-pipe.forcing[i] / 2, rel=1e-14)
        assert beta == pytest.approx(-pipe.forcing[i] / 2, rel=1e-14)


def test_forcing_vector_length_checked(beam10):
    with pytest.raises(ForcingError):
        build_nonautonomous(beam10.auto, beam10.dec, beam10.nl,
                            np.ones(3, dtype=complex), 7.0)


def test_forced_resonance_aborts():
    # outer eigenvalue placed exactly at lambda_2 + i*Omega, with a quadratic
    # force feeding a nonzero numerator into that slot
    Om = 1.5
    lam = np.array([-0.01 + 1j, -0.01 - 1j, -0.01 + 0.5j, -0.01 - 0.5j])
    dec = SpectralDecomposition(
        lambdas=lam, T=np.eye(4, dtype=complex), T_inv=np.eye(4, dtype=complex),
        master_pair_index=0, sigma=1, structural=False,
    )
    nl = ModalNonlinearity(
        B2=np.ones((4, 2), dtype=complex), T=np.eye(4, dtype=complex),
        force=PolynomialForce(terms=((0, 1.0, {1: 2}),)), n=2,
    )
    auto = build_autonomous(dec, nl, 1)
    forcing = np.array([0.1j, -0.1j, 0.2, 0.2])
    with pytest.raises(ForcedResonanceError) as err:
        build_nonautonomous(auto, dec, nl, forcing, Om)
    assert err.value.row == 2
    assert err.value.index == (0, 1)
    assert err.value.sign == +1


# -- dense per-harmonic identity oracle ---------------------------------------


def dense_rows(rows):
    return [dict(w.coeffs) for w in rows]


def truncated(p, order):
    return {k: v for k, v in p.items() if k[0] + k[1] <= order}


def harmonic_identity_defect(pipe, Om):
    """Max coefficient defect of the order-eps invariance, per harmonic.

    Assembles every term with dense polynomial arithmetic from the built
    coefficients and returns the worst violation through the truncation
    order.
    """
    auto = pipe.auto
    na = build_nonautonomous(auto, pipe.dec, pipe.nl, pipe.forcing, Om)
    order = auto.order
    lam = pipe.dec.lambdas
    n2 = len(lam)
    w0 = dense_rows(auto.rows)
    r0 = [dict(p.coeffs) for p in auto.reduced_rows()]
    r1p1, r1m1, r1p2, r1m2 = (dict(p.coeffs) for p in na.reduced_harmonics())

    # physical rows of the autonomous part and the force gradients
    T = pipe.nl.T
    x0 = {}
    for v in pipe.nl.force.involved_variables():
        acc = {}
        for j in range(n2):
            if T[v, j] != 0:
                acc = dr.dadd(acc, dr.dscale(w0[j], complex(T[v, j])))
        x0[v] = acc

    worst = 0.0
    for sign, wrows, r1_rows in (
        (+1, dense_rows(na.plus_rows), (r1p1, r1p2)),
        (-1, dense_rows(na.minus_rows), (r1m1, r1m2)),
    ):
        for i in range(n2):
            resid = dr.dscale(wrows[i], complex(lam[i]) - 1j * sign * Om)
            # force jacobian term: -B2 sum_v dg/dx_v(x0) * (T w1)_v
            for comp, terms in pipe.nl.force.component_terms().items():
                for v in pipe.nl.force.involved_variables():
                    from ssmfrc.mpoly import differentiate_terms

                    dterms = differentiate_terms(terms, v)
                    if not dterms:
                        continue
                    grad = dr.dcompose(
                        [(c, dict(f)) for c, f in dterms], x0
                    )
                    xw = {}
                    for j in range(n2):
                        if T[v, j] != 0:
                            xw = dr.dadd(xw, dr.dscale(wrows[j], complex(T[v, j])))
                    resid = dr.dadd(
                        resid,
                        dr.dscale(dr.dmul(grad, xw), -complex(pipe.nl.B2[i, comp])),
                    )
            # forcing enters the constant slot of both harmonics
            resid = dr.dadd(resid, {(0, 0): complex(pipe.forcing[i]) / 2})
            # transport terms
            resid = dr.dadd(
                resid,
                dr.dscale(
                    dr.dadd(
                        dr.dmul(dr.ddiff(w0[i], 0), r1_rows[0]),
                        dr.dmul(dr.ddiff(w0[i], 1), r1_rows[1]),
                    ),
                    -1.0,
                ),
            )
            resid = dr.dadd(
                resid,
                dr.dscale(
                    dr.dadd(
                        dr.dmul(dr.ddiff(wrows[i], 0), r0[0]),
                        dr.dmul(dr.ddiff(wrows[i], 1), r0[1]),
                    ),
                    -1.0,
                ),
            )
            for k, val in truncated(resid, order).items():
                worst = max(worst, abs(val))
    return worst


def test_harmonic_identity_twodof(twodof):
    assert harmonic_identity_defect(twodof, 1.01) < 1e-10


def test_harmonic_identity_beam(beam10):
    scale = max(abs(v) for w in beam10.auto.rows for v in w.coeffs.values())
    assert harmonic_identity_defect(beam10, 7.0) < 1e-10 * scale


# -- combined residual ---------------------------------------------------------


def test_full_residual_epsilon_slope(beam10):
    na = build_nonautonomous(beam10.auto, beam10.dec, beam10.nl,
                             beam10.forcing, 7.0)
    s_probe = 1e-4
    base = full_invariance_residual(
        beam10.auto, na, beam10.dec, beam10.nl, beam10.forcing, 0.0,
        [s_probe], [0.4]
    )
    eps = (1e-4, 1e-2)
    res = [
        full_invariance_residual(
            beam10.auto, na, beam10.dec, beam10.nl, beam10.forcing, e,
            [s_probe], [0.4]
        ) - base
        for e in eps
    ]
    slope = np.log(res[1] / res[0]) / np.log(eps[1] / eps[0])
    assert slope >= 1.8
