import numpy as np
import pytest

from ssmfrc import mpoly
from ssmfrc.mpoly import (
    MultiIndexPolynomial,
    compose_nonlinearity,
    compose_polynomial,
    derivative_product_coefficient,
    indices_up_to,
    polynomial_power,
    power_coefficient,
    poly_mul,
)

import dense_ref as dr


def mp(dense, order):
    return MultiIndexPolynomial(dense, order)


def crand(rng):
    return complex(rng.standard_normal(), rng.standard_normal())


# -- worked product example --------------------------------------------------


def test_product_worked_example():
    # w = a*s1^3 + b*s1^2 s2, r1 = c*s2^2 + d*s1 s2, r2 = e*s2^2,
    # coefficient at (2,2) of dw/ds1*r1 + dw/ds2*r2 is 3ac + 2bd + be.
    rng = np.random.default_rng(20)
    for _ in range(200):
        a, b, c, d, e = (crand(rng) for _ in range(5))
        w = mp({(3, 0): a, (2, 1): b}, 6)
        r1 = mp({(0, 2): c, (1, 1): d}, 6)
        r2 = mp({(0, 2): e}, 6)
        got = derivative_product_coefficient(w, r1, r2, (2, 2))
        expected = 3 * a * c + 2 * b * d + b * e
        assert got == pytest.approx(expected, rel=1e-12)


def test_product_zero_polynomial():
    rng = np.random.default_rng(1)
    w = MultiIndexPolynomial.zero(5)
    r1 = mp(dr.random_sparse(rng, 3, 4), 5)
    r2 = mp(dr.random_sparse(rng, 3, 4), 5)
    for k in indices_up_to(5):
        assert derivative_product_coefficient(w, r1, r2, k) == 0


def test_product_against_dense_oracle():
    rng = np.random.default_rng(2)
    for trial in range(30):
        w = dr.random_sparse(rng, 6, rng.integers(1, 10))
        r1 = dr.random_sparse(rng, 6, rng.integers(1, 10))
        r2 = dr.random_sparse(rng, 6, rng.integers(1, 10))
        ref = dr.derivative_product(w, r1, r2)
        wp, r1p, r2p = mp(w, 6), mp(r1, 6), mp(r2, 6)
        for k in indices_up_to(6):
            got = derivative_product_coefficient(wp, r1p, r2p, k)
            assert got == pytest.approx(ref.get(k, 0.0), rel=1e-12, abs=1e-12)


def test_product_order_overflow_rejected():
    w = mp({(2, 0): 1.0}, 3)
    r = mp({(1, 0): 1.0}, 3)
    with pytest.raises(mpoly.OrderOverflowError):
        derivative_product_coefficient(w, r, r, (4, 0))


def test_product_bilinearity():
    rng = np.random.default_rng(3)
    w = dr.random_sparse(rng, 4, 5)
    r1 = dr.random_sparse(rng, 4, 5)
    r2 = dr.random_sparse(rng, 4, 5)
    c = crand(rng)
    for k in [(2, 1), (3, 2), (1, 1)]:
        base = derivative_product_coefficient(mp(w, 5), mp(r1, 5), mp(r2, 5), k)
        scaled_w = derivative_product_coefficient(
            mp(dr.dscale(w, c), 5), mp(r1, 5), mp(r2, 5), k
        )
        scaled_r = derivative_product_coefficient(
            mp(w, 5), mp(dr.dscale(r1, c), 5), mp(dr.dscale(r2, c), 5), k
        )
        assert scaled_w == pytest.approx(c * base, rel=1e-12)
        assert scaled_r == pytest.approx(c * base, rel=1e-12)


def test_product_sparsity_soundness():
    # Iterating the nonzero registry must equal iterating every admissible
    # index: insert explicit zeros via a dense sibling and compare.
    rng = np.random.default_rng(4)
    w = dr.random_sparse(rng, 4, 4)
    r1 = dr.random_sparse(rng, 4, 4)
    r2 = dr.random_sparse(rng, 4, 4)

    def full_sum(k):
        total = 0.0 + 0.0j
        for j, r in ((0, r1), (1, r2)):
            kt = (k[0] + 1, k[1]) if j == 0 else (k[0], k[1] + 1)
            for m1 in range(kt[0] + 1):
                for m2 in range(kt[1] + 1):
                    m = (m1, m2)
                    if m[j] == 0:
                        continue
                    total += m[j] * w.get(m, 0.0) * r.get((kt[0] - m1, kt[1] - m2), 0.0)
        return total

    for k in indices_up_to(4):
        got = derivative_product_coefficient(mp(w, 4), mp(r1, 4), mp(r2, 4), k)
        assert got == pytest.approx(full_sum(k), rel=1e-12, abs=1e-13)


# -- worked power example ------------------------------------------------------


def test_power_worked_example():
    # w = a*s1^3 + b*s1^2 s2: the (5,1) coefficient of w^2 is 2ab.
    rng = np.random.default_rng(21)
    for _ in range(200):
        a, b = crand(rng), crand(rng)
        w = mp({(3, 0): a, (2, 1): b}, 6)
        got = power_coefficient(w, 2, (5, 1), w)
        assert got == pytest.approx(2 * a * b, rel=1e-12)


def test_power_first_power_is_identity():
    rng = np.random.default_rng(5)
    w = mp(dr.random_sparse(rng, 4, 6), 4)
    for k in indices_up_to(4):
        if k == (0, 0):
            continue
        assert power_coefficient(w, 1, k, w) == w.coeff(k)


def test_power_rejects_constant_index():
    w = mp({(1, 0): 1.0}, 3)
    with pytest.raises(ValueError):
        power_coefficient(w, 2, (0, 0), w)


def test_power_against_dense_cube():
    rng = np.random.default_rng(6)
    for _ in range(20):
        w = dr.random_sparse(rng, 4, rng.integers(2, 8))
        ref = dr.dpow(w, 3)
        wp = mp(w, 4)
        sq = polynomial_power(wp, 2, 9)
        for k in indices_up_to(9):
            if k == (0, 0):
                continue
            got = power_coefficient(wp, 3, k, sq)
            assert got == pytest.approx(ref.get(k, 0.0), rel=1e-12, abs=1e-12)


def test_power_variable_choice_consistency():
    # The recurrence value must not depend on which admissible variable is
    # differentiated; force both choices through a symmetric index.
    rng = np.random.default_rng(7)
    for _ in range(20):
        w = dr.random_sparse(rng, 3, 5)
        wp = mp(w, 3)
        sq = polynomial_power(wp, 2, 6)
        for k in [(3, 3), (2, 4), (4, 2), (1, 5)]:
            via = []
            for j in (0, 1):
                if k[j] == 0:
                    continue
                total = 0.0 + 0.0j
                for m in wp.nonzero_index:
                    if m[j] == 0 or m[0] > k[0] or m[1] > k[1]:
                        continue
                    total += m[j] * wp.coeffs[m] * sq.coeff((k[0] - m[0], k[1] - m[1]))
                via.append((3 / k[j]) * total)
            ref = abs(via[0]) + 1e-30
            assert abs(via[0] - via[1]) <= 1e-12 * ref


def test_polynomial_power_with_constant_term():
    rng = np.random.default_rng(8)
    w = dr.random_sparse(rng, 2, 4, no_constant=False)
    w[(0, 0)] = crand(rng)
    ref = dr.dpow(w, 3)
    got = polynomial_power(mp(w, 2), 3, 6)
    for k in indices_up_to(6):
        assert got.coeff(k) == pytest.approx(ref.get(k, 0.0), rel=1e-11, abs=1e-12)


# -- composition ---------------------------------------------------------------


def test_compose_cube_of_monomial():
    rows = {2: mp({(1, 0): 1.0}, 3)}
    terms = [(1.0, {2: 3})]
    assert compose_nonlinearity(terms, rows, (3, 0)) == pytest.approx(1.0)


def test_compose_against_dense_substitution():
    rng = np.random.default_rng(9)
    for _ in range(10):
        n_vars = 4
        rows_dense = {v: dr.random_sparse(rng, 3, 4) for v in range(n_vars)}
        # random cubic scalar polynomial in the 4 variables
        terms = []
        for _ in range(5):
            vs = rng.integers(0, n_vars, size=3)
            exps = {}
            for v in vs:
                exps[int(v)] = exps.get(int(v), 0) + 1
            terms.append((crand(rng), exps))
        ref = dr.dcompose(terms, rows_dense)
        rows = {v: mp(p, 5) for v, p in rows_dense.items()}
        for k in indices_up_to(5):
            got = compose_nonlinearity(terms, rows, k)
            assert got == pytest.approx(ref.get(k, 0.0), rel=1e-11, abs=1e-11)


def test_compose_rejects_bad_descriptor():
    rows = {0: mp({(1, 0): 1.0}, 3)}
    with pytest.raises(ValueError):
        compose_nonlinearity([("not-a-number", {0: 3})], rows, (3, 0))
    with pytest.raises(ValueError):
        compose_nonlinearity([(1.0, {0: -2})], rows, (3, 0))


def test_compose_full_polynomial_matches_pointwise():
    rng = np.random.default_rng(10)
    rows_dense = {0: dr.random_sparse(rng, 2, 3), 1: dr.random_sparse(rng, 2, 3)}
    terms = [(crand(rng), {0: 2, 1: 1}), (crand(rng), {1: 3})]
    rows = {v: mp(p, 6) for v, p in rows_dense.items()}
    full = compose_polynomial(terms, rows, 6)
    ref = dr.dcompose(terms, rows_dense)
    for k in indices_up_to(6):
        assert full.coeff(k) == pytest.approx(ref.get(k, 0.0), rel=1e-11, abs=1e-12)


# -- container invariants -------------------------------------------------------


def test_nonzero_registry_tracks_drop_tolerance():
    p = mp({(1, 0): 1.0, (0, 1): 1e-16, (2, 0): -2.0}, 4)
    assert p.nonzero_index == ((1, 0), (2, 0))
    assert p.coeff((0, 1)) == 0


def test_registry_is_graded_lex_sorted():
    p = mp({(0, 2): 1.0, (2, 0): 1.0, (1, 1): 1.0, (1, 0): 1.0}, 3)
    assert p.nonzero_index == ((1, 0), (2, 0), (1, 1), (0, 2))


def test_truncation_violation_rejected():
    with pytest.raises(mpoly.OrderOverflowError):
        mp({(3, 1): 1.0}, 3)


def test_poly_mul_truncates():
    p = mp({(2, 0): 1.0, (0, 1): 1.0}, 2)
    q = mp({(1, 1): 1.0}, 2)
    prod = poly_mul(p, q, 3)
    assert prod.coeff((1, 2)) == 1.0
    assert prod.coeff((3, 1)) == 0.0  # order 4 dropped


def test_evaluation_and_derivative():
    p = mp({(2, 1): 3.0, (1, 0): -1.0}, 3)
    s1, s2 = 0.3 + 0.1j, 0.2 - 0.4j
    assert p(s1, s2) == pytest.approx(3.0 * s1**2 * s2 - s1)
    assert p.eval_derivative(0, s1, s2) == pytest.approx(6.0 * s1 * s2 - 1.0)
    assert p.eval_derivative(1, s1, s2) == pytest.approx(3.0 * s1**2)


def test_conjugate_swap():
    p = mp({(2, 1): 1.0 + 2.0j}, 3)
    q = p.conjugate_swap()
    assert q.coeff((1, 2)) == 1.0 - 2.0j
