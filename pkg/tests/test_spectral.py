import numpy as np
import pytest
import scipy.linalg

from ssmfrc.beam import BeamConfig, build_beam
from ssmfrc.spectral import (
    DecompositionError,
    MechanicalSystem,
    ModelError,
    PolynomialForce,
    SpectralDecomposition,
    check_nonresonance,
    decompose,
    detect_structural_damping,
    modal_forcing,
    to_first_order,
)

from conftest import make_two_dof


def quadratic_eigenvalues(M, C, K):
    """Independent oracle: eigenvalues of (lam^2 M + lam C + K) v = 0.

    Solved as the generalized pencil ([[0, I], [-K, -C]], [[I, 0], [0, M]]),
    which never forms M^-1.
    """
    n = M.shape[0]
    a = np.block([[np.zeros((n, n)), np.eye(n)], [-K, -C]])
    b = np.block([[np.eye(n), np.zeros((n, n))], [np.zeros((n, n)), M]])
    lam = scipy.linalg.eig(a, b, right=False)
    return np.sort_complex(lam)


def random_system(rng, n, structural=True):
    Q = rng.standard_normal((n, n))
    M = Q @ Q.T + n * np.eye(n)
    Q = rng.standard_normal((n, n))
    K = Q @ Q.T + n * np.eye(n)
    if structural:
        C = 0.01 * M + 0.005 * K
    else:
        Q = rng.standard_normal((n, n))
        C = 0.05 * (Q @ Q.T) + 0.5 * n * np.eye(n)
    return MechanicalSystem(n=n, mass=M, damping=C, stiffness=K,
                            forcing_shape=np.ones(n))


# -- first-order form ---------------------------------------------------------


def test_first_order_undamped_oscillator():
    sys = MechanicalSystem(n=1, mass=np.eye(1), damping=np.zeros((1, 1)),
                           stiffness=np.eye(1))
    A = to_first_order(sys).A
    assert np.allclose(A, [[0.0, 1.0], [-1.0, 0.0]])
    assert np.allclose(np.sort_complex(np.linalg.eigvals(A)), [-1j, 1j])


def test_first_order_blocks_and_forcing():
    sys = make_two_dof()
    first = to_first_order(sys)
    n = sys.n
    assert np.allclose(first.A[:n, :n], 0)
    assert np.allclose(first.A[:n, n:], np.eye(n))
    assert np.allclose(first.A[n:, :n], -np.linalg.solve(sys.mass, sys.stiffness))
    assert np.allclose(first.A[n:, n:], -np.linalg.solve(sys.mass, sys.damping))
    assert np.allclose(first.forcing[:n], 0)
    assert np.allclose(first.forcing[n:], np.linalg.solve(sys.mass, sys.forcing_shape))


def test_first_order_beam_frequency_near_seven(beam10):
    assert abs(beam10.dec.lambdas[0].imag - 7.0) / 7.0 < 0.01


def test_eigenvalues_match_quadratic_pencil_oracle():
    rng = np.random.default_rng(11)
    for structural in (True, False):
        sys = random_system(rng, 4, structural=structural)
        dec = decompose(to_first_order(sys).A, sys)
        ref = quadratic_eigenvalues(sys.mass, sys.damping, sys.stiffness)
        got = np.sort_complex(dec.lambdas)
        assert np.allclose(got, ref, rtol=1e-8, atol=1e-10)


# -- decomposition ------------------------------------------------------------


def test_damped_oscillator_quadratic_formula():
    sys = MechanicalSystem(n=1, mass=np.eye(1), damping=np.eye(1),
                           stiffness=np.eye(1))
    dec = decompose(to_first_order(sys).A, sys)
    lam = (-1 + 1j * np.sqrt(3)) / 2
    assert dec.lambdas[0] == pytest.approx(lam, rel=1e-12)
    assert dec.lambdas[1] == pytest.approx(np.conj(lam), rel=1e-12)


def test_structural_damping_detection_and_formula(beam10):
    dec = beam10.dec
    sys = beam10.system
    assert dec.structural
    alpha, beta, relres = detect_structural_damping(sys.mass, sys.damping, sys.stiffness)
    assert relres < 1e-12
    assert alpha == pytest.approx(1.25e-4, rel=1e-6)
    assert beta == pytest.approx(2.5e-4, rel=1e-6)
    # eigenvalues from the undamped frequencies
    for om, bm in zip(dec.omega, dec.modal_damping):
        lam = -bm / 2 + np.sqrt(complex((bm / 2) ** 2 - om**2))
        assert np.min(np.abs(dec.lambdas - lam)) <= 1e-10 * abs(lam)


def test_structural_block_form(beam10):
    # every column stacks a real mode shape over lambda times itself
    dec = beam10.dec
    n = beam10.system.n
    top = dec.T[:n, :]
    bottom = dec.T[n:, :]
    assert np.allclose(top.imag, 0, atol=1e-12)
    assert np.allclose(bottom, top * dec.lambdas[None, :], rtol=1e-12, atol=1e-12)
    # mass-normalization of the underlying real basis
    E = top[:, ::2].real
    assert np.allclose(E.T @ beam10.system.mass @ E, np.eye(n), atol=1e-8)


def test_conjugate_pairing_and_identity(beam10):
    dec = beam10.dec
    assert np.allclose(dec.T[:, 1], np.conj(dec.T[:, 0]))
    assert dec.lambdas[1] == np.conj(dec.lambdas[0])
    eye = dec.T @ dec.T_inv
    assert np.max(np.abs(eye - np.eye(len(eye)))) < 1e-10


def test_general_path_diagonalizes():
    rng = np.random.default_rng(12)
    sys = random_system(rng, 3, structural=False)
    dec = decompose(to_first_order(sys).A, sys)
    assert not dec.structural
    A = to_first_order(sys).A
    D = dec.T_inv @ A @ dec.T
    off = D - np.diag(np.diag(D))
    assert np.max(np.abs(off)) < 1e-8 * np.linalg.norm(A)
    assert np.allclose(np.diag(D), dec.lambdas, rtol=1e-8, atol=1e-10)


def test_sorting_deterministic(beam10):
    sys = beam10.system
    A = to_first_order(sys).A
    d1 = decompose(A, sys)
    d2 = decompose(A, sys)
    assert np.array_equal(d1.lambdas, d2.lambdas)
    assert np.array_equal(d1.T, d2.T)
    # decreasing real part over pair leaders
    re = d1.lambdas.real[::2]
    assert np.all(np.diff(re) <= 1e-12)


def test_master_pair_selection():
    sys = make_two_dof()
    A = to_first_order(sys).A
    d0 = decompose(A, sys, master_pair=0)
    d1 = decompose(A, sys, master_pair=1)
    assert d0.lambdas[0].imag == pytest.approx(1.0, abs=1e-3)
    assert d1.lambdas[0].imag == pytest.approx(np.sqrt(3), abs=1e-2)
    with pytest.raises(DecompositionError):
        decompose(A, sys, master_pair=2)


def test_undamped_rejected_for_stability():
    sys = MechanicalSystem(n=1, mass=np.eye(1), damping=np.zeros((1, 1)),
                           stiffness=np.eye(1))
    with pytest.raises(DecompositionError, match="stable"):
        decompose(to_first_order(sys).A, sys)


def test_forcing_orientation_is_positive_quadrature(beam10, twodof):
    for pipe in (beam10, twodof):
        assert modal_forcing(pipe.system, pipe.dec)[0].imag > 0


def test_modal_forcing_conjugate_symmetry(beam10):
    F = modal_forcing(beam10.system, beam10.dec)
    assert abs(F[1] - np.conj(F[0])) <= 1e-12 * (1 + abs(F[0]))


# -- system validation --------------------------------------------------------


def test_asymmetric_matrix_rejected():
    K = np.array([[2.0, -1.0], [-0.5, 2.0]])
    with pytest.raises(ModelError, match="symmetric"):
        MechanicalSystem(n=2, mass=np.eye(2), damping=np.eye(2), stiffness=K)


def test_indefinite_mass_rejected():
    M = np.diag([1.0, -1.0])
    with pytest.raises(ModelError, match="positive definite"):
        MechanicalSystem(n=2, mass=M, damping=np.eye(2), stiffness=np.eye(2))


def test_linear_force_term_rejected():
    with pytest.raises(ModelError, match="degree"):
        PolynomialForce(terms=((0, 1.0, {0: 1}),))


def test_force_component_out_of_range():
    with pytest.raises(ModelError, match="out of range"):
        MechanicalSystem(
            n=2, mass=np.eye(2), damping=np.eye(2), stiffness=np.eye(2),
            nonlinearity=PolynomialForce(terms=((5, 1.0, {0: 2}),)),
        )


def test_force_jacobian_matches_finite_differences():
    force = PolynomialForce(terms=((0, 0.7, {0: 2, 3: 1}), (1, -0.3, {1: 3})))
    rng = np.random.default_rng(13)
    x = rng.standard_normal(4)
    J = force.jacobian(x, 2).real
    h = 1e-7
    for v in range(4):
        xp, xm = x.copy(), x.copy()
        xp[v] += h
        xm[v] -= h
        fd = (force.evaluate(xp, 2).real - force.evaluate(xm, 2).real) / (2 * h)
        assert np.allclose(J[:, v], fd, rtol=1e-6, atol=1e-8)


# -- non-resonance ------------------------------------------------------------


def synthetic_decomposition(lambdas):
    lambdas = np.asarray(lambdas, dtype=complex)
    n2 = len(lambdas)
    sigma = int(lambdas.real.min() / lambdas.real.max())
    return SpectralDecomposition(
        lambdas=lambdas, T=np.eye(n2, dtype=complex),
        T_inv=np.eye(n2, dtype=complex), master_pair_index=0, sigma=sigma,
        structural=False,
    )


def test_beam_nonresonance_passes(beam10):
    report = check_nonresonance(beam10.dec, 1)
    assert report.passed
    assert report.min_margin > 1e-10
    assert report.light_damping
    assert report.damping_gauge == pytest.approx(2 * abs(beam10.dec.lambdas[0].real))


def test_exact_resonance_detected():
    lam = np.array([-0.01 + 1j, -0.01 - 1j, -0.02 + 3.3j, -0.02 - 3.3j,
                    -0.05 + 5j, -0.05 - 5j])
    dec = synthetic_decomposition(lam)
    report = check_nonresonance(dec, 1)
    assert not report.passed
    assert report.worst_triple[0] == 2  # Re(l3) = 2 Re(l1)
    with pytest.raises(Exception, match="resonance"):
        report.raise_on_failure()


def test_direct_and_candidate_paths_agree():
    rng = np.random.default_rng(14)
    for _ in range(10):
        res = -np.sort(rng.uniform(0.01, 0.9, size=4))
        res[0] = -0.01
        lam = []
        for k, r in enumerate(res):
            lam.extend([r + 1j * (k + 1), r - 1j * (k + 1)])
        dec = synthetic_decomposition(np.array(lam))
        direct = check_nonresonance(dec, 1, direct_limit=10**6)
        smart = check_nonresonance(dec, 1, direct_limit=0)
        assert direct.min_margin == pytest.approx(smart.min_margin, rel=1e-12)
        assert direct.passed == smart.passed


def test_sigma_is_decay_quotient():
    lam = np.array([-0.1 + 1j, -0.1 - 1j, -0.75 + 2j, -0.75 - 2j])
    dec = synthetic_decomposition(lam)
    assert dec.sigma == 7
