"""First-order form, spectral decomposition, and resonance screening.

Takes a second-order mechanical model ``M y'' + C y' + K y + g(y, y') =
eps f cos(Omega t)`` to the first-order phase space, diagonalizes the linear
part, orders and pairs the eigenvalues, and verifies the spectral hypotheses
(stability, semisimplicity, non-resonance, light damping of the master mode)
that the manifold construction relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .mpoly import normalize_terms

#: relative tolerance for |lambda_i - conj(lambda_j)| when pairing eigenvalues
PAIR_TOL = 1e-9
#: relative Frobenius tolerance for detecting C = alpha*M + beta*K
STRUCTURAL_TOL = 1e-12
#: reciprocal condition number of the modal matrix below which the linear
#: part is treated as defective
RCOND_MIN = 1e-10
#: relative margin below which a real-part resonance aborts construction
RESONANCE_TOL = 1e-10
#: damping gauge 2*M*|Re lambda_1| below this value counts as light
LIGHT_DAMPING_GAUGE = 0.1


class ModelError(ValueError):
    """The mechanical model violates a structural assumption."""


class DecompositionError(RuntimeError):
    """The linear part cannot be diagonalized under the stated hypotheses."""


class ResonanceError(RuntimeError):
    """An exact (or near-exact) resonance blocks the construction."""

    def __init__(self, message, triple=None):
        super().__init__(message)
        self.triple = triple


@dataclass(frozen=True)
class PolynomialForce:
    """Polynomial internal force vector ``g(y, y')``.

    ``terms`` is a tuple of ``(component, coefficient, exponents)``:
    the force component index in ``0..n-1``, a real coefficient, and a
    mapping from phase-space variable index to its power.  Variables
    ``0..n-1`` are positions, ``n..2n-1`` velocities.  Every term must have
    total degree at least two (no constant or linear internal forces).
    """

    terms: tuple = ()

    def __post_init__(self):
        norm = []
        for comp, coeff, exps in self.terms:
            (validated,) = normalize_terms([(coeff, exps)])
            c, flat = validated
            if abs(c.imag) > 0:
                raise ModelError("force coefficients must be real")
            degree = sum(e for _, e in flat)
            if degree < 2:
                raise ModelError(
                    f"force term of degree {degree} < 2 on component {comp}"
                )
            norm.append((int(comp), float(c.real), flat))
        object.__setattr__(self, "terms", tuple(norm))

    def is_empty(self) -> bool:
        return not self.terms

    def component_terms(self) -> dict[int, list]:
        """Terms grouped by force component, in input order."""
        by_comp: dict[int, list] = {}
        for comp, coeff, flat in self.terms:
            by_comp.setdefault(comp, []).append((coeff, flat))
        return by_comp

    def involved_variables(self) -> tuple[int, ...]:
        out = set()
        for _, _, flat in self.terms:
            out.update(v for v, _ in flat)
        return tuple(sorted(out))

    def evaluate(self, x: np.ndarray, n: int) -> np.ndarray:
        """Force vector at phase-space point ``x`` (length 2n, may be complex)."""
        g = np.zeros(n, dtype=complex)
        for comp, coeff, flat in self.terms:
            val = coeff
            for v, e in flat:
                val = val * x[v] ** e
            g[comp] += val
        return g

    def jacobian(self, x: np.ndarray, n: int) -> np.ndarray:
        """d(g)/d(x) at ``x``, shape (n, 2n)."""
        J = np.zeros((n, 2 * n), dtype=complex)
        for comp, coeff, flat in self.terms:
            for v, e in flat:
                val = coeff * e * x[v] ** (e - 1)
                for u, eu in flat:
                    if u != v:
                        val = val * x[u] ** eu
                J[comp, v] += val
        return J


@dataclass(frozen=True)
class MechanicalSystem:
    """Second-order model ``M y'' + C y' + K y + g = eps * f cos(Omega t)``.

    Matrices must be real symmetric with ``M`` positive definite.  The
    forcing shape ``f`` carries the physical amplitude; ``forcing_amplitude``
    is the dimensionless scale ``eps`` multiplying it.
    """

    n: int
    mass: np.ndarray
    damping: np.ndarray
    stiffness: np.ndarray
    nonlinearity: PolynomialForce = PolynomialForce()
    forcing_shape: np.ndarray = None
    forcing_amplitude: float = 0.0

    def __post_init__(self):
        n = self.n
        for name in ("mass", "damping", "stiffness"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if mat.shape != (n, n):
                raise ModelError(f"{name} matrix must be {n}x{n}")
            if not np.allclose(mat, mat.T, rtol=0, atol=1e-10 * (1 + abs(mat).max())):
                raise ModelError(f"{name} matrix must be symmetric")
            object.__setattr__(self, name, mat)
        try:
            scipy.linalg.cholesky(self.mass)
        except scipy.linalg.LinAlgError as exc:
            raise ModelError("mass matrix must be positive definite") from exc
        shape = self.forcing_shape
        if shape is None:
            shape = np.zeros(n)
        shape = np.asarray(shape, dtype=float)
        if shape.shape != (n,):
            raise ModelError(f"forcing shape must have length {n}")
        object.__setattr__(self, "forcing_shape", shape)
        for comp, _, flat in self.nonlinearity.terms:
            if not 0 <= comp < n:
                raise ModelError(f"force component {comp} out of range")
            if any(v >= 2 * n for v, _ in flat):
                raise ModelError("force variable index out of range")


@dataclass(frozen=True)
class FirstOrderForm:
    """Phase-space form ``x' = A x + G_p(x) + eps F_p cos(Omega t)``."""

    A: np.ndarray
    forcing: np.ndarray  # F_p = (0, M^-1 f)
    system: MechanicalSystem


def to_first_order(sys: MechanicalSystem) -> FirstOrderForm:
    """Assemble the first-order linear operator and forcing image.

    ``A = [[0, I], [-M^-1 K, -M^-1 C]]`` with the position block first.
    The nonlinearity keeps its second-order description; downstream code
    applies the ``-M^-1`` velocity-block mapping where needed.
    """
    n = sys.n
    cho = scipy.linalg.cho_factor(sys.mass)
    MiK = scipy.linalg.cho_solve(cho, sys.stiffness)
    MiC = scipy.linalg.cho_solve(cho, sys.damping)
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -MiK
    A[n:, n:] = -MiC
    forcing = np.concatenate([np.zeros(n), scipy.linalg.cho_solve(cho, sys.forcing_shape)])
    return FirstOrderForm(A=A, forcing=forcing, system=sys)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Diagonalization ``T^-1 A T = diag(lambdas)`` with the master pair first.

    Eigenvalues are sorted by decreasing real part (ties broken by
    increasing imaginary magnitude, positive imaginary part first), then the
    selected master conjugate pair is rotated to the front.  ``sigma`` is
    the integer decay-rate quotient bounding the resonance orders to check.
    """

    lambdas: np.ndarray
    T: np.ndarray
    T_inv: np.ndarray
    master_pair_index: int
    sigma: int
    structural: bool
    alpha: float | None = None
    beta: float | None = None
    omega: np.ndarray | None = None
    modal_damping: np.ndarray | None = None

    @property
    def lambda1(self) -> complex:
        return complex(self.lambdas[0])

    def outer_lambdas(self) -> np.ndarray:
        return self.lambdas[2:]


def detect_structural_damping(M, C, K):
    """Least-squares fit ``C ~ alpha*M + beta*K``; returns (alpha, beta, relres)."""
    mm = float(np.sum(M * M))
    mk = float(np.sum(M * K))
    kk = float(np.sum(K * K))
    cm = float(np.sum(C * M))
    ck = float(np.sum(C * K))
    gram = np.array([[mm, mk], [mk, kk]])
    rhs = np.array([cm, ck])
    try:
        ab = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return 0.0, 0.0, np.inf
    alpha, beta = float(ab[0]), float(ab[1])
    resid = C - alpha * M - beta * K
    normC = np.linalg.norm(C)
    if normC == 0.0:
        return 0.0, 0.0, 0.0
    return alpha, beta, float(np.linalg.norm(resid) / normC)


def _sort_key(lam: complex):
    return (-lam.real, abs(lam.imag), -np.sign(lam.imag))


def _deterministic_sign(E: np.ndarray) -> np.ndarray:
    """Flip eigenvector columns so the largest-magnitude entry is positive."""
    E = E.copy()
    for j in range(E.shape[1]):
        i = int(np.argmax(np.abs(E[:, j])))
        if E[i, j] < 0:
            E[:, j] = -E[:, j]
    return E


def _structural_decomposition(sys: MechanicalSystem):
    """Modal construction from the real mass-normalized eigenbasis.

    With ``C = alpha*M + beta*K`` the undamped mode shapes diagonalize all
    three matrices; each mode contributes the eigenvalue pair
    ``-b/2 +- sqrt((b/2)^2 - w^2)`` and the phase-space eigenvectors stack
    the real mode shape over its multiple, keeping the last ``n`` rows of
    the modal matrix proportional to the first ``n``.
    """
    alpha, beta, relres = detect_structural_damping(sys.mass, sys.damping, sys.stiffness)
    w2, E = scipy.linalg.eigh(sys.stiffness, sys.mass)
    if np.any(w2 <= 0):
        raise DecompositionError("stiffness matrix is not positive definite after constraints")
    order = np.argsort(w2)  # ascending frequency
    w2, E = w2[order], E[:, order]
    E = _deterministic_sign(E)
    omega = np.sqrt(w2)
    bmod = alpha + beta * w2
    disc = (bmod / 2.0) ** 2 - w2
    root = np.sqrt(disc.astype(complex))
    lam_plus = -bmod / 2.0 + root
    lam_minus = -bmod / 2.0 - root
    n = sys.n
    pairs = []
    for i in range(n):
        vp = np.concatenate([E[:, i], lam_plus[i] * E[:, i]])
        vm = np.concatenate([E[:, i], lam_minus[i] * E[:, i]])
        pairs.append((lam_plus[i], lam_minus[i], vp.astype(complex), vm.astype(complex)))
    # exact conjugacy for underdamped modes
    lambdas = []
    vectors = []
    for i, (lp, lm, vp, vm) in enumerate(pairs):
        if disc[i] < 0:
            lm = np.conj(lp)
            vm = np.conj(vp)
        lambdas.extend([lp, lm])
        vectors.extend([vp, vm])
    return (
        np.array(lambdas),
        np.array(vectors).T,
        dict(structural=True, alpha=alpha, beta=beta, omega=omega,
             modal_damping=bmod, relres=relres),
    )


def _general_decomposition(A: np.ndarray):
    lam, V = np.linalg.eig(A)
    n2 = len(lam)
    used = np.zeros(n2, dtype=bool)
    lambdas = []
    vectors = []
    order = sorted(range(n2), key=lambda i: _sort_key(lam[i]))
    for i in order:
        if used[i]:
            continue
        used[i] = True
        li, vi = lam[i], V[:, i]
        # deterministic scaling: unit norm, largest entry real positive
        vi = vi / np.linalg.norm(vi)
        p = int(np.argmax(np.abs(vi)))
        phase = vi[p] / abs(vi[p])
        vi = vi / phase
        if abs(li.imag) <= PAIR_TOL * (1 + abs(li)):
            lambdas.append(complex(li.real))
            vectors.append(vi)
            continue
        partner = None
        for j in order:
            if used[j]:
                continue
            if abs(lam[j] - np.conj(li)) <= PAIR_TOL * (1 + abs(li)):
                partner = j
                break
        if partner is None:
            raise DecompositionError(f"no conjugate partner found for eigenvalue {li}")
        used[partner] = True
        if li.imag < 0:
            li, vi = np.conj(li), np.conj(vi)
        lambdas.extend([li, np.conj(li)])
        vectors.extend([vi, np.conj(vi)])
    return np.array(lambdas), np.array(vectors).T, dict(structural=False)


def decompose(A: np.ndarray, sys: MechanicalSystem, master_pair: int = 0) -> SpectralDecomposition:
    """Diagonalize the linear part and select the master mode pair.

    Uses the exact real-modal construction when the damping fits
    ``alpha*M + beta*K``, a general complex eigensolver otherwise.
    ``master_pair`` counts complex-conjugate pairs in decreasing-real-part
    order; the chosen pair is moved to the front.

    Raises
    ------
    DecompositionError
        If any eigenvalue has non-negative real part, the requested master
        pair is not an underdamped complex pair, or the modal matrix is too
        ill conditioned for the linear part to count as semisimple.
    """
    alpha, beta, relres = detect_structural_damping(sys.mass, sys.damping, sys.stiffness)
    if relres <= STRUCTURAL_TOL:
        lambdas, T, info = _structural_decomposition(sys)
    else:
        lambdas, T, info = _general_decomposition(A)

    if np.any(lambdas.real >= 0):
        worst = lambdas[np.argmax(lambdas.real)]
        raise DecompositionError(
            f"linear part is not asymptotically stable: Re lambda = {worst.real:.3e} >= 0"
        )

    # global ordering: decreasing real part, conjugate pairs kept adjacent
    idx = list(range(len(lambdas)))
    pair_of = {}
    i = 0
    while i < len(idx):
        li = lambdas[i]
        if abs(li.imag) > 0 and i + 1 < len(idx) and abs(lambdas[i + 1] - np.conj(li)) <= PAIR_TOL * (1 + abs(li)):
            pair_of[i] = (i, i + 1)
            i += 2
        else:
            pair_of[i] = (i,)
            i += 1
    groups = sorted(pair_of.values(), key=lambda g: _sort_key(lambdas[g[0]]))
    perm = [j for g in groups for j in g]
    lambdas = lambdas[perm]
    T = T[:, perm]

    # master pair selection among complex pairs
    pair_starts = [
        i for i in range(len(lambdas) - 1)
        if lambdas[i].imag > 0 and abs(lambdas[i + 1] - np.conj(lambdas[i])) <= PAIR_TOL * (1 + abs(lambdas[i]))
    ]
    if not pair_starts:
        raise DecompositionError("no underdamped complex-conjugate pair available as master")
    if not 0 <= master_pair < len(pair_starts):
        raise DecompositionError(
            f"master pair {master_pair} out of range (0..{len(pair_starts) - 1})"
        )
    start = pair_starts[master_pair]
    front = [start, start + 1]
    rest = [i for i in range(len(lambdas)) if i not in front]
    perm = front + rest
    lambdas = lambdas[perm]
    T = T[:, perm]

    # orient the master pair so the projected forcing leads with a positive
    # quadrature component; physical outputs are invariant under the flip,
    # but the equilibrium phase convention (quadrature at +pi/2 on the
    # backbone) depends on it
    if np.any(sys.forcing_shape):
        top = scipy.linalg.cho_solve(
            scipy.linalg.cho_factor(sys.mass), sys.forcing_shape
        )
        rhs = np.concatenate([np.zeros(sys.n), top])
        proj = np.linalg.solve(T, rhs)[0]
        if proj.imag < 0:
            T[:, 0] = -T[:, 0]
            T[:, 1] = -T[:, 1]

    T_inv = np.linalg.inv(T)
    cond1 = np.linalg.norm(T, 1) * np.linalg.norm(T_inv, 1)
    if 1.0 / cond1 < RCOND_MIN:
        raise DecompositionError(
            f"modal matrix is near-defective (rcond ~ {1.0 / cond1:.2e})"
        )
    residual = np.linalg.norm(A @ T - T * lambdas[None, :]) / max(np.linalg.norm(A), 1e-300)
    if residual > 1e-8:
        raise DecompositionError(f"eigendecomposition residual {residual:.2e} too large")

    sigma = int(lambdas.real.min() / lambdas.real.max())
    return SpectralDecomposition(
        lambdas=lambdas,
        T=T,
        T_inv=T_inv,
        master_pair_index=0,
        sigma=sigma,
        structural=info["structural"],
        alpha=info.get("alpha"),
        beta=info.get("beta"),
        omega=info.get("omega"),
        modal_damping=info.get("modal_damping"),
    )


@dataclass(frozen=True)
class NonResonanceReport:
    """Outcome of the real-part resonance screen up to the decay quotient."""

    passed: bool
    min_margin: float
    worst_triple: tuple[int, int, int] | None
    sigma: int
    damping_gauge: float  # 2 * M * |Re lambda_1|
    light_damping: bool

    def raise_on_failure(self):
        if not self.passed:
            a, b, l = self.worst_triple
            raise ResonanceError(
                f"resonance a*Re(l1) + b*Re(l2) = Re(l_{l}) at (a, b) = ({a}, {b})",
                triple=self.worst_triple,
            )


def check_nonresonance(dec: SpectralDecomposition, order: int,
                       direct_limit: int = 2000) -> NonResonanceReport:
    """Screen ``a Re(l1) + b Re(l2) != Re(l_out)`` for ``2 <= a+b <= sigma``.

    Because the master pair shares one real part, only the total ``a + b``
    matters; for large decay quotients each outer eigenvalue is tested
    against its nearest admissible total instead of enumerating all pairs.
    Also evaluates the light-damping gauge ``2 * order * |Re lambda_1|``
    used to justify moving near-resonant terms into the reduced dynamics.
    """
    re1 = dec.lambdas[0].real
    outer = dec.outer_lambdas()
    sigma = dec.sigma
    min_margin = np.inf
    worst = None
    if sigma >= 2 and len(outer):
        if sigma <= direct_limit:
            for total in range(2, sigma + 1):
                lhs = total * re1
                for li, lam in enumerate(outer):
                    margin = abs(lhs - lam.real) / max(abs(lam.real), 1e-300)
                    if margin < min_margin:
                        min_margin = margin
                        worst = (total, 0, li + 2)
        else:
            for li, lam in enumerate(outer):
                ratio = lam.real / re1
                for total in {int(np.floor(ratio)), int(np.ceil(ratio))}:
                    if not 2 <= total <= sigma:
                        continue
                    margin = abs(total * re1 - lam.real) / max(abs(lam.real), 1e-300)
                    if margin < min_margin:
                        min_margin = margin
                        worst = (total, 0, li + 2)
    gauge = 2.0 * order * abs(re1)
    return NonResonanceReport(
        passed=bool(min_margin > RESONANCE_TOL),
        min_margin=float(min_margin),
        worst_triple=worst,
        sigma=sigma,
        damping_gauge=gauge,
        light_damping=bool(gauge < LIGHT_DAMPING_GAUGE),
    )


@dataclass(frozen=True)
class ModalNonlinearity:
    """Modal image of the internal force, kept in factored form.

    The modal force is ``G(q) = -B2 g(T q)`` with ``B2`` the last ``n``
    columns of ``T^-1 [[0,0],[0,M^-1]]``; compositions are carried out on
    the physical rows ``x = T q``, where the force descriptor stays sparse.
    """

    B2: np.ndarray            # (2n, n) complex
    T: np.ndarray             # (2n, 2n) complex
    force: PolynomialForce
    n: int

    @classmethod
    def from_system(cls, sys: MechanicalSystem, dec: SpectralDecomposition) -> "ModalNonlinearity":
        cho = scipy.linalg.cho_factor(sys.mass)
        # B2 = T_inv[:, n:] @ M^-1, computed column-block by solve
        right = scipy.linalg.cho_solve(cho, np.eye(sys.n))
        B2 = dec.T_inv[:, sys.n:] @ right
        return cls(B2=B2, T=dec.T, force=sys.nonlinearity, n=sys.n)

    def evaluate(self, q: np.ndarray) -> np.ndarray:
        """Modal force vector at modal point ``q``."""
        x = self.T @ q
        g = self.force.evaluate(x, self.n)
        return -self.B2 @ g


def modal_forcing(sys: MechanicalSystem, dec: SpectralDecomposition) -> np.ndarray:
    """Harmonic forcing image: coefficients of ``cos`` in modal coordinates.

    Returns the vector whose i-th entry multiplies
    ``(exp(i phi) + exp(-i phi)) / 2`` in the modal forcing.
    """
    cho = scipy.linalg.cho_factor(sys.mass)
    top = scipy.linalg.cho_solve(cho, sys.forcing_shape)
    return dec.T_inv[:, sys.n:] @ top
