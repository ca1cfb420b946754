"""Clamped-free bending beam benchmark with a cubic tip spring.

Cubic-Hermite finite elements with a consistent mass matrix, proportional
damping ``C = alpha*M + beta*K``, a cubic spring ``kappa * w_tip^3`` and a
cosine point force on the transverse tip coordinate.  Units follow the
benchmark convention (mm, kg, s, mN, kPa) so printed eigenvalues are in
rad/s.  Each node carries (deflection, negative slope); after clamping the
first node the tip deflection sits at index ``n - 2`` of ``n = 2 m`` DOFs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import MechanicalSystem, PolynomialForce, SpectralDecomposition


@dataclass(frozen=True)
class BeamConfig:
    """Geometry, material, damping, and load parameters.

    length/height/width in mm, density in kg/mm^3, youngs_modulus in kPa,
    cubic_spring in mN/mm^3, mass_damping in 1/s, stiffness_damping in s,
    forcing in mN, elements >= 2.
    """

    length: float = 2700.0
    height: float = 10.0
    width: float = 10.0
    density: float = 1780e-9
    youngs_modulus: float = 45e6
    cubic_spring: float = 4.0
    mass_damping: float = 1.25e-4
    stiffness_damping: float = 2.5e-4
    forcing: float = 0.1
    elements: int = 5

    def __post_init__(self):
        for name in ("length", "height", "width", "density", "youngs_modulus"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.elements < 2:
            raise ValueError("at least two elements are required")
        if self.height > 0.1 * self.length:
            # slender-beam assumption behind dropping rotary inertia
            raise ValueError("height must be small compared to length")

    @property
    def area(self) -> float:
        return self.height * self.width

    @property
    def second_moment(self) -> float:
        return self.width * self.height**3 / 12.0

    @property
    def dofs(self) -> int:
        return 2 * self.elements


def continuum_first_frequency(cfg: BeamConfig) -> float:
    """First bending frequency of the continuous clamped-free beam (rad/s)."""
    mu = 1.875104  # first root of the clamped-free characteristic equation
    EI = cfg.youngs_modulus * cfg.second_moment
    rhoA = cfg.density * cfg.area
    return mu**2 * np.sqrt(EI / (rhoA * cfg.length**4))


def element_matrices(EI: float, rhoA: float, le: float):
    """Stiffness and consistent mass of one cubic-Hermite element.

    DOF order (w_i, th_i, w_j, th_j) with th = -dw/dx, obtained from the
    standard (w, dw/dx) matrices by flipping the sign of the slope DOFs.
    """
    k = EI / le**3 * np.array(
        [
            [12.0, 6.0 * le, -12.0, 6.0 * le],
            [6.0 * le, 4.0 * le**2, -6.0 * le, 2.0 * le**2],
            [-12.0, -6.0 * le, 12.0, -6.0 * le],
            [6.0 * le, 2.0 * le**2, -6.0 * le, 4.0 * le**2],
        ]
    )
    m = rhoA * le / 420.0 * np.array(
        [
            [156.0, 22.0 * le, 54.0, -13.0 * le],
            [22.0 * le, 4.0 * le**2, 13.0 * le, -3.0 * le**2],
            [54.0, 13.0 * le, 156.0, -22.0 * le],
            [-13.0 * le, -3.0 * le**2, -22.0 * le, 4.0 * le**2],
        ]
    )
    s = np.diag([1.0, -1.0, 1.0, -1.0])
    return s @ k @ s, s @ m @ s


def build_beam(cfg: BeamConfig) -> MechanicalSystem:
    """Assemble the constrained FE model as a `MechanicalSystem`.

    The clamped node's two DOFs are condensed out; remaining DOFs are
    node-major.  The cubic spring and the unit-amplitude cosine force both
    act on the tip deflection DOF.
    """
    m = cfg.elements
    le = cfg.length / m
    EI = cfg.youngs_modulus * cfg.second_moment
    rhoA = cfg.density * cfg.area
    ke, me = element_matrices(EI, rhoA, le)
    ndof_full = 2 * (m + 1)
    K = np.zeros((ndof_full, ndof_full))
    M = np.zeros((ndof_full, ndof_full))
    for e in range(m):
        sl = slice(2 * e, 2 * e + 4)
        K[sl, sl] += ke
        M[sl, sl] += me
    keep = slice(2, None)  # clamp node 0
    K = K[keep, keep]
    M = M[keep, keep]
    n = cfg.dofs
    tip = n - 2
    C = cfg.mass_damping * M + cfg.stiffness_damping * K
    force = PolynomialForce(
        terms=((tip, cfg.cubic_spring, {tip: 3}),) if cfg.cubic_spring != 0.0 else ()
    )
    shape = np.zeros(n)
    shape[tip] = cfg.forcing
    return MechanicalSystem(
        n=n, mass=M, damping=C, stiffness=K,
        nonlinearity=force, forcing_shape=shape,
    )


def tip_index(sys: MechanicalSystem) -> int:
    """Index of the tip deflection DOF in the second-order model."""
    return sys.n - 2


def analytic_ssm_coefficients(sys: MechanicalSystem, dec: SpectralDecomposition, Omega: float):
    """Closed-form reduced-dynamics coefficients for the beam model.

    Evaluates the explicit mode-sum expressions for the cubic coefficient
    of the autonomous reduced dynamics and the constant, diagonal, and
    off-diagonal harmonic coefficients of the forced part, directly from
    the modal matrix.  Serves as the independent cross-check of the
    recurrence pipeline (and is checked against it in the test suite).

    Returns ``(gamma1, c0, c_diag, d_off)``.
    """
    n = sys.n
    tip = tip_index(sys)
    kappa = 0.0
    for comp, coeff, flat in sys.nonlinearity.terms:
        if comp == tip and flat == ((tip, 3),):
            kappa = coeff
    P = float(sys.forcing_shape[tip])
    Minv = np.linalg.inv(sys.mass)
    B2 = dec.T_inv[:, n:] @ Minv
    Btip = B2[:, tip]          # column of T^-1 [[0,0],[0,M^-1]] hitting the tip force
    Trow = dec.T[tip, :]       # tip deflection row of the modal matrix
    lam = dec.lambdas

    gamma1 = -3.0 * kappa * Btip[0] * Trow[0] ** 2 * Trow[1]
    c0 = Btip[0] * P / 2.0

    js = np.arange(2 * n)
    mask_c = js != 0   # skip the master +pair slot (its forced term is removed)
    c_diag = (
        6.0 * kappa * Btip[0] * Trow[0] * Trow[1]
        * np.sum(Trow[mask_c] * Btip[mask_c] * P / (2.0 * (lam[mask_c] - 1j * Omega)))
    )
    mask_d = js != 1   # skip the conjugate slot
    d_off = (
        3.0 * kappa * Btip[0] * Trow[0] ** 2
        * np.sum(Trow[mask_d] * Btip[mask_d] * P / (2.0 * (lam[mask_d] + 1j * Omega)))
    )
    return complex(gamma1), complex(c0), complex(c_diag), complex(d_off)
