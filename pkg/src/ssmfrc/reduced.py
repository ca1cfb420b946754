"""Polar reduced dynamics: fixed points, stability, sweeps, geometry.

The two-dimensional reduced vector field in polar coordinates is built from
the autonomous and forced reduced coefficients.  Its fixed points (the
periodic responses of the full system) are found by eliminating the phase:
for each amplitude the two equilibrium equations are linear in
``(cos psi, sin psi)``, so the residual ``cos^2 + sin^2 - 1`` is a scalar
function of amplitude whose bracketed roots give every solution branch,
isolas included, without continuation seeding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .ssm_auto import AutonomousSSM
from .ssm_nonauto import NonAutonomousSSM

#: residual gate re-checked on every reported fixed point
FIXED_POINT_RESIDUAL = 1e-10
#: eigenvalue real parts closer to zero than this are flagged as marginal
MARGINAL_TOL = 1e-9


class SingularEliminationError(RuntimeError):
    """The phase-elimination system is singular over a whole amplitude range."""


class EllipsePremiseError(RuntimeError):
    """The ellipse construction needs nonvanishing scale factors."""


@dataclass(frozen=True)
class PolarReducedModel:
    """Coefficient bundle of the polar reduced vector field.

    All six scalar functions are even polynomials in the amplitude (plus
    constants): ``amp_rate = a(rho)``, ``phase_rate = b(rho)`` from the
    autonomous part, and the four forcing shape functions built from the
    constant, diagonal, and off-diagonal forced coefficients.
    """

    lambda1: complex
    gammas: np.ndarray
    c0: complex
    c_diag: np.ndarray
    d_off: np.ndarray
    omega: float
    epsilon: float

    @classmethod
    def from_ssm(cls, auto: AutonomousSSM, nonauto: NonAutonomousSSM,
                 epsilon: float) -> "PolarReducedModel":
        return cls(
            lambda1=auto.lambda1,
            gammas=np.asarray(auto.gammas, dtype=complex),
            c0=complex(nonauto.c0),
            c_diag=np.asarray(nonauto.c_diag, dtype=complex),
            d_off=np.asarray(nonauto.d_off, dtype=complex),
            omega=float(nonauto.omega),
            epsilon=float(epsilon),
        )

    def truncate_to_constant_forcing(self) -> "PolarReducedModel":
        """Drop the amplitude-dependent forced terms (zeroth-order forcing)."""
        return replace(self, c_diag=np.zeros_like(self.c_diag),
                       d_off=np.zeros_like(self.d_off))

    # -- even-polynomial evaluation helpers (rho2 = rho**2) -----------------

    def _even(self, coeffs, rho2):
        out = np.zeros_like(np.asarray(rho2, dtype=float))
        for c in coeffs[::-1]:
            out = out * rho2 + c
        return out

    def amp_rate(self, rho):
        rho = np.asarray(rho, dtype=float)
        return rho * self._even(np.concatenate([[self.lambda1.real], self.gammas.real]), rho**2)

    def amp_rate_deriv(self, rho):
        rho = np.asarray(rho, dtype=float)
        coeffs = np.concatenate([[self.lambda1.real], self.gammas.real])
        powers = 2 * np.arange(len(coeffs)) + 1
        return self._even(coeffs * powers, rho**2)

    def phase_rate(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self._even(np.concatenate([[self.lambda1.imag], self.gammas.imag]), rho**2)

    def phase_rate_deriv(self, rho):
        rho = np.asarray(rho, dtype=float)
        coeffs = self.gammas.imag * (2 * np.arange(1, len(self.gammas) + 1))
        return rho * self._even(coeffs, rho**2)

    def _shape(self, const, diag_part, off_part, rho2):
        return self._even(np.concatenate([[const], diag_part + off_part]), rho2)

    def forcing_shapes(self, rho):
        """(f1, f2, g1, g2) at the given amplitude(s)."""
        rho2 = np.asarray(rho, dtype=float) ** 2
        f1 = self._shape(self.c0.real, self.c_diag.real, self.d_off.real, rho2)
        f2 = self._shape(self.c0.imag, self.c_diag.imag, -self.d_off.imag, rho2)
        g1 = self._shape(self.c0.imag, self.c_diag.imag, self.d_off.imag, rho2)
        g2 = self._shape(self.c0.real, self.c_diag.real, -self.d_off.real, rho2)
        return f1, f2, g1, g2

    def forcing_shape_derivs(self, rho):
        """d/d(rho) of (f1, f2, g1, g2)."""
        rho = np.asarray(rho, dtype=float)
        powers = 2 * np.arange(1, len(self.c_diag) + 1)
        rho2 = rho**2
        d_f1 = rho * self._even((self.c_diag.real + self.d_off.real) * powers, rho2)
        d_f2 = rho * self._even((self.c_diag.imag - self.d_off.imag) * powers, rho2)
        d_g1 = rho * self._even((self.c_diag.imag + self.d_off.imag) * powers, rho2)
        d_g2 = rho * self._even((self.c_diag.real - self.d_off.real) * powers, rho2)
        return d_f1, d_f2, d_g1, d_g2


def evaluate_polar_rhs(model: PolarReducedModel, rho: float, psi: float):
    """Right-hand side ``(d rho/dt, d psi/dt)`` of the reduced dynamics.

    The raw phase equation divides by the amplitude and is undefined at
    ``rho <= 0``; use `zero_problem` for the amplitude-multiplied form.
    """
    if rho <= 0:
        raise ValueError("amplitude must be positive for the raw polar form")
    f1, f2, g1, g2 = model.forcing_shapes(rho)
    eps = model.epsilon
    c, s = math.cos(psi), math.sin(psi)
    rho_dot = model.amp_rate(rho) + eps * (f1 * c + f2 * s)
    psi_dot = (model.phase_rate(rho) - model.omega) + eps / rho * (g1 * c - g2 * s)
    return float(rho_dot), float(psi_dot)


def zero_problem(model: PolarReducedModel, rho, psi):
    """Equilibrium system with the phase equation multiplied by amplitude."""
    f1, f2, g1, g2 = model.forcing_shapes(rho)
    eps = model.epsilon
    c, s = np.cos(psi), np.sin(psi)
    F1 = model.amp_rate(rho) + eps * (f1 * c + f2 * s)
    F2 = (model.phase_rate(rho) - model.omega) * np.asarray(rho) + eps * (g1 * c - g2 * s)
    return F1, F2


def _phase_elimination(model: PolarReducedModel, rho):
    """Solve the 2x2 linear system for (cos psi, sin psi) at amplitude(s)."""
    f1, f2, g1, g2 = model.forcing_shapes(rho)
    eps = model.epsilon
    rhs1 = -model.amp_rate(rho) / eps
    rhs2 = -(model.phase_rate(rho) - model.omega) * np.asarray(rho, dtype=float) / eps
    det = -(f1 * g2 + f2 * g1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (-g2 * rhs1 - f2 * rhs2) / det
        s = (-g1 * rhs1 + f1 * rhs2) / det
    return c, s, det


def solve_fixed_points(model: PolarReducedModel, rho_min: float = 1e-8,
                       rho_max: float | None = None, grid: int = 2000):
    """All equilibria of the reduced dynamics in an amplitude window.

    Scans the phase-elimination residual ``cos^2 + sin^2 - 1`` on a dense
    amplitude grid, brackets its sign changes, refines each to 1e-12, and
    returns ``(rho, psi)`` pairs with ``psi`` in ``[0, 2 pi)``.  Every
    returned point is re-checked against the equilibrium equations.  With
    zero forcing scale the trivial equilibrium is the only candidate and an
    empty list is returned.
    """
    if model.epsilon == 0.0:
        return []
    if rho_max is None:
        rho_max = default_rho_max(model)
    rhos = np.linspace(rho_min, rho_max, grid)
    c, s, det = _phase_elimination(model, rhos)
    bad = ~np.isfinite(c) | ~np.isfinite(s) | (np.abs(det) < 1e-300)
    if bad.any():
        # isolated singular grid nodes: nudge by half a step
        step = (rho_max - rho_min) / (grid - 1)
        rhos = rhos.copy()
        rhos[bad] += 0.5 * step
        c, s, det = _phase_elimination(model, rhos)
        bad = ~np.isfinite(c) | ~np.isfinite(s) | (np.abs(det) < 1e-300)
        if bad.any():
            raise SingularEliminationError(
                "phase elimination singular over a persistent amplitude range"
            )
    resid = c**2 + s**2 - 1.0

    def scalar_resid(rho):
        cc, ss, _ = _phase_elimination(model, float(rho))
        return float(cc**2 + ss**2 - 1.0)

    points = []
    sign = np.sign(resid)
    for i in range(len(rhos) - 1):
        if sign[i] == 0.0:
            root = rhos[i]
        elif sign[i] * sign[i + 1] < 0:
            root = brentq(scalar_resid, rhos[i], rhos[i + 1], xtol=1e-12, rtol=8.9e-16)
        else:
            continue
        cc, ss, _ = _phase_elimination(model, float(root))
        psi = math.atan2(float(ss), float(cc)) % (2 * math.pi)
        F1, F2 = zero_problem(model, float(root), psi)
        if max(abs(float(F1)), abs(float(F2))) > FIXED_POINT_RESIDUAL:
            continue
        if any(abs(root - p[0]) <= 1e-9 * max(1.0, p[0]) for p in points):
            continue
        points.append((float(root), float(psi)))
    return points


def default_rho_max(model: PolarReducedModel) -> float:
    """Amplitude window bound covering the linear peak and the bent backbone."""
    eps = model.epsilon
    lin_peak = 8.0 * eps * abs(model.c0) / max(abs(model.lambda1.real), 1e-300)
    reach = lin_peak
    if len(model.gammas):
        im = model.gammas.imag[0]
        if im != 0.0:
            detune = (model.omega - model.lambda1.imag) / im
            if detune > 0:
                reach = max(reach, 2.0 * math.sqrt(detune))
    return float(max(reach, 10.0 * eps * abs(model.c0)))


def reduced_jacobian(model: PolarReducedModel, rho: float, psi: float) -> np.ndarray:
    """Closed-form Jacobian of the raw polar vector field at a point."""
    f1, f2, g1, g2 = (float(v) for v in model.forcing_shapes(rho))
    df1, df2, dg1, dg2 = (float(v) for v in model.forcing_shape_derivs(rho))
    eps = model.epsilon
    c, s = math.cos(psi), math.sin(psi)
    a_p = float(model.amp_rate_deriv(rho))
    b_p = float(model.phase_rate_deriv(rho))
    g_combo = g1 * c - g2 * s
    J = np.empty((2, 2))
    J[0, 0] = a_p + eps * (df1 * c + df2 * s)
    J[0, 1] = eps * (-f1 * s + f2 * c)
    J[1, 0] = b_p - eps / rho**2 * g_combo + eps / rho * (dg1 * c - dg2 * s)
    J[1, 1] = eps / rho * (-g1 * s - g2 * c)
    return J


def classify_stability(model: PolarReducedModel, rho: float, psi: float) -> str:
    """Stability class of a solved equilibrium from the reduced Jacobian.

    Returns one of ``"stable node"``, ``"stable spiral"``, ``"saddle"``,
    ``"unstable"``, or ``"marginal"`` when an eigenvalue real part sits
    within tolerance of zero (near-bifurcation flag).
    """
    eig = np.linalg.eigvals(reduced_jacobian(model, rho, psi))
    re = np.sort(eig.real)
    if np.any(np.abs(re) <= MARGINAL_TOL):
        return "marginal"
    if re[0] < 0 < re[1]:
        return "saddle"
    if re[1] < 0:
        return "stable spiral" if abs(eig[0].imag) > 0 else "stable node"
    return "unstable"


@dataclass(frozen=True)
class FrcPoint:
    """One point of a forced-response curve."""

    omega: float
    rho: float
    psi: float
    stability: str
    physical_amplitude: float
    branch_id: int


@dataclass(frozen=True)
class FoldEvent:
    """Branch-count change between adjacent sweep samples."""

    omega_low: float
    omega_high: float
    count_low: int
    count_high: int


@dataclass(frozen=True)
class SweepResult:
    points: tuple[FrcPoint, ...]
    events: tuple[FoldEvent, ...]
    error: str | None = None
    error_omega: float | None = None


def _solve_one_frequency(args):
    """Worker task: all classified equilibria plus amplitudes at one frequency."""
    (auto, dec, nl, forcing, Omega, epsilon, rho_max, grid,
     coord_index, samples_per_period, collect_errors) = args
    from .backmap import backmap_orbit
    from .ssm_nonauto import build_nonautonomous

    try:
        nonauto = build_nonautonomous(auto, dec, nl, forcing, Omega)
        model = PolarReducedModel.from_ssm(auto, nonauto, epsilon)
        out = []
        for rho, psi in solve_fixed_points(model, rho_max=rho_max, grid=grid):
            stability = classify_stability(model, rho, psi)
            orbit = backmap_orbit(
                auto, nonauto, dec, rho, psi, epsilon, coord_index,
                samples_per_period=samples_per_period,
            )
            out.append((rho, psi, stability, orbit.amplitude))
    except Exception as exc:
        if not collect_errors:
            raise
        return exc
    return out


def _angdiff(a, b):
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def sweep_frc(auto: AutonomousSSM, dec, nl, forcing, omegas, epsilon: float,
              coord_index: int, rho_max: float | None = None, grid: int = 2000,
              samples_per_period: int = 128, workers: int = 1,
              collect_errors: bool = False) -> SweepResult:
    """Forced-response curve over ordered frequency samples.

    Each frequency is an independent task over the shared read-only
    autonomous data, so results are identical for any worker count.
    Points are stitched into branches by nearest-neighbor matching in
    ``(log amplitude, phase-on-the-circle)`` between adjacent frequencies;
    changes in branch count are reported as fold events.

    With ``collect_errors`` a failing frequency does not raise: results up
    to the failing sample are kept and the error is reported on the result.
    """
    omegas = [float(w) for w in omegas]
    tasks = [
        (auto, dec, nl, forcing, w, epsilon, rho_max, grid, coord_index,
         samples_per_period, collect_errors)
        for w in omegas
    ]
    if workers > 1:
        import multiprocessing

        with multiprocessing.Pool(workers) as pool:
            per_omega = pool.map(_solve_one_frequency, tasks)
    else:
        per_omega = [_solve_one_frequency(t) for t in tasks]

    error = None
    error_omega = None
    for idx, sols in enumerate(per_omega):
        if isinstance(sols, Exception):
            error = str(sols)
            error_omega = omegas[idx]
            per_omega = per_omega[:idx]
            omegas = omegas[:idx]
            break

    points: list[FrcPoint] = []
    events: list[FoldEvent] = []
    prev: list[tuple[float, float, int]] = []  # (rho, psi, branch_id)
    next_branch = 0
    for w, sols in zip(omegas, per_omega):
        sols = sorted(sols, key=lambda t: t[0])
        assigned: list[tuple[float, float, int]] = []
        taken = set()
        candidates = []
        for si, (rho, psi, stab, amp) in enumerate(sols):
            for pj, (prho, ppsi, pid) in enumerate(prev):
                d = math.hypot(math.log(rho) - math.log(prho), _angdiff(psi, ppsi))
                candidates.append((d, si, pj))
        match: dict[int, int] = {}
        for d, si, pj in sorted(candidates):
            if d > 1.5 or si in match or pj in taken:
                continue
            match[si] = pj
            taken.add(pj)
        for si, (rho, psi, stab, amp) in enumerate(sols):
            if si in match:
                bid = prev[match[si]][2]
            else:
                bid = next_branch
                next_branch += 1
            assigned.append((rho, psi, bid))
            points.append(FrcPoint(w, rho, psi, stab, amp, bid))
        if prev and len(sols) != len(prev):
            events.append(FoldEvent(prev_omega, w, len(prev), len(sols)))
        prev = assigned
        prev_omega = w
    return SweepResult(points=tuple(points), events=tuple(events),
                       error=error, error_omega=error_omega)


# -- equilibrium geometry ----------------------------------------------------


def ellipse_diagnostics(model: PolarReducedModel, rho: float, psis=None):
    """Phase-swept locus whose intersection with a fixed vector marks equilibria.

    Scaling the two equilibrium equations by the phase-rate and amp-rate
    shape factors turns them into ``locus(psi) = target``: the locus is an
    ellipse traced by the rotation of a fixed vector plus a cosine stretch,
    and the target collects the autonomous terms.  Requires both scale
    factors to be nonzero at this amplitude.

    Returns ``(psis, locus, target)`` with ``locus`` of shape (2, len(psis)).
    """
    if psis is None:
        psis = np.linspace(0.0, 2 * math.pi, 361)
    psis = np.asarray(psis, dtype=float)
    f1, f2, g1, g2 = (float(v) for v in model.forcing_shapes(rho))
    if abs(g1) < 1e-300 or abs(f2) < 1e-300:
        raise EllipsePremiseError(
            f"scale factors vanish at amplitude {rho}: g1={g1:.3e}, f2={f2:.3e}"
        )
    v1 = np.array([f2 * g2, f2 * g1])
    v2 = np.array([f1 * g1 - f2 * g2, 0.0])
    cos_p, sin_p = np.cos(psis), np.sin(psis)
    locus = np.empty((2, len(psis)))
    locus[0] = cos_p * v1[0] + sin_p * v1[1] + v2[0] * cos_p
    locus[1] = -sin_p * v1[0] + cos_p * v1[1] + v2[1] * cos_p
    target = -np.array([
        g1 * float(model.amp_rate(rho)),
        f2 * (float(model.phase_rate(rho)) - model.omega) * rho,
    ]) / model.epsilon
    return psis, locus, target


def circle_diagnostics(model: PolarReducedModel, rho: float, psis=None):
    """Unscaled locus for constant-only forcing: a circle of radius |c0|.

    Valid for models whose amplitude-dependent forced terms are zero (see
    `PolarReducedModel.truncate_to_constant_forcing`).
    """
    if psis is None:
        psis = np.linspace(0.0, 2 * math.pi, 361)
    psis = np.asarray(psis, dtype=float)
    v1 = np.array([model.c0.real, model.c0.imag])
    cos_p, sin_p = np.cos(psis), np.sin(psis)
    locus = np.empty((2, len(psis)))
    locus[0] = cos_p * v1[0] + sin_p * v1[1]
    locus[1] = -sin_p * v1[0] + cos_p * v1[1]
    target = -np.array([
        float(model.amp_rate(rho)),
        (float(model.phase_rate(rho)) - model.omega) * rho,
    ]) / model.epsilon
    return psis, locus, target


def backbone_crossing(model: PolarReducedModel, rho_max: float) -> tuple[float, float]:
    """Amplitude and frequency where the response crosses the backbone curve.

    For constant-only forcing the crossing amplitude solves
    ``amp_rate(rho) = -eps |Im c0|`` and the crossing frequency is the
    backbone value there.
    """
    target = -model.epsilon * model.c0.imag

    def f(rho):
        return float(model.amp_rate(rho)) - target

    rho_star = brentq(f, 1e-12, rho_max, xtol=1e-15, rtol=8.9e-16)
    return float(rho_star), float(model.phase_rate(rho_star))


def sample_phase_plane(model: PolarReducedModel, rho_grid, psi_grid):
    """Vector-field samples of the reduced dynamics on a polar grid."""
    out = []
    for rho in rho_grid:
        for psi in psi_grid:
            rd, pd = evaluate_polar_rhs(model, float(rho), float(psi))
            out.append((float(rho), float(psi), rd, pd))
    return out
