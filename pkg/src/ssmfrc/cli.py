"""Command-line driver: frequency sweeps and self-verification.

``ssmfrc frc CONFIG -o OUTDIR`` reduces the configured model and writes the
forced-response table, a run manifest, optional phase-plane grids, and
optional plots.  ``ssmfrc verify CONFIG`` runs the built-in cross-checks
(recurrence worked examples, closed-form coefficient comparison, invariance
residual slopes, optional integration-oracle comparison) and reports one
pass/fail line per check.

The config file uses INI sections; see the README for the full reference.
Output tables are deterministic for a fixed config regardless of worker
count: frequency samples are independent tasks gathered in sample order,
and all floats are printed with a fixed repr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys as _sys
from configparser import ConfigParser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .backmap import steady_state_oracle, backmap_orbit
from .beam import BeamConfig, build_beam, analytic_ssm_coefficients, tip_index
from .mpoly import DROP_TOL
from .reduced import (
    FIXED_POINT_RESIDUAL,
    PolarReducedModel,
    solve_fixed_points,
    sweep_frc,
    sample_phase_plane,
    classify_stability,
    default_rho_max,
)
from .spectral import (
    MechanicalSystem,
    ModalNonlinearity,
    PolynomialForce,
    RESONANCE_TOL,
    ResonanceError,
    check_nonresonance,
    decompose,
    modal_forcing,
    to_first_order,
)
from .ssm_auto import (
    build_autonomous,
    autonomous_invariance_residual,
    load_cache,
    model_hash,
    save_cache,
)
from .ssm_nonauto import build_nonautonomous, full_invariance_residual

TABLE_VERSION = "ssmfrc frc-table v1"


class ConfigError(ValueError):
    """Configuration problems, collected with field-level messages."""

    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("\n".join(self.messages))


@dataclass
class RunConfig:
    system: MechanicalSystem
    is_beam: bool
    beam: BeamConfig | None
    order: int
    master_pair: int
    rho_max: float | None
    rho_grid: int
    omega_min: float
    omega_max: float
    samples: int
    epsilon: float
    amplitude_coord: int
    phase_plane: tuple[float, ...]
    plot: bool
    config_sha: str


def _get(parser, errors, section, key, cast, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            errors.append(f"[{section}] {key}: required key is missing")
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except ValueError:
        errors.append(f"[{section}] {key}: cannot parse {raw!r}")
        return default


def _load_matrix(path: Path, errors, label):
    try:
        mat = np.loadtxt(path, ndmin=2)
    except OSError:
        errors.append(f"{label}: cannot read {path}")
        return None
    except ValueError:
        errors.append(f"{label}: {path} is not a numeric whitespace table")
        return None
    return mat


def _load_force_terms(path: Path, n: int, errors):
    """Nonlinearity term file: lines ``component coefficient var:exp ...``.

    Variables are named ``y<i>`` (positions) and ``v<i>`` (velocities),
    1-based, matching the row ordering of the matrix files.
    """
    terms = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError:
        errors.append(f"nonlinearity: cannot read {path}")
        return PolynomialForce()
    for ln, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        bits = line.split()
        try:
            comp = int(bits[0]) - 1
            coeff = float(bits[1])
            exps = {}
            for tok in bits[2:]:
                name, e = tok.split(":")
                idx = int(name[1:]) - 1 + (n if name[0] == "v" else 0)
                if name[0] not in "yv":
                    raise ValueError(tok)
                exps[idx] = exps.get(idx, 0) + int(e)
            terms.append((comp, coeff, exps))
        except (ValueError, IndexError):
            errors.append(f"nonlinearity: {path} line {ln}: cannot parse {line!r}")
    try:
        return PolynomialForce(terms=tuple(terms))
    except ValueError as exc:
        errors.append(f"nonlinearity: {exc}")
        return PolynomialForce()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    parser = ConfigParser()
    parser.read(path)
    errors: list[str] = []

    kind = _get(parser, errors, "model", "kind", str, required=True)
    system = None
    beam = None
    if kind == "beam":
        kwargs = {}
        fields = {
            "length": float, "height": float, "width": float,
            "density": float, "youngs_modulus": float, "cubic_spring": float,
            "mass_damping": float, "stiffness_damping": float,
            "forcing": float, "elements": int,
        }
        required = {"length", "height", "width", "density", "youngs_modulus",
                    "elements"}
        for key, cast in fields.items():
            val = _get(parser, errors, "beam", key, cast,
                       required=key in required)
            if val is not None:
                kwargs[key] = val
        if not errors:
            try:
                beam = BeamConfig(**kwargs)
                system = build_beam(beam)
            except ValueError as exc:
                errors.append(f"[beam] {exc}")
    elif kind == "matrices":
        base = path.parent
        mats = {}
        for key in ("mass", "damping", "stiffness"):
            p = _get(parser, errors, "matrices", key, str, required=True)
            if p is not None:
                mats[key] = _load_matrix(base / p, errors, f"[matrices] {key}")
        fpath = _get(parser, errors, "matrices", "forcing", str, required=True)
        npath = _get(parser, errors, "matrices", "nonlinearity", str)
        if not errors:
            n = mats["mass"].shape[0]
            shape = np.loadtxt(base / fpath).reshape(-1)
            if shape.shape != (n,):
                errors.append(f"[matrices] forcing: expected {n} entries")
            force = _load_force_terms(base / npath, n, errors) if npath else PolynomialForce()
            if not errors:
                try:
                    system = MechanicalSystem(
                        n=n, mass=mats["mass"], damping=mats["damping"],
                        stiffness=mats["stiffness"], nonlinearity=force,
                        forcing_shape=shape,
                    )
                except ValueError as exc:
                    errors.append(f"[matrices] {exc}")
    elif kind is not None:
        errors.append(f"[model] kind: expected 'beam' or 'matrices', got {kind!r}")

    order = _get(parser, errors, "reduction", "order", int, default=1)
    master = _get(parser, errors, "reduction", "master_pair", int, default=1)
    rho_max_raw = _get(parser, errors, "reduction", "rho_max", str, default="auto")
    rho_max = None
    if rho_max_raw not in (None, "auto"):
        try:
            rho_max = float(rho_max_raw)
        except ValueError:
            errors.append(f"[reduction] rho_max: expected 'auto' or a number")
    rho_grid = _get(parser, errors, "reduction", "rho_grid", int, default=2000)

    omega_min = _get(parser, errors, "sweep", "omega_min", float, required=True)
    omega_max = _get(parser, errors, "sweep", "omega_max", float, required=True)
    samples = _get(parser, errors, "sweep", "samples", int, default=60)
    epsilon = _get(parser, errors, "sweep", "epsilon", float, required=True)
    coord_raw = _get(parser, errors, "sweep", "amplitude_coord", str, default="auto")

    if order is not None and order < 1:
        errors.append("[reduction] order: must be >= 1")
    if master is not None and master < 1:
        errors.append("[reduction] master_pair: must be >= 1 (1 = slowest pair)")
    if samples is not None and samples < 1:
        errors.append("[sweep] samples: must be >= 1")
    if None not in (omega_min, omega_max) and omega_max < omega_min:
        errors.append("[sweep] omega_max: must be >= omega_min")
    if epsilon is not None and epsilon < 0:
        errors.append("[sweep] epsilon: must be >= 0")

    coord = 0
    if system is not None and coord_raw is not None:
        if coord_raw == "auto":
            coord = int(np.argmax(np.abs(system.forcing_shape)))
        else:
            try:
                coord = int(coord_raw) - 1
            except ValueError:
                errors.append("[sweep] amplitude_coord: expected 'auto' or an index")
            else:
                if not 0 <= coord < system.n:
                    errors.append(f"[sweep] amplitude_coord: out of range 1..{system.n}")

    pp_raw = _get(parser, errors, "output", "phase_plane", str, default="")
    phase_plane = ()
    if pp_raw:
        try:
            phase_plane = tuple(float(w) for w in pp_raw.split())
        except ValueError:
            errors.append("[output] phase_plane: expected a list of frequencies")
    plot = _get(parser, errors, "output", "plot", parser._convert_to_boolean, default=False)

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        system=system, is_beam=(kind == "beam"), beam=beam,
        order=order, master_pair=master - 1, rho_max=rho_max, rho_grid=rho_grid,
        omega_min=omega_min, omega_max=omega_max, samples=samples,
        epsilon=epsilon, amplitude_coord=coord, phase_plane=phase_plane,
        plot=bool(plot),
        config_sha=hashlib.sha256(path.read_bytes()).hexdigest(),
    )


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _prepare_reduction(cfg: RunConfig, cache_dir=None, log=lambda *a: None):
    system = cfg.system
    first = to_first_order(system)
    dec = decompose(first.A, system, master_pair=cfg.master_pair)
    report = check_nonresonance(dec, cfg.order)
    report.raise_on_failure()
    nl = ModalNonlinearity.from_system(system, dec)
    forcing = modal_forcing(system, dec)
    key = model_hash(system, cfg.order, cfg.master_pair)
    auto = None
    if cache_dir is not None:
        cache_path = Path(cache_dir) / f"autossm-{key[:32]}.json"
        if cache_path.is_file():
            try:
                auto = load_cache(cache_path, key)
                log(f"loaded autonomous coefficients from {cache_path}")
            except ValueError:
                auto = None
    if auto is None:
        auto = build_autonomous(dec, nl, cfg.order)
        if cache_dir is not None:
            Path(cache_dir).mkdir(parents=True, exist_ok=True)
            save_cache(Path(cache_dir) / f"autossm-{key[:32]}.json", auto, key)
    return dec, report, nl, forcing, auto, key


def _write_table(path: Path, manifest_sha: str, points, aborted=None):
    lines = [f"# {TABLE_VERSION}", f"# manifest_sha256: {manifest_sha}"]
    if aborted:
        lines.append(f"# aborted: {aborted}")
    lines.append("Omega\trho\tpsi\tstability\tamplitude\tbranch_id")
    for p in points:
        lines.append(
            "\t".join([
                _fmt(p.omega), _fmt(p.rho), _fmt(p.psi), p.stability,
                _fmt(p.physical_amplitude), str(p.branch_id),
            ])
        )
    path.write_text("\n".join(lines) + "\n")


def run_frc(config_path, output_dir, workers: int = 1, cache_dir=None,
            plot: bool = False, verbosity: int = 0) -> int:
    """Sweep the configured frequency interval and write the artifacts."""
    log = print if verbosity else (lambda *a, **k: None)
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"config error: {msg}", file=_sys.stderr)
        return 2

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        dec, report, nl, forcing, auto, key = _prepare_reduction(
            cfg, cache_dir=cache_dir, log=log
        )
    except (ResonanceError, ValueError, RuntimeError) as exc:
        print(f"reduction aborted: {exc}", file=_sys.stderr)
        return 3

    omegas = np.linspace(cfg.omega_min, cfg.omega_max, cfg.samples)
    manifest = {
        "format": TABLE_VERSION,
        "version": __version__,
        "config_sha256": cfg.config_sha,
        "model_hash": key,
        "tolerances": {
            "coefficient_drop": DROP_TOL,
            "resonance_margin": RESONANCE_TOL,
            "fixed_point_residual": FIXED_POINT_RESIDUAL,
        },
        "eigenvalues": [[lam.real, lam.imag] for lam in dec.lambdas],
        "decay_quotient": dec.sigma,
        "nonresonance": {
            "min_margin": report.min_margin,
            "damping_gauge": report.damping_gauge,
            "light_damping": report.light_damping,
        },
        "invariance_residual": {
            "radius": 1e-2,
            "autonomous": autonomous_invariance_residual(auto, dec, nl, [1e-2]),
        },
        "sweep": {
            "omega_min": cfg.omega_min, "omega_max": cfg.omega_max,
            "samples": cfg.samples, "epsilon": cfg.epsilon,
            "order": cfg.order, "master_pair": cfg.master_pair + 1,
            "amplitude_coord": cfg.amplitude_coord + 1,
        },
        "workers": workers,
    }
    manifest_sha = hashlib.sha256(
        json.dumps(
            {k: v for k, v in manifest.items() if k != "workers"}, sort_keys=True
        ).encode()
    ).hexdigest()
    manifest["manifest_sha256"] = manifest_sha

    aborted = None
    try:
        result = sweep_frc(
            auto, dec, nl, forcing, omegas, cfg.epsilon,
            coord_index=cfg.amplitude_coord, rho_max=cfg.rho_max,
            grid=cfg.rho_grid, workers=workers, collect_errors=True,
        )
    except Exception as exc:  # pragma: no cover - defensive
        print(f"sweep failed: {exc}", file=_sys.stderr)
        return 3
    if result.error is not None:
        aborted = f"at Omega={_fmt(result.error_omega)}: {result.error}"
        print(f"sweep aborted {aborted}", file=_sys.stderr)

    manifest["fold_events"] = [
        {
            "omega_low": e.omega_low, "omega_high": e.omega_high,
            "count_low": e.count_low, "count_high": e.count_high,
        }
        for e in result.events
    ]
    _write_table(out / "frc.tsv", manifest_sha, result.points, aborted=aborted)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log(f"wrote {out / 'frc.tsv'} ({len(result.points)} points)")

    for om in cfg.phase_plane:
        nonauto = build_nonautonomous(auto, dec, nl, forcing, float(om))
        model = PolarReducedModel.from_ssm(auto, nonauto, cfg.epsilon)
        rho_hi = cfg.rho_max if cfg.rho_max else default_rho_max(model)
        rho_grid = np.linspace(rho_hi / 40, rho_hi, 40)
        psi_grid = np.linspace(0.0, 2 * math.pi, 37)[:-1]
        rows = sample_phase_plane(model, rho_grid, psi_grid)
        fps = solve_fixed_points(model, rho_max=rho_hi, grid=cfg.rho_grid)
        lines = [f"# {TABLE_VERSION} phase-plane", f"# Omega: {_fmt(om)}"]
        for rho, psi in fps:
            lines.append(
                f"# fixed_point: rho={_fmt(rho)} psi={_fmt(psi)} "
                f"class={classify_stability(model, rho, psi)}"
            )
        lines.append("rho\tpsi\trho_dot\tpsi_dot")
        lines.extend("\t".join(_fmt(v) for v in row) for row in rows)
        name = f"phase_plane_{_fmt(om)}.tsv"
        (out / name).write_text("\n".join(lines) + "\n")
        log(f"wrote {out / name}")

    if plot or cfg.plot:
        _render_plot(out / "frc.tsv", out / "frc.pdf")
        log(f"wrote {out / 'frc.pdf'}")
    return 3 if aborted else 0


def _render_plot(table_path: Path, plot_path: Path):
    """Static vector plot of the FRC table (amplitude over frequency)."""
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError(
            "plot rendering needs matplotlib (install the 'plot' extra)"
        ) from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = []
    for line in table_path.read_text().splitlines():
        if line.startswith("#") or line.startswith("Omega"):
            continue
        om, rho, psi, stab, amp, bid = line.split("\t")
        rows.append((float(om), float(amp), stab, int(bid)))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    stable = [(o, a) for o, a, s, _ in rows if s.startswith("stable")]
    other = [(o, a) for o, a, s, _ in rows if not s.startswith("stable")]
    if stable:
        ax.plot(*zip(*stable), "o", ms=3, color="tab:blue", label="stable")
    if other:
        ax.plot(*zip(*other), "x", ms=4, color="tab:red", label="unstable/saddle")
    ax.set_xlabel("forcing frequency (rad/s)")
    ax.set_ylabel("amplitude")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(plot_path)
    plt.close(fig)


# -- verification ------------------------------------------------------------


def _check(name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"{status} {name}: {detail}")
    return bool(ok)


def _recurrence_example_checks(rng):
    from .mpoly import (
        MultiIndexPolynomial,
        derivative_product_coefficient,
        power_coefficient,
    )

    worst_prod = 0.0
    worst_pow = 0.0
    for _ in range(200):
        a, b, c, d, e = (
            complex(rng.standard_normal(), rng.standard_normal()) for _ in range(5)
        )
        w = MultiIndexPolynomial({(3, 0): a, (2, 1): b}, 6)
        r1 = MultiIndexPolynomial({(0, 2): c, (1, 1): d}, 6)
        r2 = MultiIndexPolynomial({(0, 2): e}, 6)
        got = derivative_product_coefficient(w, r1, r2, (2, 2))
        expect = 3 * a * c + 2 * b * d + b * e
        worst_prod = max(worst_prod, abs(got - expect) / abs(expect))
        got2 = power_coefficient(w, 2, (5, 1), w)
        worst_pow = max(worst_pow, abs(got2 - 2 * a * b) / abs(2 * a * b))
    return worst_prod, worst_pow


def run_verify(config_path, with_oracle: bool = False, inject_fault: bool = False,
               verbosity: int = 0) -> int:
    """Run the verification checks for a beam config; nonzero exit on failure."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"config error: {msg}", file=_sys.stderr)
        return 2
    if not cfg.is_beam:
        print("verify mode needs a beam model", file=_sys.stderr)
        return 2

    ok = True
    rng = np.random.default_rng(1234)
    worst_prod, worst_pow = _recurrence_example_checks(rng)
    ok &= _check("product-recurrence worked example", worst_prod < 1e-12,
                 f"max rel err {worst_prod:.2e} (bound 1e-12)")
    ok &= _check("power-recurrence worked example", worst_pow < 1e-12,
                 f"max rel err {worst_pow:.2e} (bound 1e-12)")

    system = cfg.system
    dec = decompose(to_first_order(system).A, system, master_pair=cfg.master_pair)
    nl = ModalNonlinearity.from_system(system, dec)
    forcing = modal_forcing(system, dec)
    auto = build_autonomous(dec, nl, cfg.order)

    # fault mode corrupts the modal matrix seen by the closed-form side only,
    # demonstrating that the cross-check actually detects inconsistencies
    dec_for_analytic = dec
    if inject_fault:
        import dataclasses

        dec_for_analytic = dataclasses.replace(dec, T=dec.T * (1.0 + 1e-6))

    mid = 0.5 * (cfg.omega_min + cfg.omega_max)
    worst = 0.0
    for Om in (cfg.omega_min, mid, cfg.omega_max):
        nonauto = build_nonautonomous(auto, dec, nl, forcing, Om)
        g1, c0, cd, do = analytic_ssm_coefficients(system, dec_for_analytic, Om)
        pairs = [(g1, auto.gammas[0]), (c0, nonauto.c0)]
        if cfg.order >= 1:
            pairs += [(cd, nonauto.c_diag[0]), (do, nonauto.d_off[0])]
        for ref, got in pairs:
            worst = max(worst, abs(ref - got) / max(abs(ref), 1e-300))
    ok &= _check("closed-form coefficient cross-check", worst < 1e-10,
                 f"max rel err {worst:.2e} (bound 1e-10)")

    radii = np.array([1e-2, 1e-1])
    for M_ord, bound in ((1, 3.8), (2, 5.7)):
        auto_m = build_autonomous(dec, nl, M_ord)
        res = [autonomous_invariance_residual(auto_m, dec, nl, [r]) for r in radii]
        slope = math.log(res[1] / res[0]) / math.log(radii[1] / radii[0])
        ok &= _check(f"autonomous residual slope (order {2 * M_ord + 1})",
                     slope >= bound, f"slope {slope:.2f} (bound {bound})")

    nonauto = build_nonautonomous(auto, dec, nl, forcing, mid)
    eps_ladder = np.array([1e-4, 1e-2])
    s_probe = 1e-4
    base = autonomous_invariance_residual(auto, dec, nl, [s_probe])
    res = [
        full_invariance_residual(auto, nonauto, dec, nl, forcing, e,
                                 [s_probe], [0.3, 1.7]) - base
        for e in eps_ladder
    ]
    if min(res) > 0:
        slope = math.log(res[1] / res[0]) / math.log(eps_ladder[1] / eps_ladder[0])
    else:
        slope = float("nan")
    ok &= _check("forcing-scale residual slope", slope >= 1.8,
                 f"slope {slope:.2f} (bound 1.8)")

    if with_oracle:
        tip = tip_index(system)
        probes = np.linspace(cfg.omega_min, cfg.omega_max, 3)
        worst = 0.0
        for Om in probes:
            na = build_nonautonomous(auto, dec, nl, forcing, float(Om))
            model = PolarReducedModel.from_ssm(auto, na, cfg.epsilon)
            pts = solve_fixed_points(model, rho_max=cfg.rho_max, grid=cfg.rho_grid)
            stable = [
                (r, p) for r, p in pts
                if classify_stability(model, r, p).startswith("stable")
            ]
            for rho, psi in stable:
                orb = backmap_orbit(auto, na, dec, rho, psi, cfg.epsilon, tip)
                s1 = rho * np.exp(1j * psi)
                q = np.array([w(s1, np.conj(s1)) for w in auto.rows])
                q = q + cfg.epsilon * np.array(
                    [a(s1, np.conj(s1)) + b(s1, np.conj(s1))
                     for a, b in zip(na.plus_rows, na.minus_rows)]
                )
                x0 = (dec.T @ q).real
                orc = steady_state_oracle(system, float(Om), cfg.epsilon, x0, tip)
                worst = max(worst, abs(orb.amplitude - orc.amplitude) / orc.amplitude)
        ok &= _check("integration-oracle amplitude comparison", worst < 0.05,
                     f"max rel err {worst:.2e} (bound 5e-2)")

    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ssmfrc",
        description="Forced-response curves via invariant-manifold reduction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_frc = sub.add_parser("frc", help="run a frequency sweep")
    p_frc.add_argument("config", help="path to the INI config file")
    p_frc.add_argument("-o", "--output-dir", required=True)
    p_frc.add_argument("-w", "--workers", type=int, default=1)
    p_frc.add_argument("--cache-dir", default=None,
                       help="directory for cached manifold coefficients")
    p_frc.add_argument("--plot", action="store_true",
                       help="render a static plot from the table")
    p_frc.add_argument("-v", "--verbose", action="count", default=0)

    p_ver = sub.add_parser("verify", help="run the built-in cross-checks")
    p_ver.add_argument("config", help="path to the INI config file (beam model)")
    p_ver.add_argument("--with-oracle", action="store_true",
                       help="include the slow integration-oracle comparison")
    p_ver.add_argument("--inject-fault", action="store_true",
                       help="perturb the modal matrix to demonstrate failure")
    p_ver.add_argument("-v", "--verbose", action="count", default=0)

    args = parser.parse_args(argv)
    if args.command == "frc":
        workers = args.workers
        env = os.environ.get("SSMFRC_WORKERS")
        if env is not None:
            try:
                workers = int(env)
            except ValueError:
                print(f"ignoring SSMFRC_WORKERS={env!r}", file=_sys.stderr)
        return run_frc(args.config, args.output_dir, workers=workers,
                       cache_dir=args.cache_dir, plot=args.plot,
                       verbosity=args.verbose)
    return run_verify(args.config, with_oracle=args.with_oracle,
                      inject_fault=args.inject_fault, verbosity=args.verbose)


if __name__ == "__main__":
    raise SystemExit(main())
