"""
🚀 MIXING LAB
============
Batch front door for the convex-integration mixing laboratory.

Subcommands:
- subsolution  build the relaxed state, dump it and report hull slack
- run          perturbation passes; writes the atoms file and run report
- verify       replay an atoms file and run the diagnostics suite
- average      one rectangle average in mixing coordinates, appended to CSV
- report       summarise the last run and the run ledger

Exit codes: 0 ok, 2 configuration/validation, 3 hull violation,
4 I/O, 5 verification failure.
"""

import argparse
import sys
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

try:
    import colorama
    from rich.console import Console
    from rich.panel import Panel
    from rich.table import Table
    colorama.init()
    RICH_UI_AVAILABLE = True
except ImportError:
    RICH_UI_AVAILABLE = False

from artifacts import (AtomsFileError, RunLedger, append_csv_row, dump_field_grid,
                       dump_profile_csv, read_atoms, read_json, write_atoms, write_json)
from diagnostics import (DegradedBoundSpec, DiagnosticsBundle, Observable, RectangleQuery,
                         degraded_family_check, hull_confinement, linear_residual_suite,
                         mixing_box_family, mixing_check, rectangle_average, residual_spacings,
                         volume_proportion)
from lab_config import ConfigError, LabConfig, get_logger, load_config, setup_logging
from scheme import (FieldModel, Window, build_base, hull_params, relaxation_error_J, run)
from subsolution import flat_report
from waves import solve_direction

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HULL = 3
EXIT_IO = 4
EXIT_VERIFY = 5

J_REPLAY_TOL = 1e-10
FREQ_TOL = 1e-9

console = Console() if RICH_UI_AVAILABLE else None


def display(message: str, style: str = "info"):
    if console:
        styles = {"error": ("❌", "bold red"), "warning": ("⚠️ ", "bold yellow"),
                  "success": ("✅", "bold green"), "info": ("ℹ️ ", "bold blue")}
        icon, rich_style = styles.get(style, ("", None))
        console.print(f"{icon} {message}", style=rich_style, markup=False)
    else:
        print(message)


def show_table(title: str, rows: Sequence[Sequence[object]], header: Sequence[str] = ("Key", "Value")):
    if console:
        table = Table(title=title, show_header=True, header_style="bold magenta")
        for name in header:
            table.add_column(name)
        for row in rows:
            table.add_row(*(str(v) for v in row))
        console.print(Panel.fit(table))
    else:
        print(title)
        for row in rows:
            print("  " + " | ".join(str(v) for v in row))


# --------------------------------------------------------------------------
# Arguments
# --------------------------------------------------------------------------

def resolution_arg(raw: str) -> int:
    n = int(raw)
    if n < 16 or n > 4096 or n & (n - 1):
        raise argparse.ArgumentTypeError(f"resolution {n} must be a power of two in [16, 4096]")
    return n


def rect_arg(raw: str) -> RectangleQuery:
    try:
        s0, s1, l0, l1, t = (float(p) for p in raw.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--rect needs s0,s1,l0,l1,t, got {raw!r}")
    try:
        return RectangleQuery((s0, s1), (l0, l1), t)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


@dataclass
class RunManifest:
    command: str
    config_path: Path
    out_dir: Path
    resolution: int

    def __post_init__(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)

    @property
    def atoms_path(self) -> Path:
        return self.out_dir / "atoms.bin"

    @property
    def report_path(self) -> Path:
        return self.out_dir / "report.json"

    @property
    def ledger_path(self) -> Path:
        return self.out_dir / "mixlab_runs.db"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixlab", description="Convex-integration mixing laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required, help="key = value run file")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--resolution", type=resolution_arg, default=64, help="dump grid points per side")

    common(sub.add_parser("subsolution", help="build and dump the subsolution"))
    common(sub.add_parser("run", help="run the perturbation scheme"))
    p = sub.add_parser("verify", help="replay an atoms file and run diagnostics")
    common(p)
    p.add_argument("--atoms", type=Path, help="atoms file (default OUT/atoms.bin)")
    p = sub.add_parser("average", help="rectangle average in (s, lambda) coordinates")
    common(p)
    p.add_argument("--rect", type=rect_arg, required=True, help="s0,s1,l0,l1,t")
    p.add_argument("--atoms", type=Path, help="replay these atoms on top of the subsolution")
    common(sub.add_parser("report", help="summarise the last run"), config_required=False)
    return parser


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _load(manifest: RunManifest) -> LabConfig:
    config = load_config(manifest.config_path)
    setup_logging(config)
    return config


def _dump(field, config: LabConfig, manifest: RunManifest, name: str):
    window = Window.from_tuple(config.window)
    bbox = (window.x1_lo, window.x1_hi, window.x2_lo, window.x2_hi)
    n = manifest.resolution
    dump_field_grid(field, manifest.out_dir / name, bbox, window.t_hi, n, n)
    dump_profile_csv(field, manifest.out_dir / f"{name}_profile.csv", 0.5 * (window.x1_lo + window.x1_hi),
                     (window.x2_lo, window.x2_hi), window.t_hi, n + 1)


def cmd_subsolution(manifest: RunManifest) -> int:
    config = _load(manifest)
    params = hull_params(config)
    base = build_base(config, params)
    report = base.report or flat_report(base, params, config.window)
    _dump(base, config, manifest, "subsolution")
    write_json(manifest.out_dir / "subsolution_report.json",
               {**report.to_dict(), "config_hash": config.config_hash_hex()})

    show_table("🧪 Subsolution", [
        ("kind", base.label),
        ("worst slack", f"{report.worst_slack:.3e}"),
        ("conservation residual", f"{report.conservation_residual:.3e}"),
        ("gamma clamped", report.gamma_clamped),
    ])
    if report.has_violation:
        display(f"hull violated at {len(report.violations)} sample points", "error")
        return EXIT_HULL
    display("subsolution inside the hull", "success")
    return EXIT_OK


def cmd_run(manifest: RunManifest) -> int:
    config = _load(manifest)
    started = datetime.now()
    field, report = run(config)

    write_atoms(manifest.atoms_path, field.atoms, config.config_hash())
    write_json(manifest.report_path, report.to_dict())
    _dump(field, config, manifest, "field")
    run_id = RunLedger(manifest.ledger_path).log_run(report, started)

    show_table("📊 Passes", [
        (n, f"{p.s:g}", f"{p.J_before:.6f}", f"{p.J_after:.6f}", f"{p.cubes_perturbed}/{p.cubes_total}",
         f"{p.gain_band_fraction():.2f}", "rejected" if p.rejected else "")
        for n, p in enumerate(report.pass_reports)
    ], header=("pass", "s", "J before", "J after", "perturbed", "gain in band", "note"))
    display(f"run {run_id}: J {report.J_initial:.6f} -> {report.J_final:.6f} "
            f"(factor {report.reduction_factor:.3f}), {report.atoms} atoms", "success")
    return EXIT_OK


def frequency_mismatches(atoms) -> List[int]:
    """Indices of atoms whose stored frequency does not solve their direction."""
    bad = []
    for n, atom in enumerate(atoms):
        try:
            expected = solve_direction(atom.direction, tol=FREQ_TOL).as_record()
        except ValueError:
            bad.append(n)
            continue
        if not np.allclose(expected, atom.freq.as_record(), rtol=0.0, atol=FREQ_TOL):
            bad.append(n)
    return bad


def run_diagnostics(field, config: LabConfig) -> DiagnosticsBundle:
    """Degraded bound, mixing, volume proportion and hull checks at three times, plus residuals."""
    window = Window.from_tuple(config.window)
    bundle = DiagnosticsBundle(config.config_hash_hex())
    S_range = (window.x1_lo, window.x1_hi)
    spec = DegradedBoundSpec.constant()
    geometry = field.geometry

    for t in np.linspace(window.t_lo, window.t_hi, 3):
        check = degraded_family_check(field, spec, S_range, t)
        bundle.degraded_checks.append({**check.to_dict(), "t": float(t)})
        bundle.mixing_checks.append(mixing_check(field, t, mixing_box_family(geometry, S_range, t)).to_dict())
        vp = volume_proportion(field, RectangleQuery(S_range, (0.0, 1.0), t))
        bundle.volume_proportions.append({**vp.to_dict(), "t": float(t), "mid_L": 0.5})

    bundle.hull_checks.append(hull_confinement(field, window.as_tuple(), config.M).to_dict())

    ct = geometry.jacobian(window.t_lo)
    inner = (window.x1_lo, window.x1_hi, -0.5 * ct, 0.5 * ct, window.t_lo, window.t_hi)
    try:
        table = linear_residual_suite(field, [inner], residual_spacings(field),
                                      lattice_points=9, time_points=9).to_dict()
    except ValueError as e:
        logger.warning("residual suite skipped", reason=str(e))
        table = {"points": 0, "skipped": str(e)}
    bundle.residual_tables.append(table)
    return bundle


def cmd_verify(manifest: RunManifest, atoms_path: Optional[Path]) -> int:
    config = _load(manifest)
    atoms_file = read_atoms(atoms_path or manifest.atoms_path)
    failures = []

    if atoms_file.config_hash != config.config_hash():
        failures.append("atoms file was written under a different configuration")
    bad = frequency_mismatches(atoms_file.atoms)
    if bad:
        failures.append(f"{len(bad)} atom(s) with inconsistent frequency, first index {bad[0]}")

    params = hull_params(config)
    field = FieldModel(build_base(config, params), params, atoms_file.atoms)
    J, t_star = relaxation_error_J(field, Window.from_tuple(config.window), config.quadrature,
                                   config.time_slices)
    if manifest.report_path.exists():
        J_run = read_json(manifest.report_path)["J_final"]
        if abs(J - J_run) > J_REPLAY_TOL:
            failures.append(f"replayed J={J:.12f} differs from run J={J_run:.12f}")

    bundle = run_diagnostics(field, config)
    bundle.extra["replay"] = {"J": J, "t_star": t_star, "atoms": len(atoms_file.atoms),
                              "failures": failures}
    write_json(manifest.out_dir / "diagnostics.json", bundle.to_dict())

    show_table("🔍 Verification", [
        ("atoms", len(atoms_file.atoms)),
        ("replayed J", f"{J:.10f} at t={t_star:.4f}"),
        ("worst degraded ratio", f"{bundle.worst_ratio:.3e}"),
        ("mixing", "pass" if all(m["passed"] for m in bundle.mixing_checks) else "fail"),
        ("outside hull", f"{bundle.hull_checks[0]['fraction_outside']:.2%}"),
        ("residual orders", ", ".join(str(o) if isinstance(o, str) else f"{o:.2f}"
                                      for o in bundle.residual_tables[0].get("orders", [])) or "skipped"),
    ])
    if not bundle.passed:
        failures.append("diagnostics failed")
    for failure in failures:
        display(failure, "error")
    if failures:
        logger.error("verification failed", failures=len(failures))
        return EXIT_VERIFY
    display("verification passed", "success")
    return EXIT_OK


def cmd_average(manifest: RunManifest, query: RectangleQuery, atoms_path: Optional[Path]) -> int:
    config = _load(manifest)
    params = hull_params(config)
    atoms = read_atoms(atoms_path).atoms if atoms_path else []
    field = FieldModel(build_base(config, params), params, atoms)

    density = rectangle_average(field, Observable.DENSITY, query)
    u1, u2 = rectangle_average(field, Observable.VELOCITY, query)
    power = rectangle_average(field, Observable.POWER_BALANCE, query)
    append_csv_row(manifest.out_dir / "averages.csv",
                   ("s0", "s1", "l0", "l1", "t", "density", "u1", "u2", "power_balance"),
                   (*query.as_tuple(), density, float(u1), float(u2), power))
    show_table("📐 Rectangle average", [
        ("rectangle", query.as_tuple()), ("<L>", query.mid_L), ("density", f"{density:.10f}"),
        ("velocity", f"({u1:.3e}, {u2:.3e})"), ("power balance", f"{power:.3e}"),
    ])
    return EXIT_OK


def cmd_report(manifest: RunManifest) -> int:
    report = read_json(manifest.report_path)
    show_table("📈 Last run", [
        ("config hash", report["config_hash"][:16]),
        ("J initial", f"{report['J_initial']:.6f}"),
        ("J final", f"{report['J_final']:.6f}"),
        ("reduction", f"{report['reduction_factor']:.3f}"),
        ("atoms", report["atoms"]),
    ])
    if manifest.ledger_path.exists():
        runs = RunLedger(manifest.ledger_path).recent_runs()
        show_table("🗂️  Run ledger", [
            (r["id"], r["config_hash"][:12], r["started"], f"{r['J_initial']:.6f}", f"{r['J_final']:.6f}",
             r["passes"]) for r in runs
        ], header=("id", "config", "started", "J initial", "J final", "passes"))
    return EXIT_OK


def join_rect_values(argv: Sequence[str]) -> List[str]:
    """Glue ``--rect VALUE`` into ``--rect=VALUE``.

    argparse reads a separate value starting with "-" (a negative s0) as an
    option flag, so the joined form is the only one it parses.
    """
    joined: List[str] = []
    pending = False
    for arg in argv:
        if pending:
            joined[-1] = f"--rect={arg}"
            pending = False
        elif arg == "--rect":
            joined.append(arg)
            pending = True
        else:
            joined.append(arg)
    return joined


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(join_rect_values(argv))
    try:
        manifest = RunManifest(args.command, args.config, args.out, args.resolution)
        if args.command == "subsolution":
            return cmd_subsolution(manifest)
        if args.command == "run":
            return cmd_run(manifest)
        if args.command == "verify":
            return cmd_verify(manifest, args.atoms)
        if args.command == "average":
            return cmd_average(manifest, args.rect, args.atoms)
        return cmd_report(manifest)
    except AtomsFileError as e:
        display(str(e), "error")
        return EXIT_IO
    except (ConfigError, ValueError) as e:
        display(f"{type(e).__name__}: {e}", "error")
        return EXIT_CONFIG
    except OSError as e:
        display(f"I/O error: {e}", "error")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
