#!/usr/bin/env python3
# -*- coding: utf-8 -*-
""" The main entrypoint for the discrete Monge-Ampere toolkit"""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from barriers import (BarrierSpec, amp_bound_value, amp_profile_bound, barrier_table, convexity_cert,
                      determinant_consistency, barrier_constants, lower_bound_check, sample_interior, upper_bound_check)
from config import (BarrierConfig, ExperimentConfig, RunConfig, default_output_dir, exact_solution,
                    load_barrier_config, load_experiment, load_preset, preset_names)
from convexfn import PLConvexFunction, modulus, node_rows
from geometry import circumradius, polytope_record, random_affine_map
from regularity import (RegularityReport, amp_check, converse_bound_check, converse_setup, divergence_check,
                        holder_fit, log_probe, modulus_bound_check, resolved_depth, sobolev_integral, unit_ball_map)
from solver import SolveReport, affine_equivariance_check, boundary_envelope, comparison_check, solve
from utils import (AMP_TOL, ConfigError, MongeAmpereError, SolverConvergenceError, write_csv_artifact,
                   write_json_artifact)

Check = Tuple[str, bool, float]

EXIT_PASS = 0
EXIT_ASSERTION = 1
EXIT_SOLVER = 2
EXIT_CONFIG = 3
MODULUS_SAMPLES = 40
MINOR_TABLE_STRIDE = 50


def setup_arg_parser(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """ Sets up argument parser. Called when running as script / module. """
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--out", type=str, help="Output directory. Defaults to $MA_TOOLKIT_OUTPUT_DIR or ./ma_output")
    shared.add_argument("--workers", type=int, default=1, help="Number of worker processes for independent solves.")
    shared.add_argument("--seed", type=int, default=0, help="Random seed for sampled points and affine maps.")
    shared.add_argument("--tol-scale", type=float, default=1.0, help="Factor applied to solver and check tolerances.")
    shared.add_argument("-q", "--quiet", action="store_true", help="Only report errors.")

    parser = argparse.ArgumentParser(description="Discrete Monge-Ampere solver and regularity checks")
    commands = parser.add_subparsers(dest="command", required=True)

    barriers = commands.add_parser("verify-barriers", parents=[shared],
                                   help="Check the barrier determinants, bounds and convexity certificates.")
    barriers.add_argument("--config", type=str, help="Barrier config JSON file. Defaults to the built-in checks.")

    for name, text in (("solve", "Solve one problem and write nodes and masses."),
                       ("run-experiment", "Solve a refinement family and run the configured checks.")):
        command = commands.add_parser(name, parents=[shared], help=text)
        source = command.add_mutually_exclusive_group(required=True)
        source.add_argument("--config", type=str, help="Experiment config JSON file.")
        source.add_argument("--preset", type=str, help=f"Shipped preset: {', '.join(preset_names())}")

    commands.add_parser("report", parents=[shared], help="Summarize the checks found under the output directory.")
    return parser.parse_args(argv)


def _log_checks(checks: List[Check]) -> bool:
    for name, passed, margin in checks:
        if passed:
            logging.info("Check %s passed (margin %.3e)", name, margin)
        else:
            logging.error("Check %s failed (margin %.3e)", name, margin)
    return all(passed for _, passed, _ in checks)


def _write_summary(out_dir: Path, command: str, run: RunConfig, checks: List[Check], extra: Optional[dict] = None):
    rows = [(name, int(passed), margin) for name, passed, margin in checks]
    write_csv_artifact(out_dir / "checks.csv", "checks", rows)
    record = {"command": command, "seed": run.seed, "tol_scale": run.tol_scale,
              "checks": [{"check": name, "passed": passed, "margin": margin} for name, passed, margin in checks],
              "passed": all(passed for _, passed, _ in checks)}
    record.update(extra or {})
    write_json_artifact(out_dir / "summary.json", record)


def verify_barriers(config: BarrierConfig, run: RunConfig) -> int:
    """ Runs the enabled barrier checks and writes their tables.

    Args:
        config (BarrierConfig): Dimensions, epsilons and enabled checks.
        run (RunConfig): Output directory, seed and tolerance scale.

    Returns:
        int: 0 when every enabled check passes, 1 otherwise.
    """
    out_dir = run.output_dir / "barriers"
    rng = np.random.default_rng(run.seed)
    enabled = set(config.checks)
    checks: List[Check] = []

    constants = [(2, eps, *barrier_constants(2, eps), amp_profile_bound(2).constant) for eps in config.epsilons]
    constants += [(n, float("nan"), *barrier_constants(n), amp_profile_bound(n).constant)
                  for n in config.dimensions if n > 2]
    write_csv_artifact(out_dir / "constants.csv", "constants", constants)

    if "determinant_consistency" in enabled:
        rows, worst = [], 0.0
        for n in config.dimensions:
            for variant in config.variants:
                spec = BarrierSpec(dimension=n, variant=variant, epsilon=config.epsilons[-1])
                report = determinant_consistency(spec, sample_interior(rng, n, config.samples))
                worst = max(worst, report.worst)
                rows += [(n, variant, float(p[0]), float(np.linalg.norm(p[1:])), float(c), float(f), float(e))
                         for p, c, f, e in zip(report.points, report.closed_form, report.finite_difference,
                                               report.relative_error)]
        write_csv_artifact(out_dir / "fd_check.csv", "fd_check", rows)
        tol = config.fd_tol * run.tol_scale
        checks.append(("determinant_consistency", worst <= tol, tol - worst))

    if "barrier_lower_bound" in enabled:
        reports = [lower_bound_check(BarrierSpec(dimension=2, epsilon=eps)) for eps in config.epsilons]
        checks.append(("barrier_lower_bound", all(r.passed for r in reports), min(r.margin for r in reports)))
        for eps in config.epsilons:
            rho = barrier_constants(2, eps)[1]
            table = barrier_table(BarrierSpec(dimension=2, epsilon=eps), np.geomspace(1e-3, 1.0, 13),
                                  np.linspace(0.0, rho, 7))
            write_csv_artifact(out_dir / f"barrier_table_eps{eps:g}.csv", "barrier_table", table)

    if "barrier_upper_bound" in enabled:
        reports = [upper_bound_check(n, bound=config.upper_bound_override) for n in config.dimensions]
        checks.append(("barrier_upper_bound", all(r.passed for r in reports), min(r.margin for r in reports)))

    if "convexity_certificate" in enabled:
        specs = [(f"eps{eps:g}", BarrierSpec(dimension=2, epsilon=eps), barrier_constants(2, eps)[1])
                 for eps in config.epsilons]
        specs += [(f"n{n}", BarrierSpec(dimension=n), barrier_constants(n)[1]) for n in config.dimensions if n > 2]
        certificates = []
        for label, spec, rho in specs:
            certificate = convexity_cert(spec, rho)
            certificates.append(certificate)
            write_csv_artifact(out_dir / f"minors_{label}.csv", "minors", certificate.rows(MINOR_TABLE_STRIDE))
        checks.append(("convexity_certificate", all(c.convex for c in certificates),
                       min(float(np.min(c.minors)) for c in certificates)))

    if "amp_profile" in enabled:
        worst = np.inf
        for n in config.dimensions:
            x1 = np.geomspace(1e-8, 1.0, 401)
            points = np.zeros((x1.size, n))
            points[:, 0] = x1
            worst = min(worst, amp_profile_bound(n).check(points, amp_bound_value(n, x1),
                                                          tol=AMP_TOL * run.tol_scale).worst_margin)
        checks.append(("amp_profile", worst >= -AMP_TOL * run.tol_scale, float(worst)))

    if not checks:
        logging.warning("no assertions enabled")
    passed = _log_checks(checks)
    _write_summary(out_dir, "verify-barriers", run, checks)
    return EXIT_PASS if passed else EXIT_ASSERTION


def _solve_stage(job) -> SolveReport:
    experiment, spacing, levels, tol_scale = job
    problem, tol = experiment.build_problem(spacing, levels, tol_scale)
    return solve(problem, tol=tol, max_iters=experiment.problem.max_iters)


def _solve_schedule(experiment: ExperimentConfig, run: RunConfig) -> List[SolveReport]:
    jobs = [(experiment, spacing, levels, run.tol_scale) for spacing, levels in experiment.mesh.schedule()]
    if run.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=run.workers) as pool:
            return list(pool.map(_solve_stage, jobs))
    return [_solve_stage(job) for job in jobs]


def _write_solution(out_dir: Path, report: SolveReport) -> None:
    u = report.solution
    n = u.dimension
    write_csv_artifact(out_dir / "nodes.csv", "nodes", node_rows(u), dimension=n)
    masses = [(i, *map(float, u.nodes[i]), float(report.masses[i]), float(report.targets[i]),
               float(report.residual[i])) for i in range(u.node_count)]
    write_csv_artifact(out_dir / "masses.csv", "masses", masses, dimension=n)


def _modulus_deltas(u: PLConvexFunction, face: Optional[int]) -> np.ndarray:
    if face is not None:
        low = resolved_depth(u, face)
    else:
        distances = cKDTree(u.nodes).query(u.nodes, k=2)[0][:, 1]
        low = float(np.min(distances))
    return np.geomspace(low, 0.5 * circumradius(u.domain), MODULUS_SAMPLES)


def solve_command(experiment: ExperimentConfig, run: RunConfig) -> int:
    """ Solves the finest stage of the schedule and writes nodes, masses and a report."""
    spacing, levels = experiment.mesh.schedule()[-1]
    out_dir = run.output_dir / experiment.name
    report = _solve_stage((experiment, spacing, levels, run.tol_scale))
    _write_solution(out_dir, report)
    write_json_artifact(out_dir / "solve.json", {
        "name": experiment.name, "spacing": spacing, "refine_levels": levels, "nodes": report.solution.node_count,
        "iterations": report.iterations, "tolerance_achieved": report.tolerance_achieved,
        "history": report.history, "domain": polytope_record(report.solution.domain)})
    logging.info("Solved %s: %d nodes, %d iterations, worst mass residual %.3e", experiment.name,
                 report.solution.node_count, report.iterations, report.tolerance_achieved)
    return EXIT_PASS


def _require_face(check: str, face: Optional[int]) -> int:
    if face is None:
        raise ConfigError(f"Check {check} needs mesh.refine_normal", field="mesh.refine_normal")
    return face


def run_experiment(experiment: ExperimentConfig, run: RunConfig) -> int:
    """ Solves every stage of the schedule, runs the enabled checks on the results and writes the artifacts.

    Args:
        experiment (ExperimentConfig): Domain, problem, refinement schedule and checks.
        run (RunConfig): Output directory, seed, tolerance scale and worker count.

    Returns:
        int: 0 when every enabled check passes, 1 otherwise.
    """
    enabled = set(experiment.checks)
    if not enabled:
        logging.warning("no assertions enabled")
    out_dir = run.output_dir / experiment.name
    settings = experiment.settings
    schedule = experiment.mesh.schedule()
    results = _solve_schedule(experiment, run)

    finest = results[-1]
    u = finest.solution
    n = u.dimension
    problem, tol = experiment.build_problem(*schedule[-1], tol_scale=run.tol_scale)
    face = experiment.refine_face(problem.domain)
    _write_solution(out_dir, finest)

    report = RegularityReport(holder_range=settings.holder_range if "holder" in enabled else None)
    checks: List[Check] = []
    curve = None
    if enabled & {"modulus_bound", "sobolev", "log_probe"}:
        curve = modulus(u, _modulus_deltas(u, face))
        report.modulus = curve
        write_csv_artifact(out_dir / "modulus.csv", "modulus", curve.rows())

    if "amp" in enabled:
        report.amp = amp_check(u, unit_ball_map(problem.domain), problem.upper_bound, tol=AMP_TOL * run.tol_scale)
        write_csv_artifact(out_dir / "amp_margins.csv", "amp_margins", report.amp.rows())

    if "modulus_bound" in enabled:
        envelope = boundary_envelope(problem)
        boundary_curve = modulus(envelope, curve.deltas) if np.any(envelope.envelope_values != 0) else None
        report.modulus_bound = modulus_bound_check(curve, boundary_curve, unit_ball_map(problem.domain),
                                                   problem.upper_bound, tol=AMP_TOL * run.tol_scale)

    if "comparison" in enabled:
        comparison = comparison_check(u, boundary_envelope(problem))
        checks.append(("comparison", comparison.passed, comparison.worst_margin))

    if "manufactured" in enabled:
        exact = exact_solution(experiment.problem)
        if exact is None:
            raise ConfigError("Check manufactured needs a boundary form with a known solution", field="checks")
        errors = [float(np.max(np.abs(r.values - exact(r.solution.nodes)))) for r in results]
        logging.info("Manufactured solution errors: %s", ", ".join(f"{e:.3e}" for e in errors))
        decreasing = all(b < a for a, b in zip(errors, errors[1:]))
        checks.append(("manufactured", decreasing and errors[-1] <= settings.manufactured_tol,
                       settings.manufactured_tol - errors[-1]))

    if "equivariance" in enabled:
        rng = np.random.default_rng(run.seed)
        reports = [affine_equivariance_check(problem, random_affine_map(rng, n), tol=tol)
                   for _ in range(settings.affine_maps)]
        checks.append(("equivariance", all(r.passed for r in reports),
                       min((r.tolerance - r.sup_difference for r in reports), default=0.0)))

    if "holder" in enabled:
        report.holder = holder_fit(u, _require_face("holder", face))
        write_csv_artifact(out_dir / "fit_residuals.csv", "fit_residuals", report.holder.rows())

    if "sobolev" in enabled:
        alpha = settings.alpha
        if alpha is None:
            alpha = report.holder.alpha if report.holder is not None else min(1.0, 2.0 / n)
        report.sobolev = [sobolev_integral(u, p, beta, alpha, curve) for p, beta in settings.sobolev_grid]
        write_csv_artifact(out_dir / "sobolev.csv", "sobolev", [r.row() for r in report.sobolev])

    if "divergence" in enabled:
        report.divergence = divergence_check([r.solution for r in results], [levels for _, levels in schedule],
                                             p=settings.divergence_p, control_p=settings.control_p)
        write_csv_artifact(out_dir / "divergence.csv", "divergence", report.divergence.rows())

    if "converse" in enabled:
        if problem.lower_bound is None:
            raise ConfigError("Check converse needs a positive density lower bound", field="problem.lower_bound")
        setup = converse_setup(u, _require_face("converse", face))
        report.converse = converse_bound_check(setup, problem.lower_bound)

    if "log_probe" in enabled:
        band = settings.probe_band or (float(curve.deltas[0]), 0.25)
        report.probe = log_probe(curve.deltas, curve.values, band=band)
        write_csv_artifact(out_dir / "probe.csv", "probe", report.probe.rows())

    checks += report.checks()
    passed = _log_checks(checks)
    extra = {"name": experiment.name, "iterations": [r.iterations for r in results],
             "nodes": [r.solution.node_count for r in results], "schedule": [list(s) for s in schedule]}
    if report.holder is not None:
        extra["holder"] = {"alpha": report.holder.alpha, "window": list(report.holder.window),
                           "s_hat": report.holder.s_hat}
    if report.probe is not None:
        extra["probe"] = {"s_hat": report.probe.s_hat, "band": report.probe.band, "decades": report.probe.decades,
                          "inconclusive": report.probe.inconclusive}
    _write_summary(out_dir, "run-experiment", run, checks, extra)
    return EXIT_PASS if passed else EXIT_ASSERTION


def report_command(run: RunConfig) -> int:
    """ Collects every summary.json under the output directory into report.json."""
    summaries = sorted(run.output_dir.rglob("summary.json"))
    if not summaries:
        raise ConfigError(f"No summaries found under {run.output_dir}", field="out")
    entries = []
    for path in summaries:
        with open(path, encoding="utf-8") as in_file:
            summary = json.load(in_file)
        name = str(path.parent.relative_to(run.output_dir))
        logging.info("%s: %s", name, "passed" if summary["passed"] else "FAILED")
        entries.append({"run": name, "passed": summary["passed"], "checks": summary["checks"]})
    passed = all(entry["passed"] for entry in entries)
    write_json_artifact(run.output_dir / "report.json", {"runs": entries, "passed": passed})
    return EXIT_PASS if passed else EXIT_ASSERTION


def main(argv: Optional[List[str]] = None) -> int:
    """ Main entry point for running the toolkit as a script or module.

    Returns:
        int: 0 pass, 1 assertion failure, 2 solver failure, 3 configuration error.
    """
    args = setup_arg_parser(argv)

    if args.quiet:
        logging.basicConfig(level=logging.ERROR, format="Error: %(message)s", stream=sys.stderr)
    else:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stdout)

    try:
        run = RunConfig(command=args.command, config_path=Path(args.config) if getattr(args, "config", None) else None,
                        preset=getattr(args, "preset", None),
                        output_dir=Path(args.out) if args.out else default_output_dir(),
                        seed=args.seed, tol_scale=args.tol_scale, workers=args.workers)
        logging.info("Output directory set to: %s", run.output_dir.resolve())

        if run.command == "verify-barriers":
            config = load_barrier_config(run.config_path) if run.config_path else BarrierConfig()
            return verify_barriers(config, run)
        if run.command == "report":
            return report_command(run)
        experiment = load_preset(run.preset) if run.preset else load_experiment(run.config_path)
        if run.command == "solve":
            return solve_command(experiment, run)
        return run_experiment(experiment, run)

    except ConfigError as err:
        logging.error("Configuration error: %s", err.message)
        return EXIT_CONFIG
    except SolverConvergenceError as err:
        logging.error("Solver failed after %d iterations (worst residual %.3e): %s", err.iterations,
                      err.worst_residual, err.message)
        return EXIT_SOLVER
    except MongeAmpereError as err:
        logging.error(err.message)
        return EXIT_ASSERTION


if __name__ == "__main__":
    sys.exit(main())
