"""Command-line front end: validate specs, run experiments, emit artifacts.

One subcommand per experiment kind plus ``validate``.  Runs write CSV tables
(and SVG plots unless ``--no-plots``) into the output directory, plus a
``run.log`` with per-stage diagnostics; the log is the one artifact exempt
from the byte-identical reproducibility rule, since it carries timings.

Exit codes: 0 success, 2 invalid spec or parameters, 3 a soundness guard
fired, 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .cell import homogenize_matrix, p_energy_result
from .experiment_spec import (KINDS, ExperimentSpec, SpecValidationError,
                              build_density, build_family, build_perforation,
                              parse_spec, validate_document)
from .fields import QuadraticMatrix
from .numerics import SolverError
from .perforation import (GaussianSource, lambda_problem_experiment,
                          masked_cell_value, penalized_cell_value)
from .rve import window_sequence
from .stability import (counterexample_suite, run_stability_pair,
                        stochastic_stability_experiment)
from .svgplot import plot_series, write_csv, write_text_atomic

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_GUARD = 3
EXIT_SOLVER = 4


class _StageLog:
    """Collects per-stage diagnostics; flushed to ``run.log`` at the end."""

    def __init__(self, path: Path):
        self.path = path
        self.lines: list[str] = []
        self.t0 = time.perf_counter()

    def stage(self, name: str, message: str = ""):
        dt = time.perf_counter() - self.t0
        line = f"[{dt:9.3f}s] {name}" + (f": {message}" if message else "")
        self.lines.append(line)

    def flush(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("\n".join(self.lines) + "\n", encoding="utf-8")


def _map_jobs(fn, items, threads: int):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _write_json(path: Path, obj):
    write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _matrix_header(dim: int):
    return [f"a_{i + 1}{j + 1}" for i in range(dim) for j in range(dim)]


# ---------------------------------------------------------------------------
# runners (spec, out dir, threads, plots, log) -> list of artifact paths

def _run_cell(spec: ExperimentSpec, out: Path, threads, plots, log):
    prm = spec.params
    density = build_density(prm.field, prm.p)
    dim = density.dim

    def solve(resolution):
        if prm.p == 2.0:
            target = (density.matrix if isinstance(density, QuadraticMatrix)
                      else density.coeff)
            result = homogenize_matrix(target, resolution,
                                       field_id=f"resolution {resolution}")
            return [float(v) for v in result.matrix.ravel()], result
        result = p_energy_result(density.coeff, prm.p, (prm.xi,), resolution,
                                 field_id=f"resolution {resolution}")
        return [result.energy_samples[0][1]], result

    log.stage("solve", f"{len(prm.resolutions)} resolution(s), "
                       f"threads={threads}")
    solved = _map_jobs(solve, prm.resolutions, threads)
    for resolution, (_, result) in zip(prm.resolutions, solved):
        log.stage("cell", f"resolution {resolution}: "
                          f"iterations {max(result.solver_iterations)}, "
                          f"residual {max(result.residuals):.3e}")

    value_header = (_matrix_header(dim) if prm.p == 2.0 else ["value"])
    rows = [[r] + vals for r, (vals, _) in zip(prm.resolutions, solved)]
    csv_path = out / "cell.csv"
    write_csv(csv_path, ["resolution"] + value_header, rows)
    artifacts = [csv_path]

    if plots and len(prm.resolutions) >= 2:
        if prm.p == 2.0:
            series = {f"a_{i + 1}{i + 1}":
                      [(float(r), vals[i * dim + i])
                       for r, (vals, _) in zip(prm.resolutions, solved)]
                      for i in range(dim)}
        else:
            series = {"value": [(float(r), vals[0])
                                for r, (vals, _) in zip(prm.resolutions,
                                                        solved)]}
        svg_path = out / "cell.svg"
        write_text_atomic(svg_path, plot_series(series, x_label="n",
                                                log_x=True))
        artifacts.append(svg_path)
    return artifacts


def _run_rve(spec: ExperimentSpec, out: Path, threads, plots, log):
    prm = spec.params
    density = build_density(prm.field, prm.p)
    log.stage("windows", f"R in {list(prm.windows)} at "
                         f"{prm.resolution_per_unit}/unit")
    est = window_sequence(density, prm.center, prm.xi, prm.windows,
                          prm.resolution_per_unit)
    log.stage("verdict", f"limit {est.limit_estimate:.12g}, gap "
                         f"{est.cauchy_gap:.3e}, homogenizable "
                         f"{est.homogenizable_at_center}")
    csv_path = out / "rve.csv"
    write_csv(csv_path, ["R", "value"],
              [[R, v] for R, v in zip(est.window_sizes, est.values)])
    summary_path = out / "rve_summary.json"
    _write_json(summary_path, {
        "center": list(est.center),
        "xi": list(est.xi),
        "p": est.p,
        "window_sizes": list(est.window_sizes),
        "values": list(est.values),
        "limit_estimate": est.limit_estimate,
        "cauchy_gap": est.cauchy_gap,
        "homogenizable_at_center": est.homogenizable_at_center,
        "resolution_per_unit": est.resolution_per_unit,
    })
    artifacts = [csv_path, summary_path]
    if plots:
        svg_path = out / "rve.svg"
        series = list(zip(est.window_sizes, est.values))
        write_text_atomic(svg_path, plot_series(series, log_x=True))
        artifacts.append(svg_path)
    return artifacts


def _run_stability(spec: ExperimentSpec, out: Path, threads, plots, log):
    prm = spec.params
    f = build_density(prm.field, prm.p)
    g = build_density(prm.field_g, prm.p)
    log.stage("pair", f"label {prm.label!r}, R in {list(prm.R_list)}")
    rep = run_stability_pair(
        f, g, t_list=prm.t_list, R_list=prm.R_list,
        hom_resolution=prm.hom_resolution, window_sizes=prm.window_sizes,
        resolution_per_unit=prm.resolution_per_unit,
        statistic_resolution=prm.statistic_resolution, label=prm.label)
    log.stage("conclusion", f"{rep.conclusion.value}, discrepancy "
                            f"{rep.discrepancy:.3e} vs tolerance "
                            f"{rep.tolerance:.3e}")
    csv_path = out / "stability.csv"
    write_csv(csv_path, ["R", "psi"], [[R, v] for R, v in rep.statistic_trace])
    summary_path = out / "stability_summary.json"
    _write_json(summary_path, rep.summary())
    artifacts = [csv_path, summary_path]
    if plots:
        svg_path = out / "stability.svg"
        write_text_atomic(svg_path,
                          plot_series(list(rep.statistic_trace),
                                      y_label="psi", log_x=True))
        artifacts.append(svg_path)
    return artifacts


def _run_counterexamples(spec: ExperimentSpec, out: Path, threads, plots,
                         log):
    log.stage("suite", "running the counterexample catalog")
    suite = counterexample_suite()
    artifacts = []
    summary = {}
    series = {}
    for name, rep in suite.items():
        log.stage("case", f"{name}: {rep.conclusion.value}")
        csv_path = out / f"counterexample_{name}.csv"
        write_csv(csv_path, ["R", "psi"],
                  [[R, v] for R, v in rep.statistic_trace])
        artifacts.append(csv_path)
        summary[name] = rep.summary()
        series[name] = [(R, v) for R, v in rep.statistic_trace]
    summary_path = out / "counterexamples_summary.json"
    _write_json(summary_path, summary)
    artifacts.append(summary_path)
    if plots:
        svg_path = out / "counterexamples.svg"
        write_text_atomic(svg_path,
                          plot_series(series, y_label="psi", log_x=True))
        artifacts.append(svg_path)
    return artifacts


def _run_perforation(spec: ExperimentSpec, out: Path, threads, plots, log):
    prm = spec.params
    E = build_perforation(prm)
    log.stage("masked", f"shape {prm.shape}, radius {prm.radius:g}, "
                        f"resolution {prm.resolution}")
    masked = masked_cell_value(E, prm.xi, prm.resolution)

    def penalize(n):
        return penalized_cell_value(E, n, prm.xi, prm.resolution)

    log.stage("penalized", f"n in {list(prm.n_list)}, threads={threads}")
    penalized = _map_jobs(penalize, prm.n_list, threads)
    for n, v in zip(prm.n_list, penalized):
        log.stage("penalized", f"n {n:g}: {v:.12g} (masked {masked:.12g})")
    csv_path = out / "perforation.csv"
    write_csv(csv_path, ["n", "penalized", "masked"],
              [[n, v, masked] for n, v in zip(prm.n_list, penalized)])
    artifacts = [csv_path]
    if plots:
        svg_path = out / "perforation.svg"
        series = {"penalized": list(zip(prm.n_list, penalized)),
                  "masked": [(prm.n_list[0], masked),
                             (prm.n_list[-1], masked)]}
        write_text_atomic(svg_path, plot_series(series, x_label="n",
                                                log_x=True))
        artifacts.append(svg_path)

    if prm.eps_list:
        log.stage("lambda", f"eps in {list(prm.eps_list)}, lambda {prm.lam:g}")
        report = lambda_problem_experiment(
            E, prm.lam, GaussianSource(), prm.eps_list,
            box_size=prm.box_size, n_penal=prm.n_list[-1],
            resolution=prm.lambda_resolution,
            cell_resolution=prm.cell_resolution)
        lambda_csv = out / "lambda.csv"
        write_csv(lambda_csv, ["epsilon", "l2_distance"],
                  [[e, d] for e, d in zip(report.epsilons, report.distances)])
        artifacts.append(lambda_csv)
        summary_path = out / "perforation_summary.json"
        _write_json(summary_path, {
            "masked": masked,
            "theta": report.theta,
            "hom_matrix": [list(map(float, row)) for row in report.hom_matrix],
            "epsilons": list(report.epsilons),
            "distances": list(report.distances),
        })
        artifacts.append(summary_path)
        if plots:
            svg_path = out / "lambda.svg"
            pts = list(zip(report.epsilons, report.distances))
            write_text_atomic(svg_path,
                              plot_series(pts, x_label="epsilon",
                                          y_label="l2 distance", log_x=True))
            artifacts.append(svg_path)
    return artifacts


def _run_stochastic(spec: ExperimentSpec, out: Path, threads, plots, log):
    prm = spec.params
    family_f = build_family(prm.family)
    family_g = build_family(prm.family_g)
    log.stage("trials", f"{prm.trials} paired trials, torus "
                        f"{prm.torus_size}, seed {spec.seed}")
    rep = stochastic_stability_experiment(
        family_f, family_g, prm.trials, spec.seed,
        torus_size=prm.torus_size,
        resolution_per_unit=prm.resolution_per_unit,
        statistic_sizes=prm.statistic_sizes)
    log.stage("verdict", f"intervals_overlap {rep.intervals_overlap}")
    csv_path = out / "stochastic.csv"
    write_csv(csv_path, ["R", "mean", "stderr"],
              [[R, m, se] for R, m, se in rep.statistic_trace])
    summary_path = out / "stochastic_summary.json"
    _write_json(summary_path, rep.summary())
    artifacts = [csv_path, summary_path]
    if plots:
        svg_path = out / "stochastic.svg"
        pts = [(R, m) for R, m, _ in rep.statistic_trace]
        write_text_atomic(svg_path, plot_series(pts, y_label="mean psi",
                                                log_x=True))
        artifacts.append(svg_path)
    return artifacts


_RUNNERS = {
    "cell": _run_cell,
    "rve": _run_rve,
    "stability": _run_stability,
    "perforation": _run_perforation,
    "stochastic": _run_stochastic,
    "counterexamples": _run_counterexamples,
}


def run_experiment(spec: ExperimentSpec, out_dir=None, threads: int = 1,
                   plots: bool = True) -> int:
    """Run one validated spec; returns the process exit code."""
    out = Path(out_dir if out_dir is not None else spec.out)
    out.mkdir(parents=True, exist_ok=True)
    log = _StageLog(out / "run.log")
    log.stage("spec", f"kind {spec.kind}, seed {spec.seed}")
    try:
        artifacts = _RUNNERS[spec.kind](spec, out, max(1, threads), plots,
                                        log)
    except SolverError as e:
        log.stage("solver-failure", str(e))
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except RuntimeError as e:
        log.stage("soundness-guard", str(e))
        print(f"soundness guard fired: {e}", file=sys.stderr)
        return EXIT_GUARD
    except ValueError as e:
        log.stage("invalid-parameters", str(e))
        print(f"invalid parameters: {e}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        log.flush()
    for path in artifacts:
        print(f"wrote {path}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homlab",
        description="Homogenization experiments from JSON spec files.")
    sub = parser.add_subparsers(dest="command", required=True)

    val = sub.add_parser("validate", help="check a spec without running it")
    val.add_argument("--spec", required=True, help="path to the spec file")

    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} spec")
        p.add_argument("--spec", required=True, help="path to the spec file")
        p.add_argument("--out", default=None,
                       help="output directory (default: the spec's 'out')")
        p.add_argument("--seed", type=int, default=None,
                       help="override the spec's top-level seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for independent sub-experiments")
        p.add_argument("--no-plots", action="store_true",
                       help="write tables only, skip SVG plots")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        text = Path(args.spec).read_text(encoding="utf-8")
    except OSError as e:
        print(f"cannot read spec: {e}", file=sys.stderr)
        return EXIT_INVALID

    if args.command == "validate":
        violations = validate_document(text)
        if violations:
            for v in violations:
                print(v)
            return EXIT_INVALID
        spec = parse_spec(text)
        print(f"valid {spec.kind} spec")
        return EXIT_OK

    try:
        spec = parse_spec(text)
    except SpecValidationError as e:
        print(e, file=sys.stderr)
        return EXIT_INVALID
    if spec.kind != args.command:
        print(f"spec kind {spec.kind!r} does not match the "
              f"{args.command!r} subcommand", file=sys.stderr)
        return EXIT_INVALID
    if args.seed is not None:
        if args.seed < 0:
            print("seed must be nonnegative", file=sys.stderr)
            return EXIT_INVALID
        spec = replace(spec, seed=args.seed)
    if args.threads < 1:
        print("threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    return run_experiment(spec, out_dir=args.out, threads=args.threads,
                          plots=not args.no_plots)


if __name__ == "__main__":
    sys.exit(main())
