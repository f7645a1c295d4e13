"""Command-line frontend.

    python -m contagion_sim simulate-limit configs/truncation.yaml --out results/truncation.csv

Every run writes a CSV and a JSON sidecar next to it holding the resolved
config; feeding the sidecar back as the config reproduces the CSV.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from . import __version__
from .config import SolverName, load_config
from .deterministic import analytic_no_feedback_loss, solve_pde_predictor_corrector
from .errors import ContagionError, ValidationError
from .finite_system import run_finite_experiment
from .fixed_point import simulate_fixed_point_loss
from .logs import configure_logging
from .model import LossSample
from .moments import simulate_limiting_loss
from .parallel import enable_progress
from .spde_fd import simulate_spde_loss
from .statistics import ecdf, histogram, ks_distance, summarize, var_at_level

logger = logging.getLogger(__name__)

SAMPLE_SOLVERS = (SolverName.FINITE, SolverName.MOMENTS, SolverName.FD_SPDE, SolverName.FIXED_POINT)

# EX_USAGE; 2 is taken by numerical failures
USAGE_EXIT = 64


def run_solver(cfg):
    """Loss samples of the solver named in ``cfg.solver``."""
    name = SolverName(cfg.solver.name)
    pool, risk, grid, sim = cfg.pool(), cfg.risk_model(), cfg.time_grid(), cfg.sim_config()
    s = cfg.solver
    if name is SolverName.FINITE:
        return run_finite_experiment(pool, risk, cfg.lgd(), grid, sim, cfg.model.cap)
    if name is SolverName.MOMENTS:
        return simulate_limiting_loss(pool, risk, grid, s.K, sim, s.variant, cfg.lgd())
    if name is SolverName.FD_SPDE:
        return simulate_spde_loss(pool, risk, cfg.spde_config(), sim)
    if name is SolverName.FIXED_POINT:
        return simulate_fixed_point_loss(pool, risk, grid, sim, s.inner_trials, s.tol, s.max_iter, cfg.lgd())
    raise ValidationError(f"solver.name={name.value} does not produce loss samples")


def deterministic_table(cfg):
    pool, grid = cfg.pool(), cfg.time_grid()
    solution = solve_pde_predictor_corrector(pool, cfg.density_grid(), grid, cfg.solver.substeps)
    frame = pd.DataFrame({
        "time": solution.times,
        "loss": solution.loss,
        "first_moment": solution.first_moment,
        "mass": solution.mass,
    })
    params = pool.entries[0].params
    if params.beta_c == 0 and params.sigma > 0:
        frame["analytic_loss"] = analytic_no_feedback_loss(pool, solution.times)
    return frame


def compare_table(first, second, levels):
    rows = []
    for h, horizon in enumerate(first.horizons):
        a, b = first.losses[:, h], second.column(horizon)[0]
        row = {
            "horizon": float(horizon),
            "solver_a": first.solver,
            "solver_b": second.solver,
            "ks": ks_distance(a, b),
        }
        for level in levels:
            va, vb = var_at_level(a, level), var_at_level(b, level)
            row[f"var_{level:g}_a"] = va
            row[f"var_{level:g}_b"] = vb
            row[f"var_{level:g}_delta"] = va - vb
        rows.append(row)
    return pd.DataFrame(rows)


def write_csv(frame, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info("wrote %d rows to %s", len(frame), path)


def write_sidecar(path, data):
    path = Path(path).with_suffix(".json")
    with path.open("w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def _load(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, trials=args.trials, threads=args.threads)


def _default_out(args, suffix):
    return Path(args.out) if args.out else Path("results") / f"{Path(args.config).stem}{suffix}.csv"


def _sweep_targets(cfg, out):
    """(config, csv path) per sweep point; swept runs get the point label appended to the stem."""
    for label, point in cfg.sweep_points():
        if label:
            logger.info("sweep point %s", label)
        yield point, (out.with_name(f"{out.stem}_{label}{out.suffix}") if label else out)


def _sample_command(solver):
    def command(args):
        cfg = _load(args).with_overrides(solver=solver)
        for point, out in _sweep_targets(cfg, _default_out(args, f"_{solver.value}")):
            sample = run_solver(point)
            write_csv(sample.to_frame(), out)
            write_sidecar(out, point.sidecar(version=__version__, seed=point.sim.seed, diagnostics=sample.diagnostics))
    return command


def cmd_solve_deterministic(args):
    cfg = _load(args).with_overrides(solver=SolverName.FD_DETERMINISTIC)
    for point, out in _sweep_targets(cfg, _default_out(args, "_deterministic")):
        write_csv(deterministic_table(point), out)
        write_sidecar(out, point.sidecar(version=__version__, seed=point.sim.seed))


def _read_sample(path):
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ValidationError(f"cannot read sample file {path}: {exc}") from exc
    return LossSample.from_frame(frame, solver=Path(path).stem)


def cmd_analyze(args):
    levels = args.levels
    against = _read_sample(args.against) if args.against else None
    rows, hist_rows, ecdf_rows = [], [], []
    for path in args.samples:
        sample = _read_sample(path)
        for h, row in enumerate(summarize(sample, levels)):
            if against is not None:
                row["ks_against"] = ks_distance(sample.losses[:, h], against.column(row["horizon"])[0])
            rows.append({"file": str(path), **row})
        for h, horizon in enumerate(sample.horizons):
            losses = sample.losses[:, h]
            hist = histogram(losses, args.bins)
            for count, lo, hi, density in zip(hist.counts, hist.edges[:-1], hist.edges[1:], hist.density):
                hist_rows.append({
                    "file": str(path), "horizon": float(horizon),
                    "bin_lo": lo, "bin_hi": hi, "count": int(count), "density": density,
                })
            dist = ecdf(losses)
            points = np.unique(dist.values)
            ecdf_rows.extend(
                {"file": str(path), "horizon": float(horizon), "loss": value, "ecdf": level}
                for value, level in zip(points, dist(points))
            )
    out = Path(args.out) if args.out else Path("results") / "analysis.csv"
    write_csv(pd.DataFrame(rows), out)
    write_csv(pd.DataFrame(hist_rows), out.with_name(out.stem + "_hist.csv"))
    write_csv(pd.DataFrame(ecdf_rows), out.with_name(out.stem + "_ecdf.csv"))
    meta = {"version": __version__, "samples": [str(p) for p in args.samples],
            "levels": list(levels), "bins": args.bins}
    if args.against:
        meta["against"] = str(args.against)
    write_sidecar(out, {"meta": meta})


def cmd_compare(args):
    cfg = _load(args)
    for point, out in _sweep_targets(cfg, _default_out(args, "_compare")):
        first = run_solver(point.with_overrides(solver=args.solver or point.solver.name))
        second = run_solver(point.with_overrides(solver=args.against))
        write_csv(compare_table(first, second, point.solver.levels), out)
        write_sidecar(out, point.sidecar(
            version=__version__, seed=point.sim.seed,
            compared=[first.solver, second.solver],
        ))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(
        prog="contagion_sim",
        description="Portfolio loss distributions under default contagion and systematic risk.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default: $CONTAGION_LOG_LEVEL or INFO)")
    parser.add_argument("--log-file", default=None, help="append logs here as well (default: $CONTAGION_LOG_FILE)")
    parser.add_argument("--progress", action="store_true", help="show a progress bar over trials")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="YAML experiment config (a JSON sidecar works too)")
        p.add_argument("--out", default=None, help="output CSV path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: $CONTAGION_THREADS or 1)")
        p.set_defaults(func=func)
        return p

    with_config("simulate-finite", _sample_command(SolverName.FINITE), "finite pool Monte Carlo")
    with_config("simulate-limit", _sample_command(SolverName.MOMENTS), "limiting loss by the moment method")
    with_config("solve-deterministic", cmd_solve_deterministic, "predictor-corrector PDE for beta_s = 0")
    with_config("solve-spde-fd", _sample_command(SolverName.FD_SPDE), "explicit finite differences along risk paths")
    with_config("solve-fixed-point", _sample_command(SolverName.FIXED_POINT), "Picard iteration for the contagion rate")

    compare = with_config("compare", cmd_compare, "two solvers on shared seeds: KS distance and VaR deltas")
    compare.add_argument("--solver", choices=[s.value for s in SAMPLE_SOLVERS], default=None,
                         help="first solver (default: solver.name of the config)")
    compare.add_argument("--against", choices=[s.value for s in SAMPLE_SOLVERS], default=SolverName.MOMENTS.value)

    analyze = sub.add_parser("analyze", help="VaR, ECDF, Spearman and histograms of stored sample files")
    analyze.add_argument("samples", nargs="+", help="sample CSVs written by the simulate/solve commands")
    analyze.add_argument("--out", default=None)
    analyze.add_argument("--bins", type=int, default=50)
    analyze.add_argument("--levels", type=float, nargs="+", default=[0.95, 0.99])
    analyze.add_argument("--against", default=None, help="reference sample CSV; adds its KS distance per horizon")
    analyze.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_file)
    enable_progress(args.progress)
    np.seterr(over="ignore", invalid="ignore")
    try:
        args.func(args)
    except ContagionError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0
