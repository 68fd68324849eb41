"""Command line interface: fit, simulate, diagnose.

Exit codes: 0 success, 1 input or configuration problem, 2 unexpected
runtime or numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import gif, null_histogram_summary
from .kernel import P_CLAMP, clamp_pvalues
from .pipeline import run_camt
from .simulation import DEFAULT_PROCEDURES, SimulationConfig, resolve_workers, run_sweep

MIN_FIT_M = 200
WARN_FIT_M = 1000


class CliError(Exception):
    """Validation problem in user input; maps to exit code 1."""


@dataclass
class ParsedTable:
    pvals: np.ndarray
    covariates: np.ndarray
    covariate_names: list
    n_clamped: int


def parse_table(path):
    """Read a delimited hypothesis table.

    Expects a header row with exactly one column named "pvalue"; every
    other column is a numeric covariate. The delimiter is detected from
    the header line (tab if present, comma otherwise), so the same
    table parses identically from CSV and TSV. Lines starting with '#'
    are comments. P-values of exactly 0 or 1 are clamped into the open
    interval and counted in n_clamped.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc

    lines = [
        (idx + 1, line)
        for idx, line in enumerate(text.splitlines())
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines:
        raise CliError(f"empty input file: {path}")

    delimiter = "\t" if "\t" in lines[0][1] else ","
    header = next(csv.reader(io.StringIO(lines[0][1]), delimiter=delimiter))
    header = [h.strip() for h in header]
    seen = set()
    for name in header:
        if name in seen:
            raise CliError(f"duplicate header column {name!r}")
        seen.add(name)
    if "pvalue" not in header:
        raise CliError('missing required column "pvalue"')
    p_col = header.index("pvalue")

    values = np.empty((len(lines) - 1, len(header)))
    for row_idx, (line_no, line) in enumerate(lines[1:]):
        cells = next(csv.reader(io.StringIO(line), delimiter=delimiter))
        if len(cells) != len(header):
            short = min(len(cells), len(header))
            col = header[short] if len(cells) < len(header) else header[-1]
            raise CliError(
                f"line {line_no}: expected {len(header)} cells, got {len(cells)} "
                f"(missing value for column {col!r})"
            )
        for col_idx, cell in enumerate(cells):
            try:
                value = float(cell)
            except ValueError:
                value = np.nan
            if not np.isfinite(value):
                raise CliError(
                    f"non-numeric value {cell.strip()!r} at line {line_no}, "
                    f"column {header[col_idx]!r}"
                )
            values[row_idx, col_idx] = value

    if values.shape[0] == 0:
        raise CliError(f"no data rows in {path}")

    p = values[:, p_col]
    bad = np.flatnonzero((p < 0.0) | (p > 1.0))
    if bad.size:
        line_no = lines[1 + bad[0]][0]
        raise CliError(f'line {line_no}: p-value {p[bad[0]]!r} outside [0, 1]')
    n_clamped = int(np.count_nonzero((p < P_CLAMP) | (p > 1.0 - P_CLAMP)))
    cov_cols = [j for j in range(len(header)) if j != p_col]
    return ParsedTable(
        pvals=clamp_pvalues(p),
        covariates=values[:, cov_cols],
        covariate_names=[header[j] for j in cov_cols],
        n_clamped=n_clamped,
    )


def _fmt(x):
    return repr(float(x))


def cmd_fit(args):
    table = parse_table(args.input)
    m = table.pvals.size
    if m < MIN_FIT_M:
        raise CliError(f"too few hypotheses (m={m}); at least {MIN_FIT_M} are required")
    if m < WARN_FIT_M:
        print(
            f"warning: m={m} is small, estimates will be noisy "
            f"(recommended m >= {WARN_FIT_M})",
            file=sys.stderr,
        )
    if not 0.0 < args.alpha < 1.0:
        raise CliError("--alpha must lie in (0, 1)")
    if args.spline_knots != 0 and not 2 <= args.spline_knots <= 20:
        raise CliError("--spline-knots must be 0 or between 2 and 20")

    try:
        gif_report = gif(table.pvals)
        gif_text, warn_text = _fmt(gif_report.gif), str(gif_report.warn).lower()
    except ValueError:
        gif_text, warn_text = "na", "na"

    covs = table.covariates if table.covariates.shape[1] else None
    result = run_camt(
        table.pvals,
        covs,
        alpha=args.alpha,
        spline_knots=args.spline_knots,
        mixed=args.mixed,
        cap_at_tup=not args.no_tup_cap,
    )

    from . import __version__

    with open(args.output, "w", newline="") as out:
        out.write(f"# camt fit v{__version__}\n")
        out.write(f"# alpha: {_fmt(args.alpha)}\n")
        out.write(f"# spline_knots: {args.spline_knots}\n")
        out.write(f"# mixed: {str(args.mixed).lower()}\n")
        out.write(f"# tup_cap: {str(not args.no_tup_cap).lower()}\n")
        out.write("# seed: none\n")
        out.write(f"# m: {m}\n")
        out.write(f"# n_clamped: {table.n_clamped}\n")
        out.write(f"# t_hat: {_fmt(result.t_hat)}\n")
        out.write(f"# n_rejections: {result.n_rejections}\n")
        out.write(f"# fdp_hat: {_fmt(result.fdp_hat)}\n")
        out.write(f"# em_iterations: {result.trace.n_iter}\n")
        out.write(f"# em_converged: {str(result.trace.converged).lower()}\n")
        out.write(f"# gif: {gif_text}\n")
        out.write(f"# gif_warn: {warn_text}\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            ["index", "pvalue", *table.covariate_names, "pi0_hat", "k_hat", "psi_stat", "rejected"]
        )
        for i in range(m):
            writer.writerow(
                [
                    i,
                    _fmt(table.pvals[i]),
                    *(_fmt(v) for v in table.covariates[i]),
                    _fmt(result.pi_hat[i]),
                    _fmt(result.k_hat[i]),
                    _fmt(result.psi_stat[i]),
                    int(result.rejected[i]),
                ]
            )
    print(
        f"fit: m={m}, t_hat={result.t_hat:.6g}, rejections={result.n_rejections}, "
        f"output={args.output}"
    )


def cmd_simulate(args):
    try:
        alpha_grid = tuple(float(a) for a in args.alpha_grid.split(",") if a.strip())
    except ValueError as exc:
        raise CliError(f"bad --alpha-grid: {exc}") from exc
    try:
        config = SimulationConfig(
            setup=args.setup,
            m=args.m,
            eta0=args.eta0,
            k_d=args.kd,
            k_s=args.ks,
            k_f=args.kf,
            n_replicates=args.reps,
            seed=args.seed,
            alpha_grid=alpha_grid,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    report = run_sweep(config, procedures=args.procedures, n_workers=resolve_workers())
    with open(args.output, "w", newline="") as out:
        report.write_csv(out)
    for s in report.summarize():
        print(
            f"{s['procedure']:>10s} alpha={s['alpha']:<5g} "
            f"fdp={s['mean_fdp']:.4f} (se {s['se_fdp']:.4f}) "
            f"tpr={s['mean_tpr']:.4f} (se {s['se_tpr']:.4f})"
        )


def cmd_diagnose(args):
    table = parse_table(args.input)
    counts = null_histogram_summary(table.pvals, n_bins=20)
    print(f"m: {table.pvals.size}")
    print(f"n_clamped: {table.n_clamped}")
    try:
        report = gif(table.pvals)
        print(f"gif: {report.gif!r}")
        print(f"n_pvalues_used: {report.n_pvalues_used}")
        print(f"threshold: {report.threshold!r}")
        print(f"warn: {str(report.warn).lower()}")
        if report.warn:
            print(
                "warning: inflation above threshold, the null distribution "
                "looks anti-conservative; FDP control is not trustworthy"
            )
    except ValueError as exc:
        print(f"gif: na ({exc})")
    print("histogram_bins: 20")
    print("histogram_counts: " + ",".join(str(int(c)) for c in counts))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse wants to exit 2 on usage errors; those are
        # validation problems here, which exit 1
        raise CliError(message)


def build_parser():
    parser = _Parser(prog="camt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the model and select rejections")
    p_fit.add_argument("--input", required=True)
    p_fit.add_argument("--alpha", type=float, default=0.05)
    p_fit.add_argument("--spline-knots", type=int, default=0, dest="spline_knots")
    p_fit.add_argument("--mixed", action="store_true")
    p_fit.add_argument("--no-tup-cap", action="store_true", dest="no_tup_cap")
    p_fit.add_argument("--output", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run a simulation sweep")
    p_sim.add_argument("--setup", required=True)
    p_sim.add_argument("--m", type=int, default=10_000)
    p_sim.add_argument("--eta0", type=float, default=2.5)
    p_sim.add_argument("--kd", type=float, default=1.0)
    p_sim.add_argument("--ks", type=float, default=2.4)
    p_sim.add_argument("--kf", type=float, default=0.0)
    p_sim.add_argument("--reps", type=int, default=100)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--alpha-grid", default="0.05", dest="alpha_grid")
    p_sim.add_argument(
        "--procedures",
        nargs="+",
        default=list(DEFAULT_PROCEDURES),
        help="subset of: camt camt-mixed bh storey oracle",
    )
    p_sim.add_argument("--output", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_diag = sub.add_parser("diagnose", help="null-calibration diagnostics")
    p_diag.add_argument("--input", required=True)
    p_diag.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
