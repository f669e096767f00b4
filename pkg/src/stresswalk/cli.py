"""Batch command-line front end.

Every subcommand reads files, writes its artifacts atomically into the output
directory (``--out``, else ``$STRESSWALK_OUT``, else ``./stresswalk_out``) and
records a ``manifest.json`` with the arguments, seed and SHA-256 digests of
the inputs.  Exit status: 0 success, 1 data error, 2 usage error.
"""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import math
import os
import re
import sys
import tempfile
from dataclasses import replace

import numpy as np

from . import __version__
from .errors import MalformedRow, MissingFile, StressWalkError
from .estimators import (
    DEFAULT_EDGES,
    DEFAULT_SET_SIZE,
    bucket_table,
    grid_estimates,
    median_volume_by_stress,
    mu_by_stress_change,
    order_series,
    partition_fixed,
    read_grid,
    read_table,
    split_sample,
    table_text,
)
from .ingest import (
    DEFAULT_DETREND_WINDOW,
    DatedSeries,
    attach_volume,
    compute_log_returns,
    detrend_volume,
    label_with_stress,
    parse_labeled_csv,
    parse_price_series,
    parse_stress_series,
    parse_volume_series,
    labeled_csv_text,
)
from .normality import pvalue_rejection_fraction, rescale_returns
from .portfolio import CellParams, capm_regression, efficient_frontier
from .riskmodel import (
    bracket_comparison,
    default_brackets,
    interval_probability,
    mixture_moments,
    normal_fit_cdf,
    pct_to_log_return,
    risk_report,
)
from .simulate import load_sim_config, simulate, simulate_joint

log = logging.getLogger("stresswalk")

ENV_OUT = "STRESSWALK_OUT"
DEFAULT_OUT = "stresswalk_out"
NORMALITY_ORDERINGS = ("chronological", "randomized", "stress_ascending")


# --------------------------------------------------------------------------
# helpers


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Output directory bookkeeping for one subcommand invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = args.out or os.environ.get(ENV_OUT) or DEFAULT_OUT
        os.makedirs(self.out, exist_ok=True)
        self.outputs: list[str] = []
        self.inputs: dict[str, str] = {}

    def input(self, path):
        if path is not None and os.path.isfile(path):
            self.inputs[os.fspath(path)] = _sha256(path)
        return path

    def write(self, name: str, text: str) -> str:
        path = os.path.join(self.out, name)
        fd, tmp = tempfile.mkstemp(dir=self.out, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.outputs.append(name)
        return path

    def finish(self) -> None:
        config = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func", "out")}
        manifest = {
            "tool": "stresswalk",
            "version": __version__,
            "subcommand": self.args.command,
            "config": config,
            "seed": getattr(self.args, "seed", None),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": sorted(self.outputs),
            "created": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        }
        self.write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _header(path: str) -> list[str]:
    if not os.path.isfile(path):
        raise MissingFile(path)
    with open(path, encoding="utf-8") as fh:
        return [h.strip() for h in fh.readline().split(",")]


def load_series(run: Run, path: str, stress: str | None = None, volume: str | None = None,
                window: int = DEFAULT_DETREND_WINDOW):
    """Labeled series from a combined CSV, or from a price file plus a stress file."""
    run.input(path)
    if "close" in _header(path):
        if stress is None:
            raise MalformedRow(1, f"{path} is a price file; pass --stress with the kappa series")
        prices = parse_price_series(path)
        series, report = label_with_stress(compute_log_returns(prices), parse_stress_series(run.input(stress)),
                                           asset_id=os.path.splitext(os.path.basename(path))[0])
        if report.n_dropped:
            log.warning("%d return dates had no stress level and were dropped", report.n_dropped)
    else:
        series = parse_labeled_csv(path)
    if volume is not None:
        vol = parse_volume_series(run.input(volume))
        series = attach_volume(series, volume=vol, detrended=detrend_volume(vol, window))
    elif series.volume is not None and series.detrended_volume is None:
        have = np.isfinite(series.volume)
        detr = detrend_volume(DatedSeries(series.dates[have], series.volume[have]), window)
        series = attach_volume(series, detrended=detr)
    return series


# --------------------------------------------------------------------------
# subcommands


def cmd_estimate(args, run: Run) -> None:
    series = load_series(run, args.input, args.stress)
    if args.deciles:
        if not args.input2:
            raise MalformedRow(0, "--deciles needs --input2 with the second asset")
        other = load_series(run, args.input2, args.stress2)
        grid = grid_estimates(series, other, args.deciles)
        if args.format == "csv":
            run.write("grid.csv", grid.to_csv_text())
        else:
            run.write("grid.json", json.dumps(grid.to_dict(), indent=2) + "\n")
        print(f"grid {args.deciles}x{args.deciles}: {int(grid.occupied.sum())} occupied cells, "
              f"{int(grid.count.sum())} joint days")
        return
    table = bucket_table(series, args.edges)
    run.write(f"table.{args.format}", table_text(table, args.format))
    print(f"{'bucket':>12} {'P':>8} {'mu':>10} {'sigma':>10} {'count':>7}")
    for lo, hi, p, mu, sd, c in zip(table.edges, table.uppers, table.probability, table.mu, table.sigma, table.count):
        print(f"{lo:5g}-{hi:<6g} {p:8.2%} {mu:10.5f} {sd:10.5f} {c:7d}")


def cmd_normality(args, run: Run) -> None:
    series = load_series(run, args.input, args.stress)
    summary = {}
    for mode in NORMALITY_ORDERINGS:
        ordered = order_series(series, mode, seed=args.seed if mode == "randomized" else None)
        sets, dropped = partition_fixed(ordered, args.set_size)
        res = pvalue_rejection_fraction(sets, args.alpha)
        rows = [(s.index, s.count, s.kappa_min, s.kappa_max, r.w_statistic, r.p_value) for s, r in res.results]
        run.write(f"sets_{mode}.csv", _csv_text(("set_index", "n", "kappa_min", "kappa_max", "W", "p"), rows))
        summary[mode] = {"fraction": res.fraction, "n_sets": res.n_tested, "n_rejected": res.n_rejected,
                         "dropped_observations": dropped, "excluded": res.excluded}
        print(f"{mode:>18}: {res.n_rejected}/{res.n_tested} sets with p < {args.alpha} ({res.fraction:.1%})")
    run.write("normality.json", json.dumps({"alpha": args.alpha, "set_size": args.set_size,
                                            "orderings": summary}, indent=2) + "\n")


def _thresholds(args) -> list[float]:
    xs = list(args.threshold or [])
    xs += [pct_to_log_return(p) for p in (args.threshold_pct or [])]
    return xs


def cmd_risk(args, run: Run) -> None:
    table = read_table(run.input(args.table))
    xs = _thresholds(args)
    if not xs and not args.interval and args.horizon is None:
        raise MalformedRow(0, "nothing to evaluate: pass --threshold, --threshold-pct, --interval or --horizon")
    moments = mixture_moments(table)
    out = {
        "moments": {"mean": moments.mean, "stddev": moments.stddev, "excess_kurtosis": moments.excess_kurtosis},
        "risk_free": args.risk_free,
        "reports": [risk_report(table, x, args.horizon, args.bucket_min, args.risk_free).to_dict() for x in xs],
        "intervals": [],
    }
    for a, b in args.interval or []:
        out["intervals"].append({"a": a, "b": b, "mixture_probability": interval_probability(table, a, b),
                                 "normal_fit_probability": normal_fit_cdf(moments, b) - normal_fit_cdf(moments, a)})
    if args.horizon is not None and not xs:
        rep = risk_report(table, 0.0, args.horizon, None, args.risk_free)
        out["horizon"] = {"N": args.horizon, "r_N": rep.r_n, "P_N": rep.p_n}
    run.write("risk.json", json.dumps(out, indent=2) + "\n")
    print(f"mixture mean {moments.mean:.4g}  stddev {moments.stddev:.4g}  "
          f"excess kurtosis {moments.excess_kurtosis:.3g}  risk-free {args.risk_free:g}")
    print(f"{'x0':>10} {'condition':>12} {'mixture':>12} {'normal fit':>12} {'r_N':>9} {'P_N':>9}")
    for r in out["reports"]:
        rn = "" if r["r_n"] is None else f"{r['r_n']:.4g}"
        pn = "" if r["p_n"] is None else f"{r['p_n']:.4g}"
        print(f"{r['x0']:10.5f} {r['conditioning']:>12} {r['mixture_probability']:12.4e} "
              f"{r['normal_fit_probability']:12.4e} {rn:>9} {pn:>9}")
    for r in out["intervals"]:
        print(f"[{r['a']:g}, {r['b']:g}): mixture {r['mixture_probability']:.4e}  normal fit {r['normal_fit_probability']:.4e}")
    if "horizon" in out:
        print(f"N={args.horizon}: r_N={out['horizon']['r_N']:.4g}  P_N={out['horizon']['P_N']:.4g}")


def cmd_rescale(args, run: Run) -> None:
    series = load_series(run, args.input, args.stress)
    table = read_table(run.input(args.table))
    res = rescale_returns(series, table, args.mode)
    run.write("rescaled.csv", _csv_text(("date", "rescaled_return"), zip(map(str, res.dates), res.values)))
    print(f"{len(res)} returns rescaled ({args.mode}); stddev {np.std(res.values, ddof=1):.4f}")


def cmd_mu_by_dkappa(args, run: Run) -> None:
    series = load_series(run, args.input, args.stress)
    rows = mu_by_stress_change(series, args.set_size)
    run.write("mu_by_dkappa.csv", _csv_text(("median_kappa_change", "mu"), rows))
    print(f"{len(rows)} sets of {args.set_size}")


def cmd_volume_by_stress(args, run: Run) -> None:
    series = load_series(run, args.input, args.stress, args.volume, args.window)
    if series.detrended_volume is None:
        raise MalformedRow(0, "no volume data: add a volume column or pass --volume")
    have = np.nonzero(np.isfinite(series.detrended_volume))[0]
    series = series.take(have)
    rows = median_volume_by_stress(series, args.set_size)
    run.write("volume_by_stress.csv", _csv_text(("set_index", "median_volume"), rows))
    print(f"{len(rows)} sets of {args.set_size}")


def cmd_frontier(args, run: Run) -> None:
    if args.grid:
        grid = read_grid(run.input(args.grid))
        i, j = args.cell
        cell = CellParams.from_grid(grid, i, j)
    else:
        need = ("mu_s", "mu_b", "sigma_s", "sigma_b", "rho")
        if any(getattr(args, k) is None for k in need):
            raise MalformedRow(0, "pass --grid/--cell or all of --mu-s --mu-b --sigma-s --sigma-b --rho")
        cell = CellParams(*(getattr(args, k) for k in need))
    fr = efficient_frontier(cell, args.w_step)
    run.write("frontier.csv", _csv_text(("w", "mu_p", "var_p", "efficient"),
                                        ((p.w, p.mu_p, p.var_p, p.efficient) for p in fr.points)))
    print(f"minimum-variance bond weight {fr.w_min_variance:.4f}; efficient weights "
          + ", ".join(f"{w:g}" for w in fr.efficient_weights))


def cmd_capm(args, run: Run) -> None:
    asset = load_series(run, args.input, args.stress)
    bench = load_series(run, args.benchmark, args.stress)
    res = capm_regression(asset, bench, args.edges)
    run.write("capm.csv", _csv_text(("bucket_low", "bucket_high", "alpha", "beta", "r2", "n"),
                                    ((r.bucket_low, r.bucket_high, r.alpha, r.beta, r.r_squared, r.n) for r in res)))
    for r in res:
        print(f"[{r.bucket_low:g}, {r.bucket_high:g}): alpha {r.alpha:.2e} beta {r.beta:.3f} R2 {r.r_squared:.3f} n {r.n}")


def cmd_simulate(args, run: Run) -> None:
    cfg = load_sim_config(run.input(args.config))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.n is not None:
        cfg = replace(cfg, n=args.n)
    if cfg.is_joint:
        a, b = simulate_joint(cfg)
        run.write("stock.csv", labeled_csv_text(a))
        run.write("bond.csv", labeled_csv_text(b))
    else:
        run.write("labeled.csv", labeled_csv_text(simulate(cfg)))
    run.write("sim_config.json", json.dumps(cfg.to_dict(), indent=2) + "\n")
    args.seed = cfg.seed
    print(f"simulated {cfg.n} days (seed {cfg.seed})")


def cmd_split(args, run: Run) -> None:
    series = load_series(run, args.input, args.stress)
    train, test = split_sample(series, args.seed)
    run.write("train.csv", labeled_csv_text(train))
    run.write("test.csv", labeled_csv_text(test))
    print(f"train {len(train)}  test {len(test)}")


def cmd_validate(args, run: Run) -> None:
    if args.train.endswith(".json") or (args.train.endswith(".csv") and "bucket_low" in _header(args.train)):
        table = read_table(run.input(args.train))
    else:
        table = bucket_table(load_series(run, args.train, args.stress), args.edges)
    test = load_series(run, args.test, args.stress)
    cuts = args.brackets if args.brackets else default_brackets(args.bracket_width, args.bracket_limit)
    rows = bracket_comparison(table, test.returns, cuts)
    run.write("validate.csv", _csv_text(
        ("low", "high", "predicted", "observed", "normal_fit", "count", "n", "z"),
        ((r.low, r.high, r.predicted, r.observed, r.normal_fit, r.count, r.n, r.z_score) for r in rows)))
    worst = max(abs(r.z_score) for r in rows)
    print(f"{'bracket':>20} {'fit':>9} {'oos':>9} {'normal':>9} {'z':>6}")
    for r in rows:
        print(f"[{r.low:8.4f},{r.high:8.4f}) {r.predicted:9.5f} {r.observed:9.5f} {r.normal_fit:9.5f} {r.z_score:6.2f}")
    print(f"max |z| = {worst:.2f} over {len(rows)} brackets, n = {len(test)}")


# --------------------------------------------------------------------------
# parser


def _pair(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return v[0], v[1]


def _cell(text: str) -> tuple[int, int]:
    try:
        i, j = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected I,J cell indices, got {text!r}") from None
    return i, j


def _set_size(text: str) -> int:
    v = int(text)
    if v < 3:
        raise argparse.ArgumentTypeError("set size must be >= 3")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stresswalk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./{DEFAULT_OUT})")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    series_in = argparse.ArgumentParser(add_help=False)
    series_in.add_argument("--input", required=True,
                           help="labeled CSV (date,return,kappa[,kappa2][,volume]) or price CSV (date,close)")
    series_in.add_argument("--stress", help="stress CSV (date,kappa); required with a price CSV")

    edges = argparse.ArgumentParser(add_help=False)
    edges.add_argument("--edges", type=_floats, default=list(DEFAULT_EDGES),
                       help="ascending bucket lower bounds; last bucket open-ended (default 0,10,...,70)")

    set_size = argparse.ArgumentParser(add_help=False)
    set_size.add_argument("--set-size", type=_set_size, default=DEFAULT_SET_SIZE)

    s = sub.add_parser("estimate", parents=[common, series_in, edges], help="per-bucket table or decile grid")
    s.add_argument("--deciles", type=int, help="build a quantile grid with this many bins per axis")
    s.add_argument("--input2", help="second asset for --deciles (its kappa is the second axis)")
    s.add_argument("--stress2", help="stress CSV for --input2 when it is a price file")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("normality", parents=[common, series_in, set_size],
                       help="Shapiro-Wilk rejection fractions under chronological, random and stress orderings")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.set_defaults(func=cmd_normality)

    s = sub.add_parser("risk", parents=[common], help="mixture tail probabilities, r_N and P_N",
                       description="Thresholds are per-day log returns; --threshold-pct P converts a simple "
                                   "percentage move with ln(1 + P/100).")
    s.add_argument("--table", required=True, help="estimate table (JSON or CSV)")
    s.add_argument("--threshold", type=float, action="append", help="log-return threshold x0 (repeatable)")
    s.add_argument("--threshold-pct", type=float, action="append", help="simple percent threshold (repeatable)")
    s.add_argument("--interval", type=_pair, action="append", help="a,b probability of a return in [a, b)")
    s.add_argument("--horizon", type=int, help="N for r_N and P_N")
    s.add_argument("--bucket-min", type=float, help="condition on buckets with kappa >= this level")
    s.add_argument("--risk-free", type=float, default=0.0, help="per-day risk-free rate for the Sharpe ratio")
    s.set_defaults(func=cmd_risk)

    s = sub.add_parser("rescale", parents=[common, series_in], help="divide returns by bucket sigma")
    s.add_argument("--table", required=True)
    s.add_argument("--mode", choices=("concurrent", "persistence"), default="concurrent")
    s.set_defaults(func=cmd_rescale)

    s = sub.add_parser("mu-by-dkappa", parents=[common, series_in, set_size],
                       help="mean return of sets ordered by one-day kappa change")
    s.set_defaults(func=cmd_mu_by_dkappa)

    s = sub.add_parser("volume-by-stress", parents=[common, series_in, set_size],
                       help="median detrended volume of stress-ordered sets")
    s.add_argument("--volume", help="volume CSV (date,volume)")
    s.add_argument("--window", type=int, default=DEFAULT_DETREND_WINDOW, help="trailing-median window in days")
    s.set_defaults(func=cmd_volume_by_stress)

    s = sub.add_parser("frontier", parents=[common], help="long-only two-asset frontier for one stress cell",
                       description="w is the bond weight in [0, 1]; shorting is not modelled.")
    s.add_argument("--grid", help="grid JSON from 'estimate --deciles'")
    s.add_argument("--cell", type=_cell, help="I,J cell of the grid")
    for name in ("mu-s", "mu-b", "sigma-s", "sigma-b", "rho"):
        s.add_argument(f"--{name}", type=float)
    s.add_argument("--w-step", type=float, default=0.1)
    s.set_defaults(func=cmd_frontier)

    s = sub.add_parser("capm", parents=[common, series_in, edges],
                       help="per-bucket regression of an asset on a benchmark (raw returns)")
    s.add_argument("--benchmark", required=True, help="benchmark labeled CSV; its kappa defines the buckets")
    s.set_defaults(func=cmd_capm)

    s = sub.add_parser("simulate", parents=[common], help="synthetic market from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--n", type=int, help="override the number of days")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("split", parents=[common, series_in], help="random half split into train/test")
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("validate", parents=[common, edges],
                       help="predicted vs observed bracket frequencies on held-out data")
    s.add_argument("--train", required=True, help="estimate table, or labeled CSV to estimate with --edges")
    s.add_argument("--test", required=True, help="held-out labeled CSV")
    s.add_argument("--stress")
    s.add_argument("--brackets", type=_floats, help="explicit return cut points")
    s.add_argument("--bracket-width", type=float, default=0.005)
    s.add_argument("--bracket-limit", type=float, default=0.05)
    s.set_defaults(func=cmd_validate)
    return p


_NUMBER_LIST = re.compile(r"^-[\d.]+(?:[eE][-+]?\d+)?(?:,[-+]?[\d.]+(?:[eE][-+]?\d+)?)*$")


def _attach_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--opt -0.1,0.2`` as ``--opt=-0.1,0.2`` so argparse does not read it as a flag."""
    out: list[str] = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NUMBER_LIST.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_attach_negative_values(list(sys.argv[1:] if argv is None else argv)))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        r = Run(args)
        args.func(args, r)
        r.finish()
    except StressWalkError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
