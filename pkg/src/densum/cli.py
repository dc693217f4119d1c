"""Command-line surface: simulate, ci, fit, diagnose, fetch-climate.

Settings resolve in priority order: built-in defaults, then the config file
(``-c/--config``, INI sections [table1]/[table2]/[table3]/[analysis]), then
command-line flags, then the DENSUM_SEED environment variable (which
overrides any seed).  Exit codes: 0 success, 1 usage/config/data error,
2 network failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import os
import sys
import urllib.error
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from densum import climate
from densum.concentration import ci_linear, ci_mean, rule_of_thumb
from densum.core import ConfidenceSet, SupportSpec, sequential_partition, summarize
from densum.estimators import (
    acf_phi_hat,
    gee_exchangeable_wald,
    ols_fit,
    partition_compare,
    residual_range,
)
from densum.simulation import ExperimentConfig, run_table
from densum.uclass import check_u_class

RESULTS_VERSION = "# densum-results v1"
RESULTS_HEADER = (
    "table", "n", "phi", "alpha_shape", "threshold", "coefficient",
    "mean_lower", "mean_upper", "ci_wald", "ci_u", "ci_r",
    "a_hat", "av_star", "verdict", "seed", "repair_lambda",
)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_results_csv(rows, path):
    """Write CoverageReports in the fixed table-result schema (6 significant
    digits, version-stamped header)."""
    with open(path, "w", newline="") as handle:
        handle.write(RESULTS_VERSION + "\n")
        writer = csv.writer(handle)
        writer.writerow(RESULTS_HEADER)
        for row in rows:
            writer.writerow(
                [
                    _fmt(v)
                    for v in (
                        row.table, row.n, row.phi, row.alpha_shape, row.threshold,
                        row.coefficient, row.mean_lower, row.mean_upper, row.ci_wald,
                        row.ci_u, row.ci_r, row.a_hat, row.av_star, row.a5_verdict,
                        row.seed, row.repair_lambda,
                    )
                ]
            )


def read_results_csv(path):
    """Read a results CSV back into a list of plain dicts (strings preserved)."""
    with open(path, newline="") as handle:
        first = handle.readline().rstrip("\n")
        if not first.startswith("#"):
            raise ValueError("missing version comment line")
        return list(csv.DictReader(handle))


# ---------------------------------------------------------------------------
# analysis report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientRow:
    name: str
    estimate: float
    ci_lower: float
    ci_upper: float
    method: str
    range_source: str


@dataclass(frozen=True)
class SeriesDiagnostics:
    """U-class and autocorrelation diagnostics for one weighted-residual series."""

    name: str
    is_u: bool
    is_sub_u: bool
    expected_value: float
    functional_average: float
    tolerance: float
    rule_of_thumb_bound: float
    phi_hat_short: float
    phi_hat_long: float
    lags_short: int
    lags_long: int
    stationarity_note: str


@dataclass(frozen=True)
class AnalysisReport:
    """Full output of the fit command: model, coefficient table, diagnostics,
    provenance.  Serializes to JSON and re-parses to an equal value."""

    model: str
    coefficients: tuple
    diagnostics: tuple
    provenance: dict

    def __post_init__(self):
        if not self.diagnostics:
            raise ValueError("diagnostics block must be present")
        for row in self.coefficients:
            if not row.range_source:
                raise ValueError(f"coefficient {row.name} is missing its range_source")

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        return cls(
            model=raw["model"],
            coefficients=tuple(CoefficientRow(**c) for c in raw["coefficients"]),
            diagnostics=tuple(SeriesDiagnostics(**d) for d in raw["diagnostics"]),
            provenance=raw["provenance"],
        )


def _series_diagnostics(name, series):
    """Diagnostics for one weighted-residual (or raw) series."""
    z = np.asarray(series, dtype=float)
    n = z.shape[0]
    if float(np.min(z)) == float(np.max(z)):
        raise ValueError(f"series {name} is constant; diagnostics are undefined")
    support = SupportSpec(float(np.min(z)), float(np.max(z)))
    u_report = check_u_class(z, support)
    bound = rule_of_thumb(np.ones(n), float(np.var(z)), support.length)
    short, long_ = climate.lag_windows(n)
    acf_short = acf_phi_hat(z, short)
    acf_long = acf_phi_hat(z, long_)
    half = n // 2
    drift = abs(float(np.mean(z[:half]) - np.mean(z[half:])))
    drift_se = math.sqrt(np.var(z) * (1.0 / half + 1.0 / (n - half)))
    note = (
        "halves differ by more than 3 standard errors; inspect for drift"
        if drift > 3.0 * drift_se
        else "no mean drift detected between sample halves"
    )
    return SeriesDiagnostics(
        name=name,
        is_u=u_report.is_u,
        is_sub_u=u_report.is_sub_u,
        expected_value=u_report.expected_value,
        functional_average=u_report.functional_average,
        tolerance=u_report.tolerance,
        rule_of_thumb_bound=bound,
        phi_hat_short=acf_short.phi_hat,
        phi_hat_long=acf_long.phi_hat,
        lags_short=short,
        lags_long=long_,
        stationarity_note=note,
    )


# ---------------------------------------------------------------------------
# tabular input
# ---------------------------------------------------------------------------


def load_columns(path, names):
    """Read the named numeric columns from a CSV with a header row."""
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise ValueError("input file is empty")
        missing = [c for c in names if c not in reader.fieldnames]
        if missing:
            raise ValueError(
                f"missing column(s) {missing}; available: {reader.fieldnames}"
            )
        data = {c: [] for c in names}  # repeated names collapse to one read
        for i, record in enumerate(reader, start=2):
            for c in data:
                try:
                    data[c].append(float(record[c]))
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"column '{c}' is not numeric (line {i})") from exc
    return {c: np.array(v) for c, v in data.items()}


def _file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# settings resolution
# ---------------------------------------------------------------------------


def _load_config(path):
    parser = configparser.ConfigParser()
    if path:
        with open(path) as handle:
            parser.read_file(handle)
    return parser


def _resolve(flag_value, config, section, key, cast, default=None):
    if flag_value is not None:
        return flag_value
    if config.has_option(section, key):
        return cast(config.get(section, key))
    return default


def _resolve_seed(flag_value, config, section):
    env = os.environ.get("DENSUM_SEED")
    if env is not None:
        return int(env)
    return _resolve(flag_value, config, section, "seed", int, 0)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    config_file = _load_config(args.config)
    section = f"table{args.table}"
    if not config_file.has_section(section):
        config_file.add_section(section)
    phi = args.phi if args.phi is not None else args.phi_star
    config = ExperimentConfig(
        table=args.table,
        n=_resolve(args.n, config_file, section, "n", int),
        phi=_resolve(phi, config_file, section, "phi", float),
        shape=_resolve(args.shape, config_file, section, "shape", float),
        reps=_resolve(args.reps, config_file, section, "reps", int, 2000),
        alpha=_resolve(args.alpha, config_file, section, "alpha", float, 0.05),
        c_star=_resolve(args.c_star, config_file, section, "c_star", float),
        master_seed=_resolve_seed(args.seed, config_file, section),
    )
    rows = []
    for row in run_table(config):
        rows.append(row)
        if row.coefficient:
            label = f" {row.coefficient}"
        elif row.alpha_shape is not None:
            label = f" shape={row.alpha_shape:g}"
        else:
            label = ""
        print(
            f"table {row.table} n={row.n} phi={_fmt(row.phi)}{label}"
            + f": ci_u={_fmt(row.ci_u)} ci_wald={_fmt(row.ci_wald)} verdict={row.a5_verdict}"
        )
    out = args.out or f"table{args.table}_results.csv"
    write_results_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def _parse_range_flag(text):
    """--range known=R | marginal=R | residual | two-mean."""
    if text is None:
        return ("residual", None)
    head, _, tail = text.partition("=")
    if head in ("known", "marginal"):
        if not tail:
            raise ValueError(f"--range {head}=R needs a numeric range")
        return (head, float(tail))
    if head in ("residual", "two-mean") and not tail:
        return (head, None)
    raise ValueError("--range must be known=R, marginal=R, residual or two-mean")


def _bernstein_ci(summary, R, alpha):
    """Mean CI from the simple variance-adaptive tail with the U-variance
    plug-in Av(eps^2) = M^2/3 = R^2/12: solve the quadratic in tau at level
    alpha."""
    n = summary.n
    log_term = math.log(2.0 / alpha)
    M = R / 2.0
    w = 1.0 / n
    A = n * M * M / 3.0
    b = log_term * (2.0 / 3.0) * w * M
    half = 0.5 * (b + math.sqrt(b * b + 8.0 * log_term * w * w * A))
    return ConfidenceSet(
        lower=summary.mean - half,
        upper=summary.mean + half,
        level=1.0 - alpha,
        method="bernstein",
        range_source="known",
    )


def cmd_ci(args):
    config_file = _load_config(args.config)
    if not config_file.has_section("analysis"):
        config_file.add_section("analysis")
    alpha = _resolve(args.alpha, config_file, "analysis", "alpha", float, 0.05)
    method = _resolve(args.method, config_file, "analysis", "method", str, "u")
    range_flag = _resolve(args.range, config_file, "analysis", "range", str, None)
    column = _resolve(args.column, config_file, "analysis", "column", str, None)
    if column is None:
        raise ValueError("--column is required")
    values = load_columns(args.file, [column])[column]
    summary = summarize(values)

    source, given = _parse_range_flag(range_flag)
    if source == "known" or source == "marginal":
        R = given
    elif source == "two-mean":
        if summary.minimum < 0:
            raise ValueError("two-mean range needs nonnegative data")
        R = 2.0 * summary.mean
    else:
        R = summary.range
        if R == 0.0:
            warnings.warn("column is constant; the confidence set is degenerate")

    if method == "ratio":
        result = ci_mean(summary, alpha=alpha, method="ratio")
    elif method in ("hoeffding", "u"):
        full = {"u": "u_sharp", "hoeffding": "hoeffding"}[method]
        if R == 0.0:
            result = ConfidenceSet(summary.mean, summary.mean, 1 - alpha, full, "known")
        else:
            result = ci_mean(summary, R=R, alpha=alpha, method=full)
    elif method == "bernstein":
        result = _bernstein_ci(summary, R, alpha)
    else:
        raise ValueError("--method must be hoeffding, u, bernstein or ratio")

    print(
        f"{result.level:.0%} confidence set for mean({column}): "
        f"[{result.lower:.6g}, {result.upper:.6g}] "
        f"(method={result.method}, range_source={result.range_source}, n={summary.n})"
    )
    payload = json.dumps(asdict(result), sort_keys=True)
    if args.out:
        with open(args.out, "w") as handle:
            handle.write(payload + "\n")
    else:
        print(payload)
    return 0


def _fit_frame(args, config_file):
    """Resolve the (response, design, columns) triple for fit/diagnose."""
    if args.climate:
        rows = climate.load_climate_csv(args.file)
        frame = climate.climate_prepare(rows, unit=args.climate)
        return frame.response, frame.design, frame.columns
    response = _resolve(args.response, config_file, "analysis", "response", str, None)
    covs = _resolve(args.covariates, config_file, "analysis", "covariates", str, None)
    if response is None or covs is None:
        raise ValueError("--response and --covariates are required (or use --climate)")
    names = [c.strip() for c in covs.split(",") if c.strip()]
    data = load_columns(args.file, [response] + names)
    design = np.column_stack([np.ones(data[response].shape[0])] + [data[c] for c in names])
    return data[response], design, tuple(["intercept"] + names)


def _coefficient_sets(fit, columns, alpha, source, given):
    rows = []
    for s, name in enumerate(columns):
        if source == "residual":
            rhat = residual_range(fit, s)
            cs = ci_linear(
                fit.coefficients[s], fit.weight_rows[s], alpha=alpha,
                range_source="residual_range", rhat=rhat, n=fit.n,
            )
        elif source == "known":
            cs = ci_linear(
                fit.coefficients[s], fit.weight_rows[s], alpha=alpha,
                range_source="known", ranges=given,
            )
        elif source == "marginal":
            cs = ci_linear(
                fit.coefficients[s], fit.weight_rows[s], alpha=alpha,
                range_source="marginal_range", ranges=given,
            )
        else:  # two-mean
            cs = ci_linear(
                fit.coefficients[s], fit.weight_rows[s], alpha=alpha,
                range_source="two_mean", fitted=fit.fitted,
            )
        rows.append(
            CoefficientRow(
                name=name,
                estimate=float(fit.coefficients[s]),
                ci_lower=cs.lower,
                ci_upper=cs.upper,
                method=cs.method,
                range_source=cs.range_source,
            )
        )
    return tuple(rows)


def cmd_fit(args):
    config_file = _load_config(args.config)
    if not config_file.has_section("analysis"):
        config_file.add_section("analysis")
    alpha = _resolve(args.alpha, config_file, "analysis", "alpha", float, 0.05)
    range_flag = _resolve(args.range, config_file, "analysis", "range", str, None)
    source, given = _parse_range_flag(range_flag)

    y, X, columns = _fit_frame(args, config_file)
    fit = ols_fit(X, y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # zero-noise fixtures have zero spread
        coef_rows = _coefficient_sets(fit, columns, alpha, source, given)
        diagnostics = tuple(
            _series_diagnostics(name, fit.weight_rows[s] * fit.residuals)
            for s, name in enumerate(columns)
            if float(np.ptp(fit.weight_rows[s] * fit.residuals)) > 0.0
        )
    if not diagnostics:
        # Degenerate (zero-residual) fits still need a diagnostics block.
        diagnostics = tuple([_zero_residual_diagnostics(columns[0], fit.n)])

    report = AnalysisReport(
        model=f"least squares: {columns[0]} + " + " + ".join(columns[1:]),
        coefficients=coef_rows,
        diagnostics=diagnostics,
        provenance={
            "input_sha256": _file_sha256(args.file),
            "seed": None,
            "config": {"alpha": alpha, "range": range_flag or "residual", "n": fit.n},
        },
    )

    print(f"model: {report.model}  (n={fit.n})")
    for row in report.coefficients:
        print(
            f"  {row.name:>16}: {row.estimate: .6g}  "
            f"[{row.ci_lower:.6g}, {row.ci_upper:.6g}]  ({row.range_source})"
        )
    for diag in report.diagnostics:
        print(
            f"  {diag.name:>16}: U={'yes' if diag.is_u else 'NO'} "
            f"phi_hat={diag.phi_hat_short:.4f}@{diag.lags_short} / "
            f"{diag.phi_hat_long:.4f}@{diag.lags_long}  "
            f"mu*phi bound={diag.rule_of_thumb_bound:.3g}"
        )

    if args.partitions:
        counts = [int(k) for k in args.partitions.split(",")]
        parts = [sequential_partition(fit.n, k) for k in counts]
        for s, name in enumerate(columns):
            comparison = partition_compare(fit, parts, s)
            chosen = counts[comparison.recommended]
            tie = " (tie)" if comparison.is_tie else ""
            print(f"  partition check {name}: recommend K={chosen}{tie}")
        wald = gee_exchangeable_wald(X, y, parts[0], alpha=alpha, s=len(columns) - 1)
        print(
            f"  comparator Wald ({columns[-1]}, K={counts[0]}): "
            f"[{wald.lower:.6g}, {wald.upper:.6g}]"
        )

    if args.screen:
        _print_screen(args.screen, y, X, columns)

    if args.out:
        with open(args.out, "w") as handle:
            handle.write(report.to_json() + "\n")
        print(f"wrote report to {args.out}")
    return 0


def _zero_residual_diagnostics(name, n):
    return SeriesDiagnostics(
        name=name,
        is_u=True,
        is_sub_u=True,
        expected_value=0.0,
        functional_average=0.0,
        tolerance=0.0,
        rule_of_thumb_bound=0.0,
        phi_hat_short=0.0,
        phi_hat_long=0.0,
        lags_short=0,
        lags_long=0,
        stationarity_note="residuals are exactly zero",
    )


def _print_screen(screen_column, y, X, columns):
    """The with/without covariate-retention comparison (reported, not automated)."""
    if screen_column not in columns:
        print(f"  retention screen skipped: {screen_column!r} is not in the model")
        return
    drop = columns.index(screen_column)
    keep = [j for j in range(len(columns)) if j != drop]
    reduced = ols_fit(X[:, keep], y)
    full = ols_fit(X, y)
    print(f"  retention screen for {screen_column}:")
    for pos, j in enumerate(keep):
        if columns[j] == "intercept":
            continue
        with_ = full.coefficients[j]
        without = reduced.coefficients[pos]
        change = abs(with_ - without)
        rel = change / abs(with_) if with_ != 0 else float("inf")
        print(
            f"    {columns[j]:>16}: with={with_: .6g} without={without: .6g} "
            f"|change|={change:.3g} ({rel:.1%})"
        )


def cmd_diagnose(args):
    config_file = _load_config(args.config)
    if not config_file.has_section("analysis"):
        config_file.add_section("analysis")
    column = _resolve(args.column, config_file, "analysis", "column", str, None)

    if column is not None:
        series = load_columns(args.file, [column])[column]
        name = column
    else:
        y, X, columns = _fit_frame(args, config_file)
        if args.coefficient is None:
            raise ValueError("--coefficient is required when diagnosing a fit")
        if args.coefficient not in columns:
            raise ValueError(f"unknown coefficient {args.coefficient!r}")
        fit = ols_fit(X, y)
        s = columns.index(args.coefficient)
        series = fit.weight_rows[s] * fit.residuals
        name = f"weighted residuals: {args.coefficient}"

    diag = _series_diagnostics(name, series)
    print(f"series: {name}  (n={series.shape[0]})")
    print(
        f"  U-class: is_u={diag.is_u} is_sub_u={diag.is_sub_u} "
        f"(E={diag.expected_value:.6g}, Av={diag.functional_average:.6g}, "
        f"tol={diag.tolerance:.3g})"
    )
    print(f"  phi_hat: {diag.phi_hat_short:.4f} at L={diag.lags_short}, "
          f"{diag.phi_hat_long:.4f} at L={diag.lags_long}")
    print(f"  rule-of-thumb mu*phi bound: {diag.rule_of_thumb_bound:.4g}")
    print(f"  stationarity: {diag.stationarity_note}")

    if args.out:
        _write_plot_csvs(args.out, series, diag)
        print(f"wrote plot-ready CSVs with prefix {args.out}")
    return 0


def _write_plot_csvs(prefix, series, diag):
    z = np.asarray(series, dtype=float)
    n = z.shape[0]
    counts, edges = np.histogram(z, bins="auto")
    with open(f"{prefix}_hist.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin_left", "bin_right", "count"])
        for i, count in enumerate(counts):
            writer.writerow([_fmt(float(edges[i])), _fmt(float(edges[i + 1])), count])
    order = np.sort(z)
    with open(f"{prefix}_ecdf.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["value", "fraction"])
        for i, value in enumerate(order, start=1):
            writer.writerow([_fmt(float(value)), _fmt(i / n)])
    with open(f"{prefix}_acf.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["lag", "r", "window"])
        for window, lags in (("short", diag.lags_short), ("long", diag.lags_long)):
            report = acf_phi_hat(z, lags)
            for lag, r in enumerate(report.acf, start=1):
                writer.writerow([lag, _fmt(float(r)), window])


def cmd_fetch_climate(args):
    try:
        rows = climate.fetch_climate(
            args.temp_url, args.co2_url, args.index_url,
            start=tuple(int(x) for x in args.start.split("-")),
            end=tuple(int(x) for x in args.end.split("-")),
        )
    except urllib.error.URLError as exc:
        print(f"network failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"network failure: {exc}", file=sys.stderr)
        return 2
    climate.write_climate_csv(rows, args.out)
    print(f"wrote {len(rows)} monthly rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="densum",
        description="Dependence-robust confidence sets for bounded data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a coverage experiment grid")
    sim.add_argument("--table", type=int, choices=(1, 2, 3), required=True)
    sim.add_argument("--n", type=int)
    sim.add_argument("--phi", type=float)
    sim.add_argument("--phi-star", dest="phi_star", type=float)
    sim.add_argument("--shape", type=float)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--reps", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--c-star", dest="c_star", type=float)
    sim.add_argument("--out")
    sim.add_argument("-c", "--config")
    sim.set_defaults(func=cmd_simulate)

    ci = sub.add_parser("ci", help="confidence set for a column mean")
    ci.add_argument("file")
    ci.add_argument("--column")
    ci.add_argument("--alpha", type=float)
    ci.add_argument("--method", choices=("hoeffding", "u", "bernstein", "ratio"))
    ci.add_argument("--range", help="known=R | marginal=R | residual | two-mean")
    ci.add_argument("--out")
    ci.add_argument("-c", "--config")
    ci.set_defaults(func=cmd_ci)

    fit = sub.add_parser("fit", help="least squares with dependence-robust sets")
    fit.add_argument("file")
    fit.add_argument("--response")
    fit.add_argument("--covariates", help="comma-separated column names")
    fit.add_argument("--climate", choices=("monthly", "yearly"),
                     help="treat the input as a climate CSV and build the lagged frame")
    fit.add_argument("--alpha", type=float)
    fit.add_argument("--range", help="known=R | marginal=R | residual | two-mean")
    fit.add_argument("--partitions", help="comma-separated cluster counts to compare")
    fit.add_argument("--screen", help="covariate to evaluate for retention")
    fit.add_argument("--out", help="write the JSON report here")
    fit.add_argument("-c", "--config")
    fit.set_defaults(func=cmd_fit)

    diag = sub.add_parser("diagnose", help="U-class and dependence diagnostics")
    diag.add_argument("file")
    diag.add_argument("--column")
    diag.add_argument("--response")
    diag.add_argument("--covariates")
    diag.add_argument("--climate", choices=("monthly", "yearly"))
    diag.add_argument("--coefficient", help="diagnose this coefficient's weighted residuals")
    diag.add_argument("--out", help="prefix for plot-ready CSVs")
    diag.add_argument("-c", "--config")
    diag.set_defaults(func=cmd_diagnose)

    fetch = sub.add_parser("fetch-climate", help="download and normalize the public series")
    fetch.add_argument("--temp-url", default=climate.DEFAULT_TEMP_URL)
    fetch.add_argument("--co2-url", default=climate.DEFAULT_CO2_URL)
    fetch.add_argument("--index-url")
    fetch.add_argument("--start", default="1979-1")
    fetch.add_argument("--end", default="2022-12")
    fetch.add_argument("--out", default="climate.csv")
    fetch.set_defaults(func=cmd_fetch_climate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
