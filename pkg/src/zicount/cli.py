"""Command-line interface: ``zicount {fit,gof,scan,simulate}``.

Exit codes: 0 success, 2 usage error, 3 unreadable or malformed input,
4 numerical failure (non-convergence, failed fit).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import FAMILIES, make_baseline
from .fisher import BoundaryError, SingularFisherError, confidence_intervals
from .fit import FitOptions, FitResult, fit_model
from .gof import DEFAULT_BOOTSTRAP, bootstrap_ks_pvalue, child_rng, child_seed, default_jobs
from .tables import CountTable, TableParseError, format_table, read_table
from .zero_models import MODEL_CODES, Kind, ZeroModifiedModel, model_label, parse_model_code

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4

FEATURES_CSV = "scan_features.csv"
REPORT_JSON = "scan_report.json"
SUMMARY_TXT = "scan_summary.txt"


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# argument types


def _uint64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _probability(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _model_list(text: str) -> list[str]:
    codes = [c.strip().lower() for c in text.split(",") if c.strip()]
    if not codes:
        raise argparse.ArgumentTypeError("empty model list")
    for code in codes:
        if code not in MODEL_CODES:
            raise argparse.ArgumentTypeError(
                f"unknown model {code!r}; choose from {','.join(MODEL_CODES)}")
    # report order follows the canonical model order, duplicates dropped
    return [c for c in MODEL_CODES if c in codes]


def _params(text: str) -> dict[str, float]:
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{value!r} is not a number") from None
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "nan" if math.isnan(x) else format(x, ".10g")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# shared helpers


def _options(args) -> FitOptions:
    return FitOptions(tol=args.tol, max_iter=args.max_iter)


def _load(path) -> CountTable:
    try:
        return read_table(path)
    except OSError as exc:
        raise TableParseError(f"cannot read {path}: {exc.strerror or exc}") from None


def _select_row(table: CountTable, feature: str | None) -> tuple[str, np.ndarray]:
    if feature is None:
        if table.n_features != 1:
            raise UsageError(
                f"table has {table.n_features} features; choose one with --feature")
        return table.feature_ids[0], table.counts[0]
    try:
        return feature, table.row(feature)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None


def _fit_or_fail(family, kind, values, opts) -> FitResult:
    try:
        return fit_model(family, kind, values, opts)
    except (ValueError, ArithmeticError) as exc:
        raise NumericFailure(f"fit of {model_label(family, kind)} failed: {exc}") from None


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# ---------------------------------------------------------------------------
# fit


def _interval_rows(fit: FitResult, level: float):
    try:
        return confidence_intervals(fit, level), None
    except (BoundaryError, SingularFisherError) as exc:
        return None, str(exc)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return None, f"information matrix unavailable: {exc}"


def render_fit(feature: str, fit: FitResult, level: float, fmt: str) -> str:
    intervals, note = _interval_rows(fit, level)
    if fmt == "json":
        d = {"feature": feature, **fit.to_dict(), "level": level}
        d["intervals"] = None if intervals is None else [
            {"parameter": ci.name, "estimate": ci.estimate, "se": ci.se,
             "lower": ci.lower, "upper": ci.upper} for ci in intervals]
        d["interval_note"] = note
        return _dump_json(d)
    lines = [
        f"feature: {feature}",
        f"model: {fit.model.label}",
        f"n: {fit.n}  nonzero: {fit.m}",
        f"case: {fit.case.value}",
        f"converged: {'yes' if fit.converged else 'no'} "
        f"(iterations {fit.iterations}, gradient norm {fit.grad_norm:.3g})",
        f"loglik: {_fmt(fit.loglik)}",
    ]
    if fit.multimodal:
        lines.append(f"warning: starts disagree by {fit.start_spread:.3g} in loglik")
    if fit.family == "bb":
        lines.append(f"note: cdf and sampling use n rounded to {fit.theta.trials}")
    pct = f"{100 * level:g}%"
    lines.append("")
    lines.append(f"{'parameter':<10} {'estimate':>14} {'se':>14} {pct + ' lower':>14} {pct + ' upper':>14}")
    est = fit.estimates()
    by_name = {ci.name: ci for ci in intervals or []}
    for name, value in est.items():
        ci = by_name.get(name)
        cells = [_fmt(ci.se), _fmt(ci.lower), _fmt(ci.upper)] if ci else ["n/a"] * 3
        lines.append(f"{name:<10} {_fmt(value):>14} " + " ".join(f"{c:>14}" for c in cells))
    if note:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    table = _load(args.input)
    feature, values = _select_row(table, args.feature)
    fit = _fit_or_fail(args.family, args.kind, values, _options(args))
    _write(render_fit(feature, fit, args.level, args.format), args.out)
    if not fit.converged:
        print(f"error: optimiser did not converge: {fit.message}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# gof


def render_gof(feature: str, report, fmt: str) -> str:
    if fmt == "json":
        return _dump_json({"feature": feature, **report.to_dict(),
                           "estimates": report.fit.estimates()})
    est = ", ".join(f"{k}={_fmt(v)}" for k, v in report.fit.estimates().items())
    return "\n".join([
        f"feature: {feature}",
        f"model: {report.fit.model.label}",
        f"estimates: {est}",
        f"D_n: {_fmt(report.d_n)}",
        f"p-value: {_fmt(report.p_value)}",
        f"bootstrap: {report.b} ({report.replicate_stats.size} successful)",
        f"seed: {report.seed}",
    ]) + "\n"


def cmd_gof(args) -> int:
    table = _load(args.input)
    feature, values = _select_row(table, args.feature)
    opts = _options(args)
    fit = _fit_or_fail(args.family, args.kind, values, opts)
    report = bootstrap_ks_pvalue(values, args.family, args.kind, b=args.bootstrap, seed=args.seed,
                                 opts=opts, jobs=args.jobs or default_jobs(), fit=fit)
    if report.replicate_stats.size == 0:
        raise NumericFailure("every bootstrap replicate failed to fit")
    _write(render_gof(feature, report, args.format), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# scan


@dataclass
class ScanRecord:
    feature_id: str
    model: str
    phi: float | None = None
    theta: dict = field(default_factory=dict)
    loglik: float = math.nan
    d_n: float = math.nan
    p_value: float = math.nan
    converged: bool = False
    error: str = ""

    def passes(self, alpha: float) -> bool:
        return bool(self.p_value > alpha)

    def to_dict(self, alpha: float) -> dict:
        return {
            "feature_id": self.feature_id,
            "model": self.model,
            "label": model_label(*parse_model_code(self.model)),
            "phi": self.phi,
            "theta": self.theta,
            "loglik": self.loglik,
            "d_n": self.d_n,
            "p_value": self.p_value,
            "converged": self.converged,
            "pass": self.passes(alpha),
            "error": self.error,
        }


@dataclass
class ScanReport:
    records: list
    models: list
    n_features: int
    alpha: float
    bootstrap: int
    seed: int

    def aggregate(self) -> list[dict]:
        rows = []
        for code in self.models:
            passing = sum(r.passes(self.alpha) for r in self.records if r.model == code)
            rows.append({
                "model": code,
                "label": model_label(*parse_model_code(code)),
                "passing": passing,
                "percent": 100.0 * passing / self.n_features if self.n_features else 0.0,
            })
        return rows

    def summary_text(self) -> str:
        agg = self.aggregate()
        width = max(len("Distribution"), *(len(r["label"]) for r in agg))
        lines = [
            f"Features with KS p-value > {self.alpha:g} "
            f"(out of {self.n_features}; bootstrap {self.bootstrap}, seed {self.seed})",
            f"{'Distribution':<{width}}  {'Number':>6}  {'Percentage':>10}",
        ]
        for r in agg:
            lines.append(f"{r['label']:<{width}}  {r['passing']:>6}  {r['percent']:>9.1f}%")
        return "\n".join(lines) + "\n"

    def features_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["feature_id", "model", "phi", "theta", "loglik", "d_n", "p_value",
                         "converged", "pass", "error"])
        for r in self.records:
            theta = ";".join(f"{k}={_fmt(v)}" for k, v in r.theta.items())
            writer.writerow([r.feature_id, r.model, _fmt(r.phi), theta, _fmt(r.loglik),
                             _fmt(r.d_n), _fmt(r.p_value), int(r.converged),
                             int(r.passes(self.alpha)), r.error])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
            "n_features": self.n_features,
            "models": self.models,
            "aggregate": self.aggregate(),
            "records": [r.to_dict(self.alpha) for r in self.records],
        }


_MODEL_INDEX = {code: i for i, code in enumerate(MODEL_CODES)}


def scan_feature(task) -> list[ScanRecord]:
    """All requested models on one feature row; seeds depend only on indices."""
    index, feature_id, values, models, bootstrap, seed, opts = task
    records = []
    for code in models:
        family, kind = parse_model_code(code)
        rec = ScanRecord(feature_id, code)
        try:
            fit = fit_model(family, kind, values, opts)
            rec.phi = None if kind is Kind.NONE else fit.phi
            rec.theta = fit.theta.as_dict()
            rec.loglik = fit.loglik
            rec.converged = fit.converged
            report = bootstrap_ks_pvalue(values, family, kind, b=bootstrap,
                                         seed=child_seed(seed, index, _MODEL_INDEX[code]),
                                         opts=opts, jobs=1, fit=fit)
            rec.d_n = report.d_n
            if report.replicate_stats.size:
                rec.p_value = report.p_value
            else:
                rec.error = "every bootstrap replicate failed"
        except (ValueError, ArithmeticError) as exc:
            rec.error = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    return records


def run_scan(table: CountTable, models, alpha=0.05, bootstrap=DEFAULT_BOOTSTRAP, seed=0,
             opts: FitOptions | None = None, jobs: int = 1) -> ScanReport:
    opts = opts or FitOptions()
    tasks = [(i, fid, np.asarray(table.counts[i]), list(models), bootstrap, seed, opts)
             for i, fid in enumerate(table.feature_ids)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            per_feature = list(pool.map(scan_feature, tasks))
    else:
        per_feature = [scan_feature(t) for t in tasks]
    records = [r for recs in per_feature for r in recs]
    return ScanReport(records, list(models), table.n_features, alpha, bootstrap, seed)


def cmd_scan(args) -> int:
    table = _load(args.input)
    report = run_scan(table, args.models, args.alpha, args.bootstrap, args.seed,
                      _options(args), args.jobs or default_jobs())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / FEATURES_CSV).write_text(report.features_csv())
    (out / REPORT_JSON).write_text(_dump_json(report.to_dict()))
    summary = report.summary_text()
    (out / SUMMARY_TXT).write_text(summary)
    sys.stdout.write(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def simulate_table(family: str, kind, params: dict, phi: float, n: int, features: int,
                   seed: int) -> CountTable:
    baseline = make_baseline(family, **params)
    kind = Kind.parse(kind)
    model = ZeroModifiedModel(baseline, kind, 0.0 if kind is Kind.NONE else phi)
    counts = np.vstack([model.sample(n, child_rng(seed, i)) for i in range(features)])
    width = len(str(max(n, features)))
    return CountTable(
        [f"F{i + 1:0{width}d}" for i in range(features)],
        [f"S{j + 1:0{width}d}" for j in range(n)],
        counts,
    )


def cmd_simulate(args) -> int:
    if args.kind != "none" and args.phi is None:
        raise UsageError("--phi is required for zi and hurdle models")
    if args.kind == "none" and args.phi not in (None, 0.0):
        raise UsageError("--phi only applies to zi and hurdle models")
    try:
        table = simulate_table(args.family, args.kind, args.params, args.phi or 0.0,
                               args.n, args.features, args.seed)
    except TypeError as exc:
        raise UsageError(f"bad parameters for {args.family}: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(format_table(table), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _phi(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("phi must lie in [0, 1]")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zicount",
        description="Fit zero-inflated and hurdle count models and test their fit.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_flags(p):
        p.add_argument("--family", required=True, choices=sorted(FAMILIES))
        p.add_argument("--kind", default="none", choices=[k.value for k in Kind])

    def fit_flags(p):
        p.add_argument("--max-iter", type=_positive_int, default=FitOptions.max_iter)
        p.add_argument("--tol", type=_positive_float, default=FitOptions.tol)

    def input_flags(p):
        p.add_argument("input", help="count table CSV (feature id column, sample id header)")
        p.add_argument("--feature", help="feature id to analyse (required for multi-row tables)")
        p.add_argument("--format", choices=["text", "json"], default="text")
        p.add_argument("--out", help="write the report here instead of stdout")

    def boot_flags(p):
        p.add_argument("--bootstrap", type=_positive_int, default=DEFAULT_BOOTSTRAP)
        p.add_argument("--seed", type=_uint64, default=0)
        p.add_argument("--jobs", type=_positive_int, default=None,
                       help="worker processes (default: available CPUs)")

    p = sub.add_parser("fit", help="maximum-likelihood fit with Wald intervals")
    input_flags(p)
    model_flags(p)
    fit_flags(p)
    p.add_argument("--level", type=_probability, default=0.95)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("gof", help="bootstrap Kolmogorov-Smirnov p-value")
    input_flags(p)
    model_flags(p)
    fit_flags(p)
    boot_flags(p)
    p.set_defaults(handler=cmd_gof)

    p = sub.add_parser("scan", help="fit and test many models on every feature")
    p.add_argument("input")
    p.add_argument("--models", type=_model_list, default=list(MODEL_CODES),
                   help="comma-separated model codes (default: all twelve)")
    p.add_argument("--alpha", type=_probability, default=0.05)
    p.add_argument("--out", required=True, help="output directory")
    fit_flags(p)
    boot_flags(p)
    p.set_defaults(handler=cmd_scan)

    p = sub.add_parser("simulate", help="write a synthetic count table")
    model_flags(p)
    p.add_argument("--params", type=_params, required=True,
                   help="baseline parameters, e.g. lambda=2 or r=1,p=0.4")
    p.add_argument("--phi", type=_phi, default=None)
    p.add_argument("--n", type=_positive_int, required=True, help="samples per feature")
    p.add_argument("--features", type=_positive_int, default=1)
    p.add_argument("--seed", type=_uint64, default=0)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"zicount {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TableParseError as exc:
        print(f"error: {args.input}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
