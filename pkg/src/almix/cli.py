"""Command-line front end: configure, run, and report studies.

Configs are flat ``key = value`` text with dotted sections, e.g.::

    study = optimize
    problem = example1
    methods = one-shot, arsd, ei, lcb, hybrid
    n0 = 9
    budgets = 10, 11, 12, 13, 14, 15
    replications = 50
    seed = 20260801
    method.arsd.rho = 2.0

Unknown keys are rejected.  Exit codes: 0 success, 1 runtime failure,
2 configuration error.  ``ALMIX_OUT`` sets the default output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .benchmarks import (
    CONTOUR_METHODS,
    OPTIMIZE_METHODS,
    PREDICT_METHODS,
    ReplicationReport,
    StudyPlan,
    get_problem,
    replicate,
)
from .emulator import FitOptions

SCHEMA_SUMMARY = "# almix-csv v1 study-summary"
SCHEMA_REPORT = "# almix-csv v1 study-report"
SCHEMA_TABLE = "# almix-csv v1 study-table"
SCHEMA_SEEDS = "# almix-csv v1 rmse-by-seed"
SCHEMA_TIMINGS = "# almix-csv v1 timings"

_METHOD_PARAM_KEYS = {
    "rho": float,
    "alpha_conf": float,
    "alpha_eps": float,
    "n_contours": int,
    "probe_per_dim": int,
    "uct_c": float,
    "alpha_rank": float,
    "alpha_schedule": str,
}

_STUDY_METHODS = {
    "optimize": OPTIMIZE_METHODS,
    "contour": CONTOUR_METHODS,
    "predict": PREDICT_METHODS,
}


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class StudyConfig:
    """Parsed study configuration; round-trips losslessly through text."""

    study: str
    problem: str
    methods: tuple[str, ...]
    n0: int
    budgets: tuple[int, ...]
    replications: int
    seed: int
    n_per_combo: int = 100
    contour_a: float | None = None
    contour_eps: float | None = None
    contour_delta: float | None = None
    fit_restarts: int = 5
    fit_max_iters: int = 200
    fit_jitter_rel: float = 1e-8
    fit_tol: float = 1e-9
    out: str | None = None
    jobs: int = 1
    method_params: tuple[tuple[str, tuple[tuple[str, float | int | str], ...]], ...] = ()

    def validate(self) -> None:
        if self.study not in _STUDY_METHODS:
            raise ConfigError(f"unknown study {self.study!r}", key="study")
        try:
            get_problem(self.problem)
        except KeyError as err:
            raise ConfigError(str(err), key="problem") from err
        allowed = _STUDY_METHODS[self.study]
        for m in self.methods:
            if m not in allowed:
                raise ConfigError(
                    f"method {m!r} not valid for study {self.study!r} (allowed: {', '.join(allowed)})",
                    key="methods",
                )
        if self.replications < 1:
            raise ConfigError("replications must be >= 1", key="replications")
        if not self.budgets or any(b < self.n0 for b in self.budgets):
            raise ConfigError("budgets must be non-empty and >= n0", key="budgets")
        if self.study == "contour":
            for name, value in (
                ("contour.a", self.contour_a),
                ("contour.eps", self.contour_eps),
                ("contour.delta", self.contour_delta),
            ):
                if value is None:
                    raise ConfigError(f"contour studies need {name}", key=name)
        for mname, kv in self.method_params:
            if mname not in _STUDY_METHODS[self.study]:
                raise ConfigError(f"method.{mname} parameters for a method not in this study", key=f"method.{mname}")
            for k, _ in kv:
                if k not in _METHOD_PARAM_KEYS:
                    raise ConfigError(f"unknown method parameter {k!r}", key=f"method.{mname}.{k}")

    def to_plan(self, trace_dir: str | None = None) -> StudyPlan:
        return StudyPlan(
            study=self.study,
            problem=self.problem,
            methods=self.methods,
            budgets=self.budgets,
            n0=self.n0,
            replications=self.replications,
            seed=self.seed,
            n_per_combo=self.n_per_combo,
            contour_a=self.contour_a,
            contour_eps=self.contour_eps,
            rcc_delta=self.contour_delta,
            fit_options=FitOptions(
                restarts=self.fit_restarts,
                max_iters=self.fit_max_iters,
                jitter_rel=self.fit_jitter_rel,
                tol=self.fit_tol,
            ),
            method_params=self.method_params,
            trace_dir=trace_dir,
        )


def _cast_int(v: str, key: str) -> int:
    try:
        return int(v)
    except ValueError as err:
        raise ConfigError(f"key {key!r} needs an integer, got {v!r}", key=key) from err


def _cast_float(v: str, key: str) -> float:
    try:
        return float(v)
    except ValueError as err:
        raise ConfigError(f"key {key!r} needs a number, got {v!r}", key=key) from err


def _cast_int_list(v: str, key: str) -> tuple[int, ...]:
    return tuple(_cast_int(part.strip(), key) for part in v.split(",") if part.strip())


def _cast_str_list(v: str, key: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in v.split(",") if part.strip())


_SCALAR_KEYS = {
    "study": ("study", str),
    "problem": ("problem", str),
    "methods": ("methods", _cast_str_list),
    "n0": ("n0", _cast_int),
    "budgets": ("budgets", _cast_int_list),
    "replications": ("replications", _cast_int),
    "seed": ("seed", _cast_int),
    "n_per_combo": ("n_per_combo", _cast_int),
    "contour.a": ("contour_a", _cast_float),
    "contour.eps": ("contour_eps", _cast_float),
    "contour.delta": ("contour_delta", _cast_float),
    "fit.restarts": ("fit_restarts", _cast_int),
    "fit.max_iters": ("fit_max_iters", _cast_int),
    "fit.jitter_rel": ("fit_jitter_rel", _cast_float),
    "fit.tol": ("fit_tol", _cast_float),
    "out": ("out", str),
    "jobs": ("jobs", _cast_int),
}

_REQUIRED_KEYS = ("study", "problem", "methods", "n0", "budgets", "replications", "seed")


def parse_config(text: str) -> StudyConfig:
    """Parse config text; every key must be known and required keys present."""
    values: dict = {}
    method_params: dict[str, dict] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _SCALAR_KEYS:
            attr, caster = _SCALAR_KEYS[key]
            values[attr] = caster(value, key) if caster is not str else value
        elif key.startswith("method."):
            parts = key.split(".")
            if len(parts) != 3:
                raise ConfigError(f"bad method key {key!r}", key=key)
            _, mname, pname = parts
            if pname not in _METHOD_PARAM_KEYS:
                raise ConfigError(f"unknown method parameter {pname!r}", key=key)
            caster = _METHOD_PARAM_KEYS[pname]
            method_params.setdefault(mname, {})[pname] = (
                value if caster is str else caster(value)
            )
        else:
            raise ConfigError(f"unknown config key {key!r}", key=key)
    missing = [k for k in _REQUIRED_KEYS if _SCALAR_KEYS[k][0] not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}", key=missing[0])
    values["method_params"] = tuple(
        (m, tuple(sorted(kv.items()))) for m, kv in sorted(method_params.items())
    )
    config = StudyConfig(**values)
    config.validate()
    return config


def config_to_text(config: StudyConfig) -> str:
    """Canonical text form; parse_config inverts it exactly."""
    lines = []
    for key, (attr, caster) in _SCALAR_KEYS.items():
        value = getattr(config, attr)
        if value is None:
            continue
        if isinstance(value, tuple):
            lines.append(f"{key} = {', '.join(str(v) for v in value)}")
        elif isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")
    for mname, kv in config.method_params:
        for pname, pvalue in kv:
            shown = repr(pvalue) if isinstance(pvalue, float) else pvalue
            lines.append(f"method.{mname}.{pname} = {shown}")
    return "\n".join(lines) + "\n"


def load_config(path) -> StudyConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config(text)


# --- artifact writing ---------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, float) and not math.isfinite(x):
        return "NA"
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_csv(path, schema: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(schema + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_summary_csv(report: ReplicationReport, path) -> None:
    """Deterministic per-cell statistics (no wall-clock columns)."""
    header = [
        "study",
        "problem",
        "method",
        "N",
        "replications",
        "failures",
        "metric_mean",
        "metric_sd",
        "metric_median",
        "rel_efficiency",
    ]
    rows = []
    for method in report.methods:
        n_fail = len(report.failures.get(method, []))
        for budget in report.budgets:
            rows.append(
                [
                    report.study,
                    report.problem,
                    method,
                    budget,
                    report.replications,
                    n_fail,
                    _nan_none(report.mean(method, budget)),
                    _nan_none(report.sd(method, budget)),
                    _nan_none(report.median(method, budget)),
                    report.relative_efficiency(method, budget),
                ]
            )
    _write_csv(path, SCHEMA_SUMMARY, header, rows)


def _nan_none(x: float) -> float | None:
    return None if (x is None or not math.isfinite(x)) else x


def write_report_csv(report: ReplicationReport, path) -> None:
    """Summary plus timing means: per-run totals and per-added-point rates."""
    header = [
        "study",
        "problem",
        "method",
        "N",
        "metric_mean",
        "metric_sd",
        "rel_efficiency",
        "fit_seconds_mean",
        "select_seconds_mean",
        "fit_seconds_per_point",
        "select_seconds_per_point",
    ]
    rows = []
    for method in report.methods:
        for budget in report.budgets:
            fit_s, sel_s = report.time_means(method, budget)
            added = max(budget - (0 if method == "one-shot" else report.n0), 1)
            rows.append(
                [
                    report.study,
                    report.problem,
                    method,
                    budget,
                    _nan_none(report.mean(method, budget)),
                    _nan_none(report.sd(method, budget)),
                    report.relative_efficiency(method, budget),
                    _nan_none(fit_s),
                    _nan_none(sel_s),
                    _nan_none(fit_s / added if math.isfinite(fit_s) else math.nan),
                    _nan_none(sel_s / added if math.isfinite(sel_s) else math.nan),
                ]
            )
    _write_csv(path, SCHEMA_REPORT, header, rows)


def write_table_csv(report: ReplicationReport, path) -> None:
    """Wide table: one row per budget, one mean-metric column per method."""
    header = ["N"] + list(report.methods)
    rows = []
    for budget in report.budgets:
        rows.append([budget] + [_nan_none(report.mean(m, budget)) for m in report.methods])
    _write_csv(path, SCHEMA_TABLE, header, rows)


def write_rmse_by_seed_csv(report: ReplicationReport, path) -> None:
    header = ["method", "N", "rep", "rmse", "log_rmse"]
    rows = []
    for method in report.methods:
        for budget in report.budgets:
            for rep, value in enumerate(report.values[(method, budget)]):
                logv = math.log(value) if value and math.isfinite(value) and value > 0 else None
                rows.append([method, budget, rep, _nan_none(value), logv])
    _write_csv(path, SCHEMA_SEEDS, header, rows)


def write_timings_csv(report: ReplicationReport, path) -> None:
    header = ["method", "N", "fit_seconds_mean", "select_seconds_mean", "total_seconds_mean"]
    rows = []
    for method in report.methods:
        for budget in report.budgets:
            fit_s, sel_s = report.time_means(method, budget)
            total = fit_s + sel_s if math.isfinite(fit_s) and math.isfinite(sel_s) else math.nan
            rows.append([method, budget, _nan_none(fit_s), _nan_none(sel_s), _nan_none(total)])
    _write_csv(path, SCHEMA_TIMINGS, header, rows)


def run_study(config: StudyConfig, out_dir: Path, jobs: int) -> ReplicationReport:
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_dir = out_dir / "traces"
    trace_dir.mkdir(exist_ok=True)
    plan = config.to_plan(trace_dir=str(trace_dir))
    report = replicate(plan, n_jobs=jobs)
    write_summary_csv(report, out_dir / "summary.csv")
    write_report_csv(report, out_dir / "report.csv")
    write_table_csv(report, out_dir / "table.csv")
    if config.study == "optimize":
        write_table_csv(report, out_dir / "plot_best_min.csv")
    elif config.study == "contour":
        write_table_csv(report, out_dir / "plot_mc0.csv")
    else:
        write_rmse_by_seed_csv(report, out_dir / "rmse_by_seed.csv")
        write_timings_csv(report, out_dir / "timings.csv")
    (out_dir / "config.cfg").write_text(config_to_text(config))
    return report


# --- report rendering ---------------------------------------------------------


def _read_summary(path: Path) -> list[dict]:
    text = path.read_text().splitlines()
    if not text or text[0] != SCHEMA_SUMMARY:
        return []
    reader = csv.DictReader(text[1:])
    return list(reader)


def render_reports(directory: Path) -> str:
    """Aligned plain-text tables for every summary CSV in a directory."""
    files = sorted(directory.glob("**/summary.csv"))
    blocks = []
    for path in files:
        rows = _read_summary(path)
        if not rows:
            continue
        study = rows[0]["study"]
        problem = rows[0]["problem"]
        methods = list(dict.fromkeys(r["method"] for r in rows))
        budgets = list(dict.fromkeys(r["N"] for r in rows))
        by_cell = {(r["method"], r["N"]): r for r in rows}
        show_eff = study == "contour"

        def cell(method, budget):
            r = by_cell.get((method, budget))
            if r is None:
                return "NA"
            mean = r["metric_mean"]
            if mean == "NA":
                return "NA"
            text = f"{float(mean):.4f}"
            if show_eff and method != "one-shot" and r["rel_efficiency"] != "NA":
                text += f"({float(r['rel_efficiency']):.3g})"
            return text

        header = ["N"] + methods
        table = [[b] + [cell(m, b) for m in methods] for b in budgets]
        widths = [max(len(str(row[j])) for row in [header] + table) for j in range(len(header))]
        lines = [f"== {study} / {problem} ({path.parent.name}) =="]
        lines.append("  ".join(str(h).rjust(w) for h, w in zip(header, widths)))
        for row in table:
            lines.append("  ".join(str(v).rjust(w) for v, w in zip(row, widths)))
        blocks.append("\n".join(lines))
    if not blocks:
        return ""
    return "\n\n".join(blocks) + "\n"


# --- entry point ----------------------------------------------------------------


def _error_record(kind: str, message: str, key: str | None = None) -> str:
    record = {"error": kind, "message": message}
    if key:
        record["key"] = key
    return json.dumps(record, sort_keys=True)


def _run_command(args) -> int:
    config = load_config(args.config)
    if config.study != args.study:
        raise ConfigError(
            f"config is a {config.study!r} study, invoked as {args.study!r}", key="study"
        )
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    out = args.out or config.out or os.environ.get("ALMIX_OUT")
    if out is None:
        raise ConfigError("no output directory: set --out, the out key, or ALMIX_OUT", key="out")
    jobs = args.jobs if args.jobs is not None else config.jobs
    config.validate()
    run_study(config, Path(out), jobs)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="almix",
        description="Adaptive-design studies on mixed-input benchmark functions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for study in ("optimize", "contour", "predict"):
        p = sub.add_parser(study, help=f"run a {study} study")
        p.add_argument("--config", required=True, help="path to a study config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=None, help="concurrent replication cells")
        p.set_defaults(study=study)
    p_report = sub.add_parser("report", help="render result tables from a directory")
    p_report.add_argument("results_dir", help="directory holding study outputs")

    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            text = render_reports(Path(args.results_dir))
            if not text:
                print(_error_record("runtime", "no results found"), file=sys.stderr)
                return 1
            sys.stdout.write(text)
            return 0
        return _run_command(args)
    except ConfigError as err:
        print(_error_record("config", str(err), err.key), file=sys.stderr)
        return 2
    except Exception as err:  # runtime failures get a machine-readable record
        print(_error_record("runtime", f"{type(err).__name__}: {err}"), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
