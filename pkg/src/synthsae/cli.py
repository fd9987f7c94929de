"""Command-line entry point.

Exit codes: 0 success, 1 data or model error, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from . import __version__
from .data_model import DEFAULT_AREAS, PRESETS, DataError, get_spec
from .direct_est import Grouping, direct_table, to_csv_rows
from .ingest import (
    IngestReport,
    ingest_area_aux,
    ingest_population,
    ingest_survey,
    write_area_aux,
    write_population,
    write_survey,
)
from .jackknife import Estimator, jackknife_replicates, jackknife_variance
from .model_select import compare_models
from .pipeline import benchmark_json, estimate
from .simgen import SimConfig, draw_sample, run_simulation

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _emit_report(report: IngestReport, args, label: str) -> None:
    text = report.to_json()
    if getattr(args, "report", None):
        path = Path(args.report)
        if label:
            path = path.with_name(f"{path.stem}.{label}{path.suffix}") if getattr(args, "_multi", False) else path
        _atomic_write(path, text + "\n")
    else:
        print(text, file=sys.stderr)


def _check_paths(paths: Sequence[str | None]) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise DataError(f"input file not found: {p}")


def _load_wave(args, survey_path: str, wave: int | None = None, label: str = "", areas=DEFAULT_AREAS):
    ds, report = ingest_survey(
        survey_path, wave, areas=areas,
        positive_codes=args.positive_codes.split(",") if args.positive_codes else None,
    )
    _emit_report(report, args, label)
    return ds


# ---------------------------------------------------------------- commands


def cmd_direct(args) -> int:
    _check_paths([args.survey])
    ds = _load_wave(args, args.survey, args.wave)
    areas = DEFAULT_AREAS if args.grouping == "by_area" else None
    rows = to_csv_rows(direct_table(ds, args.grouping, areas), percent=args.percent)
    _atomic_write(Path(args.out) / "direct.csv", _csv_text(rows))
    return EXIT_OK


def _estimation_inputs(args):
    _check_paths([args.survey, args.population, args.aux])
    aux = ingest_area_aux(args.aux)
    pop = ingest_population(args.population)
    ds = _load_wave(args, args.survey, args.wave, areas=tuple(sorted(aux)))
    return ds, pop, aux, get_spec(args.model)


def cmd_estimate(args) -> int:
    ds, pop, aux, spec = _estimation_inputs(args)
    table = estimate(
        ds, pop, aux, spec,
        estimator=args.estimator, with_jackknife=not args.no_jackknife, ridge_fallback=args.ridge,
    )
    out = Path(args.out)
    _atomic_write(out / "estimates.csv", _csv_text(table.csv_rows(percent=args.percent)))
    _atomic_write(out / "fit.json", table.fit.to_json())
    if table.benchmark is not None:
        _atomic_write(out / "benchmark.json", json.dumps(benchmark_json(table), indent=2) + "\n")
    tidy = [["wave", "area_id", "estimator", "value", "error"]]
    for r in [*table.rows, table.national]:
        tidy.append([ds.wave_id, r.area_id, "direct", _num(r.direct), _num(r.direct_se)])
        tidy.append([ds.wave_id, r.area_id, "synthetic", _num(r.synthetic),
                     _num(r.jackknife_std) if table.estimator is Estimator.SYNTHETIC else ""])
        if r.benchmarked is not None:
            tidy.append([ds.wave_id, r.area_id, "benchmarked", _num(r.benchmarked), _num(r.jackknife_std)])
    _atomic_write(out / "plot_data.csv", _csv_text(tidy))
    return EXIT_OK


def _num(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def cmd_jackknife(args) -> int:
    ds, pop, aux, spec = _estimation_inputs(args)
    mat = jackknife_replicates(ds, pop, aux, spec, args.estimator, ridge_fallback=args.ridge)
    rows = [["area_id", "point", "variance", "std", "m_b"]]
    for i, a in enumerate(mat.area_ids):
        v, s = jackknife_variance(mat.replicates[:, i])
        rows.append([a, _num(mat.point[i]), _num(v), _num(s), len(mat.batch_ids)])
    v, s = jackknife_variance(mat.national_replicates)
    rows.append(["NATIONAL", _num(mat.national_point), _num(v), _num(s), len(mat.batch_ids)])
    out = Path(args.out)
    _atomic_write(out / "jackknife.csv", _csv_text(rows))
    if args.replicates:
        rep = [["area_id", *mat.batch_ids]]
        for i, a in enumerate(mat.area_ids):
            rep.append([a, *(_num(x) for x in mat.replicates[:, i])])
        _atomic_write(out / "replicates.csv", _csv_text(rep))
    return EXIT_OK


def cmd_select(args) -> int:
    surveys = args.survey
    auxes = args.aux
    if len(auxes) not in (1, len(surveys)):
        raise UsageError("give one --aux file, or one per --survey file")
    _check_paths([*surveys, *auxes])
    args._multi = len(surveys) > 1
    waves = []
    for k, path in enumerate(surveys):
        aux = ingest_area_aux(auxes[k] if len(auxes) > 1 else auxes[0])
        ds = _load_wave(args, path, None, label=f"wave{k + 1}", areas=tuple(sorted(aux)))
        waves.append((ds, aux))
    # ';' separates custom column lists, which themselves contain commas
    sep = ";" if ";" in args.models else ","
    specs = [get_spec(m) for m in args.models.split(sep)]
    sel = compare_models(waves, specs, ridge_fallback=args.ridge)
    rows = [["model", "0%", "25%", "50%", "75%", "100%", "mean"]]
    for r in sel.rows:
        rows.append([r.model_name, *(_num(q) for q in r.quantiles), _num(r.mean)])
    out = Path(args.out)
    _atomic_write(out / "criterion.csv", _csv_text(rows))
    _atomic_write(out / "selected.txt", sel.best_by_mean + "\n")
    if args.per_wave:
        wave_ids = list(sel.rows[0].per_wave_C)
        mat = [["wave", *(r.model_name for r in sel.rows)]]
        for w in wave_ids:
            mat.append([w, *(_num(r.per_wave_C[w]) for r in sel.rows)])
        _atomic_write(out / "criterion_per_wave.csv", _csv_text(mat))
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.replicates < 1:
        raise UsageError("--replicates must be at least 1")
    if args.config_file:
        _check_paths([args.config_file])
        config = SimConfig.from_file(args.config_file)
    else:
        config = SimConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    spec = get_spec(args.model)
    res = run_simulation(
        config, args.replicates, spec,
        estimator=args.estimator, with_jackknife=not args.no_jackknife, ridge_fallback=True,
    )
    out = Path(args.out)
    for name, writer in (
        ("population.csv", lambda fh: write_population(res.population.pop, fh)),
        ("area_aux.csv", lambda fh: write_area_aux(res.population.aux, res.population.pop, fh)),
        ("survey.csv", lambda fh: write_survey(draw_sample(res.population, config, 0), fh)),
    ):
        buf = io.StringIO()
        writer(buf)
        _atomic_write(out / name, buf.getvalue())
    truth = [["area_id", "true_mean"]]
    truth += [[a, _num(v)] for a, v in zip(res.area_ids, res.population.truth.area_means)]
    _atomic_write(out / "truth.csv", _csv_text(truth))
    metrics = [["replicate", "tercile", "estimator", "n_areas", "coverage", "mse", "mae"]]
    for r, score in enumerate(res.scores):
        for s in score.summary:
            metrics.append([r, s["tercile"], s["estimator"], s["n_areas"], s["coverage"], _num(s["mse"]), _num(s["mae"])])
    _atomic_write(out / "metrics.csv", _csv_text(metrics))
    summary = [["estimator", "tercile", "mse", "coverage"]]
    for s in res.summary():
        summary.append([s["estimator"], s["tercile"], _num(s["mse"]), _num(s["coverage"])])
    _atomic_write(out / "summary.csv", _csv_text(summary))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--report", help="write the ingest report JSON here instead of stderr")
    p.add_argument("--positive-codes", help="comma-separated outcome codes recoded to 1")


def _add_estimation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--survey", required=True)
    p.add_argument("--population", required=True)
    p.add_argument("--aux", required=True)
    p.add_argument("--wave", type=int)
    p.add_argument("--model", default="M2", help="preset M1..M7 or comma-separated columns")
    p.add_argument("--estimator", choices=[e.value for e in Estimator], default="benchmarked")
    p.add_argument("--ridge", action="store_true", help="ridge fallback for separated fits")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synthsae", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="INI file whose [synthsae] section sets flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("direct", help="direct survey-weighted estimates")
    _add_common(p)
    p.add_argument("--survey", required=True)
    p.add_argument("--wave", type=int)
    p.add_argument("--grouping", choices=[g.value for g in Grouping], default="by_area")
    p.add_argument("--percent", action="store_true")
    p.set_defaults(func=cmd_direct)

    p = sub.add_parser("estimate", help="direct, synthetic and benchmarked area estimates")
    _add_common(p)
    _add_estimation(p)
    p.add_argument("--percent", action="store_true")
    p.add_argument("--no-jackknife", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("jackknife", help="delete-a-batch jackknife variances")
    _add_common(p)
    _add_estimation(p)
    p.add_argument("--replicates", action="store_true", help="also write the replicate matrix")
    p.set_defaults(func=cmd_jackknife)

    p = sub.add_parser("select", help="leave-one-area-out model comparison")
    _add_common(p)
    p.add_argument("--survey", required=True, nargs="+", help="one survey file per wave")
    p.add_argument("--aux", required=True, nargs="+", help="one aux file, or one per wave")
    p.add_argument("--models", default=",".join(PRESETS), help="comma-separated preset names")
    p.add_argument("--per-wave", action="store_true")
    p.add_argument("--ridge", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="Monte Carlo comparison against a known truth")
    _add_common(p)
    p.add_argument("--sim-config", dest="config_file", help="INI file with a [simulation] section")
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.add_argument("--model", default="M2")
    p.add_argument("--estimator", choices=[e.value for e in Estimator], default="benchmarked")
    p.add_argument("--no-jackknife", action="store_true")
    p.set_defaults(func=cmd_simulate)
    return parser


def _config_defaults(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cp = configparser.ConfigParser()
    if not cp.read(known.config):
        raise UsageError(f"cannot read config file {known.config}")
    if not cp.has_section("synthsae"):
        return
    values = {}
    for key, raw in cp["synthsae"].items():
        dest = key.replace("-", "_")
        if raw.lower() in ("true", "false", "yes", "no"):
            values[dest] = raw.lower() in ("true", "yes")
        else:
            try:
                values[dest] = int(raw)
            except ValueError:
                values[dest] = raw
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        for sp in action.choices.values():
            known_dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in values.items() if k in known_dests})
            for a in sp._actions:
                if a.dest in values and a.required:
                    a.required = False


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _config_defaults(parser, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
