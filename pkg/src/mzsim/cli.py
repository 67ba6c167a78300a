"""Command-line front end (`mzx`).

    mzx run FILE [--shots N] [--seed S] [--format table|csv|json] [--given k=v,...]
    mzx sweep FILE --param NAME --from A --to B --steps K [--format ...] [--given ...]
    mzx validate FILE

Exit codes: 0 success; 1 parse/validation error; 2 I/O error; 3 conditioning
on a zero-probability event; 4 sweep with fewer than 2 steps.

Output is deterministic: identical file bytes, flags, and seed produce
byte-identical output.  CSV uses ',' separators, '.' decimal points, LF
line endings, and 17 significant digits; JSON is a single object with keys
in the fixed order meta, branches, conditionals, and (for sweeps)
visibility.  The MZX_SEED environment variable supplies a default seed for
sampled runs (the --seed flag overrides; the fallback seed is 0).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field

from . import dsl, experiment

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
EXIT_ZERO_CONDITION = 3
EXIT_BAD_GRID = 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _num(text: str) -> float:
    """Float flag value, with an optional 'pi' suffix (e.g. 2pi, 0.5pi)."""
    text = text.strip()
    factor = 1.0
    if text.endswith("pi"):
        factor = math.pi
        text = text[:-2] or "1"
    try:
        return float(text) * factor
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None


def _fmt(value: float) -> str:
    return format(value, ".17g")


def _read_file(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None


def _parse_given(text: str | None) -> dict[str, str]:
    if not text:
        return {}
    pairs = {}
    for chunk in text.split(","):
        if "=" not in chunk:
            raise CliError(EXIT_INVALID,
                           f"--given expects key=value pairs, got {chunk!r}")
        key, value = chunk.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def _given_label(pairs: dict[str, str]) -> str:
    return ",".join(f"{k}={v}" for k, v in pairs.items())


def _record_label(record: experiment.Record) -> str:
    return " ".join(f"{k}={v}" for k, v in record)


def _resolve_seed(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("MZX_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(EXIT_INVALID, f"MZX_SEED must be an integer, got {env!r}") from None


def _load(path: str) -> tuple[dsl.ExperimentAst, str]:
    raw = _read_file(path)
    try:
        src = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CliError(EXIT_IO, f"{path} is not UTF-8 text: {exc}") from None
    try:
        ast = dsl.parse_text(src)
    except dsl.ParseError as exc:
        raise CliError(EXIT_INVALID,
                       f"{path}:{exc.line}:{exc.col}: {exc.category} error: {exc.message}"
                       ) from None
    return ast, hashlib.sha256(raw).hexdigest()


@dataclass(frozen=True, eq=False)
class RunReport:
    """Everything one `run` invocation produced, ready for rendering."""

    meta: dict
    branches: list[dict]
    conditionals: list[dict]
    visibility: float | None = field(default=None)

    def to_json(self) -> str:
        obj = {"meta": self.meta, "branches": self.branches,
               "conditionals": self.conditionals}
        if self.visibility is not None:
            obj["visibility"] = self.visibility
        return json.dumps(obj, indent=2) + "\n"


def _conditional_rows(dist: experiment.OutcomeDistribution,
                      given: dict[str, str]) -> list[dict]:
    rows = []
    if not given:
        return rows
    try:
        for outcome in ("X", "Y"):
            value = experiment.conditional(dist, experiment.matches(**given),
                                           experiment.matches(detector=outcome))
            rows.append({"query": f"detector={outcome}|{_given_label(given)}",
                         "value": value})
    except experiment.ZeroProbabilityEventError as exc:
        raise CliError(EXIT_ZERO_CONDITION, str(exc)) from None
    return rows


def _empirical_conditional_rows(hist: experiment.ShotHistogram,
                                given: dict[str, str]) -> list[dict]:
    rows = []
    if not given:
        return rows
    def count(pairs):
        pred = experiment.matches(**pairs)
        return sum(n for record, n in hist.counts.items() if pred(dict(record)))
    base = count(given)
    if base == 0:
        raise CliError(EXIT_ZERO_CONDITION, "conditioning event never occurred")
    for outcome in ("X", "Y"):
        joint = count({**given, "detector": outcome})
        rows.append({"query": f"detector={outcome}|{_given_label(given)}",
                     "value": joint / base})
    return rows


def cmd_run(args) -> int:
    ast, digest = _load(args.file)
    given = _parse_given(args.given)
    try:
        pipeline = dsl.compile(ast)
    except dsl.ParseError as exc:
        raise CliError(EXIT_INVALID, f"{args.file}:{exc}") from None

    meta = {"file": args.file, "sha256": digest, "given": _given_label(given) or None}
    if args.shots is None:
        dist = experiment.run_analytic(pipeline)
        meta.update(mode="analytic", seed=None, shots=None,
                    prune_threshold=dist.prune_threshold)
        branches = [{"record": dict(b.record), "probability": b.prob}
                    for b in dist.branches]
        conditionals = _conditional_rows(dist, given)
    else:
        if args.shots < 1:
            raise CliError(EXIT_INVALID, "--shots must be at least 1")
        seed = _resolve_seed(args.seed)
        hist = experiment.run_sampled(pipeline, args.shots, seed)
        meta.update(mode="sampled", seed=seed, shots=args.shots)
        branches = [{"record": dict(record), "count": n,
                     "frequency": n / hist.shots}
                    for record, n in hist.counts.items()]
        conditionals = _empirical_conditional_rows(hist, given)

    report = RunReport(meta, branches, conditionals)
    _emit_run(report, args.format)
    return EXIT_OK


def _emit_run(report: RunReport, fmt: str):
    if fmt == "json":
        sys.stdout.write(report.to_json())
        return
    sampled = report.meta["mode"] == "sampled"
    if fmt == "csv":
        lines = ["kind,label,value"]
        lines.append(f"meta,mode,{report.meta['mode']}")
        lines.append(f"meta,file_sha256,{report.meta['sha256']}")
        if sampled:
            lines.append(f"meta,seed,{report.meta['seed']}")
            lines.append(f"meta,shots,{report.meta['shots']}")
        for row in report.branches:
            label = _record_label(tuple(row["record"].items()))
            value = row["count"] if sampled else _fmt(row["probability"])
            lines.append(f"branch,{label},{value}")
        for row in report.conditionals:
            lines.append(f"conditional,{row['query']},{_fmt(row['value'])}")
        sys.stdout.write("\n".join(lines) + "\n")
        return
    # table
    lines = []
    for row in report.branches:
        label = _record_label(tuple(row["record"].items())) or "(none)"
        if sampled:
            lines.append(f"{label}  {row['count']}  ({row['frequency']:.10g})")
        else:
            lines.append(f"{label}  {row['probability']:.10g}")
    for row in report.conditionals:
        lines.append(f"{row['query']}  {row['value']:.10g}")
    if sampled:
        lines.append(f"seed: {report.meta['seed']}  shots: {report.meta['shots']}")
    sys.stdout.write("\n".join(lines) + "\n")


def cmd_sweep(args) -> int:
    if args.steps < 2:
        raise CliError(EXIT_BAD_GRID, "--steps must be at least 2")
    ast, digest = _load(args.file)
    given = _parse_given(args.given)
    try:
        build = dsl.sweep_template(ast, args.param)
    except dsl.ParseError as exc:
        raise CliError(EXIT_INVALID, f"{args.file}: {exc.message}") from None

    # Endpoint-exclusive grid: from, from + h, ..., to - h with h = span/steps.
    span = args.to - args.from_
    grid = [args.from_ + i * span / args.steps for i in range(args.steps)]
    pred = experiment.matches(**given) if given else None
    try:
        result = experiment.sweep(build, args.param, grid, given=pred)
    except dsl.ParseError as exc:
        raise CliError(EXIT_INVALID, f"{args.file}: {exc.message}") from None
    except experiment.ZeroProbabilityEventError as exc:
        raise CliError(EXIT_ZERO_CONDITION, str(exc)) from None

    meta = {"file": args.file, "sha256": digest, "mode": "sweep",
            "parameter": args.param, "from": args.from_, "to": args.to,
            "steps": args.steps, "given": _given_label(given) or None}
    rows = []
    for p in result.points:
        row = {"value": p.value, "prob_x": p.prob_x, "prob_y": p.prob_y}
        if given:
            row["given_x"] = p.cond_x
            row["given_y"] = p.cond_y
        rows.append(row)
    report = RunReport(meta, rows, [], visibility=result.visibility)
    _emit_sweep(report, args.format, conditioned=bool(given))
    return EXIT_OK


def _emit_sweep(report: RunReport, fmt: str, conditioned: bool):
    if fmt == "json":
        sys.stdout.write(report.to_json())
        return
    columns = ["value", "prob_x", "prob_y"] + \
        (["given_x", "given_y"] if conditioned else [])
    if fmt == "csv":
        lines = [",".join(columns)]
        for row in report.branches:
            lines.append(",".join(_fmt(row[c]) for c in columns))
        lines.append(f"visibility,{_fmt(report.visibility)}")
        sys.stdout.write("\n".join(lines) + "\n")
        return
    lines = ["  ".join(columns)]
    for row in report.branches:
        lines.append("  ".join(f"{row[c]:.10g}" for c in columns))
    lines.append(f"visibility: {report.visibility:.10g}")
    sys.stdout.write("\n".join(lines) + "\n")


def cmd_validate(args) -> int:
    raw = _read_file(args.file)
    try:
        src = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CliError(EXIT_IO, f"{args.file} is not UTF-8 text: {exc}") from None
    try:
        ast = dsl.parse(dsl.tokenize(src))
    except dsl.ParseError as exc:
        sys.stderr.write(f"{args.file}:{exc.line}:{exc.col}: "
                         f"{exc.category} error: {exc.message}\n")
        return EXIT_INVALID
    problems = dsl.validate(ast)
    if problems:
        for exc in problems:
            sys.stderr.write(f"{args.file}:{exc.line}:{exc.col}: "
                             f"{exc.category} error: {exc.message}\n")
        return EXIT_INVALID
    sys.stdout.write("OK\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mzx", description="Run interferometer experiment files.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a file analytically or with sampling")
    run.add_argument("file")
    run.add_argument("--shots", type=int, default=None,
                     help="sample this many shots instead of exact enumeration")
    run.add_argument("--seed", type=int, default=None,
                     help="RNG seed for --shots (default: $MZX_SEED, else 0)")
    run.add_argument("--format", choices=("table", "csv", "json"), default="table")
    run.add_argument("--given", default=None,
                     help="condition on record values, e.g. abs=yes or ww=A")
    run.set_defaults(func=cmd_run)

    swp = sub.add_parser("sweep", help="sweep the file's free parameter")
    swp.add_argument("file")
    swp.add_argument("--param", required=True)
    swp.add_argument("--from", dest="from_", type=_num, required=True,
                     metavar="FROM", help="grid start (accepts e.g. 0.5pi)")
    swp.add_argument("--to", type=_num, required=True,
                     help="grid end, excluded (accepts e.g. 2pi)")
    swp.add_argument("--steps", type=int, required=True)
    swp.add_argument("--format", choices=("table", "csv", "json"), default="table")
    swp.add_argument("--given", default=None)
    swp.set_defaults(func=cmd_sweep)

    val = sub.add_parser("validate", help="check a file and report diagnostics")
    val.add_argument("file")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
