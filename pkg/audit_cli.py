"""Command-line front end for per-row leakage audits of discrete diffusion generators.

Exit codes: 0 success, 1 usage, 2 invalid input, 3 divergent leakage under --strict.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import pandas as pd

from categorical_dataset import BinningConfig, CategoricalDataset, ingest_csv
from ddm_core import generate
from diffusion_schedule import DEFAULT_COSINE_OFFSET, DiffusionSchedule, build
from dp_bound import dp_delta
from leakage_charts import build_curation_chart, row_label
from lower_bound import exact_gap, full_recursion_bound, simplified_bound
from pdp_bound import DIVERGENT, SUPPORT_ISOLATED, AuditMode, BoundOptions, PdpReport, audit_all, default_threads, extreme_points, finite_or_none
from privacy_errors import PdpInputError, PdpNumericError
from skew_analysis import SkewDesign, predict_leakage_vs_decay, predict_leakage_vs_skew

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3
CURATION_SCHEMA = "pdp-curation/1"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class CurationRound:
    index: int
    ratio: float
    removed: Tuple[Tuple[int, ...], ...]
    mean_delta: float
    max_delta: float
    size: int

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "round": self.index,
            "ratio": self.ratio,
            "removed": [list(row) for row in self.removed],
            "mean_delta": finite_or_none(self.mean_delta),
            "max_delta": finite_or_none(self.max_delta),
            "size": self.size,
        }


def _most_exposed_rows(report: PdpReport, count: int) -> List[Tuple[int, ...]]:
    """The ``count`` highest-δ row instances, duplicates counted individually."""
    rows: List[Tuple[int, ...]] = []
    for point in report.points:
        if len(rows) >= count:
            break
        rows.extend([point.row] * min(point.multiplicity, count - len(rows)))
    return rows


def run_curation(
    dataset: CategoricalDataset,
    ratios: Sequence[float],
    epsilon: float,
    m: int,
    release_step: int,
    schedule: DiffusionSchedule,
    options: BoundOptions | None = None,
    threads: int | None = None,
) -> List[CurationRound]:
    """Remove the most exposed rows up to each cumulative share of the original size and re-audit."""
    values = [float(ratio) for ratio in ratios]
    if any(not 0.0 < ratio < 1.0 for ratio in values):
        raise PdpInputError("Removal ratios must lie in (0, 1).")
    if any(later <= earlier for earlier, later in zip(values, values[1:])):
        raise PdpInputError("Removal ratios must be strictly ascending.")
    original = dataset.size
    report = audit_all(dataset, epsilon, m, release_step, schedule, options, threads=threads)
    rounds = [CurationRound(0, 0.0, (), report.mean_delta(), report.max_delta(), dataset.size)]
    removed_so_far = 0
    for index, ratio in enumerate(values, start=1):
        count = math.floor(ratio * original) - removed_so_far
        if original - removed_so_far - count < 2:
            raise PdpInputError(f"Removal ratio {ratio} leaves fewer than two rows.")
        removed = _most_exposed_rows(report, count) if count > 0 else []
        if removed:
            dataset = dataset.remove_rows(removed)
            report = audit_all(dataset, epsilon, m, release_step, schedule, options, threads=threads)
            removed_so_far += len(removed)
        rounds.append(CurationRound(index, ratio, tuple(removed), report.mean_delta(), report.max_delta(), dataset.size))
        logger.info("Curation round %d: removed %d rows, mean delta %.6g, max delta %.6g", index, len(removed), report.mean_delta(), report.max_delta())
    return rounds


def _dump(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _flag_record(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: value for key, value in sorted(vars(args).items()) if key not in {"handler", "out", "log_level", "threads"}}


def _schedule(args: argparse.Namespace, num_categories: int) -> DiffusionSchedule:
    return build(args.schedule, args.steps, num_categories, decay=args.decay, offset=args.offset, path=args.alpha_file)


def _options(args: argparse.Namespace) -> BoundOptions:
    return BoundOptions(mode=AuditMode(args.mode), literal_main_text=args.literal_main_text)


def _load_dataset(args: argparse.Namespace) -> CategoricalDataset:
    return ingest_csv(args.csv, BinningConfig(max_bins=args.max_bins, allow_missing=args.allow_missing))


def _load_gammas(path: str | None) -> Tuple[List[float] | None, List[float] | None]:
    if not path:
        return None, None
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise PdpInputError(f"Could not read training errors from {path}: {exc}") from exc
    missing = {"gamma", "gamma_tilde"} - set(frame.columns)
    if missing:
        raise PdpInputError(f"Training error file {path} lacks columns {sorted(missing)}.")
    return frame["gamma"].astype(float).tolist(), frame["gamma_tilde"].astype(float).tolist()


def _check_strict(args: argparse.Namespace, report: PdpReport) -> None:
    divergent = [point for point in report.points if {DIVERGENT, SUPPORT_ISOLATED} & set(point.flags)]
    if divergent and args.strict:
        raise PdpNumericError(f"{len(divergent)} distinct row(s) have unbounded leakage.")


def _trace_frame(report: PdpReport) -> pd.DataFrame:
    records = [
        {"row": row_label(point.row), **step.to_json_dict()}
        for point in report.points
        for step in point.trace.steps
    ]
    return pd.DataFrame.from_records(records)


def cmd_schedule(args: argparse.Namespace) -> int:
    table = _schedule(args, args.k).table()
    _emit(table.to_csv(index=False, lineterminator="\n"), args.out)
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args)
    schedule = _schedule(args, dataset.num_categories)
    gamma, gamma_tilde = _load_gammas(args.gamma_file)
    report = audit_all(dataset, args.epsilon, args.m, args.release_step, schedule, _options(args), gamma, gamma_tilde, threads=args.threads)
    _check_strict(args, report)
    document = report.to_json_dict(extra_meta={"schedule": schedule.name, "flags": _flag_record(args)})
    _emit(_dump(document), args.out)
    if args.trace_csv:
        _trace_frame(report).to_csv(args.trace_csv, index=False, lineterminator="\n")
    if args.top:
        exposed, private = extreme_points(report, args.top)
        for label, points in (("most exposed", exposed), ("most private", private)):
            sys.stderr.write(f"{label}:\n")
            for point in points:
                sys.stderr.write(f"  {row_label(point.row)} delta={point.delta:.6g}\n")
    return EXIT_OK


def cmd_curate(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args)
    schedule = _schedule(args, dataset.num_categories)
    ratios = [float(value) for value in args.ratios.split(",") if value.strip()]
    rounds = run_curation(dataset, ratios, args.epsilon, args.m, args.release_step, schedule, _options(args), threads=args.threads)
    records = [entry.to_json_dict() for entry in rounds]
    document = {
        "schema": CURATION_SCHEMA,
        "meta": {"dataset_fingerprint": dataset.fingerprint, "schedule": schedule.name, "flags": _flag_record(args)},
        "rounds": records,
        "chart": build_curation_chart(records),
    }
    _emit(_dump(document), args.out)
    if args.plot_csv:
        frame = pd.DataFrame.from_records(records, columns=["ratio", "mean_delta", "max_delta", "size"])
        frame.to_csv(args.plot_csv, index=False, lineterminator="\n")
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args)
    schedule = _schedule(args, dataset.num_categories)
    samples = generate(dataset, args.count, args.release_step, schedule, seed=args.seed, threads=args.threads or default_threads())
    _emit(dataset.decode(samples).to_csv(index=False, lineterminator="\n"), args.out)
    return EXIT_OK


def cmd_lower_bound(args: argparse.Namespace) -> int:
    schedule = _schedule(args, 2)
    bound = simplified_bound(schedule, args.s)
    document: Dict[str, Any] = {**bound.to_json_dict(), "full_recursion": full_recursion_bound(schedule, args.s), "s": args.s, "schedule": schedule.name}
    if args.exact:
        gap = exact_gap(schedule, args.s, args.release_step)
        document["exact_gap"] = {**gap.to_json_dict(), "pdp_delta": gap.pdp_delta(bound.epsilon)}
    _emit(_dump(document), args.out)
    return EXIT_OK


def cmd_dp(args: argparse.Namespace) -> int:
    schedule = _schedule(args, args.k)
    trace = dp_delta(args.s, args.n, args.k, args.epsilon, args.m, args.release_step, schedule, _options(args))
    document = trace.to_json_dict()
    document["meta"]["schedule"] = schedule.name
    _emit(_dump(document), args.out)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    design = SkewDesign(
        num_features=args.n,
        num_categories=args.k,
        steps=args.steps,
        size=args.s,
        epsilon=args.epsilon,
        m=args.m,
        release_step=args.release_step,
        p=args.p,
        seeds=args.seeds,
        base_seed=args.seed,
        schedule=args.schedule,
        decay=args.decay,
    )
    if args.decay_grid:
        decays = [float(value) for value in args.decay_grid.split(",") if value.strip()]
        frame = predict_leakage_vs_decay(decays, args.schedule, design, _options(args))
    else:
        p_grid = [float(value) for value in args.p_grid.split(",") if value.strip()]
        frame = predict_leakage_vs_skew(p_grid, design, _options(args))
    _emit(frame.to_csv(index=False, lineterminator="\n"), args.out)
    return EXIT_OK


def _schedule_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--schedule", choices=["linear", "sigmoid", "cosine", "custom"], default="linear")
    parser.add_argument("-T", "--steps", type=int, default=10, help="Number of diffusion steps.")
    parser.add_argument("--decay", type=float, default=1.0)
    parser.add_argument("--offset", type=float, default=DEFAULT_COSINE_OFFSET)
    parser.add_argument("--alpha-file", default=None, help="One-column CSV of alpha_1..alpha_T for --schedule custom.")


def _bound_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epsilon", type=float, default=1.0)
    parser.add_argument("-m", type=int, default=1, help="Number of released samples.")
    parser.add_argument("--release-step", type=int, default=0)
    parser.add_argument("--mode", choices=[mode.value for mode in AuditMode], default=AuditMode.MAIN.value)
    parser.add_argument("--literal-main-text", action="store_true")


def _dataset_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("csv", help="Categorical or numeric CSV with a header row.")
    parser.add_argument("--max-bins", type=int, default=5)
    parser.add_argument("--allow-missing", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdp-audit", description="Per-row privacy leakage bounds for discrete diffusion generators.")
    parser.add_argument("--log-level", default=os.getenv("PDP_LOG_LEVEL", "WARNING"))
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (default PDP_THREADS or 1).")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)

    schedule = commands.add_parser("schedule", help="Print the derived schedule table.")
    _schedule_flags(schedule)
    schedule.add_argument("-k", type=int, default=2)
    schedule.add_argument("--out")
    schedule.set_defaults(handler=cmd_schedule)

    audit = commands.add_parser("audit", help="Bound the leakage of every row of a CSV.")
    _dataset_flags(audit)
    _schedule_flags(audit)
    _bound_flags(audit)
    audit.add_argument("--gamma-file", default=None, help="CSV with gamma and gamma_tilde columns, one row per step.")
    audit.add_argument("--top", type=int, default=0)
    audit.add_argument("--strict", action="store_true")
    audit.add_argument("--trace-csv", default=None)
    audit.add_argument("--out")
    audit.set_defaults(handler=cmd_audit)

    curate = commands.add_parser("curate", help="Remove the most exposed rows and re-audit.")
    _dataset_flags(curate)
    _schedule_flags(curate)
    _bound_flags(curate)
    curate.add_argument("--ratios", default="0.01,0.02,0.03,0.04,0.05")
    curate.add_argument("--plot-csv", default=None)
    curate.add_argument("--out")
    curate.set_defaults(handler=cmd_curate)

    gen = commands.add_parser("generate", help="Sample from the perfectly trained generator.")
    _dataset_flags(gen)
    _schedule_flags(gen)
    gen.add_argument("--count", type=int, default=100)
    gen.add_argument("--release-step", type=int, default=0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out")
    gen.set_defaults(handler=cmd_generate)

    lower = commands.add_parser("lower-bound", help="Lower bounds on the two-column worst pair.")
    _schedule_flags(lower)
    lower.add_argument("--s", type=int, required=True)
    lower.add_argument("--release-step", type=int, default=0)
    lower.add_argument("--exact", action="store_true")
    lower.add_argument("--out")
    lower.set_defaults(handler=cmd_lower_bound)

    dp = commands.add_parser("dp", help="Dataset-free bound from (s, n, k) and the schedule.")
    _schedule_flags(dp)
    _bound_flags(dp)
    dp.add_argument("--s", type=int, required=True)
    dp.add_argument("--n", type=int, required=True)
    dp.add_argument("--k", type=int, required=True)
    dp.add_argument("--out")
    dp.set_defaults(handler=cmd_dp)

    synth = commands.add_parser("synth", help="Skewness and decay sweeps on sampled product data.")
    _schedule_flags(synth)
    _bound_flags(synth)
    synth.add_argument("--p-grid", default="0.3,0.5,0.7,0.9")
    synth.add_argument("--decay-grid", default=None)
    synth.add_argument("--p", type=float, default=0.5, help="Majority probability for the decay sweep.")
    synth.add_argument("--n", type=int, default=5)
    synth.add_argument("--k", type=int, default=5)
    synth.add_argument("--s", type=int, default=1000)
    synth.add_argument("--seeds", type=int, default=5)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out")
    synth.set_defaults(handler=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    arguments = list(sys.argv[1:] if argv is None else argv)
    if not arguments:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(arguments)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "handler", None) is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=str(args.log_level).upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except PdpNumericError as exc:
        logger.error("%s", exc)
        return EXIT_NUMERIC
    except PdpInputError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
