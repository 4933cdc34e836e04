"""Command-line entry point: ``dmem fit | simulate | scores``.

Settings come from an optional JSON config file (``--config``); any flag
given on the command line overrides the matching config key.

Exit codes: 0 success, 2 usage, 3 unparseable input, 4 invalid input,
5 model space too large for a full MEM.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from dmem.changepoint import DetectorConfig, split_scored
from dmem.clustering import Strategy
from dmem.errors import DataFormatError, DataValidationError, InvalidArgument, ModelSpaceTooLarge
from dmem.io import (
    dump_json,
    estimate_to_dict,
    ingest,
    write_metrics_csv,
    write_scores_csv,
    write_summary_table_csv,
)
from dmem.mem import PriorSpec
from dmem.pipeline import EstimatorKind, EstimatorSpec, run_estimator
from dmem.scores import score_all
from dmem.simulation import ScenarioSpec, builtin_scenario, run_study, summarize

EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_GUARD = 5

ESTIMATOR_NAMES = {
    "no_borrow": EstimatorKind.NO_BORROW,
    "mem": EstimatorKind.FULL_MEM,
    "imem": EstimatorKind.IMEM,
    "kmeans": EstimatorKind.KMEANS_BASELINE,
    "dmem": EstimatorKind.DMEM,
}

DEFAULTS = {
    "format": "long",
    "estimator": "dmem",
    "q": 10,
    "M": 10,
    "strategy": Strategy.RANDOM.value,
    "penalty": None,
    "low_weight_threshold": 0.2,
    "hard_threshold": None,
    "prior_inclusion": 0.5,
    "seed": 0,
    "reps": None,
    "min_count": 2,
    "variance_floor": None,
    "averaging_runs": 10,
    "emit_scores": False,
    "workers": None,
}


def _add_data_flags(p):
    p.add_argument("--data", help="input CSV")
    p.add_argument("--format", choices=("long", "summary"))
    p.add_argument("--primary", help="source_id of the primary source")
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--variance-floor", dest="variance_floor", type=float)


def _add_detector_flags(p):
    p.add_argument("--penalty", type=float, help="LR threshold b (default 3*log(H))")
    p.add_argument("--low-weight-threshold", dest="low_weight_threshold", type=float)
    p.add_argument("--hard-threshold", dest="hard_threshold", type=float)
    p.add_argument("--prior-inclusion", dest="prior_inclusion", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmem", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="estimate the primary source's mean")
    fit.add_argument("--config")
    _add_data_flags(fit)
    _add_detector_flags(fit)
    fit.add_argument("--estimator", help=f"one or more of {','.join(ESTIMATOR_NAMES)} (comma separated)")
    fit.add_argument("--q", type=int)
    fit.add_argument("--M", type=int)
    fit.add_argument("--strategy", choices=[s.value for s in Strategy])
    fit.add_argument("--averaging-runs", dest="averaging_runs", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--emit-scores", dest="emit_scores", action="store_true", default=None)
    fit.add_argument("--out", help="write JSON here instead of stdout")

    sim = sub.add_parser("simulate", help="run a seeded simulation study")
    sim.add_argument("--config")
    sim.add_argument("--scenario", help="built-in scenario name")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--workers", type=int, help="processes (default: $DMEM_WORKERS or 1)")
    sim.add_argument("--out", help="output directory (metrics.csv, summary.csv)")

    sc = sub.add_parser("scores", help="marginal scores and the detected split")
    sc.add_argument("--config")
    _add_data_flags(sc)
    _add_detector_flags(sc)
    sc.add_argument("--out", help="write CSV here instead of stdout")
    return parser


def _settings(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "command"):
            cfg[key] = value
    return cfg


def _detector(cfg) -> DetectorConfig:
    return DetectorConfig(cfg["penalty"], cfg["low_weight_threshold"], cfg["hard_threshold"])


def _load(cfg):
    if not cfg.get("data"):
        raise InvalidArgument("--data is required")
    if not cfg.get("primary"):
        raise InvalidArgument("--primary is required")
    table = ingest(
        cfg["data"], cfg["format"], primary_id=cfg["primary"],
        min_count=cfg["min_count"], variance_floor=cfg["variance_floor"],
    )
    return table.split(cfg["primary"])


def _estimators(cfg) -> list[EstimatorSpec]:
    names = cfg["estimator"]
    if isinstance(names, str):
        names = [n.strip() for n in names.split(",") if n.strip()]
    specs = []
    for name in names:
        if name not in ESTIMATOR_NAMES:
            raise InvalidArgument(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATOR_NAMES)}")
        specs.append(
            EstimatorSpec(
                ESTIMATOR_NAMES[name], q=cfg["q"], M=cfg["M"], strategy=cfg["strategy"],
                detector=_detector(cfg), prior=PriorSpec(cfg["prior_inclusion"]),
                seed=cfg["seed"], averaging_runs=cfg["averaging_runs"],
            )
        )
    return specs


def cmd_fit(cfg) -> int:
    primary, supplements = _load(cfg)
    docs = [
        estimate_to_dict(run_estimator(primary, supplements, spec), cfg["emit_scores"])
        for spec in _estimators(cfg)
    ]
    doc = docs[0] if len(docs) == 1 else docs
    text = dump_json(doc, cfg.get("out"))
    if not cfg.get("out"):
        sys.stdout.write(text)
    return 0


def cmd_simulate(cfg) -> int:
    if cfg.get("scenario_spec"):
        spec = ScenarioSpec.from_dict(cfg["scenario_spec"])
    elif cfg.get("scenario"):
        spec = builtin_scenario(cfg["scenario"])
    else:
        raise InvalidArgument("--scenario (or scenario_spec in the config) is required")
    if cfg["reps"] is not None:
        spec = spec.with_(reps=int(cfg["reps"]))
    if cfg.get("seed") is not None:
        spec = spec.with_(base_seed=int(cfg["seed"]))
    records = run_study(spec, workers=cfg["workers"])
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(records, out / "metrics.csv")
    write_summary_table_csv(summarize(records), out / "summary.csv")
    return 0


def cmd_scores(cfg) -> int:
    primary, supplements = _load(cfg)
    if not supplements:
        raise InvalidArgument("no supplementary sources to score")
    scored = score_all(primary, supplements, PriorSpec(cfg["prior_inclusion"]))
    kept, cp = split_scored(scored, _detector(cfg))
    write_scores_csv(scored, len(kept), cp.split_index, cfg.get("out") or sys.stdout)
    return 0


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "scores": cmd_scores}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](_settings(args))
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ModelSpaceTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (DataValidationError, InvalidArgument, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
