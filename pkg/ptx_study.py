# Power-to-X strategy study: command-line entry point
# Run with: python ptx_study.py <command> --help

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv

ROOT_DIR = os.path.abspath(os.path.dirname(__file__))
if ROOT_DIR not in sys.path:
    sys.path.insert(0, ROOT_DIR)

from core import __version__  # noqa: E402
from core.dispatch import simulate, write_trace  # noqa: E402
from core.errors import ConfigError, DataValidationError, StudyStepError  # noqa: E402
from core.kpi import compute_kpis, kpis_frame, read_decision_matrix, write_kpis  # noqa: E402
from core.market_data import generate_synthetic, write_dataset  # noqa: E402
from core.provenance import build_provenance  # noqa: E402
from services.mcdm import (  # noqa: E402
    PREFERENCE_FAMILIES,
    McdmSettings,
    rank_study,
    rankings_frame,
    spearman,
    write_rankings,
    write_weights,
)
from services.study import (  # noqa: E402
    KPI_DIR,
    RANKINGS_FILE,
    TRACE_DIR,
    WEIGHTS_FILE,
    load_market_data,
    load_rankings,
    load_study_config,
    load_study_report,
    run_study,
)
from utils.tables import filter_display_columns, text_table  # noqa: E402

logger = logging.getLogger("ptx_study")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
USAGE_ERRORS = (ConfigError, DataValidationError)
DISPLAY_COLUMNS = ["position", "alternative", "aggregate_score", "topsis_rank", "promethee2_rank", "vikor_rank"]


def configure_logging(level: str = None):
    level = (level or os.environ.get("PTX_LOG_LEVEL") or "INFO").upper()
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def cmd_gen_data(args) -> int:
    dataset = generate_synthetic(args.seed, args.year)
    provenance = build_provenance(config={"seed": args.seed, "year": args.year}, dataset=dataset)
    out = write_dataset(dataset, args.out, provenance)
    print(f"synthetic market data for {args.year} (seed {args.seed}) written to {out}")
    return 0


def cmd_simulate(args) -> int:
    config = load_study_config(args.config)
    if args.out:
        config = dataclasses.replace(config, output_dir=Path(args.out))
    experiment = config.experiment(args.experiment)
    dataset = load_market_data(config)
    provenance = build_provenance(config=config.raw, dataset=dataset)
    trace = simulate(experiment, dataset)
    write_trace(trace, config.output_dir / TRACE_DIR, provenance)
    report = compute_kpis(trace, experiment)
    write_kpis(report, config.output_dir / KPI_DIR / f"kpis_{experiment.id}.csv", provenance)
    print(text_table(kpis_frame([report]).T.reset_index().set_axis(["kpi", experiment.id], axis=1)), end="")
    return 0


def cmd_study(args) -> int:
    config = load_study_config(args.config)
    changes = {}
    if args.out:
        changes["output_dir"] = Path(args.out)
    if args.workers:
        changes["workers"] = args.workers
    if changes:
        config = dataclasses.replace(config, **changes)
    report = run_study(config)
    if report.ranking is not None:
        print(text_table(filter_display_columns(rankings_frame(report.ranking), DISPLAY_COLUMNS)), end="")
    print(f"study written to {config.output_dir}")
    return 0


def cmd_rank(args) -> int:
    matrix = read_decision_matrix(args.matrix)
    settings = McdmSettings(preference=args.preference, thresholds=args.threshold, v=args.v,
                            topsis_normalization=args.topsis)
    ranking, weights = rank_study(matrix, settings)
    out = Path(args.out) if args.out else Path(args.matrix).parent
    provenance = {"tool_version": __version__, "matrix": Path(args.matrix).name}
    write_rankings(ranking, out / RANKINGS_FILE, provenance)
    write_weights(weights, out / WEIGHTS_FILE, provenance)
    print(text_table(filter_display_columns(rankings_frame(ranking), DISPLAY_COLUMNS)), end="")
    if args.reference:
        reference = [label.strip() for label in args.reference.split(",")]
        print(f"spearman vs reference: {spearman(ranking.order, reference):.4f}")
    return 0


def cmd_report(args) -> int:
    if args.format == "md":
        print(load_study_report(args.study).write_markdown(), end="")
    else:
        print(load_rankings(args.study).to_csv(index=False, lineterminator="\n"), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptx_study",
        description="Hourly Power-to-X plant simulation and multi-criteria strategy ranking.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default: $PTX_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic market-data year as CSV files")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--year", type=int, default=2024)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("simulate", help="simulate one experiment of a study configuration")
    p.add_argument("--config", required=True, help="study YAML file")
    p.add_argument("--experiment", required=True, help="experiment id, e.g. 1.3")
    p.add_argument("--out", default=None, help="output directory (default: output_dir of the config)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="run the full study: simulate, KPIs, ranking, report")
    p.add_argument("--config", required=True, help="study YAML file")
    p.add_argument("--out", default=None, help="output directory (default: output_dir of the config)")
    p.add_argument("--workers", type=int, default=None, help="parallel simulation processes")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("rank", help="rank the alternatives of a decision-matrix CSV")
    p.add_argument("--matrix", required=True, help="decision_matrix.csv")
    p.add_argument("--v", type=float, default=0.5, help="VIKOR strategy weight in [0, 1]")
    p.add_argument("--preference", choices=PREFERENCE_FAMILIES, default="usual")
    p.add_argument("--threshold", type=float, default=None, help="linear preference threshold (normalized units)")
    p.add_argument("--topsis", choices=("minmax", "vector"), default="minmax", help="TOPSIS normalization")
    p.add_argument("--reference", default=None, help="comma-separated reference order for Spearman correlation")
    p.add_argument("--out", default=None, help="output directory (default: next to the matrix)")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("report", help="re-render the report of a finished study")
    p.add_argument("--study", required=True, help="study output directory")
    p.add_argument("--format", choices=("md", "csv"), default="md")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    # .env in the project root; real environment variables win
    load_dotenv(dotenv_path=os.path.join(ROOT_DIR, ".env"), override=False)
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except StudyStepError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2 if isinstance(e.cause, USAGE_ERRORS) else 1
    except USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.debug("unhandled error", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
