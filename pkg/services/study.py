"""
Study configuration and the six-step workflow:

1. model configuration (tiers x strategies)
2. market data (files or synthetic year)
3. hourly simulation of every experiment
4. KPI extraction
5. decision matrix and MCDM ranking
6. report assembly

The configuration is one YAML document. Every key is optional; an empty
document runs the full 3 x 3 grid on the synthetic year (seed 42, 2024).
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import yaml

from core.database import load_data, load_json, read_provenance, save_json
from core.dispatch import SimulationTrace, simulate_many, write_trace
from core.errors import ConfigError, StudyStepError
from core.kpi import (
    KPI_NAMES,
    DecisionMatrix,
    KpiReport,
    build_decision_matrix,
    check_consistency,
    compute_kpis,
    read_decision_matrix,
    read_kpis,
    substitute_undefined,
    write_decision_matrix,
    write_kpis,
)
from core.market_data import DEFAULT_TIMEZONE, MarketDataset, SyntheticParams, generate_synthetic, load_dataset
from core.provenance import build_provenance, config_hash, dataset_fingerprint
from core.site_model import (
    DEFAULT_CURVE,
    DEFAULT_MIN_LOAD,
    DEFAULT_ROUND_TRIP,
    DEFAULT_TIERS,
    DEFAULT_TRUCK_CAPACITY,
    HYBRID_RE_LIMITS,
    LHV_KWH_PER_KG,
    SCHEDULING_POLICIES,
    STRATEGIES,
    ExperimentConfig,
    RenewableSpec,
    TierSpec,
    demand_for_flh,
    make_experiment,
)
from services.mcdm import (
    VIKOR,
    McdmSettings,
    StudyRanking,
    WeightTable,
    rank_study,
    weights_frame,
    write_rankings,
    write_weights,
)
from utils.charts import ranking_chart
from utils.tables import frame_to_markdown, markdown_table, tier_table

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = (
    "dataset", "experiments", "tiers", "site", "electrolyzer", "fleet", "scheduling", "hybrid_re_limit",
    "base_variable_cost", "mcdm", "output_dir", "workers", "plot", "timezone",
)
# keys that change where or how fast outputs are produced, never their content
NON_CONTENT_KEYS = ("output_dir", "workers")

STUDY_FILE = "study.json"
REPORT_FILE = "report.md"
MATRIX_FILE = "decision_matrix.csv"
RANKINGS_FILE = "rankings.csv"
WEIGHTS_FILE = "weights.csv"
CHART_FILE = "ranking.svg"
DEFAULT_YEAR = 2024
TRACE_DIR = "traces"
KPI_DIR = "kpis"


@dataclass(frozen=True)
class DatasetSource:
    seed: int = 42
    year: Optional[int] = DEFAULT_YEAR
    directory: Optional[Path] = None
    params: SyntheticParams = field(default_factory=SyntheticParams)

    @property
    def synthetic(self) -> bool:
        return self.directory is None


@dataclass(frozen=True)
class StudyConfig:
    dataset: DatasetSource = field(default_factory=DatasetSource)
    experiments: Tuple[Tuple[object, str], ...] = tuple((t, s) for t in DEFAULT_TIERS for s in STRATEGIES)
    tiers: Dict[object, TierSpec] = field(default_factory=lambda: dict(DEFAULT_TIERS))
    renewables: RenewableSpec = field(default_factory=RenewableSpec)
    efficiency_curve: Tuple[Tuple[float, float], ...] = DEFAULT_CURVE
    min_load_fraction: float = DEFAULT_MIN_LOAD
    lhv: float = LHV_KWH_PER_KG
    truck_capacity: float = DEFAULT_TRUCK_CAPACITY
    round_trip_duration: int = DEFAULT_ROUND_TRIP
    scheduling: str = "cheapest_hours"
    base_variable_cost: float = 0.0
    hybrid_re_limit: str = "capacity"
    mcdm: McdmSettings = field(default_factory=McdmSettings)
    orientations: Dict[str, str] = field(default_factory=dict)
    undefined_value: float = 0.0
    output_dir: Path = Path("study_output")
    workers: int = 1
    plot: bool = False
    timezone: str = DEFAULT_TIMEZONE
    raw: Dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def content_hash(self) -> str:
        return config_hash({k: v for k, v in self.raw.items() if k not in NON_CONTENT_KEYS})

    def experiment_configs(self) -> List[ExperimentConfig]:
        return [
            make_experiment(
                tier_id,
                strategy,
                tiers=self.tiers,
                renewables=self.renewables,
                efficiency_curve=self.efficiency_curve,
                min_load_fraction=self.min_load_fraction,
                lhv=self.lhv,
                truck_capacity=self.truck_capacity,
                round_trip_duration=self.round_trip_duration,
                scheduling=self.scheduling,
                base_variable_cost=self.base_variable_cost,
                hybrid_re_limit=self.hybrid_re_limit,
            )
            for tier_id, strategy in self.experiments
        ]

    def experiment(self, experiment_id: str) -> ExperimentConfig:
        for config in self.experiment_configs():
            if config.id == experiment_id:
                return config
        raise ConfigError(f"unknown experiment id '{experiment_id}'")


# ----------------------------------------------------------------------------
# Parsing
# ----------------------------------------------------------------------------

def _section(raw, name: str, allowed) -> dict:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    unknown = set(value) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(sorted(map(str, unknown)))}")
    return value


def _tier_key(key):
    if isinstance(key, str) and key.strip().isdigit():
        return int(key)
    return key


def _parse_experiments(raw, tiers) -> Tuple[Tuple[object, str], ...]:
    value = raw.get("experiments")
    if value is None:
        value = {}
    if isinstance(value, list):
        pairs = []
        for label in value:
            tier, _, index = str(label).rpartition(".")
            if not index.isdigit() or not 1 <= int(index) <= len(STRATEGIES):
                raise ConfigError(f"experiment id '{label}' must look like '<tier>.<1-3>'")
            pairs.append((_tier_key(tier), STRATEGIES[int(index) - 1]))
    elif isinstance(value, dict):
        section = _section(raw, "experiments", ("tiers", "strategies"))
        tier_ids = [_tier_key(t) for t in section.get("tiers", list(tiers))]
        strategies = section.get("strategies", list(STRATEGIES))
        pairs = [(t, s) for t in tier_ids for s in strategies]
    else:
        raise ConfigError("'experiments' must be a list of ids or a mapping with tiers/strategies")

    if not pairs:
        raise ConfigError("the study needs at least one experiment")
    for tier, strategy in pairs:
        if tier not in tiers:
            raise ConfigError(f"experiment refers to undefined tier {tier}")
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy '{strategy}'")
    if len(set(pairs)) != len(pairs):
        raise ConfigError("duplicate experiments in the grid")
    return tuple(pairs)


def _parse_tiers(raw) -> Dict[object, TierSpec]:
    tiers = dict(DEFAULT_TIERS)
    overrides = raw.get("tiers") or {}
    if not isinstance(overrides, dict):
        raise ConfigError("'tiers' must be a mapping of tier id to settings")
    allowed = [f.name for f in fields(TierSpec)]
    for key, values in overrides.items():
        key = _tier_key(key)
        values = values or {}
        unknown = set(values) - set(allowed)
        if unknown:
            raise ConfigError(f"unknown key(s) in tier {key}: {', '.join(sorted(unknown))}")
        base = tiers.get(key)
        if base is None:
            missing = [name for name in allowed if name not in values]
            if missing:
                raise ConfigError(f"new tier {key} is missing {', '.join(missing)}")
            tiers[key] = TierSpec(**values)
        else:
            tiers[key] = TierSpec(**{**base.__dict__, **values})
    for key, tier in tiers.items():
        logger.debug(
            "tier %s: %.0f kg/day demand, %.0f kg/day at %d full load hours",
            key, tier.daily_demand, demand_for_flh(tier.capacity), 5000,
        )
    return tiers


def _dataset_year(section, directory) -> Optional[int]:
    """Synthetic years default to DEFAULT_YEAR; CSV files name their own year unless one is given."""
    year = section.get("year")
    if year is None:
        return DEFAULT_YEAR if directory is None else None
    return int(year)


def _parse_dataset(raw, base_dir: Path) -> DatasetSource:
    allowed = ("seed", "year", "directory", "params")
    section = _section(raw, "dataset", allowed)
    param_names = [f.name for f in fields(SyntheticParams) if f.name != "tariffs"]
    params = section.get("params") or {}
    unknown = set(params) - set(param_names)
    if unknown:
        raise ConfigError(f"unknown synthetic parameter(s): {', '.join(sorted(unknown))}")
    directory = section.get("directory")
    if directory is not None:
        directory = Path(directory)
        if not directory.is_absolute():
            directory = base_dir / directory
    return DatasetSource(
        seed=int(section.get("seed", 42)),
        year=_dataset_year(section, directory),
        directory=directory,
        params=SyntheticParams(**{k: float(v) for k, v in params.items()}),
    )


def parse_study_config(raw: Optional[dict], base_dir=".") -> StudyConfig:
    """Validate a study configuration mapping; paths resolve against `base_dir`."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("the study configuration must be a mapping")
    unknown = set(raw) - set(TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) in study configuration: {', '.join(sorted(map(str, unknown)))}")
    base_dir = Path(base_dir)

    tiers = _parse_tiers(raw)
    site = _section(raw, "site", ("pv_capacity", "wind_capacity"))
    electrolyzer = _section(raw, "electrolyzer", ("efficiency_curve", "min_load_fraction", "lhv"))
    fleet = _section(raw, "fleet", ("truck_capacity", "round_trip_duration"))
    mcdm = _section(raw, "mcdm", ("orientations", "preference", "thresholds", "v", "topsis_normalization",
                                  "undefined_value"))

    scheduling = raw.get("scheduling", "cheapest_hours")
    if scheduling not in SCHEDULING_POLICIES:
        raise ConfigError(f"scheduling must be one of {SCHEDULING_POLICIES}, got '{scheduling}'")
    hybrid_re_limit = raw.get("hybrid_re_limit", "capacity")
    if hybrid_re_limit not in HYBRID_RE_LIMITS:
        raise ConfigError(f"hybrid_re_limit must be one of {HYBRID_RE_LIMITS}, got '{hybrid_re_limit}'")
    orientations = mcdm.get("orientations") or {}
    unknown_criteria = set(orientations) - set(KPI_NAMES)
    if unknown_criteria:
        raise ConfigError(f"orientation given for unknown criteria: {', '.join(sorted(unknown_criteria))}")
    workers = int(raw.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    output_dir = Path(raw.get("output_dir", "study_output"))
    if not output_dir.is_absolute():
        output_dir = base_dir / output_dir

    try:
        return StudyConfig(
            dataset=_parse_dataset(raw, base_dir),
            experiments=_parse_experiments(raw, tiers),
            tiers=tiers,
            renewables=RenewableSpec(**site),
            efficiency_curve=tuple(tuple(knot) for knot in electrolyzer.get("efficiency_curve", DEFAULT_CURVE)),
            min_load_fraction=float(electrolyzer.get("min_load_fraction", DEFAULT_MIN_LOAD)),
            lhv=float(electrolyzer.get("lhv", LHV_KWH_PER_KG)),
            truck_capacity=float(fleet.get("truck_capacity", DEFAULT_TRUCK_CAPACITY)),
            round_trip_duration=fleet.get("round_trip_duration", DEFAULT_ROUND_TRIP),
            scheduling=scheduling,
            base_variable_cost=float(raw.get("base_variable_cost", 0.0)),
            hybrid_re_limit=hybrid_re_limit,
            mcdm=McdmSettings(
                preference=mcdm.get("preference", "usual"),
                thresholds=mcdm.get("thresholds"),
                v=float(mcdm.get("v", 0.5)),
                topsis_normalization=mcdm.get("topsis_normalization", "minmax"),
            ),
            orientations=dict(orientations),
            undefined_value=float(mcdm.get("undefined_value", 0.0)),
            output_dir=output_dir,
            workers=workers,
            plot=bool(raw.get("plot", False)),
            timezone=str(raw.get("timezone", DEFAULT_TIMEZONE)),
            raw=raw,
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid study configuration: {e}") from e


def load_study_config(path) -> StudyConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from e
    return parse_study_config(raw, base_dir=path.parent)


# ----------------------------------------------------------------------------
# Workflow
# ----------------------------------------------------------------------------

def load_market_data(config: StudyConfig) -> MarketDataset:
    source = config.dataset
    if source.synthetic:
        return generate_synthetic(source.seed, source.year or DEFAULT_YEAR, source.params, config.timezone)
    dataset = load_dataset(source.directory, year=source.year, timezone=config.timezone)
    logger.info("loaded market data from %s (%d hours)", source.directory, dataset.n_hours)
    return dataset


@dataclass
class StudyReport:
    reports: List[KpiReport]
    matrix: Optional[DecisionMatrix]
    ranking: Optional[StudyRanking]
    weights: Optional[WeightTable]
    provenance: Dict[str, str]
    tiers: Dict[str, float] = field(default_factory=dict)
    operations: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def write_markdown(self, path=None) -> str:
        """Render the study as Markdown; also written to `path` when given."""
        lines = ["# Power-to-X strategy study", ""]

        lines += ["## Provenance", ""]
        lines += [f"- {key}: `{self.provenance[key]}`" for key in sorted(self.provenance)]
        lines.append("")

        by_tier: Dict[str, Dict[str, KpiReport]] = {}
        for report in self.reports:
            tier, _, index = report.experiment_id.rpartition(".")
            by_tier.setdefault(tier, {})[STRATEGIES[int(index) - 1]] = report
        for tier, reports in by_tier.items():
            capacity = self.tiers.get(tier)
            title = f"## Tier {tier}" + (f" ({capacity:g} MW electrolyzer)" if capacity is not None else "")
            lines += [title, "", tier_table(reports)]

        if self.operations:
            rows = [
                [r.experiment_id, f"{ops['unserved_demand']:.0f}", int(ops["throttled_hours"])]
                for r in self.reports
                for ops in [self.operations.get(r.experiment_id)]
                if ops is not None
            ]
            lines += ["## Operations", "", markdown_table(["Experiment", "Unserved demand (kg)", "Throttled hours"],
                                                          rows)]

        if self.ranking is not None:
            rows = []
            for position, alternative in enumerate(self.ranking.order, start=1):
                i = self.ranking.alternatives.index(alternative)
                rows.append(
                    [position, f"Experiment {alternative}", f"{self.ranking.aggregate_score[i]:.2f}"]
                    + [int(r.ranks[i]) for r in self.ranking.rankings]
                )
            header = ["Rank", "Experiment", "Average score"] + [f"{r.method} rank" for r in self.ranking.rankings]
            lines += ["## Ranking (average of 3 methods)", "", markdown_table(header, rows)]
            vikor = self.ranking.method(VIKOR).diagnostics
            lines += [
                f"VIKOR compromise conditions: acceptable advantage {vikor['acceptable_advantage']}, "
                f"acceptable stability {vikor['acceptable_stability']}.",
                "",
            ]
        if self.weights is not None:
            lines += ["## Criteria weights", "", frame_to_markdown(weights_frame(self.weights))]

        text = "\n".join(lines)
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            logger.debug("wrote %s", path)
        return text


@contextmanager
def _step(name: str, experiment_id=None):
    """Re-raise anything from inside a workflow step as StudyStepError."""
    try:
        yield
    except StudyStepError:
        raise
    except Exception as e:
        raise StudyStepError(name, e, experiment_id) from e


def run_study(config: StudyConfig) -> StudyReport:
    out = Path(config.output_dir)
    logger.info("study with %d experiments -> %s", len(config.experiments), out)

    experiments = config.experiment_configs()
    with _step("load-data"):
        dataset = load_market_data(config)
        fingerprint = dataset_fingerprint(dataset)
    logger.info("dataset fingerprint %s", fingerprint[:12])
    provenance = build_provenance()
    provenance.update({"config_sha256": config.content_hash, "dataset_sha256": fingerprint})

    with _step("simulate"):
        traces: List[SimulationTrace] = simulate_many(experiments, dataset, config.workers)
    for trace in traces:
        with _step("simulate", trace.config_id):
            write_trace(trace, out / TRACE_DIR, provenance)

    reports = []
    for trace, experiment in zip(traces, experiments):
        with _step("kpi", experiment.id):
            report = compute_kpis(trace, experiment)
            for problem in check_consistency(report, dataset.n_hours, experiment.base_variable_cost):
                logger.warning("experiment %s: %s", experiment.id, problem)
            write_kpis(report, out / KPI_DIR / f"kpis_{experiment.id}.csv", provenance)
            reports.append(report)

    matrix = ranking = weights = None
    if len(reports) >= 2:
        with _step("decision-matrix"):
            matrix = build_decision_matrix(substitute_undefined(reports, config.undefined_value), config.orientations)
            write_decision_matrix(matrix, out / MATRIX_FILE, provenance)
        with _step("rank"):
            ranking, weights = rank_study(matrix, config.mcdm)
            write_rankings(ranking, out / RANKINGS_FILE, provenance)
            write_weights(weights, out / WEIGHTS_FILE, provenance)
    else:
        logger.warning("a single experiment cannot be ranked; skipping decision matrix and ranking")

    with _step("report"):
        report = StudyReport(
            reports=reports,
            matrix=matrix,
            ranking=ranking,
            weights=weights,
            provenance=provenance,
            tiers={str(t): config.tiers[t].capacity for t, _ in config.experiments},
            operations={
                t.config_id: {"unserved_demand": t.unserved_demand, "throttled_hours": t.throttled_hours}
                for t in traces
            },
        )
        save_json(
            {
                "provenance": provenance,
                "experiments": [e.id for e in experiments],
                "tiers": report.tiers,
                "operations": report.operations,
                "mcdm": {
                    "preference": config.mcdm.preference,
                    "thresholds": config.mcdm.thresholds,
                    "v": config.mcdm.v,
                    "topsis_normalization": config.mcdm.topsis_normalization,
                },
            },
            out / STUDY_FILE,
        )
        report.write_markdown(out / REPORT_FILE)
        if config.plot and ranking is not None:
            ranking_chart(ranking, out / CHART_FILE)
    logger.info("study finished: %s", ", ".join(ranking.order) if ranking is not None else "no ranking")
    return report


def load_study_report(directory) -> StudyReport:
    """Rebuild the report of a finished study from its output directory."""
    directory = Path(directory)
    study = load_json(directory / STUDY_FILE)
    reports = [read_kpis(directory / KPI_DIR / f"kpis_{eid}.csv") for eid in study["experiments"]]
    matrix = ranking = weights = None
    if (directory / MATRIX_FILE).exists():
        stamped = read_provenance(directory / MATRIX_FILE).get("config_sha256")
        if stamped != study["provenance"]["config_sha256"]:
            logger.warning("%s in %s was written by another study configuration", MATRIX_FILE, directory)
        matrix = read_decision_matrix(directory / MATRIX_FILE)
        ranking, weights = rank_study(matrix, McdmSettings(**study["mcdm"]))
    return StudyReport(
        reports=reports,
        matrix=matrix,
        ranking=ranking,
        weights=weights,
        provenance=study["provenance"],
        tiers=study["tiers"],
        operations=study["operations"],
    )


def load_rankings(directory):
    return load_data(Path(directory) / RANKINGS_FILE, required_columns=["alternative", "aggregate_score"],
                     dtype={"alternative": str})
