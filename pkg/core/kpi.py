"""
Key performance indicators of one experiment and the decision matrix built from them.

Units follow the published results tables: tonnes of hydrogen, MWh, million DKK,
DKK/kg and kg CO2 per kg H2. Per-kg metrics are None ("not applicable") when an
experiment produced no hydrogen.
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.database import load_data, save_data
from core.errors import ConfigError, DataValidationError

logger = logging.getLogger(__name__)

BENEFIT = "benefit"
COST = "cost"
ORIENTATIONS = (BENEFIT, COST)

KPI_NAMES = (
    "produced_h2",
    "grid_consumption",
    "grid_cost",
    "h2_cost",
    "electricity_sold",
    "sale_revenue",
    "co2_total",
    "co2_per_kg",
    "electrolyzer_flh",
    "storage_size",
    "storage_utilization",
    "n_trucks",
    "truck_utilization",
)

KPI_LABELS = {
    "produced_h2": "Produced hydrogen (tonnes)",
    "grid_consumption": "Grid electricity consumption (MWh)",
    "grid_cost": "Grid electricity cost (million DKK)",
    "h2_cost": "Hydrogen cost (DKK/kg)",
    "electricity_sold": "Electricity sold (MWh)",
    "sale_revenue": "Electricity sale revenue (million DKK)",
    "co2_total": "CO2 emissions (tonnes)",
    "co2_per_kg": "CO2 emissions (kg CO2/kg H2)",
    "electrolyzer_flh": "Electrolyzer full load hours (h)",
    "storage_size": "Storage size (kg)",
    "storage_utilization": "Storage utilization (%)",
    "n_trucks": "Number of trucks",
    "truck_utilization": "Truck utilization (%)",
}

DEFAULT_ORIENTATIONS = {
    "produced_h2": BENEFIT,
    "grid_consumption": COST,
    "grid_cost": COST,
    "h2_cost": COST,
    "electricity_sold": BENEFIT,
    "sale_revenue": BENEFIT,
    "co2_total": COST,
    "co2_per_kg": COST,
    "electrolyzer_flh": BENEFIT,
    "storage_size": COST,
    "storage_utilization": BENEFIT,
    "n_trucks": COST,
    "truck_utilization": BENEFIT,
}

PER_KG_KPIS = ("h2_cost", "co2_per_kg")
CONSISTENCY_TOLERANCE = 0.005


@dataclass(frozen=True)
class KpiReport:
    experiment_id: str
    produced_h2: float
    grid_consumption: float
    grid_cost: float
    h2_cost: Optional[float]
    electricity_sold: float
    sale_revenue: float
    co2_total: float
    co2_per_kg: Optional[float]
    electrolyzer_flh: float
    storage_size: float
    storage_utilization: float
    n_trucks: int
    truck_utilization: float

    def values(self) -> List[Optional[float]]:
        return [getattr(self, name) for name in KPI_NAMES]

    @property
    def undefined(self) -> List[str]:
        return [name for name in KPI_NAMES if getattr(self, name) is None]


def compute_kpis(trace, config) -> KpiReport:
    """Reduce a full-year SimulationTrace to the 13 KPIs."""
    if not trace.records:
        raise ValueError(f"trace {trace.config_id} is empty")
    n_hours = len(trace.records)
    produced_kg = trace.total("h2_produced")
    purchase = trace.total("purchase_cost")
    co2_kg = trace.total("co2_emitted")

    if produced_kg > 0:
        h2_cost = (purchase + config.base_variable_cost * produced_kg) / produced_kg
        co2_per_kg = co2_kg / produced_kg
    else:
        h2_cost = co2_per_kg = None
        logger.warning("experiment %s produced no hydrogen; per-kg KPIs not applicable", config.id)

    return KpiReport(
        experiment_id=config.id,
        produced_h2=produced_kg / 1000.0,
        grid_consumption=trace.total("grid_purchased"),
        grid_cost=purchase / 1e6,
        h2_cost=h2_cost,
        electricity_sold=trace.total("re_sold"),
        sale_revenue=trace.total("sale_revenue") / 1e6,
        co2_total=co2_kg / 1000.0,
        co2_per_kg=co2_per_kg,
        electrolyzer_flh=trace.total("electrolyzer_power") / config.electrolyzer.capacity,
        storage_size=config.storage.capacity,
        storage_utilization=float(np.mean(trace.column("storage_level_end"))) / config.storage.capacity,
        n_trucks=config.fleet.n_trucks,
        truck_utilization=trace.total("trucks_busy") / (config.fleet.n_trucks * n_hours),
    )


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(abs(a), abs(b), 1e-12)


def check_consistency(report: KpiReport, n_hours: int, base_variable_cost: float = 0.0,
                      tol: float = CONSISTENCY_TOLERANCE) -> List[str]:
    """Names of the internal relations the report violates; empty when consistent.

    `n_hours` is the length of the simulated year and bounds the full load hours.
    """
    violations = []
    if report.co2_per_kg is not None and not _close(report.co2_per_kg * report.produced_h2, report.co2_total, tol):
        violations.append("co2_per_kg x produced_h2 != co2_total")
    if report.h2_cost is not None:
        cost_dkk = report.h2_cost * report.produced_h2 * 1000.0
        expected = report.grid_cost * 1e6 + base_variable_cost * report.produced_h2 * 1000.0
        if not _close(cost_dkk, expected, tol):
            violations.append("h2_cost x produced_h2 != grid_cost + base cost")
    if report.electrolyzer_flh > n_hours * (1.0 + 1e-12):
        violations.append("electrolyzer_flh exceeds hours in year")
    for name in ("storage_utilization", "truck_utilization"):
        value = getattr(report, name)
        if not 0.0 <= value <= 1.0 + 1e-12:
            violations.append(f"{name} outside [0, 1]")
    return violations


def substitute_undefined(reports: Sequence[KpiReport], value: float = 0.0) -> List[KpiReport]:
    """Replace per-kg KPIs flagged not applicable with an explicit policy value."""
    out = []
    for report in reports:
        missing = report.undefined
        if missing:
            logger.info("experiment %s: %s set to %s", report.experiment_id, ", ".join(missing), value)
            report = KpiReport(**{**asdict(report), **{name: value for name in missing}})
        out.append(report)
    return out


# ----------------------------------------------------------------------------
# Decision matrix
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DecisionMatrix:
    alternatives: Tuple[str, ...]
    criteria: Tuple[Tuple[str, str], ...]
    values: np.ndarray

    def __post_init__(self):
        alternatives = tuple(str(a) for a in self.alternatives)
        criteria = tuple((str(name), str(orientation)) for name, orientation in self.criteria)
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(alternatives), len(criteria)):
            raise ConfigError(
                f"decision matrix shape {values.shape} does not match "
                f"{len(alternatives)} alternatives x {len(criteria)} criteria"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigError("decision matrix contains non-finite values")
        names = [name for name, _ in criteria]
        if len(set(names)) != len(names):
            raise ConfigError("criteria names must be unique")
        if len(set(alternatives)) != len(alternatives):
            raise ConfigError("alternative labels must be unique")
        for name, orientation in criteria:
            if orientation not in ORIENTATIONS:
                raise ConfigError(f"criterion '{name}': orientation must be benefit or cost, got '{orientation}'")
        values.setflags(write=False)
        object.__setattr__(self, "alternatives", alternatives)
        object.__setattr__(self, "criteria", criteria)
        object.__setattr__(self, "values", values)

    @property
    def criteria_names(self) -> List[str]:
        return [name for name, _ in self.criteria]

    @property
    def is_benefit(self) -> np.ndarray:
        return np.array([orientation == BENEFIT for _, orientation in self.criteria])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.alternatives), columns=self.criteria_names)


def build_decision_matrix(reports: Sequence[KpiReport], orientations: Dict[str, str] = None) -> DecisionMatrix:
    """
    Stack KPI reports into a decision matrix in experiment order.

    `orientations` overrides entries of DEFAULT_ORIENTATIONS; every KPI must
    end up with one. Reports with undefined entries are rejected, run them
    through `substitute_undefined` first.
    """
    if len(reports) < 2:
        raise ConfigError(f"a decision matrix needs at least 2 experiments, got {len(reports)}")
    merged = {**DEFAULT_ORIENTATIONS, **(orientations or {})}
    unknown = set(merged) - set(KPI_NAMES)
    if unknown:
        raise ConfigError(f"orientation given for unknown criteria: {', '.join(sorted(unknown))}")
    missing = [name for name in KPI_NAMES if not merged.get(name)]
    if missing:
        raise ConfigError(f"missing orientation for {', '.join(missing)}")
    for report in reports:
        if report.undefined:
            raise ConfigError(
                f"experiment {report.experiment_id}: {', '.join(report.undefined)} not applicable; "
                "substitute a value before ranking"
            )
    return DecisionMatrix(
        alternatives=tuple(r.experiment_id for r in reports),
        criteria=tuple((name, merged[name]) for name in KPI_NAMES),
        values=np.array([r.values() for r in reports], dtype=float),
    )


ALTERNATIVE_COLUMN = "alternative"
ORIENTATION_ROW = "orientation"


def write_decision_matrix(matrix: DecisionMatrix, path, provenance: dict = None):
    header = [ALTERNATIVE_COLUMN] + matrix.criteria_names
    rows = [[ORIENTATION_ROW] + [orientation for _, orientation in matrix.criteria]]
    rows += [[alt] + list(row) for alt, row in zip(matrix.alternatives, matrix.values.tolist())]
    return save_data(pd.DataFrame(rows, columns=header), path, provenance)


def read_decision_matrix(path) -> DecisionMatrix:
    """Read `decision_matrix.csv`: alternative column, orientation row, then one row per alternative."""
    df = load_data(path, required_columns=[ALTERNATIVE_COLUMN], dtype=str)
    criteria_names = [c for c in df.columns if c != ALTERNATIVE_COLUMN]
    if not criteria_names:
        raise DataValidationError("no criteria columns", path=path)
    if df.empty or str(df.iloc[0][ALTERNATIVE_COLUMN]).strip() != ORIENTATION_ROW:
        raise DataValidationError(f"first data row must be the '{ORIENTATION_ROW}' row", path=path, row=1)

    orientations = []
    for name in criteria_names:
        orientation = str(df.iloc[0][name]).strip().lower()
        if orientation not in ORIENTATIONS:
            raise DataValidationError(
                f"orientation must be benefit or cost, got '{df.iloc[0][name]}'", path=path, row=1, column=name
            )
        orientations.append(orientation)

    alternatives, values = [], []
    for i in range(1, len(df)):
        row = df.iloc[i]
        alternatives.append(str(row[ALTERNATIVE_COLUMN]).strip())
        parsed = []
        for name in criteria_names:
            try:
                value = float(row[name])
            except (TypeError, ValueError):
                raise DataValidationError(f"not a number: '{row[name]}'", path=path, row=i + 1, column=name)
            if not np.isfinite(value):
                raise DataValidationError("non-finite value", path=path, row=i + 1, column=name)
            parsed.append(value)
        values.append(parsed)
    if len(set(alternatives)) != len(alternatives):
        raise DataValidationError("duplicate alternative labels", path=path, column=ALTERNATIVE_COLUMN)

    logger.debug("read %d x %d decision matrix from %s", len(alternatives), len(criteria_names), path)
    return DecisionMatrix(
        alternatives=tuple(alternatives),
        criteria=tuple(zip(criteria_names, orientations)),
        values=np.array(values, dtype=float).reshape(len(alternatives), len(criteria_names)),
    )


def kpis_frame(reports: Sequence[KpiReport]) -> pd.DataFrame:
    columns = ["experiment_id"] + list(KPI_NAMES)
    return pd.DataFrame([[getattr(r, c) for c in columns] for r in reports], columns=columns)


def write_kpis(report: KpiReport, path, provenance: dict = None):
    return save_data(kpis_frame([report]), path, provenance)


def read_kpis(path) -> KpiReport:
    df = load_data(path, required_columns=["experiment_id"] + list(KPI_NAMES), dtype={"experiment_id": str})
    row = df.iloc[0]
    kwargs = {"experiment_id": str(row["experiment_id"])}
    for f in fields(KpiReport):
        if f.name == "experiment_id":
            continue
        value = row[f.name]
        if pd.isna(value):
            kwargs[f.name] = None
        elif f.name == "n_trucks":
            kwargs[f.name] = int(value)
        else:
            kwargs[f.name] = float(value)
    return KpiReport(**kwargs)
