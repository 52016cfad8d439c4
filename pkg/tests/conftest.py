import os
import sys

import numpy as np
import pytest

ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT_DIR not in sys.path:
    sys.path.insert(0, ROOT_DIR)

from core.kpi import read_decision_matrix  # noqa: E402
from core.market_data import (  # noqa: E402
    CF_UNIT,
    CO2_UNIT,
    PRICE_UNIT,
    HourlySeries,
    MarketDataset,
    TariffSchedule,
    generate_synthetic,
    hours_in_year,
)
from core.site_model import (  # noqa: E402
    ElectrolyzerSpec,
    ExperimentConfig,
    FleetSpec,
    RenewableSpec,
    StorageSpec,
)

FIXTURES_DIR = os.path.join(ROOT_DIR, "fixtures")
PUBLISHED_MATRIX = os.path.join(FIXTURES_DIR, "published_results.csv")
PUBLISHED_ORDER = "1.2,2.2,3.2,1.3,2.3,1.1,2.1,3.3,3.1"


def make_dataset(year=2023, spot=500.0, co2=100.0, pv=0.0, wind=0.0, tariffs=None):
    """Full-year dataset from scalars or arrays; flat zero tariffs unless given."""
    n = hours_in_year(year)

    def full(value):
        return np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy() if np.ndim(value) == 0 \
            else np.asarray(value, dtype=float)

    return MarketDataset(
        spot=HourlySeries(year, full(spot), PRICE_UNIT),
        co2=HourlySeries(year, full(co2), CO2_UNIT),
        tariffs=tariffs or TariffSchedule.flat(),
        pv_cf=HourlySeries(year, full(pv), CF_UNIT),
        wind_cf=HourlySeries(year, full(wind), CF_UNIT),
        timezone="UTC",
    )


def make_config(strategy="S1", capacity=10.0, daily_demand=120.0, storage=1e9, n_trucks=1,
                truck_capacity=1e9, round_trip=3, pv=0.0, wind=0.0, scheduling="cheapest_hours",
                curve=((1.0, 50.0),), min_load=0.0, base_variable_cost=0.0, experiment_id="t.1",
                hybrid_re_limit="capacity"):
    return ExperimentConfig(
        id=experiment_id,
        electrolyzer=ElectrolyzerSpec(capacity=capacity, efficiency_curve=curve, min_load_fraction=min_load),
        renewables=RenewableSpec(pv_capacity=pv, wind_capacity=wind),
        storage=StorageSpec(storage),
        fleet=FleetSpec(n_trucks, truck_capacity, round_trip),
        strategy=strategy,
        daily_demand=daily_demand,
        scheduling=scheduling,
        base_variable_cost=base_variable_cost,
        hybrid_re_limit=hybrid_re_limit,
    )


@pytest.fixture(scope="session")
def synthetic_year():
    return generate_synthetic(seed=7, year=2024)


@pytest.fixture
def flat_dataset():
    return make_dataset()


@pytest.fixture(scope="session")
def published_matrix():
    return read_decision_matrix(PUBLISHED_MATRIX)
