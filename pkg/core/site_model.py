"""
Physical and contractual description of the plant.

Electrolyzer with a piecewise-linear specific-consumption curve, on-site PV
and wind park, hydrogen storage, truck fleet and the fixed daily demand.

The default curve is calibrated so that full load consumes 57.45 kWh/kg
(49,865 MWh for 868 t in the 10 MW grid-only run) and 25% load is 5% better.
A one-knot curve gives constant efficiency.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from core.errors import ConfigError

STRATEGIES = ("S1", "S2", "S3")
STRATEGY_NAMES = {"S1": "Grid-only", "S2": "On-site RE only", "S3": "Hybrid"}
SCHEDULING_POLICIES = ("cheapest_hours", "flat")
HYBRID_RE_LIMITS = ("capacity", "demand")

LHV_KWH_PER_KG = 33.33
FULL_LOAD_SPECIFIC_CONSUMPTION = 57.45
PART_LOAD_IMPROVEMENT = 0.05
DEFAULT_CURVE = (
    (0.25, FULL_LOAD_SPECIFIC_CONSUMPTION * (1.0 - PART_LOAD_IMPROVEMENT)),
    (1.0, FULL_LOAD_SPECIFIC_CONSUMPTION),
)
DEFAULT_MIN_LOAD = 0.1
DEFAULT_TRUCK_CAPACITY = 1000.0
DEFAULT_ROUND_TRIP = 3
TARGET_FULL_LOAD_HOURS = 5000.0

POWER_TOLERANCE = 1e-6  # MW


@dataclass(frozen=True)
class ElectrolyzerSpec:
    capacity: float
    efficiency_curve: Tuple[Tuple[float, float], ...] = DEFAULT_CURVE
    min_load_fraction: float = DEFAULT_MIN_LOAD
    lhv: float = LHV_KWH_PER_KG

    def __post_init__(self):
        curve = tuple((float(load), float(sc)) for load, sc in self.efficiency_curve)
        object.__setattr__(self, "efficiency_curve", curve)
        if self.capacity <= 0:
            raise ConfigError(f"electrolyzer capacity must be > 0, got {self.capacity}")
        if not curve:
            raise ConfigError("efficiency curve needs at least one knot")
        loads = [load for load, _ in curve]
        if any(b <= a for a, b in zip(loads, loads[1:])):
            raise ConfigError("efficiency curve knots must be strictly increasing in load fraction")
        if loads[0] <= 0 or loads[-1] != 1.0:
            raise ConfigError("efficiency curve load fractions must lie in (0, 1] and end at 1.0")
        for load, sc in curve:
            if sc < self.lhv:
                raise ConfigError(
                    f"specific consumption {sc} kWh/kg at load {load} is below the LHV {self.lhv}"
                )
        if not 0 <= self.min_load_fraction <= loads[0]:
            raise ConfigError(
                f"min_load_fraction {self.min_load_fraction} must lie in [0, {loads[0]}]"
            )

    @property
    def min_power(self) -> float:
        return self.min_load_fraction * self.capacity


def specific_consumption(load_fraction: float, spec: ElectrolyzerSpec) -> float:
    """kWh per kg at a load fraction; clamped to the first knot below it."""
    loads, values = zip(*spec.efficiency_curve)
    return float(np.interp(load_fraction, loads, values))


def efficiency(load_fraction: float, spec: ElectrolyzerSpec) -> float:
    """LHV efficiency at a load fraction, in (0, 1]."""
    return spec.lhv / specific_consumption(load_fraction, spec)


def h2_output(power: float, duration: float, spec: ElectrolyzerSpec) -> float:
    """kg of hydrogen from running at `power` MW for `duration` hours."""
    if power < 0 or power > spec.capacity * (1.0 + 1e-12):
        raise ValueError(f"power {power} MW outside [0, {spec.capacity}]")
    if power <= 0 or power < spec.min_power:
        return 0.0
    return power * duration * 1000.0 / specific_consumption(power / spec.capacity, spec)


def max_hourly_output(spec: ElectrolyzerSpec) -> float:
    return h2_output(spec.capacity, 1.0, spec)


def power_for_rate(target: float, spec: ElectrolyzerSpec) -> float:
    """Least power (MW) whose hourly output reaches `target` kg, by bisection."""
    if target <= 0:
        return 0.0
    if target > max_hourly_output(spec) * (1.0 + 1e-12):
        raise ValueError(
            f"target {target} kg/h exceeds maximum rate {max_hourly_output(spec)} kg/h"
        )
    lo, hi = 0.0, spec.capacity
    while hi - lo > POWER_TOLERANCE:
        mid = 0.5 * (lo + hi)
        if h2_output(mid, 1.0, spec) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def power_within_output(limit: float, upper: float, spec: ElectrolyzerSpec) -> float:
    """Greatest power <= upper whose hourly output does not exceed `limit` kg."""
    if h2_output(upper, 1.0, spec) <= limit:
        return upper
    lo, hi = 0.0, upper
    while hi - lo > POWER_TOLERANCE:
        mid = 0.5 * (lo + hi)
        if h2_output(mid, 1.0, spec) <= limit:
            lo = mid
        else:
            hi = mid
    return lo if lo >= spec.min_power else 0.0


@dataclass(frozen=True)
class RenewableSpec:
    pv_capacity: float = 256.0
    wind_capacity: float = 16.8

    def __post_init__(self):
        if self.pv_capacity < 0 or self.wind_capacity < 0:
            raise ConfigError("renewable capacities must be >= 0")


def re_available(d, spec: RenewableSpec, hour: int) -> float:
    """On-site PV + wind generation in MW for the hour."""
    d.check_hour(hour)
    return float(d.pv_cf[hour] * spec.pv_capacity + d.wind_cf[hour] * spec.wind_capacity)


def re_profile(d, spec: RenewableSpec) -> np.ndarray:
    return d.pv_cf.values * spec.pv_capacity + d.wind_cf.values * spec.wind_capacity


@dataclass(frozen=True)
class StorageSpec:
    capacity: float

    def __post_init__(self):
        if self.capacity <= 0:
            raise ConfigError(f"storage capacity must be > 0, got {self.capacity}")


@dataclass(frozen=True)
class FleetSpec:
    n_trucks: int
    truck_capacity: float = DEFAULT_TRUCK_CAPACITY
    round_trip_duration: int = DEFAULT_ROUND_TRIP

    def __post_init__(self):
        if int(self.n_trucks) != self.n_trucks or self.n_trucks < 1:
            raise ConfigError(f"n_trucks must be an integer >= 1, got {self.n_trucks}")
        if self.truck_capacity <= 0:
            raise ConfigError(f"truck_capacity must be > 0, got {self.truck_capacity}")
        if int(self.round_trip_duration) != self.round_trip_duration or self.round_trip_duration < 1:
            raise ConfigError(
                f"round_trip_duration must be a whole number of hours >= 1, got {self.round_trip_duration}"
            )


@dataclass(frozen=True)
class TierSpec:
    capacity: float
    daily_demand: float
    storage: float
    n_trucks: int


DEFAULT_TIERS: Dict[int, TierSpec] = {
    1: TierSpec(capacity=10.0, daily_demand=2390.0, storage=100.0, n_trucks=2),
    2: TierSpec(capacity=50.0, daily_demand=11952.0, storage=1000.0, n_trucks=6),
    3: TierSpec(capacity=100.0, daily_demand=23903.0, storage=2000.0, n_trucks=11),
}


@dataclass(frozen=True)
class ExperimentConfig:
    id: str
    electrolyzer: ElectrolyzerSpec
    renewables: RenewableSpec
    storage: StorageSpec
    fleet: FleetSpec
    strategy: str
    daily_demand: float
    scheduling: str = "cheapest_hours"
    base_variable_cost: float = 0.0
    hybrid_re_limit: str = "capacity"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"experiment {self.id}: unknown strategy '{self.strategy}'")
        if self.scheduling not in SCHEDULING_POLICIES:
            raise ConfigError(f"experiment {self.id}: unknown scheduling policy '{self.scheduling}'")
        if self.hybrid_re_limit not in HYBRID_RE_LIMITS:
            raise ConfigError(f"experiment {self.id}: unknown hybrid RE limit '{self.hybrid_re_limit}'")
        if self.daily_demand < 0:
            raise ConfigError(f"experiment {self.id}: daily demand must be >= 0")
        if 24.0 * max_hourly_output(self.electrolyzer) < self.daily_demand:
            raise ConfigError(
                f"experiment {self.id}: daily demand {self.daily_demand} kg exceeds "
                f"24 h at full load ({24.0 * max_hourly_output(self.electrolyzer):.1f} kg)"
            )
        if self.base_variable_cost < 0:
            raise ConfigError(f"experiment {self.id}: base_variable_cost must be >= 0")


def default_electrolyzer(capacity: float) -> ElectrolyzerSpec:
    return ElectrolyzerSpec(capacity=capacity)


def demand_for_flh(capacity: float, flh: float = TARGET_FULL_LOAD_HOURS, spec: ElectrolyzerSpec = None) -> float:
    """Daily demand (kg) that a full-load-hour target implies at full-load efficiency."""
    spec = spec or default_electrolyzer(capacity)
    return capacity * flh * 1000.0 / specific_consumption(1.0, spec) / 365.0


def experiment_id(tier_id, strategy: str) -> str:
    return f"{tier_id}.{STRATEGIES.index(strategy) + 1}"


def make_experiment(
    tier_id,
    strategy: str,
    tiers: Dict = None,
    renewables: RenewableSpec = None,
    efficiency_curve=DEFAULT_CURVE,
    min_load_fraction: float = DEFAULT_MIN_LOAD,
    lhv: float = LHV_KWH_PER_KG,
    truck_capacity: float = DEFAULT_TRUCK_CAPACITY,
    round_trip_duration: int = DEFAULT_ROUND_TRIP,
    scheduling: str = "cheapest_hours",
    base_variable_cost: float = 0.0,
    hybrid_re_limit: str = "capacity",
) -> ExperimentConfig:
    """Build one cell of the tier x strategy matrix."""
    tiers = tiers or DEFAULT_TIERS
    if tier_id not in tiers:
        raise ConfigError(f"tier {tier_id} is not defined")
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy '{strategy}'")
    tier = tiers[tier_id]
    return ExperimentConfig(
        id=experiment_id(tier_id, strategy),
        electrolyzer=ElectrolyzerSpec(
            capacity=tier.capacity,
            efficiency_curve=tuple(tuple(knot) for knot in efficiency_curve),
            min_load_fraction=min_load_fraction,
            lhv=lhv,
        ),
        renewables=renewables or RenewableSpec(),
        storage=StorageSpec(tier.storage),
        fleet=FleetSpec(tier.n_trucks, truck_capacity, round_trip_duration),
        strategy=strategy,
        daily_demand=tier.daily_demand,
        scheduling=scheduling,
        base_variable_cost=base_variable_cost,
        hybrid_re_limit=hybrid_re_limit,
    )
