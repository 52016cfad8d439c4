"""
Operation management: day-ahead power plans per sourcing strategy, the
hour-by-hour plant loop, storage/truck logistics and grid settlement.

S1 buys all electrolyzer power from the grid and sells all on-site RE.
S2 runs on on-site RE only and sells the surplus.
S3 uses on-site RE first and tops up from the grid to meet the daily demand;
with hybrid_re_limit="demand" the RE it keeps is capped at that demand too.

Plans assume perfect day-ahead foresight and a UTC midnight-to-midnight horizon;
a day's shortfall is recorded as unserved demand, never carried over.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from itertools import repeat
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pandas as pd

from core.database import load_data, load_json, save_data, save_json
from core.market_data import MarketDataset
from core.site_model import (
    ExperimentConfig,
    h2_output,
    max_hourly_output,
    power_for_rate,
    power_within_output,
    re_profile,
)

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-9  # kg


@dataclass(frozen=True)
class DayPlan:
    day: int
    re_power: np.ndarray
    grid_power: np.ndarray

    @property
    def electrolyzer_power(self) -> np.ndarray:
        return self.re_power + self.grid_power


@dataclass(frozen=True)
class HourRecord:
    hour: int
    re_generated: float
    re_to_electrolyzer: float
    grid_purchased: float
    re_sold: float
    h2_produced: float
    storage_level_end: float
    h2_delivered: float
    purchase_cost: float
    sale_revenue: float
    co2_emitted: float
    electrolyzer_power: float = 0.0
    trucks_busy: int = 0
    throttled: bool = False


RECORD_FIELDS = [f.name for f in fields(HourRecord)]


@dataclass
class SimulationTrace:
    config_id: str
    records: List[HourRecord]
    unserved_demand: float = 0.0
    throttled_hours: int = 0
    final_in_truck: float = 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([[getattr(r, name) for name in RECORD_FIELDS] for r in self.records], columns=RECORD_FIELDS)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def total(self, name: str) -> float:
        return float(np.sum(self.column(name)))

    @property
    def final_storage(self) -> float:
        return self.records[-1].storage_level_end if self.records else 0.0

    def summary(self) -> dict:
        totals = {
            name: self.total(name)
            for name in (
                "re_generated", "re_to_electrolyzer", "grid_purchased", "re_sold", "h2_produced",
                "h2_delivered", "purchase_cost", "sale_revenue", "co2_emitted", "electrolyzer_power",
            )
        }
        return {
            "config_id": self.config_id,
            "hours": len(self.records),
            "totals": totals,
            "unserved_demand": self.unserved_demand,
            "throttled_hours": self.throttled_hours,
            "final_storage": self.final_storage,
            "final_in_truck": self.final_in_truck,
        }


# ----------------------------------------------------------------------------
# Day planning
# ----------------------------------------------------------------------------

def _re_power(re: np.ndarray, config: ExperimentConfig) -> np.ndarray:
    """RE routed to the electrolyzer, capped at capacity, idle below min load."""
    el = config.electrolyzer
    power = np.minimum(re, el.capacity)
    return np.where(power >= el.min_power, power, 0.0)


def _cheapest_first(prices: np.ndarray) -> np.ndarray:
    return np.argsort(prices, kind="stable")


def _re_within_demand(re_power: np.ndarray, sell: np.ndarray, demand: float, config: ExperimentConfig) -> np.ndarray:
    """Keep routable RE only up to the daily demand, giving up the best-paid hours to the market first."""
    el = config.electrolyzer
    kept = np.zeros_like(re_power)
    remaining = demand
    for h in _cheapest_first(sell):
        if remaining <= 0:
            break
        if re_power[h] <= 0:
            continue
        if h2_output(re_power[h], 1.0, el) <= remaining:
            kept[h] = re_power[h]
        else:
            # at least min load, so the day may overshoot by part of one hour
            kept[h] = min(re_power[h], max(power_for_rate(remaining, el), el.min_power))
        remaining -= h2_output(kept[h], 1.0, el)
    return kept


def plan_day(strategy: str, config: ExperimentConfig, d: MarketDataset, day: int, re: np.ndarray = None) -> DayPlan:
    """
    24-hour plan of electrolyzer power split into RE and grid MW.

    `re` is the full-year on-site generation profile; computed when omitted.
    """
    if not 0 <= day < d.n_days:
        raise ValueError(f"day {day} outside 0..{d.n_days - 1}")
    hours = slice(24 * day, 24 * day + 24)
    if re is None:
        re = re_profile(d, config.renewables)
    re_day = np.asarray(re[hours], dtype=float)
    prices = d.buy[hours]
    el = config.electrolyzer
    demand = config.daily_demand

    re_power = np.zeros(24)
    grid_power = np.zeros(24)

    if strategy == "S2":
        return DayPlan(day, _re_power(re_day, config), grid_power)

    if strategy == "S1":
        if config.scheduling == "flat":
            grid_power[:] = power_for_rate(demand / 24.0, el)
            return DayPlan(day, re_power, grid_power)
        full_rate = max_hourly_output(el)
        remaining = demand
        for h in _cheapest_first(prices):
            if remaining <= 0:
                break
            if remaining >= full_rate:
                grid_power[h] = el.capacity
                remaining -= full_rate
            else:
                grid_power[h] = power_for_rate(remaining, el)
                remaining -= h2_output(grid_power[h], 1.0, el)
        return DayPlan(day, re_power, grid_power)

    if strategy != "S3":
        raise ValueError(f"unknown strategy '{strategy}'")

    re_power = _re_power(re_day, config)

    if config.scheduling == "flat":
        flat_power = power_for_rate(demand / 24.0, el)
        for h in range(24):
            if re_power[h] >= flat_power:
                continue
            re_power[h] = min(re_day[h], flat_power)
            grid_power[h] = flat_power - re_power[h]
        return DayPlan(day, re_power, grid_power)

    if config.hybrid_re_limit == "demand":
        re_power = _re_within_demand(re_power, d.sell[hours], demand, config)
    base_output = np.array([h2_output(p, 1.0, el) for p in re_power])
    shortfall = demand - base_output.sum()
    full_rate = max_hourly_output(el)
    for h in _cheapest_first(prices):
        if shortfall <= 0:
            break
        if re_power[h] >= el.capacity:
            continue
        gain = full_rate - base_output[h]
        if shortfall >= gain:
            total = el.capacity
        else:
            total = power_for_rate(base_output[h] + shortfall, el)
        # sub-min-load RE still feeds the topped-up stack
        re_power[h] = min(re_day[h], total)
        grid_power[h] = max(0.0, total - re_power[h])
        shortfall -= h2_output(total, 1.0, el) - base_output[h]
    return DayPlan(day, re_power, grid_power)


# ----------------------------------------------------------------------------
# Logistics
# ----------------------------------------------------------------------------

@dataclass
class LogisticsState:
    storage_capacity: float
    truck_capacity: float
    round_trip: int
    storage_level: float = 0.0
    loads: List[float] = field(default_factory=list)
    away: List[int] = field(default_factory=list)

    @classmethod
    def for_config(cls, config: ExperimentConfig) -> "LogisticsState":
        n = config.fleet.n_trucks
        return cls(
            storage_capacity=config.storage.capacity,
            truck_capacity=config.fleet.truck_capacity,
            round_trip=int(config.fleet.round_trip_duration),
            loads=[0.0] * n,
            away=[0] * n,
        )

    def available_trucks(self) -> List[int]:
        return [i for i, away in enumerate(self.away) if away == 0]

    def absorb_capacity(self) -> float:
        """kg this hour's production can add: storage headroom plus free space in docked trucks."""
        free = sum(self.truck_capacity - self.loads[i] for i in self.available_trucks())
        return (self.storage_capacity - self.storage_level) + free

    @property
    def in_truck(self) -> float:
        return float(sum(self.loads))


def step_logistics(state: LogisticsState, produced: float, hour: int = None):
    """
    Advance storage and fleet by one hour. Updates `state` in place.

    Production enters storage; every truck not on the road docks and drains
    storage (partially loaded trucks first). A full truck departs, its load
    counts as delivered, and it is away for the round-trip duration.

    Returns (state, delivered kg, trucks busy this hour).
    """
    available = state.available_trucks()
    busy = 0
    for i, away in enumerate(state.away):
        if away > 0:
            state.away[i] = away - 1
            busy += 1

    total = state.storage_level + produced
    for i in sorted(available, key=lambda i: (state.loads[i] == 0.0, i)):
        if total <= 0:
            break
        transfer = min(total, state.truck_capacity - state.loads[i])
        state.loads[i] += transfer
        total -= transfer

    delivered = 0.0
    for i in available:
        if state.loads[i] <= 0:
            continue
        busy += 1
        if state.loads[i] >= state.truck_capacity - MASS_TOLERANCE:
            delivered += state.loads[i]
            state.loads[i] = 0.0
            state.away[i] = state.round_trip
    state.storage_level = total
    return state, delivered, busy


# ----------------------------------------------------------------------------
# Simulation
# ----------------------------------------------------------------------------

def simulate(config: ExperimentConfig, d: MarketDataset) -> SimulationTrace:
    """Run one experiment over the whole year; a pure function of (config, dataset)."""
    el = config.electrolyzer
    re = re_profile(d, config.renewables)
    state = LogisticsState.for_config(config)
    records = []
    throttled_hours = 0
    unserved = 0.0
    negative_sale_hours = 0

    for day in range(d.n_days):
        plan = plan_day(config.strategy, config, d, day, re)
        produced_today = 0.0
        for h in range(24):
            hour = 24 * day + h
            re_part = float(plan.re_power[h])
            grid = float(plan.grid_power[h])
            power = re_part + grid
            if power > el.capacity:
                grid = max(0.0, el.capacity - re_part)
                power = re_part + grid
            produced = h2_output(power, 1.0, el)

            throttled = False
            absorb = state.absorb_capacity()
            if produced > absorb:
                throttled = True
                throttled_hours += 1
                limited = power_within_output(absorb, power, el)
                grid = max(0.0, grid - (power - limited))
                re_part = max(0.0, limited - grid)
                power = limited
                produced = h2_output(power, 1.0, el)

            state, delivered, busy = step_logistics(state, produced, hour)
            produced_today += produced

            re_generated = float(re[hour])
            re_sold = re_generated - re_part
            if re_sold > 0 and d.sell[hour] < 0:
                negative_sale_hours += 1
            records.append(
                HourRecord(
                    hour=hour,
                    re_generated=re_generated,
                    re_to_electrolyzer=re_part,
                    grid_purchased=grid,
                    re_sold=re_sold,
                    h2_produced=produced,
                    storage_level_end=state.storage_level,
                    h2_delivered=delivered,
                    purchase_cost=grid * float(d.buy[hour]),
                    sale_revenue=re_sold * float(d.sell[hour]),
                    co2_emitted=grid * float(d.co2[hour]),
                    electrolyzer_power=power,
                    trucks_busy=busy,
                    throttled=throttled,
                )
            )
        unserved += max(0.0, config.daily_demand - produced_today)

    trace = SimulationTrace(
        config_id=config.id,
        records=records,
        unserved_demand=unserved,
        throttled_hours=throttled_hours,
        final_in_truck=state.in_truck,
    )
    logger.info(
        "experiment %s (%s): %.1f t H2, %.0f MWh grid, %.0f MWh sold",
        config.id, config.strategy, trace.total("h2_produced") / 1000.0,
        trace.total("grid_purchased"), trace.total("re_sold"),
    )
    if negative_sale_hours:
        logger.debug("experiment %s sold RE at a negative net price in %d hours", config.id, negative_sale_hours)
    if throttled_hours:
        logger.warning("experiment %s: storage full, electrolyzer throttled in %d hours", config.id, throttled_hours)
    if unserved > 0 and config.strategy != "S2":
        logger.warning("experiment %s: %.1f kg of demand unserved", config.id, unserved)
    return trace


def simulate_many(configs: Sequence[ExperimentConfig], d: MarketDataset, workers: int = 1) -> List[SimulationTrace]:
    """Simulate several experiments, in parallel when workers > 1; result order follows `configs`."""
    if workers <= 1 or len(configs) <= 1:
        return [simulate(config, d) for config in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(simulate, configs, repeat(d)))


# ----------------------------------------------------------------------------
# Export
# ----------------------------------------------------------------------------

def write_trace(trace: SimulationTrace, directory, provenance: dict = None) -> Path:
    directory = Path(directory)
    path = save_data(trace.to_frame(), directory / f"trace_{trace.config_id}.csv", provenance)
    save_json(trace.summary(), directory / f"summary_{trace.config_id}.json")
    return path


def read_trace(path) -> SimulationTrace:
    """Rebuild a trace from `trace_<id>.csv` (and its summary JSON when present)."""
    path = Path(path)
    df = load_data(path, required_columns=RECORD_FIELDS)
    config_id = path.stem[len("trace_"):] if path.stem.startswith("trace_") else path.stem
    records = [
        HourRecord(
            hour=int(row.hour),
            re_generated=float(row.re_generated),
            re_to_electrolyzer=float(row.re_to_electrolyzer),
            grid_purchased=float(row.grid_purchased),
            re_sold=float(row.re_sold),
            h2_produced=float(row.h2_produced),
            storage_level_end=float(row.storage_level_end),
            h2_delivered=float(row.h2_delivered),
            purchase_cost=float(row.purchase_cost),
            sale_revenue=float(row.sale_revenue),
            co2_emitted=float(row.co2_emitted),
            electrolyzer_power=float(row.electrolyzer_power),
            trucks_busy=int(row.trucks_busy),
            throttled=str(row.throttled).strip().lower() == "true",
        )
        for row in df.itertuples(index=False)
    ]
    trace = SimulationTrace(config_id=config_id, records=records)
    trace.throttled_hours = sum(r.throttled for r in records)
    summary_path = path.with_name(f"summary_{config_id}.json")
    if summary_path.exists():
        summary = load_json(summary_path)
        trace.unserved_demand = float(summary["unserved_demand"])
        trace.final_in_truck = float(summary["final_in_truck"])
    return trace
