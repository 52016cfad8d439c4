"""
Hourly market and resource time series for one simulated year.

Spot prices, grid CO2 intensity, PV/wind capacity factors and the layered
TSO/DSO tariff schedule, plus the composition of effective buy and sell
prices. Datasets come either from the canonical CSV files or from the seeded
synthetic generator.
"""

import calendar
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Tuple

import numpy as np
import pandas as pd
import pytz

from core.database import load_data, save_data
from core.errors import DataValidationError, HourOutOfRange

logger = logging.getLogger(__name__)

PRICE_UNIT = "DKK/MWh"
CO2_UNIT = "kgCO2/MWh"
CF_UNIT = "-"
UNITS = (PRICE_UNIT, CO2_UNIT, CF_UNIT)

DEFAULT_TIMEZONE = "Europe/Copenhagen"

TARIFF_KINDS = ("tso_consumption", "dso_consumption", "tso_production", "dso_production")
SEASONS = ("all", "summer", "winter")
SUMMER_MONTHS = frozenset(range(4, 10))

# series -> (canonical file name, value column, unit)
SERIES_FILES = {
    "spot": ("spot.csv", "price_dkk_per_mwh", PRICE_UNIT),
    "co2": ("co2.csv", "kg_co2_per_mwh", CO2_UNIT),
    "pv_cf": ("pv_cf.csv", "capacity_factor", CF_UNIT),
    "wind_cf": ("wind_cf.csv", "capacity_factor", CF_UNIT),
}
TARIFF_FILE = "tariffs.csv"
TARIFF_COLUMNS = ["kind", "season", "hours", "rate_dkk_per_mwh"]


def hours_in_year(year: int) -> int:
    return 8784 if calendar.isleap(year) else 8760


def timestamps(year: int) -> pd.DatetimeIndex:
    """Hourly UTC index covering the calendar year."""
    return pd.date_range(
        start=pd.Timestamp(year=year, month=1, day=1, tz="UTC"),
        periods=hours_in_year(year),
        freq="h",
    )


def _read_only(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class HourlySeries:
    start_year: int
    values: np.ndarray
    unit: str

    def __post_init__(self):
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit tag '{self.unit}'")
        values = _read_only(self.values)
        object.__setattr__(self, "values", values)

        expected = hours_in_year(self.start_year)
        if len(values) != expected:
            raise ValueError(
                f"series has {len(values)} hours, year {self.start_year} has {expected}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        if self.unit == CF_UNIT and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("capacity factor outside [0, 1]")
        if self.unit == CO2_UNIT and values.min() < 0.0:
            raise ValueError("negative CO2 intensity")

    def __len__(self):
        return len(self.values)

    def __getitem__(self, hour):
        return self.values[hour]


def parse_hours(spec: str) -> frozenset:
    """`all`, `7`, `17-20` (inclusive) or a wrapping range like `21-5`."""
    spec = str(spec).strip().lower()
    if spec == "all":
        return frozenset(range(24))
    if "-" in spec:
        lo, _, hi = spec.partition("-")
        lo, hi = int(lo), int(hi)
    else:
        lo = hi = int(spec)
    if not (0 <= lo <= 23 and 0 <= hi <= 23):
        raise ValueError(f"hour range '{spec}' outside 0-23")
    if lo <= hi:
        return frozenset(range(lo, hi + 1))
    return frozenset(list(range(lo, 24)) + list(range(0, hi + 1)))


@dataclass(frozen=True)
class TariffBand:
    kind: str
    season: str
    hours: str
    rate: float

    def __post_init__(self):
        if self.kind not in TARIFF_KINDS:
            raise ValueError(f"unknown tariff kind '{self.kind}'")
        if self.season not in SEASONS:
            raise ValueError(f"unknown season '{self.season}'")
        parse_hours(self.hours)
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"tariff rate must be >= 0, got {self.rate}")

    def mask(self, local_month: np.ndarray, local_hour: np.ndarray) -> np.ndarray:
        hour_mask = np.isin(local_hour, sorted(parse_hours(self.hours)))
        if self.season == "all":
            return hour_mask
        in_summer = np.isin(local_month, sorted(SUMMER_MONTHS))
        return hour_mask & (in_summer if self.season == "summer" else ~in_summer)


@dataclass(frozen=True)
class TariffSchedule:
    """Layered grid tariffs; each kind's bands must partition the year."""
    bands: Tuple[TariffBand, ...] = ()

    def for_kind(self, kind: str):
        return [b for b in self.bands if b.kind == kind]

    def resolve(self, kind: str, local_month: np.ndarray, local_hour: np.ndarray) -> np.ndarray:
        """Hourly rate array for one tariff kind; absent kinds are zero."""
        bands = self.for_kind(kind)
        rates = np.zeros(len(local_hour))
        if not bands:
            return rates
        covered = np.zeros(len(local_hour), dtype=int)
        for band in bands:
            mask = band.mask(local_month, local_hour)
            covered += mask
            rates[mask] = band.rate
        if np.any(covered != 1):
            first = int(np.flatnonzero(covered != 1)[0])
            problem = "overlapping" if covered[first] > 1 else "uncovered"
            raise ValueError(f"{kind} bands do not partition the year: hour {first} is {problem}")
        return rates

    @classmethod
    def flat(cls, tso_consumption=0.0, dso_consumption=0.0, tso_production=0.0, dso_production=0.0):
        rates = dict(
            tso_consumption=tso_consumption,
            dso_consumption=dso_consumption,
            tso_production=tso_production,
            dso_production=dso_production,
        )
        return cls(tuple(TariffBand(kind, "all", "all", float(rate)) for kind, rate in rates.items()))


def default_tariffs() -> TariffSchedule:
    """Danish-style time-of-use schedule: flat TSO, seasonal low/high/peak DSO bands."""
    bands = [TariffBand("tso_consumption", "all", "all", 140.0)]
    for season, high, peak in (("winter", 390.0, 1170.0), ("summer", 200.0, 520.0)):
        bands += [
            TariffBand("dso_consumption", season, "0-5", 130.0),
            TariffBand("dso_consumption", season, "6-16", high),
            TariffBand("dso_consumption", season, "17-20", peak),
            TariffBand("dso_consumption", season, "21-23", high),
        ]
    bands += [
        TariffBand("tso_production", "all", "all", 3.0),
        TariffBand("dso_production", "all", "all", 4.0),
    ]
    return TariffSchedule(tuple(bands))


@dataclass(frozen=True, eq=False)
class MarketDataset:
    spot: HourlySeries
    co2: HourlySeries
    tariffs: TariffSchedule
    pv_cf: HourlySeries
    wind_cf: HourlySeries
    timezone: str = DEFAULT_TIMEZONE

    local_month: np.ndarray = field(init=False, repr=False)
    local_hour: np.ndarray = field(init=False, repr=False)
    tso_consumption: np.ndarray = field(init=False, repr=False)
    dso_consumption: np.ndarray = field(init=False, repr=False)
    tso_production: np.ndarray = field(init=False, repr=False)
    dso_production: np.ndarray = field(init=False, repr=False)
    buy: np.ndarray = field(init=False, repr=False)
    sell: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        series = (self.spot, self.co2, self.pv_cf, self.wind_cf)
        years = {s.start_year for s in series}
        lengths = {len(s) for s in series}
        if len(years) != 1 or len(lengths) != 1:
            raise ValueError("all series must cover the same year and length")
        expected_units = (PRICE_UNIT, CO2_UNIT, CF_UNIT, CF_UNIT)
        for s, unit in zip(series, expected_units):
            if s.unit != unit:
                raise ValueError(f"expected unit {unit}, got {s.unit}")

        local = timestamps(self.year).tz_convert(pytz.timezone(self.timezone))
        local_month = local.month.to_numpy().astype(int)
        local_hour = local.hour.to_numpy().astype(int)
        local_month.setflags(write=False)
        local_hour.setflags(write=False)
        object.__setattr__(self, "local_month", local_month)
        object.__setattr__(self, "local_hour", local_hour)

        for kind in TARIFF_KINDS:
            rates = self.tariffs.resolve(kind, local_month, local_hour)
            object.__setattr__(self, kind, _read_only(rates))

        spot = self.spot.values
        object.__setattr__(self, "buy", _read_only(spot + self.tso_consumption + self.dso_consumption))
        object.__setattr__(self, "sell", _read_only(spot - self.tso_production - self.dso_production))

    @property
    def year(self) -> int:
        return self.spot.start_year

    @property
    def n_hours(self) -> int:
        return len(self.spot)

    @property
    def n_days(self) -> int:
        return self.n_hours // 24

    def check_hour(self, hour):
        if not isinstance(hour, (int, np.integer)) or not 0 <= hour < self.n_hours:
            raise HourOutOfRange(f"hour {hour} outside 0..{self.n_hours - 1}")


def buy_price(d: MarketDataset, hour: int) -> float:
    """Spot plus TSO and DSO consumption tariffs for the hour (DKK/MWh)."""
    d.check_hour(hour)
    return float(d.buy[hour])


def sell_price(d: MarketDataset, hour: int) -> float:
    """Spot minus production tariffs; may be negative."""
    d.check_hour(hour)
    return float(d.sell[hour])


def buy_prices(d: MarketDataset) -> np.ndarray:
    return d.buy


def sell_prices(d: MarketDataset) -> np.ndarray:
    return d.sell


# ----------------------------------------------------------------------------
# CSV ingestion
# ----------------------------------------------------------------------------

def _parse_floats(raw: pd.Series, path, column) -> np.ndarray:
    values = np.empty(len(raw))
    for i, cell in enumerate(raw):
        try:
            values[i] = float(str(cell).strip())
        except ValueError:
            raise DataValidationError(f"unparsable number '{cell}'", path=path, row=i + 1, column=column)
        if not np.isfinite(values[i]):
            raise DataValidationError(f"non-finite number '{cell}'", path=path, row=i + 1, column=column)
    return values


def _read_series(path, column: str, unit: str, year: Optional[int]) -> HourlySeries:
    df = load_data(path, required_columns=["timestamp_utc", column], dtype=str)
    if df.empty:
        raise DataValidationError("no data rows", path=path)

    stamps = pd.to_datetime(df["timestamp_utc"].str.strip(), utc=True, errors="coerce")
    if stamps.isna().any():
        row = int(np.flatnonzero(stamps.isna().to_numpy())[0]) + 1
        raise DataValidationError("unparsable timestamp", path=path, row=row, column="timestamp_utc")

    first = stamps.iloc[0]
    series_year = first.year if year is None else year
    if first != pd.Timestamp(year=series_year, month=1, day=1, tz="UTC"):
        raise DataValidationError(
            f"series must start at {series_year}-01-01T00:00Z", path=path, row=1, column="timestamp_utc"
        )
    expected = hours_in_year(series_year)
    if len(df) != expected:
        raise DataValidationError(
            f"row-count mismatch: {len(df)} rows, year {series_year} has {expected} hours", path=path
        )
    steps = stamps.diff().iloc[1:] != pd.Timedelta(hours=1)
    if steps.any():
        row = int(np.flatnonzero(steps.to_numpy())[0]) + 2
        raise DataValidationError(
            "timestamps must be hourly and strictly increasing", path=path, row=row, column="timestamp_utc"
        )

    values = _parse_floats(df[column], path, column)
    if unit == CF_UNIT:
        bad = np.flatnonzero((values < 0.0) | (values > 1.0))
        if len(bad):
            raise DataValidationError(
                f"capacity factor {values[bad[0]]} outside [0, 1]", path=path, row=int(bad[0]) + 1, column=column
            )
    if unit == CO2_UNIT:
        bad = np.flatnonzero(values < 0.0)
        if len(bad):
            raise DataValidationError(
                f"negative CO2 intensity {values[bad[0]]}", path=path, row=int(bad[0]) + 1, column=column
            )
    return HourlySeries(series_year, values, unit)


def _read_tariffs(path) -> TariffSchedule:
    df = load_data(path, required_columns=TARIFF_COLUMNS, dtype=str)
    bands = []
    for i, row in enumerate(df.itertuples(index=False), start=1):
        try:
            rate = float(str(row.rate_dkk_per_mwh).strip())
        except ValueError:
            raise DataValidationError(
                f"unparsable number '{row.rate_dkk_per_mwh}'", path=path, row=i, column="rate_dkk_per_mwh"
            )
        try:
            bands.append(TariffBand(str(row.kind).strip(), str(row.season).strip(), str(row.hours).strip(), rate))
        except ValueError as e:
            raise DataValidationError(str(e), path=path, row=i) from e
    return TariffSchedule(tuple(bands))


def _resolve_paths(paths) -> dict:
    if isinstance(paths, Mapping):
        resolved = {key: Path(value) for key, value in paths.items()}
    else:
        directory = Path(paths)
        resolved = {key: directory / spec[0] for key, spec in SERIES_FILES.items()}
        resolved["tariffs"] = directory / TARIFF_FILE
    missing = [key for key in list(SERIES_FILES) + ["tariffs"] if key not in resolved]
    if missing:
        raise DataValidationError(f"no path given for {', '.join(missing)}")
    return resolved


def load_dataset(paths, year: Optional[int] = None, timezone: str = DEFAULT_TIMEZONE) -> MarketDataset:
    """
    Load and validate the five canonical CSV files.

    `paths` is either a mapping with keys spot, co2, pv_cf, wind_cf, tariffs
    or a directory holding the canonical file names.
    """
    resolved = _resolve_paths(paths)
    series = {}
    for key, (_, column, unit) in SERIES_FILES.items():
        series[key] = _read_series(resolved[key], column, unit, year)
        year = series[key].start_year
    tariffs = _read_tariffs(resolved["tariffs"])

    try:
        dataset = MarketDataset(tariffs=tariffs, timezone=timezone, **series)
    except ValueError as e:
        raise DataValidationError(str(e), path=resolved["tariffs"]) from e
    logger.info("loaded market dataset for %d (%d hours)", dataset.year, dataset.n_hours)
    return dataset


def write_dataset(d: MarketDataset, directory, provenance: dict = None) -> Path:
    """Write the dataset as the canonical CSV files."""
    directory = Path(directory)
    stamps = timestamps(d.year).strftime("%Y-%m-%dT%H:%M:%SZ")
    for key, (filename, column, _) in SERIES_FILES.items():
        values = getattr(d, key).values
        save_data(pd.DataFrame({"timestamp_utc": stamps, column: values}), directory / filename, provenance)
    tariffs = pd.DataFrame(
        [(b.kind, b.season, b.hours, b.rate) for b in d.tariffs.bands], columns=TARIFF_COLUMNS
    )
    save_data(tariffs, directory / TARIFF_FILE, provenance)
    logger.info("wrote market dataset to %s", directory)
    return directory


# ----------------------------------------------------------------------------
# Synthetic year
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticParams:
    spot_mean: float = 600.0
    spot_seasonal_amplitude: float = 120.0
    spot_diurnal_amplitude: float = 150.0
    spot_wind_sensitivity: float = 250.0
    spot_noise_sd: float = 70.0
    spot_noise_autocorr: float = 0.85
    co2_base: float = 130.0
    co2_slope: float = 0.25
    pv_peak_cf: float = 0.85
    pv_summer_daylight: float = 17.5
    pv_winter_daylight: float = 7.0
    pv_cloudiness: float = 0.6
    wind_mean_cf: float = 0.35
    wind_seasonal_amplitude: float = 0.08
    wind_autocorr: float = 0.97
    wind_spread: float = 1.2
    tariffs: TariffSchedule = field(default_factory=default_tariffs)


def _ar1(rng: np.random.Generator, n: int, phi: float, sd: float) -> np.ndarray:
    eps = rng.standard_normal(n)
    out = np.empty(n)
    out[0] = sd * eps[0]
    scale = sd * np.sqrt(1.0 - phi * phi)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + scale * eps[t]
    return out


def generate_synthetic(
    seed: int,
    year: int,
    params: SyntheticParams = None,
    timezone: str = DEFAULT_TIMEZONE,
) -> MarketDataset:
    """
    Deterministic synthetic year: same (seed, year, params) gives the same dataset bit for bit.

    Spot = mean + seasonal + diurnal + wind merit-order term + AR(1) noise.
    PV follows a seasonal daylight envelope and is zero at night.
    Wind is a logistic transform of autocorrelated Gaussian noise.
    CO2 intensity rises linearly with spot.
    """
    params = params or SyntheticParams()
    rng = np.random.default_rng(seed)
    n = hours_in_year(year)
    n_days = n // 24

    local = timestamps(year).tz_convert(pytz.timezone(timezone))
    hour = local.hour.to_numpy().astype(float)
    doy = local.dayofyear.to_numpy().astype(float)
    season = np.cos(2.0 * np.pi * (doy - 172.0) / (n_days))  # +1 midsummer, -1 midwinter
    phase = np.cos(2.0 * np.pi * np.arange(n) / n)  # full period over the year

    # wind
    wind_latent = _ar1(rng, n, params.wind_autocorr, 1.0)
    wind_mean = np.clip(params.wind_mean_cf - params.wind_seasonal_amplitude * season, 0.01, 0.99)
    wind_cf = 1.0 / (1.0 + np.exp(-(np.log(wind_mean / (1.0 - wind_mean)) + params.wind_spread * wind_latent)))

    # spot
    diurnal = -0.5 * np.cos(2.0 * np.pi * hour / 24.0) - 0.5 * np.cos(4.0 * np.pi * hour / 24.0)
    noise = _ar1(rng, n, params.spot_noise_autocorr, params.spot_noise_sd)
    spot = (
        params.spot_mean
        + params.spot_seasonal_amplitude * phase
        + params.spot_diurnal_amplitude * diurnal
        - params.spot_wind_sensitivity * (wind_cf - wind_cf.mean())
        + noise
    )

    # pv
    daylight = 0.5 * (params.pv_summer_daylight + params.pv_winter_daylight) + 0.5 * (
        params.pv_summer_daylight - params.pv_winter_daylight
    ) * season
    sunrise = 12.5 - daylight / 2.0
    position = (hour + 0.5 - sunrise) / daylight
    envelope = np.where((position > 0.0) & (position < 1.0), np.sin(np.pi * np.clip(position, 0.0, 1.0)), 0.0)
    elevation = 0.55 + 0.45 * season
    clearness_by_day = 1.0 - params.pv_cloudiness * rng.random(n_days + 1)
    day_index = np.minimum(np.arange(n) // 24, n_days)
    hourly_jitter = 0.9 + 0.1 * rng.random(n)
    pv_cf = np.clip(params.pv_peak_cf * envelope * elevation * clearness_by_day[day_index] * hourly_jitter, 0.0, 1.0)

    co2 = np.maximum(0.0, params.co2_base + params.co2_slope * (spot - params.spot_mean))

    dataset = MarketDataset(
        spot=HourlySeries(year, spot, PRICE_UNIT),
        co2=HourlySeries(year, co2, CO2_UNIT),
        tariffs=params.tariffs,
        pv_cf=HourlySeries(year, pv_cf, CF_UNIT),
        wind_cf=HourlySeries(year, wind_cf, CF_UNIT),
        timezone=timezone,
    )
    logger.info("generated synthetic market dataset (seed %d, year %d, %d hours)", seed, year, n)
    return dataset
