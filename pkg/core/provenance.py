import hashlib
import json

from core import __version__


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON rendering of a configuration mapping."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def dataset_fingerprint(d) -> str:
    """SHA-256 over every series and the tariff schedule of a MarketDataset."""
    digest = hashlib.sha256()
    digest.update(f"{d.year}|{d.timezone}".encode("utf-8"))
    for series in (d.spot, d.co2, d.pv_cf, d.wind_cf):
        digest.update(series.unit.encode("utf-8"))
        digest.update(series.values.tobytes())
    for band in d.tariffs.bands:
        digest.update(f"{band.kind}|{band.season}|{band.hours}|{band.rate!r}".encode("utf-8"))
    return digest.hexdigest()


def build_provenance(config: dict = None, dataset=None) -> dict:
    provenance = {"tool_version": __version__}
    if config is not None:
        provenance["config_sha256"] = config_hash(config)
    if dataset is not None:
        provenance["dataset_sha256"] = dataset_fingerprint(dataset)
    return provenance
