import json
import logging
from pathlib import Path

import pandas as pd

from core.errors import DataValidationError

logger = logging.getLogger(__name__)

COMMENT = "#"


def provenance_header(provenance: dict = None) -> str:
    """Render a provenance mapping as `# key=value` lines, keys sorted."""
    if not provenance:
        return ""
    lines = [f"{COMMENT} {key}={provenance[key]}" for key in sorted(provenance)]
    return "\n".join(lines) + "\n"


def save_data(df: pd.DataFrame, path, provenance: dict = None) -> Path:
    """
    Save a study table to CSV with the provenance block as a comment header.

    Floats are written at full precision so a table read back with
    `load_data` is identical to the one saved.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = df.to_csv(index=False, lineterminator="\n")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(provenance_header(provenance))
        fh.write(body)
    logger.debug("wrote %s (%d rows)", path, len(df))
    return path


def load_data(path, required_columns=None, dtype=None) -> pd.DataFrame:
    """
    Read a CSV written by `save_data` (or a hand-made one), skipping comment lines.

    Raises DataValidationError when the file is missing or a required column is absent.
    """
    path = Path(path)
    if not path.exists():
        raise DataValidationError("file not found", path=path)
    try:
        df = pd.read_csv(
            path,
            comment=COMMENT,
            float_precision="round_trip",
            dtype=dtype,
            skipinitialspace=True,
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataValidationError(f"unreadable CSV: {e}", path=path) from e

    df.columns = [str(c).strip() for c in df.columns]
    for col in required_columns or []:
        if col not in df.columns:
            raise DataValidationError("missing required column", path=path, column=col)
    return df


def read_provenance(path) -> dict:
    """Return the `# key=value` header of a CSV as a dict."""
    provenance = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith(COMMENT):
                break
            key, _, value = line[len(COMMENT):].strip().partition("=")
            if key:
                provenance[key] = value
    return provenance


def save_json(payload: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.debug("wrote %s", path)
    return path


def load_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("file not found", path=path)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
