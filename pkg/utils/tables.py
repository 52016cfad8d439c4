"""Plain-text renderings of study tables: Markdown for reports, aligned text for the terminal."""

from typing import Dict, List, Sequence

import pandas as pd

from core.kpi import KPI_LABELS, KPI_NAMES, KpiReport
from core.site_model import STRATEGY_NAMES

PERCENT_KPIS = ("storage_utilization", "truck_utilization")
NOT_APPLICABLE = "n/a"


def filter_display_columns(df: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    """Filter dataframe to show only specified columns that exist in the dataframe"""
    existing_columns = [col for col in columns if col in df.columns]
    return df[existing_columns] if existing_columns else df


def format_kpi(name: str, value) -> str:
    """Round a KPI the way the published tables do: whole units, utilizations in percent."""
    if value is None or (isinstance(value, float) and pd.isna(value)):
        return NOT_APPLICABLE
    if name in PERCENT_KPIS:
        value = 100.0 * value
    text = f"{value:.0f}"
    return "0" if text == "-0" else text


def markdown_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    lines = [
        "| " + " | ".join(str(h) for h in header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    for row in rows:
        lines.append("| " + " | ".join(str(cell) for cell in row) + " |")
    return "\n".join(lines) + "\n"


def frame_to_markdown(df: pd.DataFrame, float_digits: int = 4) -> str:
    rows = []
    for record in df.itertuples(index=False):
        rows.append([f"{v:.{float_digits}f}" if isinstance(v, float) else v for v in record])
    return markdown_table(list(df.columns), rows)


def tier_table(reports: Dict[str, KpiReport]) -> str:
    """
    One tier in the results-table layout: the 13 KPIs as rows, strategies as columns.

    `reports` maps strategy code (S1, S2, S3) to the experiment's report.
    """
    strategies = [s for s in STRATEGY_NAMES if s in reports]
    header = ["KPI"] + [f"{reports[s].experiment_id} {STRATEGY_NAMES[s]}" for s in strategies]
    rows = [
        [KPI_LABELS[name]] + [format_kpi(name, getattr(reports[s], name)) for s in strategies]
        for name in KPI_NAMES
    ]
    return markdown_table(header, rows)


def text_table(df: pd.DataFrame, float_digits: int = 4) -> str:
    """Column-aligned plain text, for stdout."""
    cells: List[List[str]] = [[str(c) for c in df.columns]]
    for record in df.itertuples(index=False):
        cells.append([f"{v:.{float_digits}f}" if isinstance(v, float) else str(v) for v in record])
    widths = [max(len(row[i]) for row in cells) for i in range(len(cells[0]))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in cells) + "\n"
