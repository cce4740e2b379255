import csv
import json
from pathlib import Path

import numpy as np

from src.utils.formatters import format_cell

FORMATS = ("csv", "json")


def _plain(value):
    """Convert numpy scalars and arrays to built-in types for serialisation."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def _check_homogeneous(records: list[dict]) -> list[str]:
    if not records:
        return []
    keys = list(records[0].keys())
    for index, record in enumerate(records[1:], start=1):
        if list(record.keys()) != keys:
            raise ValueError(f"Record {index} has keys {list(record.keys())}, expected {keys}")
    return keys


def emit_report(records, fmt: str, path, columns: list[str] | None = None) -> Path:
    """
    Write report records as CSV or JSON.

    Args:
        records: One dict or a list of dicts sharing the same keys
        fmt: "csv" (header row, 17 significant digits) or "json" (key order kept)
        path: Destination file; parent directories are created
        columns: CSV header for an empty record list

    Returns:
        The path written

    Raises:
        OSError: surfaced unchanged when the file cannot be written
    """
    if fmt not in FORMATS:
        raise ValueError(f"Unknown report format {fmt!r}; expected csv or json")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    single = isinstance(records, dict)
    rows = [records] if single else list(records)
    keys = _check_homogeneous(rows) or list(columns or [])

    if fmt == "json":
        payload = _plain(rows[0] if single else rows)
        with path.open("w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)
            f.write("\n")
        return path

    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        if keys:
            writer.writerow(keys)
        for row in rows:
            writer.writerow([format_cell(_plain(row[key])) for key in keys])
    return path
