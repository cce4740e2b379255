import math

from config.constants import CSV_SIGNIFICANT_DIGITS


def format_double(value: float) -> str:
    """Format a float with 17 significant digits (round-trips doubles exactly)."""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, f".{CSV_SIGNIFICANT_DIGITS}g")


def format_cell(value) -> str:
    """Convert a report value to its CSV cell text."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_double(value)
    return str(value)
