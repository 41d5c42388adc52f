"""CSV and JSON reports of metric rows.

Output depends only on the rows and provenance passed in: floats are written
with ``repr`` (shortest round-trip form), keys in a fixed order, and the
wall-clock column is left empty unless timings are requested.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import fields
from pathlib import Path

from ..errors import InvalidArgumentError
from .experiment import MetricsRow

__all__ = ["ReportFormat", "COLUMNS", "render_report", "emit_report"]

COLUMNS = tuple(f.name for f in fields(MetricsRow))


class ReportFormat(enum.Enum):
    CSV = "csv"
    JSON = "json"


def _csv_cell(name, value, include_timings):
    if name == "seconds" and not include_timings:
        return ""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ";".join(str(v) for v in value)
    return str(value)


def _json_value(value):
    # JSON has no inf/nan; spell them as strings
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    return value


def render_report(rows, fmt=ReportFormat.CSV, provenance: dict | None = None,
                  include_timings: bool = False) -> str:
    rows = list(rows)
    if not rows:
        raise InvalidArgumentError("report needs at least one row")
    fmt = ReportFormat(fmt)
    if fmt is ReportFormat.CSV:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_csv_cell(c, getattr(r, c), include_timings) for c in COLUMNS])
        return buf.getvalue()

    from .. import __version__

    out_rows = []
    for r in rows:
        d = r.to_dict()
        if not include_timings:
            d["seconds"] = None
        out_rows.append(_json_value(d))
    doc = {"library": "gpexperts", "version": __version__,
           "provenance": _json_value(provenance or {}), "rows": out_rows}
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def emit_report(rows, fmt=ReportFormat.CSV, path=None, provenance: dict | None = None,
                include_timings: bool = False) -> str:
    """Render rows and write them to ``path`` (if given). Returns the text.

    Raises ``OSError`` when the path cannot be written.
    """
    text = render_report(rows, fmt, provenance, include_timings)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text
