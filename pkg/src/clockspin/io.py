"""Deterministic CSV/JSON tables and run configuration files."""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
from pathlib import Path

__all__ = ["format_table", "write_table", "read_table", "read_config"]


def _cell(value):
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(float(value))
    if hasattr(value, "item"):
        return _cell(value.item())
    return str(value)


def _jsonable(value):
    if hasattr(value, "item") and not isinstance(value, (list, dict)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def format_table(rows, fmt: str = "csv", columns=None, meta=None) -> str:
    """Render rows (a list of dicts) as CSV or JSON text.

    Column order is ``columns`` if given, else the key order of the first
    row.  CSV floats use the shortest round-trip representation; JSON is
    ``{"meta": ..., "rows": [...]}`` with keys in column order.
    """
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c, "")) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "meta": _jsonable(meta or {}),
            "columns": list(columns),
            "rows": [{c: _jsonable(row.get(c)) for c in columns} for row in rows],
        }
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"
    raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")


def write_table(rows, path, fmt: str = "csv", columns=None, meta=None, stream=None) -> str:
    text = format_table(rows, fmt, columns, meta)
    if path in (None, "-"):
        if stream is not None:
            stream.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _number(text):
    try:
        return float(text)
    except (TypeError, ValueError):
        return text


def read_table(path) -> list:
    """Rows from a CSV file or from JSON written by `format_table` (or a bare list of objects)."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        doc = json.loads(text)
        rows = doc["rows"] if isinstance(doc, dict) else doc
        return [dict(r) for r in rows]
    reader = csv.DictReader(io.StringIO(text))
    return [{k.strip(): _number(v) for k, v in row.items()} for row in reader]


def read_config(path) -> dict:
    """Key-value settings from an INI file.

    The ``[run]`` section holds run settings; an optional ``[system]``
    section defines an inline spin system (S, I, gamma_e, gamma_n, A).
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep S, I, A case
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    cfg = dict(parser["run"]) if parser.has_section("run") else {}
    if parser.has_section("system"):
        cfg["system_params"] = dict(parser["system"])
    return cfg
