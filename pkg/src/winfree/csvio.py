"""CSV output with ``#`` metadata lines and a JSON sidecar."""

from __future__ import annotations

import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np


def format_value(v: Any) -> str:
    """Shortest round-trip text; scientific notation for |x| >= 1e16 or <= 1e-4."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if x == 0.0:
            return "0.0"
        if abs(x) >= 1e16 or abs(x) <= 1e-4:
            return np.format_float_scientific(x, unique=True, trim="-", exp_digits=2)
        return np.format_float_positional(x, unique=True, trim="0")
    return str(v)


def csv_body(columns: Sequence[str], rows: Sequence[dict]) -> str:
    """Header line plus one line per row; no metadata."""
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(format_value(row.get(c)) for c in columns) + "\n")
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_csv(out: Optional[str], columns: Sequence[str], rows: Sequence[dict],
              meta: dict) -> None:
    """Write the CSV (``#`` lines first) and, for file output, ``<out>.meta.json``.

    ``out`` of ``None`` or ``-`` writes to stdout without a sidecar.
    """
    meta = _jsonable(meta)
    lines = [f"# {k}: {json.dumps(meta[k], sort_keys=True)}" for k in ("tool", "version", "command", "config", "wall_clock_s") if k in meta]
    text = "\n".join(lines) + "\n" + csv_body(columns, rows)
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    sidecar = path.with_name(path.name + ".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_body(path) -> str:
    """CSV text with the ``#`` metadata lines stripped."""
    text = Path(path).read_text(encoding="utf-8")
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))
