"""Deterministic table and figure writers.

CSV files start with one comment line ``# schema=<name>/<version>
fingerprint=<hex>`` followed by a header row.  JSON documents carry the
same two fields plus the resolved configuration and a ``rows`` list.
Floats are written with 6 significant digits in both.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from typing import Iterable, Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1

__all__ = ["SCHEMA_VERSION", "fingerprint", "fmt", "to_csv", "to_json", "write_svg"]


def fmt(v):
    """6 significant digits for floats; other scalars unchanged."""
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            return None
        return float(f"{float(v):.6g}")
    if isinstance(v, np.integer):
        return int(v)
    return v


def _csv_cell(v):
    v = fmt(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple, set, frozenset)):
        return "|".join(str(x) for x in sorted(v))
    return str(v)


def fingerprint(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def to_csv(schema: str, columns: Sequence[str], rows: Iterable[dict], config: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={schema}/{SCHEMA_VERSION} fingerprint={fingerprint(config)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_csv_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(_clean(v) for v in obj)
    return fmt(obj)


def to_json(schema: str, rows: Sequence[dict], config: dict, **extra) -> str:
    doc = {
        "schema": f"{schema}/{SCHEMA_VERSION}",
        "fingerprint": fingerprint(config),
        "config": config,
        "rows": rows,
        **extra,
    }
    return json.dumps(_clean(doc), indent=2, sort_keys=False) + "\n"


def _break_at_wraps(x, y, period):
    """Insert NaN where y wraps around so lines are not drawn across the cut."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    jumps = np.flatnonzero(np.abs(np.diff(y)) > 0.5 * period)
    return np.insert(x, jumps + 1, np.nan), np.insert(y, jumps + 1, np.nan)


def write_svg(path, series, config: dict, *, xlabel: str, ylabel: str, title: str = "",
              wrap_period: Optional[float] = None, hlines=()):
    """Line plot of ``series`` = [(label, x, y), ...] as a reproducible SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fp = fingerprint(config)
    with matplotlib.rc_context({"svg.hashsalt": fp, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for label, x, y in series:
            if wrap_period is not None:
                x, y = _break_at_wraps(x, y, wrap_period)
            ax.plot(x, y, lw=1.0, label=label)
        for h in hlines:
            ax.axhline(h, color="0.6", lw=0.6, ls="--")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(fontsize="small")
        fig.tight_layout()
        meta = {
            "Title": title or "specconc",
            "Description": f"fingerprint={fp} config={json.dumps(config, sort_keys=True, default=str)}",
            "Date": None,
            "Creator": "specconc",
        }
        fig.savefig(path, format="svg", metadata=meta)
        plt.close(fig)
    return fp
