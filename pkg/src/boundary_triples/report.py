"""Deterministic report serialization (JSON with 17 significant digits, CSV tables)."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, is_dataclass
from typing import Any

import numpy as np

from . import __version__

SPECTRUM_HEADER = ["index", "eigenvalue", "multiplicity", "method"]
DTN_HEADER = ["z_re", "z_im", "row", "col", "entry_re", "entry_im"]
CONVERGENCE_HEADER = ["n", "h", "error", "rate"]


def fmt_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        return "null"
    if x == 0.0:
        return "0.0"
    s = format(x, ".17g")
    if all(c not in s for c in ".en"):
        s += ".0"
    return s


def to_plain(obj: Any) -> Any:
    """Convert numpy, complex and dataclass values into JSON-ready primitives."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def _emit(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad + json.dumps(k, ensure_ascii=False) + ": ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list)) for v in obj):
            out.append("[")
            for i, v in enumerate(obj):
                _emit(v, indent, level + 1, out)
                if i < len(obj) - 1:
                    out.append(", ")
            out.append("]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with insertion-ordered keys and floats at 17 significant digits."""
    out = []
    _emit(to_plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def check_to_dict(check) -> dict:
    return {
        "name": check.name,
        "paper_anchor": check.paper_anchor,
        "status": check.status,
        "residual": check.residual,
        "tolerance": check.tolerance,
        "detail": {k: check.detail[k] for k in sorted(check.detail)},
    }


def build_report(task: str, config: dict, checks=(), tables=None, extra=None,
                 timings=None) -> dict:
    checks = [check_to_dict(c) for c in checks]
    status = "fail" if any(c["status"] == "fail" for c in checks) else "pass"
    rep = {
        "tool": {"name": "boundary-triples", "version": __version__},
        "task": task,
        "config": config,
        "status": status,
        "checks": checks,
        "tables": tables or {},
    }
    if extra:
        rep.update(extra)
    if timings is not None:
        rep["timings"] = timings
    return rep


def table_csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_float(v) if isinstance(v, float) else ("" if v is None else v)
                    for v in (r[h] for h in header)])
    return buf.getvalue()


def write_report(report: dict, path=None, fmt: str = "json", table: str = None) -> str:
    """Serialize ``report`` (or one of its tables for CSV) and write it to ``path``.

    Returns the text. ``path = None`` or ``'-'`` writes nothing.
    """
    if fmt == "json":
        text = dumps(report)
    elif fmt == "csv":
        tables = report.get("tables", {})
        if table is None:
            if len(tables) != 1:
                raise ValueError("CSV output needs exactly one tabular section")
            table = next(iter(tables))
        spec = tables[table]
        text = table_csv(spec["rows"], spec["header"])
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path not in (None, "-"):
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
