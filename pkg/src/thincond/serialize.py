"""JSON and CSV output with round-trip-safe numbers.

Floats are written with 17 significant digits and object keys are sorted, so
equal inputs give byte-identical text.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .dist_core import TriMatrix, TruncatedPmf
from .pp_exact import ConfigMeasure, KernelTable, config_index


def _float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, floats as ``.17g``."""
    out = io.StringIO()
    _write(_plain(obj), out, indent, 0)
    out.write("\n")
    return out.getvalue()


def _write(obj, out, indent, level):
    obj = _plain(obj)
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        for i, (k, v) in enumerate(items):
            out.write(f"{pad}{json.dumps(str(k))}: ")
            _write(v, out, indent, level + 1)
            out.write(",\n" if i < len(items) - 1 else "\n")
        out.write(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.write("[]")
            return
        if all(isinstance(_plain(v), (int, float, bool)) or v is None for v in obj):
            out.write("[" + ", ".join(_scalar(_plain(v)) for v in obj) + "]")
            return
        out.write("[\n")
        for i, v in enumerate(obj):
            out.write(pad)
            _write(v, out, indent, level + 1)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(end + "]")
    else:
        out.write(_scalar(obj))


def _scalar(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return _float(v)
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def loads(text: str):
    return json.loads(text)


def matrix_to_json(M: TriMatrix) -> dict:
    return {
        "n_max": M.n_max,
        "orientation": M.orientation,
        "entries": M.entries.tolist(),
        "row_deficit": M.row_deficit.tolist(),
        "pathological": [int(i) for i in np.flatnonzero(M.pathological)],
    }


def matrix_from_json(obj: dict) -> TriMatrix:
    e = np.array(obj["entries"], dtype=float)
    if e.shape != (obj["n_max"] + 1, obj["n_max"] + 1):
        raise ValueError("matrix shape does not match n_max")
    patho = np.zeros(e.shape[0], bool)
    patho[list(obj.get("pathological", []))] = True
    deficit = obj.get("row_deficit")
    return TriMatrix(e, obj["orientation"], row_deficit=deficit, pathological=patho)


def pmf_to_json(law: TruncatedPmf) -> dict:
    return {
        "n_max": law.n_max,
        "weights": law.weights.tolist(),
        "tail_bound": law.tail_bound,
        "normalized": law.normalized,
    }


def pmf_from_json(obj: dict) -> TruncatedPmf:
    return TruncatedPmf(np.array(obj["weights"], float), obj.get("tail_bound", 0.0), obj.get("normalized", True))


def measure_to_json(measure: ConfigMeasure) -> dict:
    return {
        "sites": measure.index.s,
        "n_max": measure.n_max,
        "normalized": measure.normalized,
        "records": [{"counts": list(c), "weight": float(w)} for c, w in zip(measure.index.configs, measure.weights)],
    }


def measure_from_json(obj: dict) -> ConfigMeasure:
    idx = config_index(int(obj["sites"]), int(obj["n_max"]))
    w = np.zeros(len(idx))
    for rec in obj["records"]:
        w[idx.index(rec["counts"])] += float(rec["weight"])
    return ConfigMeasure(idx, w, bool(obj.get("normalized", True)))


def kernel_to_json(K: KernelTable) -> dict:
    rows = []
    for a, c in enumerate(K.index.configs):
        nz = np.flatnonzero(K.matrix[a])
        rows.append({
            "from": list(c),
            "to": [{"counts": list(K.index.configs[b]), "weight": float(K.matrix[a, b])} for b in nz],
        })
    return {"sites": K.index.s, "n_max": K.index.n_max, "kind": K.kind,
            "pathological": [list(K.index.configs[a]) for a in np.flatnonzero(K.pathological)],
            "rows": rows}


def kernel_from_json(obj: dict) -> KernelTable:
    idx = config_index(int(obj["sites"]), int(obj["n_max"]))
    m = np.zeros((len(idx), len(idx)))
    for row in obj["rows"]:
        a = idx.index(row["from"])
        for rec in row["to"]:
            m[a, idx.index(rec["counts"])] = float(rec["weight"])
    patho = np.zeros(len(idx), bool)
    for c in obj.get("pathological", []):
        patho[idx.index(c)] = True
    return KernelTable(idx, m, obj["kind"], patho)


def to_csv(columns, rows) -> str:
    """CSV text with a header row; floats as ``.17g``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_float(v) if isinstance(v, float) else v for v in (_plain(x) for x in r)])
    return buf.getvalue()


def flatten(obj, prefix: str = "") -> list:
    """``(dotted key, value)`` pairs of scalar leaves, in sorted key order."""
    obj = _plain(obj)
    out = []
    if isinstance(obj, dict):
        for k in sorted(obj, key=str):
            out.extend(flatten(obj[k], f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            out.extend(flatten(v, f"{prefix}[{i}]"))
    else:
        out.append((prefix, obj))
    return out
