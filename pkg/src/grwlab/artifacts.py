"""On-disk formats: versioned CSV tables, two-column .dat files and JSON summaries.

Every file starts with the schema and version and carries the resolved
configuration, so a run directory describes itself:

* CSV: ``# schema=1``, ``# version=<v>``, ``# config=<one-line JSON>``, then
  a header row and data rows.
* DAT: the same three comment lines, a ``# <x> <y>`` column comment, then
  whitespace-separated pairs.
* JSON: an object with ``"schema": 1``, ``"version"`` and ``"config"`` keys.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .graph_geometry import GeometryFields

SCHEMA = 1
SUMMARY_NAME = "summary.json"
FIELD_COLUMNS = ("i", "j", "x0", "x1", "u", "H", "cosh_phi", "trA2")


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _preamble(config: Mapping) -> list[str]:
    return [f"# schema={SCHEMA}", f"# version={__version__}",
            "# config=" + json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))]


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], config: Mapping) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in _preamble(config):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return v


def read_csv(path):
    """Return (meta, header, rows) where meta holds the parsed comment lines."""
    meta, header, rows = {}, None, []
    with Path(path).open(encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    body = []
    for ln in lines:
        if ln.startswith("# ") and header is None and not body:
            key, _, val = ln[2:].partition("=")
            meta[key] = json.loads(val) if key == "config" else val
        else:
            body.append(ln)
    reader = csv.reader(body)
    header = next(reader)
    rows = [r for r in reader]
    return meta, header, rows


def write_dat(path, x, y, labels: tuple[str, str], config: Mapping) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for line in _preamble(config):
            fh.write(line + "\n")
        fh.write(f"# {labels[0]} {labels[1]}\n")
        for a, b in zip(np.ravel(x), np.ravel(y)):
            fh.write(f"{float(a)!r} {float(b)!r}\n")
    return path


def write_summary(directory, payload: Mapping, config: Mapping) -> Path:
    out = {"schema": SCHEMA, "version": __version__, "config": config}
    out.update(payload)
    path = Path(directory) / SUMMARY_NAME
    path.write_text(json.dumps(_jsonable(out), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_summary(directory) -> dict:
    return json.loads((Path(directory) / SUMMARY_NAME).read_text(encoding="utf-8"))


# -- geometry fields ---------------------------------------------------------

def field_rows(geo: GeometryFields):
    grid = geo.grid
    X0, X1 = grid.mesh()
    H, ch, tr = geo.H, geo.cosh_phi, geo.trA2
    for (i, j), u in np.ndenumerate(geo.u):
        yield (i, j, X0[i, j], X1[i, j], u, H[i, j], ch[i, j], tr[i, j])


def export_fields_csv(geo: GeometryFields, path, config: Mapping) -> Path:
    """One row per node: grid index, coordinates, u, H, cosh(phi), tr(A^2)."""
    return write_csv(path, FIELD_COLUMNS, field_rows(geo), config)


def export_fields_json(geo: GeometryFields, path, config: Mapping) -> Path:
    out = {"schema": SCHEMA, "version": __version__, "config": config, "fields": geo.summary()}
    path = Path(path)
    path.write_text(json.dumps(_jsonable(out), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


HISTORY_COLUMNS = ("iteration", "residual", "margin", "step", "linear_iters", "c")


def write_history(path, history, config: Mapping) -> Path:
    return write_csv(path, HISTORY_COLUMNS,
                     ([h[k] for k in HISTORY_COLUMNS] for h in history), config)
