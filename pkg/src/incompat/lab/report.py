"""Structured reports written as CSV tables plus a JSON document.

Floats are written as ``%.16e`` (17 significant digits) in both formats so
that identical runs produce identical bytes.
"""
from dataclasses import dataclass, field
import json
import math
import os
import re

import numpy as np

_FLOAT_TAG = "\x00f"


def fmt(x):
    return "%.16e" % x


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError("row length does not match the columns")
        self.rows.append(tuple(values))

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self):
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_csv_cell(v) for v in row))
        return "\n".join(lines) + "\n"


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return str(v)


@dataclass
class Report:
    name: str
    meta: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors

    def to_json(self):
        doc = {
            "name": self.name,
            "meta": self.meta,
            "errors": self.errors,
            "tables": {k: {"columns": list(t.columns), "rows": [list(r) for r in t.rows]}
                       for k, t in self.tables.items()},
        }
        text = json.dumps(_tag_floats(doc), indent=2, sort_keys=True, ensure_ascii=False)
        return re.sub(r'"\\u0000f([^"]*)"', r"\1", text) + "\n"

    def write(self, outdir):
        """Write ``<name>.json`` and one ``<name>_<table>.csv`` per table; returns the paths."""
        os.makedirs(outdir, exist_ok=True)
        paths = []
        for key, table in self.tables.items():
            path = os.path.join(outdir, f"{self.name}_{key}.csv")
            _write_text(path, table.to_csv())
            paths.append(path)
        path = os.path.join(outdir, f"{self.name}.json")
        _write_text(path, self.to_json())
        paths.append(path)
        return paths


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _tag_floats(obj):
    if isinstance(obj, dict):
        return {str(k): _tag_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tag_floats(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return None
        return _FLOAT_TAG + fmt(obj)
    if isinstance(obj, np.ndarray):
        return _tag_floats(obj.tolist())
    return obj
