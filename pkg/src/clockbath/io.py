"""Deterministic CSV/JSON artifact writers.

Floats are written with shortest-roundtrip repr so identical runs produce
byte-identical files; no timestamps or machine-dependent values appear in
any artifact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cce import CoherenceCurve


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and obj != obj:  # nan
        return None
    return obj


CURVE_HEADER = ["t_seconds", "re_L", "im_L"]


def write_curve_csv(path: Path, curve: CoherenceCurve) -> None:
    rows = zip(curve.times, curve.values.real, curve.values.imag)
    write_csv(path, CURVE_HEADER, rows)


def read_curve_csv(path: Path) -> CoherenceCurve:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    if header[:3] != CURVE_HEADER:
        raise ValueError(f"{path}: expected columns {CURVE_HEADER}, found {header[:3]}")
    data = np.array([[float(x) for x in line.split(",")[:3]] for line in lines[1:]])
    return CoherenceCurve(times=data[:, 0], values=data[:, 1] + 1j * data[:, 2],
                          metadata={"source": str(path)})


def write_curve_json(path: Path, curve: CoherenceCurve) -> None:
    write_json(path, {
        "t_seconds": curve.times,
        "re_L": curve.values.real,
        "im_L": curve.values.imag,
        "metadata": curve.metadata,
    })
