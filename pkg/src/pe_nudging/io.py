"""Byte-stable JSON/CSV writers and the optional SVG plot."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

JSON_DIGITS = 17
CSV_DIGITS = 9


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # strict JSON has no NaN/Infinity
        return float(obj) if math.isfinite(obj) else None
    return obj


def _float_str(x: float) -> str:
    return format(x, f".{JSON_DIGITS}g")


def dumps_json(obj) -> str:
    """JSON with sorted keys, 2-space indent and 17-significant-digit floats; NaN becomes null."""
    # the pure-Python iterencode accepts a float formatter; the C encoder does not
    chunks = json.encoder._make_iterencode(
        {}, _no_default, json.encoder.py_encode_basestring_ascii, 2, _float_str,
        ": ", ",", True, False, True,
    )(_clean(obj), 0)
    return "".join(chunks) + "\n"


def _no_default(o):
    raise TypeError(f"object of type {type(o).__name__} is not JSON serialisable")


def write_json(path: Path, obj) -> None:
    Path(path).write_text(dumps_json(obj))


def fmt_csv(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), f".{CSV_DIGITS}g")
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_csv(x) for x in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]]) if len(rows) > 1 else np.zeros((0, len(header)))
    return header, data


def write_svg_plot(path: Path, times, series: dict, title: str = "") -> None:
    """Log-scale plot of the given series; deterministic SVG output."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "pe-nudging"
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, ys in series.items():
        ys = np.asarray(ys, dtype=float)
        mask = ys > 0
        ax.semilogy(np.asarray(times)[mask], ys[mask], label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
