"""Deterministic CSV output with a ``#`` metadata header, and optional SVG plots."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np

from .array_model import generator_label


def fmt(x: Any) -> str:
    """Locale-independent cell formatting; floats get 17 significant digits."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return "%.17g" % x
    return str(x)


def metadata(command: str, config_name: str, digest: str, seed: Optional[int], c_N: Optional[float],
             **extra) -> Dict[str, Any]:
    from . import __version__

    meta: Dict[str, Any] = {
        "command": command,
        "config": config_name,
        "config_hash": digest,
        "seed": seed if seed is not None else "n/a",
        "generator": generator_label(),
        "version": f"doa_lab {__version__}",
        "c_N": fmt(c_N) if c_N is not None else "n/a",
    }
    meta.update(extra)
    return meta


def render_csv(meta: Dict[str, Any], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {fmt(v) if not isinstance(v, str) else v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def write_csv(path, meta: Dict[str, Any], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.write_text(render_csv(meta, columns, rows), encoding="utf-8")
    return path


def read_csv(path) -> tuple:
    """Return ``(metadata dict, header, rows)`` of a file written by :func:`write_csv`."""
    meta, lines = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(": ")
            meta[key] = val
        else:
            lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    return meta, header, list(reader)


def save_svg(path, draw) -> Path:
    """Render ``draw(ax)`` to a reproducible SVG (fixed hash salt, no date)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "doa_lab", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        draw(ax)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return Path(path)
