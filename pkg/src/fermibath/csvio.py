"""CSV files with a ``# key=value`` metadata header.

Floats are written with ``repr`` so files round-trip exactly and identical
runs produce identical bytes. Nothing time-dependent goes into a CSV;
wall-clock information lives only in the run manifest.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence


def _cell(v) -> str:
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence],
              meta: Iterable[tuple[str, str]] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for key, value in meta:
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
        writer.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path: str | Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Return ``(meta, rows)``; rows map column names to raw strings."""
    meta, body = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value
            else:
                body.append(line)
    return meta, list(csv.DictReader(body))


def write_manifest(path: str | Path, items: Iterable[tuple[str, str]],
                   meta: Iterable[tuple[str, str]]) -> Path:
    """Flat key=value file that is also a valid config file (``meta.*`` keys are skipped on load)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={v}" for k, v in items] + [f"meta.{k}={v}" for k, v in meta]
    path.write_text("\n".join(lines) + "\n")
    return path
