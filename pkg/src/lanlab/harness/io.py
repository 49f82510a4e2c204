"""Persistence: RFC-4180 CSV tables, versioned summary JSON and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

SUMMARY_SCHEMA = 1


def format_value(v):
    """Render a cell: floats with 17 significant digits, everything else via ``str``."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, columns, rows):
    """Write ``rows`` (dicts or sequences) under a header; CRLF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            vals = [row[c] for c in columns] if isinstance(row, dict) else row
            w.writerow([format_value(v) for v in vals])
    return path


def read_csv(path):
    """Read a CSV written by :func:`write_csv`; numeric cells become floats."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for rec in reader:
            row = {}
            for k, v in zip(header, rec):
                try:
                    row[k] = float(v)
                except ValueError:
                    row[k] = v
            rows.append(row)
    return header, rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_summary(path, kind, payload):
    """Summary JSON tagged with ``"schema": 1`` and the producing subcommand."""
    return write_json(path, {"schema": SUMMARY_SCHEMA, "kind": kind, **payload})


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, config, command, seed, files, threads, name="manifest.json"):
    """Record config hash, seed and the hash of every produced file."""
    out_dir = Path(out_dir)
    entries = {os.path.relpath(f, out_dir): file_sha256(f) for f in sorted(map(str, files))}
    from .. import __version__

    return write_json(out_dir / name, {
        "schema": SUMMARY_SCHEMA, "command": command, "seed": seed, "threads": threads,
        "config_sha256": None if config is None else config.sha256,
        "lanlab_version": __version__, "files": entries,
    })
