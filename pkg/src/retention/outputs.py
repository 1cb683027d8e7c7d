"""Deterministic CSV/JSON writers and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = 1


def format_value(v) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if v is None:
        return ""
    return str(v)


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class OutputDir:
    """Collects files written during one run and emits the manifest last."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def _write(self, name: str, text: str) -> Path:
        target = self.path / name
        target.write_text(text, encoding="utf-8", newline="")
        if name not in self.files:
            self.files.append(name)
        return target

    def csv(self, name: str, header: list[str], rows) -> Path:
        return self._write(name, csv_text(header, rows))

    def text(self, name: str, text: str) -> Path:
        return self._write(name, text)

    def json(self, name: str, obj) -> Path:
        return self._write(name, json_text(obj))

    def manifest(self, command: str, config: dict, version: str, extra: dict | None = None) -> Path:
        data = {
            "manifest_format": MANIFEST_FORMAT,
            "command": command,
            "version": version,
            "master_seed": config["seed"],
            "config": config,
            "files": {name: sha256_file(self.path / name) for name in sorted(self.files)},
        }
        if extra:
            data["report"] = extra
        target = self.path / MANIFEST_NAME
        target.write_text(json_text(data), encoding="utf-8")
        return target


def is_manifest(data: dict) -> bool:
    return isinstance(data, dict) and "manifest_format" in data and "config" in data
