"""Read-only access to solver run directories.

Everything here goes through the documented file contract: CSV node tables
with JSON sidecars for fields and masks, history.json for the iteration
record, manifest.json for the run configuration. No solver imports.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

READER_SCHEMA_VERSION = 1


class RunDirectoryError(RuntimeError):
    pass


class RunDirectory:
    """Parsed view of one solver output directory."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.is_dir():
            raise RunDirectoryError(f"{self.path} is not a directory")

    # -- raw pieces -----------------------------------------------------

    def field(self, name: str):
        """Return (values, meta) for a CSV field; values shaped per sidecar."""
        csv_path = self.path / f"{name}.csv"
        meta_path = self.path / f"{name}.json"
        if not csv_path.exists():
            raise RunDirectoryError(f"missing field file {csv_path}")
        meta = json.loads(meta_path.read_text())
        version = meta.get("schema_version")
        if version != READER_SCHEMA_VERSION:
            raise RunDirectoryError(
                f"schema version {version} in {meta_path} does not match "
                f"reader version {READER_SCHEMA_VERSION}"
            )
        raw = np.genfromtxt(csv_path, delimiter=",", skip_header=1)
        shape = tuple(meta["shape"])
        values = raw[:, -1].reshape(shape)
        return values, meta

    def axes(self, meta) -> tuple[np.ndarray, np.ndarray]:
        origin = meta["origin"]
        h = meta["spacing"]
        shape = meta["shape"]
        return (
            origin[0] + h * np.arange(shape[0]),
            origin[1] + h * np.arange(shape[1]),
        )

    def history(self) -> dict:
        p = self.path / "history.json"
        if not p.exists():
            raise RunDirectoryError(f"missing {p}")
        return json.loads(p.read_text())

    def manifest(self) -> dict:
        p = self.path / "manifest.json"
        if not p.exists():
            raise RunDirectoryError(f"missing {p}")
        return json.loads(p.read_text())

    def horizon(self) -> float:
        """Final solve time from the manifest config; infinite if absent."""
        try:
            return float(self.manifest()["config"]["coupling"]["T"])
        except (RunDirectoryError, KeyError):
            return float("inf")

    def output_dir(self) -> Path:
        out = self.path / "plots"
        out.mkdir(exist_ok=True)
        return out
