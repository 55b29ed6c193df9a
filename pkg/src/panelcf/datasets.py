"""Bundled case-study panels and their manifest.

Files are looked up first in the directory named by ``PANELCF_DATA_DIR`` (when
set) and then in the package's own ``data`` directory. A dataset listed in the
manifest but present in neither place is reported as unavailable.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .core import PanelData, load_panel
from .errors import DataError

ENV_VAR = "PANELCF_DATA_DIR"


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    file: str
    description: str
    unit_col: str
    time_col: str
    value_col: str
    treated: str
    t0: int
    n_units: int
    n_times: int


class DatasetUnavailable(DataError):
    def __init__(self, name: str, searched: list[Path]):
        where = ", ".join(str(p) for p in searched)
        super().__init__(f"dataset {name!r} is not available (searched: {where}); set {ENV_VAR}")
        self.name = name


def _bundled_dir() -> Path:
    return Path(str(resources.files("panelcf") / "data"))


def _search_dirs() -> list[Path]:
    dirs = []
    override = os.environ.get(ENV_VAR)
    if override:
        dirs.append(Path(override))
    dirs.append(_bundled_dir())
    return dirs


def manifest() -> dict[str, DatasetInfo]:
    """Parse the manifest. A ``manifest.json`` in the override directory wins."""
    for d in _search_dirs():
        path = d / "manifest.json"
        if path.is_file():
            raw = json.loads(path.read_text(encoding="utf-8"))
            break
    else:  # pragma: no cover - the bundled manifest always exists
        raise DataError("no dataset manifest found")
    return {
        name: DatasetInfo(
            name=name,
            file=e["file"],
            description=e.get("description", ""),
            unit_col=e.get("unit_col", "unit"),
            time_col=e.get("time_col", "time"),
            value_col=e.get("value_col", "value"),
            treated=e["treated"],
            t0=int(e["t0"]),
            n_units=int(e["N"]),
            n_times=int(e["T"]),
        )
        for name, e in raw.items()
    }


def dataset_path(name: str) -> Optional[Path]:
    """Location of a dataset's file, or ``None`` if it is not present."""
    info = manifest().get(name)
    if info is None:
        raise DataError(f"unknown dataset {name!r}; known: {sorted(manifest())}")
    for d in _search_dirs():
        path = d / info.file
        if path.is_file():
            return path
    return None


def available() -> dict[str, bool]:
    return {name: dataset_path(name) is not None for name in manifest()}


def load_dataset(name: str) -> PanelData:
    """Load a manifest dataset with its recorded treated unit and ``t0``.

    Raises
    ------
    DatasetUnavailable
        When the file is in neither search location.
    DataError
        When the loaded shape disagrees with the manifest.
    """
    info = manifest().get(name)
    path = dataset_path(name)
    if path is None:
        raise DatasetUnavailable(name, [d / info.file for d in _search_dirs()])
    panel = load_panel(path, info.treated, info.t0, info.unit_col, info.time_col, info.value_col)
    if (panel.n_units, panel.n_times) != (info.n_units, info.n_times):
        raise DataError(
            f"{name}: expected {info.n_units}x{info.n_times} panel, got {panel.n_units}x{panel.n_times}"
        )
    return panel


def file_digest(path: str | os.PathLike) -> str:
    """Hex SHA-256 of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
