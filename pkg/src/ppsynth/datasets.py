"""Embedded benchmark datasets and JSON dataset files."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict

import numpy as np

from .ppl.model import Dataset

_BUILTIN: Dict[str, dict] = {
    "eight_schools": {
        "description": "Estimated coaching effects y and their standard errors sigma in eight schools; "
        "a hierarchical model pools the school effects.",
        "columns": {
            "y": ("real", [28, 8, -3, 7, -1, 1, 18, 12]),
            "sigma": ("real", [15, 10, 16, 11, 9, 11, 10, 18]),
        },
    },
    "dugongs": {
        "description": "Length y of 27 dugongs against age X; length levels off with age.",
        "columns": {
            "X": ("real", [1, 1.5, 1.5, 1.5, 2.5, 4, 5, 5, 7, 8, 8.5, 9, 9.5, 9.5, 10, 12, 12, 13, 13,
                           14.5, 15.5, 15.5, 16.5, 17, 22.5, 29, 31.5]),
            "y": ("real", [1.8, 1.85, 1.87, 1.77, 2.02, 2.27, 2.15, 2.26, 2.47, 2.19, 2.26, 2.4, 2.39,
                           2.41, 2.5, 2.32, 2.32, 2.43, 2.47, 2.56, 2.65, 2.47, 2.64, 2.56, 2.7, 2.72,
                           2.57]),
        },
    },
    "surgical": {
        "description": "Deaths r among n infant cardiac operations in each of 12 hospitals.",
        "columns": {
            "n": ("int", [47, 148, 119, 810, 211, 196, 148, 215, 207, 97, 256, 360]),
            "r": ("int", [0, 18, 8, 46, 8, 13, 9, 31, 14, 8, 29, 24]),
        },
    },
    "gp": {
        "description": "Counts k observed at 11 evenly spaced inputs x, simulated from a Poisson "
        "process with a smoothly varying log rate; y is a noisy continuous response at the same x.",
        "columns": {
            "x": ("real", [-10, -8, -6, -4, -2, 0, 2, 4, 6, 8, 10]),
            "y": ("real", [4.75906, 1.59423, 2.99548, 5.27501, 1.66472, 2.24347, 2.8914, 4.08681,
                           4.60588, 0.802364, 3.92136]),
            "k": ("int", [40, 37, 29, 12, 4, 3, 9, 19, 77, 82, 33]),
        },
    },
    "peregrine": {
        "description": "Simulated peregrine surveys over 40 years (year is centred and scaled): "
        "C successful pairs out of N surveyed pairs.",
        "columns": {
            "year": ("real", [-0.95, -0.9, -0.85, -0.8, -0.75, -0.7, -0.65, -0.6, -0.55, -0.5, -0.45,
                              -0.4, -0.35, -0.3, -0.25, -0.2, -0.15, -0.1, -0.05, 0, 0.05, 0.1, 0.15,
                              0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8,
                              0.85, 0.9, 0.95, 1]),
            "C": ("int", [27, 42, 35, 55, 61, 19, 41, 74, 43, 42, 73, 37, 48, 49, 19, 72, 30, 18, 31,
                          71, 63, 51, 48, 73, 49, 54, 43, 59, 30, 24, 62, 55, 51, 47, 14, 27, 45, 20,
                          26, 19]),
            "N": ("int", [43, 83, 53, 91, 95, 24, 62, 91, 64, 57, 97, 56, 74, 66, 28, 92, 40, 23, 46,
                          96, 91, 75, 71, 100, 72, 77, 64, 68, 43, 32, 97, 92, 75, 84, 22, 58, 81, 37,
                          45, 39]),
        },
    },
}

BUILTIN_NAMES = tuple(_BUILTIN)


class DatasetError(ValueError):
    pass


def _column(name: str, kind: str, values) -> np.ndarray:
    if kind == "int":
        arr = np.asarray(values, dtype=float)
        if arr.size and not np.all(np.floor(arr) == arr):
            raise DatasetError(f"integer column {name!r} has non-integral values")
        return arr.astype(np.int64)
    if kind == "real":
        return np.asarray(values, dtype=float)
    raise DatasetError(f"column {name!r} has unknown type {kind!r}")


def builtin(name: str) -> Dataset:
    if name not in _BUILTIN:
        raise DatasetError(f"unknown builtin dataset {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    entry = _BUILTIN[name]
    cols = {k: _column(k, kind, vals) for k, (kind, vals) in entry["columns"].items()}
    return Dataset(name, cols, entry["description"])


def from_json(obj) -> Dataset:
    """Dataset from ``{name, columns: {ident: [numbers]}, meta: {description, types}}``.

    ``meta.types`` may mark columns as "int" or "real"; otherwise a column
    whose entries are all JSON integers is an integer column.
    """
    if not isinstance(obj, dict) or not isinstance(obj.get("columns"), dict):
        raise DatasetError("dataset JSON needs a 'columns' object")
    meta = obj.get("meta") or {}
    types = meta.get("types") or {}
    cols = {}
    for key, values in obj["columns"].items():
        if not isinstance(values, list) or not values:
            raise DatasetError(f"column {key!r} must be a non-empty list of numbers")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
            raise DatasetError(f"column {key!r} must hold only numbers")
        kind = types.get(key) or ("int" if all(isinstance(v, int) for v in values) else "real")
        cols[key] = _column(key, kind, values)
    return Dataset(str(obj.get("name", "dataset")), cols, str(meta.get("description", "")))


def to_json(dataset: Dataset) -> dict:
    return {
        "name": dataset.name,
        "columns": {k: v.tolist() for k, v in dataset.columns.items()},
        "meta": {
            "description": dataset.description,
            "types": {k: ("int" if dataset.is_int(k) else "real") for k in dataset.columns},
        },
    }


def load_dataset(source: str) -> Dataset:
    """A builtin dataset by name, or a dataset JSON file by path."""
    if source in _BUILTIN:
        return builtin(source)
    path = Path(source)
    if not path.exists():
        raise DatasetError(f"{source!r} is neither a builtin dataset ({', '.join(BUILTIN_NAMES)}) nor a file")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed dataset JSON in {source}: {exc}") from exc
    return from_json(obj)
