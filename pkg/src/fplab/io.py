"""Self-describing JSON documents for grids, fields, measures, and certificates.

Every document carries a ``format`` tag, a ``grid`` header, and flat row-major
value arrays. Floats are serialized with ``repr`` (via the json module), which
round-trips bit-identically. The exact field names are part of the public
interface and documented in the README.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .fields import DiffusionField, DiscreteMeasure, NullFamilySchedule, VectorField
from .grid import Grid1D, Grid2D, grid_from_metadata

FORMATS = {
    "measure": "fplab/measure@1",
    "vector_field": "fplab/vector-field@1",
    "diffusion_field": "fplab/diffusion-field@1",
    "schedule": "fplab/schedule@1",
    "certificate": "fplab/certificate@1",
    "attractor": "fplab/attractor@1",
}


def _flat(arr) -> list:
    return np.asarray(arr, dtype=float).ravel(order="C").tolist()


def _unflat(values, grid) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if isinstance(grid, Grid1D):
        return arr.reshape(grid.nx)
    return arr.reshape(grid.nx, grid.ny)


def measure_to_document(mu: DiscreteMeasure) -> dict:
    return {
        "format": FORMATS["measure"],
        "grid": mu.grid.metadata(),
        "weights": _flat(mu.weights),
    }


def measure_from_document(doc: dict) -> DiscreteMeasure:
    grid = grid_from_metadata(doc["grid"])
    return DiscreteMeasure(grid, _unflat(doc["weights"], grid))


def vector_field_to_document(v: VectorField) -> dict:
    return {
        "format": FORMATS["vector_field"],
        "grid": v.grid.metadata(),
        "vx": _flat(v.vx),
        "vy": _flat(v.vy),
    }


def vector_field_from_document(doc: dict) -> VectorField:
    grid = grid_from_metadata(doc["grid"])
    return VectorField(grid, _unflat(doc["vx"], grid), _unflat(doc["vy"], grid))


def diffusion_to_document(a: DiffusionField) -> dict:
    return {
        "format": FORMATS["diffusion_field"],
        "grid": a.grid.metadata(),
        "a11": _flat(a.a11),
        "a12": _flat(a.a12),
        "a22": _flat(a.a22),
    }


def diffusion_from_document(doc: dict) -> DiffusionField:
    grid = grid_from_metadata(doc["grid"])
    return DiffusionField(
        grid, _unflat(doc["a11"], grid), _unflat(doc["a12"], grid), _unflat(doc["a22"], grid)
    )


def schedule_to_document(s: NullFamilySchedule) -> dict:
    return {
        "format": FORMATS["schedule"],
        "grid": s.grid.metadata(),
        "eps": list(s.eps),
        "invariance_mode": s.invariance_mode,
        "normal_bound": s.normal_bound,
        "members": [diffusion_to_document(a) for a in s.members],
    }


def schedule_from_document(doc: dict) -> NullFamilySchedule:
    members = tuple(diffusion_from_document(d) for d in doc["members"])
    return NullFamilySchedule(
        tuple(doc["eps"]), members, doc["invariance_mode"], normal_bound=doc["normal_bound"]
    )


def save_document(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_document(path) -> dict:
    return json.loads(Path(path).read_text())
