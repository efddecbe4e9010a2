"""Grids, sampled complex fields and their on-disk formats.

A field file pair consists of a JSON grid descriptor::

    {"origin": [x, y, z], "spacing": [dx, dy, dz], "dims": [nx, ny, nz],
     "frequencies": [w0, w1, ...]}

and a CSV values file with header ``voxel_index,freq_index,re,im``. Rows are
voxel-major, frequency-minor, and voxels are enumerated x-fastest::

    voxel_index = ix + nx * (iy + ny * iz)

Density fields (which carry no frequency axis) use the same descriptor without
``frequencies`` and a CSV with header ``voxel_index,value``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

VALUES_HEADER = ["voxel_index", "freq_index", "re", "im"]
DENSITY_HEADER = ["voxel_index", "value"]


class FieldFormatError(ValueError):
    """Raised for malformed descriptors or values files."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SpatialGrid:
    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]
    dims: tuple[int, int, int]

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        spacing = tuple(float(v) for v in self.spacing)
        dims = tuple(int(v) for v in self.dims)
        if len(origin) != 3 or len(spacing) != 3 or len(dims) != 3:
            raise ValueError("origin, spacing and dims must each have 3 entries")
        if not all(math.isfinite(v) for v in origin + spacing):
            raise ValueError("grid origin and spacing must be finite")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        if any(n < 1 for n in dims):
            raise ValueError(f"dims must be >= 1, got {dims}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "dims", dims)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.spacing) * np.asarray(self.dims)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.extent

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.spacing))

    def voxel_indices(self) -> np.ndarray:
        """Integer (ix, iy, iz) triples in enumeration order, shape (n_voxels, 3)."""
        nx, ny, nz = self.dims
        iz, iy, ix = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
        return np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1)

    def voxel_centers(self) -> np.ndarray:
        """Voxel centers ``origin + (index + 1/2) * spacing``, x-fastest."""
        return self.lower + (self.voxel_indices() + 0.5) * np.asarray(self.spacing)

    def flat_index(self, ix: int, iy: int, iz: int) -> int:
        nx, ny, _ = self.dims
        return ix + nx * (iy + ny * iz)

    def nearest_voxel(self, point: Sequence[float]) -> int:
        """Flat index of the voxel whose center is closest to ``point``.

        Points outside the box snap to the boundary voxel; exact ties between
        two centers go to the lower index.
        """
        u = (np.asarray(point, dtype=float) - self.lower) / np.asarray(self.spacing) - 0.5
        idx = np.ceil(u - 0.5).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.dims) - 1)
        return self.flat_index(*(int(i) for i in idx))

    def to_descriptor(self) -> dict:
        return {"origin": list(self.origin), "spacing": list(self.spacing), "dims": list(self.dims)}


@dataclass(frozen=True)
class FrequencyGrid:
    samples: tuple[float, ...]

    def __post_init__(self):
        samples = tuple(float(w) for w in self.samples)
        if not samples:
            raise ValueError("frequency grid needs at least one sample")
        if not all(math.isfinite(w) and w > 0 for w in samples):
            raise ValueError("frequencies must be finite and positive")
        if any(b <= a for a, b in zip(samples, samples[1:])):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.samples)

    @classmethod
    def linspace(cls, lo: float, hi: float, count: int) -> "FrequencyGrid":
        return cls(tuple(np.linspace(lo, hi, count)))


@dataclass(frozen=True)
class SampledField:
    """Complex samples over voxels x frequencies, stored as (n_voxels, n_freqs)."""

    grid: SpatialGrid
    freqs: FrequencyGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        expected = (self.grid.n_voxels, len(self.freqs))
        if values.size != expected[0] * expected[1]:
            raise ValueError(f"expected {expected[0] * expected[1]} values, got {values.size}")
        values = values.reshape(expected)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def omegas(self) -> np.ndarray:
        return self.freqs.as_array()

    def with_values(self, values: np.ndarray) -> "SampledField":
        return SampledField(self.grid, self.freqs, values)

    def check_compatible(self, other: "SampledField") -> None:
        if self.grid != other.grid:
            raise ValueError(f"grid mismatch: {self.grid} vs {other.grid}")
        if self.freqs != other.freqs:
            raise ValueError("frequency grid mismatch")


@dataclass(frozen=True)
class DensityField:
    """Nonnegative per-voxel particle density; has no frequency axis."""

    grid: SpatialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.n_voxels:
            raise ValueError(f"expected {self.grid.n_voxels} values, got {values.size}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("density values must be finite and >= 0")
        object.__setattr__(self, "values", _readonly(values))

    @classmethod
    def constant(cls, grid: SpatialGrid, value: float) -> "DensityField":
        return cls(grid, np.full(grid.n_voxels, float(value)))


@dataclass(frozen=True)
class MediumConstants:
    c: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError(f"wave speed must be positive, got {self.c}")


def box_diagonal(extent: Sequence[float]) -> float:
    return math.sqrt(sum(float(e) ** 2 for e in extent))


def domain_diameter(grid: SpatialGrid) -> float:
    """Diameter of the grid's bounding box (its space diagonal)."""
    return box_diagonal(grid.extent)


# --- serialization -----------------------------------------------------------


def _parse_grid(desc: dict, source) -> SpatialGrid:
    try:
        return SpatialGrid(desc["origin"], desc["spacing"], desc["dims"])
    except KeyError as exc:
        raise FieldFormatError(f"{source}: descriptor missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise FieldFormatError(f"{source}: bad grid: {exc}") from None


def _read_descriptor(path) -> dict:
    try:
        with open(path) as fh:
            desc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FieldFormatError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(desc, dict):
        raise FieldFormatError(f"{path}: descriptor must be a JSON object")
    return desc


def _read_rows(path, header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != header:
            raise FieldFormatError(f"{path}: expected header {','.join(header)}")
        return [row for row in reader if row]


def _parse_float(text: str, path, row_no: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise FieldFormatError(f"{path}: row {row_no}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise FieldFormatError(f"{path}: row {row_no}: non-finite value {text!r}")
    return value


def load_field(descriptor_path, values_path) -> SampledField:
    desc = _read_descriptor(descriptor_path)
    grid = _parse_grid(desc, descriptor_path)
    if "frequencies" not in desc:
        raise FieldFormatError(f"{descriptor_path}: descriptor missing key 'frequencies'")
    try:
        freqs = FrequencyGrid(desc["frequencies"])
    except (TypeError, ValueError) as exc:
        raise FieldFormatError(f"{descriptor_path}: bad frequencies: {exc}") from None

    rows = _read_rows(values_path, VALUES_HEADER)
    nf = len(freqs)
    expected = grid.n_voxels * nf
    if len(rows) != expected:
        raise FieldFormatError(f"{values_path}: expected {expected} rows, got {len(rows)}")
    values = np.empty(expected, dtype=complex)
    for i, row in enumerate(rows):
        row_no = i + 1  # 1-based data row, header excluded
        if len(row) != 4:
            raise FieldFormatError(f"{values_path}: row {row_no}: expected 4 columns")
        try:
            v_idx, f_idx = int(row[0]), int(row[1])
        except ValueError:
            raise FieldFormatError(f"{values_path}: row {row_no}: bad index") from None
        if (v_idx, f_idx) != divmod(i, nf):
            raise FieldFormatError(
                f"{values_path}: row {row_no}: expected indices {divmod(i, nf)}, got {(v_idx, f_idx)}"
            )
        values[i] = complex(_parse_float(row[2], values_path, row_no), _parse_float(row[3], values_path, row_no))
    return SampledField(grid, freqs, values)


def save_field(f: SampledField, descriptor_path, values_path) -> None:
    desc = f.grid.to_descriptor()
    desc["frequencies"] = list(f.freqs.samples)
    Path(descriptor_path).write_text(json.dumps(desc, indent=2) + "\n")
    nf = len(f.freqs)
    with open(values_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(VALUES_HEADER)
        for i, z in enumerate(f.values.ravel()):
            v_idx, f_idx = divmod(i, nf)
            # repr() is the shortest string that round-trips the double exactly
            writer.writerow([v_idx, f_idx, repr(float(z.real)), repr(float(z.imag))])


def load_density(descriptor_path, values_path) -> DensityField:
    grid = _parse_grid(_read_descriptor(descriptor_path), descriptor_path)
    rows = _read_rows(values_path, DENSITY_HEADER)
    if len(rows) != grid.n_voxels:
        raise FieldFormatError(f"{values_path}: expected {grid.n_voxels} rows, got {len(rows)}")
    values = np.empty(grid.n_voxels)
    for i, row in enumerate(rows):
        row_no = i + 1
        if len(row) != 2 or row[0].strip() != str(i):
            raise FieldFormatError(f"{values_path}: row {row_no}: expected voxel_index {i}")
        values[i] = _parse_float(row[1], values_path, row_no)
        if values[i] < 0:
            raise FieldFormatError(f"{values_path}: row {row_no}: negative density")
    return DensityField(grid, values)


def save_density(d: DensityField, descriptor_path, values_path) -> None:
    Path(descriptor_path).write_text(json.dumps(d.grid.to_descriptor(), indent=2) + "\n")
    with open(values_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DENSITY_HEADER)
        for i, v in enumerate(d.values):
            writer.writerow([i, repr(float(v))])
