"""Turn a density/impedance design into a concrete list of balls.

The domain (the grid's bounding box) is tiled by cubes of side ``cube_side``.
Cube ``j`` receives ``nu_j = [integral of N over Q_j / a]`` balls of radius
``a`` (``[.]`` is round-half-up), each carrying the impedance table
``zeta_j(omega) = h(x_j, omega) / a``.

Ball centers are drawn from one simple-cubic lattice of pitch
``d = kappa * a**(1/3)`` laid over the whole domain and centered in it.
Each cube is filled with the lattice points strictly inside it, in x-fastest
order. A single shared lattice means the spacing bound also holds between
balls in neighbouring cubes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .fields import DensityField, SampledField, SpatialGrid

MANIFEST_SCHEMA_VERSION = 1
_REL_TOL = 1e-9


class PlacementError(ValueError):
    pass


class GeometryError(PlacementError):
    pass


class CapacityExceededError(PlacementError):
    def __init__(self, cube_index: int, nu: int, capacity: int, suggested_radius: Optional[float]):
        hint = (
            f"smallest feasible radius_a found: {suggested_radius:.6g}"
            if suggested_radius is not None
            else "no radius_a in the scanned range fits; lower kappa or the density"
        )
        super().__init__(
            f"capacity exceeded in cube {cube_index}: needs {nu} balls, lattice holds {capacity}; {hint}"
        )
        self.cube_index = cube_index
        self.nu = nu
        self.capacity = capacity
        self.suggested_radius = suggested_radius


def nearest_integer(b: float) -> int:
    """Nearest integer to ``b >= 0``; halves round up."""
    b = float(b)
    if not math.isfinite(b) or b < 0:
        raise ValueError(f"nearest_integer needs a finite b >= 0, got {b}")
    return int(math.floor(b + 0.5))


@dataclass(frozen=True)
class Cube:
    index: int
    center: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


@dataclass(frozen=True)
class CubePartition:
    cube_side: float
    counts: tuple[int, int, int]
    cubes: list[Cube]


def _integral_count(ratio: float) -> Optional[int]:
    r = round(ratio)
    return int(r) if abs(ratio - r) <= _REL_TOL * max(1.0, abs(ratio)) else None


def partition_domain(grid: SpatialGrid, cube_side: float) -> CubePartition:
    """Tile the grid's bounding box with cubes, enumerated x-fastest."""
    if not cube_side > 0:
        raise GeometryError(f"cube_side must be positive, got {cube_side}")
    counts = []
    for ext in grid.extent:
        m = _integral_count(ext / cube_side)
        if m is None or m < 1:
            raise GeometryError(f"cube_side {cube_side} does not tile a domain edge of length {ext}")
        counts.append(m)
    nx, ny, nz = counts
    lower = grid.lower
    cubes = []
    for iz in range(nz):
        for iy in range(ny):
            for ix in range(nx):
                lo = lower + cube_side * np.array([ix, iy, iz], dtype=float)
                hi = lo + cube_side
                cubes.append(Cube(len(cubes), lo + 0.5 * cube_side, lo, hi))
    return CubePartition(float(cube_side), tuple(counts), cubes)


def default_cube_side(grid: SpatialGrid) -> float:
    sx, sy, sz = grid.spacing
    if not (math.isclose(sx, sy, rel_tol=_REL_TOL) and math.isclose(sx, sz, rel_tol=_REL_TOL)):
        raise GeometryError("voxels are not cubic; pass cube_side explicitly")
    return sx


def cube_integral(N: DensityField, lo, hi) -> float:
    """Integral of the voxelwise-constant density over the box ``[lo, hi]``.

    Each voxel contributes its value times the volume it shares with the box,
    which is exact for piecewise-constant N.
    """
    grid = N.grid
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    tol = _REL_TOL * max(1.0, float(grid.extent.max()))
    if np.any(lo < grid.lower - tol) or np.any(hi > grid.upper + tol) or np.any(hi < lo):
        raise GeometryError(f"cube [{lo}, {hi}] lies outside the grid box [{grid.lower}, {grid.upper}]")
    weights = []
    for axis in range(3):
        n = grid.dims[axis]
        edges = grid.origin[axis] + grid.spacing[axis] * np.arange(n + 1)
        overlap = np.minimum(hi[axis], edges[1:]) - np.maximum(lo[axis], edges[:-1])
        weights.append(np.clip(overlap, 0.0, None))
    wx, wy, wz = weights
    nx, ny, nz = grid.dims
    dens = N.values.reshape(nz, ny, nx)
    return float(np.einsum("zyx,z,y,x->", dens, wz, wy, wx))


# --- lattice -----------------------------------------------------------------


def _axis_lattice(lo: float, length: float, d: float) -> np.ndarray:
    """Points of pitch d centered in [lo, lo + length], all strictly inside."""
    ratio = length / d
    m = _integral_count(ratio)
    if m is None:
        m = math.ceil(ratio)
    # m points span (m - 1) d < length
    return lo + 0.5 * length + (np.arange(m) - 0.5 * (m - 1)) * d


@dataclass(frozen=True)
class _Lattice:
    axes: tuple[np.ndarray, np.ndarray, np.ndarray]

    @classmethod
    def over(cls, grid: SpatialGrid, d: float) -> "_Lattice":
        return cls(tuple(_axis_lattice(grid.lower[i], grid.extent[i], d) for i in range(3)))

    def inside(self, cube: Cube, tol: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            ax[(ax > cube.lo[i] + tol) & (ax < cube.hi[i] - tol)] for i, ax in enumerate(self.axes)
        )

    def capacity(self, cube: Cube, tol: float) -> int:
        return int(np.prod([len(a) for a in self.inside(cube, tol)]))

    def points(self, cube: Cube, count: int, tol: float) -> np.ndarray:
        xs, ys, zs = self.inside(cube, tol)
        if count == 0:
            return np.zeros((0, 3))
        zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
        return pts[:count]


# --- manifest ----------------------------------------------------------------


@dataclass
class CubeEntry:
    index: int
    center: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    nu: int
    balls: np.ndarray
    zeta: list[tuple[float, complex]] = field(default_factory=list)


@dataclass
class EmbeddingManifest:
    radius_a: float
    spacing_d: float
    kappa: float
    cube_side: float
    cubes: list[CubeEntry]

    @property
    def total_balls(self) -> int:
        return sum(len(c.balls) for c in self.cubes)

    def all_centers(self) -> np.ndarray:
        if not self.cubes:
            return np.zeros((0, 3))
        return np.concatenate([c.balls.reshape(-1, 3) for c in self.cubes])

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "radius_a": self.radius_a,
            "spacing_d": self.spacing_d,
            "kappa": self.kappa,
            "cube_side": self.cube_side,
            "cubes": [
                {
                    "index": c.index,
                    "center": [float(v) for v in c.center],
                    "bounds": [[float(v) for v in c.lo], [float(v) for v in c.hi]],
                    "nu": c.nu,
                    "balls": [[float(v) for v in b] for b in c.balls],
                    "zeta": [{"omega": w, "re": z.real, "im": z.imag} for w, z in c.zeta],
                }
                for c in self.cubes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EmbeddingManifest":
        try:
            cubes = [
                CubeEntry(
                    index=int(c["index"]),
                    center=np.asarray(c["center"], dtype=float),
                    lo=np.asarray(c["bounds"][0], dtype=float),
                    hi=np.asarray(c["bounds"][1], dtype=float),
                    nu=int(c["nu"]),
                    balls=np.asarray(c["balls"], dtype=float).reshape(-1, 3),
                    zeta=[(float(z["omega"]), complex(z["re"], z["im"])) for z in c["zeta"]],
                )
                for c in data["cubes"]
            ]
            return cls(
                radius_a=float(data["radius_a"]),
                spacing_d=float(data["spacing_d"]),
                kappa=float(data["kappa"]),
                cube_side=float(data["cube_side"]),
                cubes=cubes,
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise PlacementError(f"malformed manifest: {exc!r}") from None


def write_manifest(manifest: EmbeddingManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=1) + "\n")


def read_manifest(path) -> EmbeddingManifest:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PlacementError(f"{path}: invalid JSON: {exc}") from None
    return EmbeddingManifest.from_dict(data)


def write_geometry_csv(manifest: EmbeddingManifest, path) -> None:
    lines = ["cube,ball,x,y,z"]
    for c in manifest.cubes:
        for i, (x, y, z) in enumerate(c.balls):
            lines.append(f"{c.index},{i},{x!r},{y!r},{z!r}")
    Path(path).write_text("\n".join(lines) + "\n")


# --- planning ----------------------------------------------------------------


def _ball_counts(N: DensityField, partition: CubePartition, radius_a: float) -> list[int]:
    return [nearest_integer(cube_integral(N, c.lo, c.hi) / radius_a) for c in partition.cubes]


def _fits(N: DensityField, partition: CubePartition, radius_a: float, kappa: float) -> bool:
    d = kappa * radius_a ** (1.0 / 3.0)
    if 2 * radius_a >= d or partition.cube_side <= d:
        return False
    lattice = _Lattice.over(N.grid, d)
    tol = _REL_TOL * partition.cube_side
    counts = _ball_counts(N, partition, radius_a)
    return all(nu <= lattice.capacity(c, tol) for nu, c in zip(counts, partition.cubes))


def smallest_feasible_radius(
    N: DensityField, partition: CubePartition, radius_a: float, kappa: float
) -> Optional[float]:
    """Scan radii from radius_a/1000 to 1000*radius_a (eighth-octave steps)."""
    for j in range(-80, 81):
        a = radius_a * 2.0 ** (j / 8)
        if _fits(N, partition, a, kappa):
            return a
    return None


def plan_embedding(
    N: DensityField,
    h: SampledField,
    radius_a: float,
    kappa: float = 1.0,
    cube_side: Optional[float] = None,
) -> EmbeddingManifest:
    if h.grid != N.grid:
        raise ValueError("density and impedance fields live on different grids")
    if not (radius_a > 0 and kappa > 0):
        raise GeometryError("radius_a and kappa must be positive")
    d = kappa * radius_a ** (1.0 / 3.0)
    if 2 * radius_a >= d:
        raise GeometryError(f"balls overlap: 2a = {2 * radius_a:.6g} >= spacing d = {d:.6g}")
    if cube_side is None:
        cube_side = default_cube_side(N.grid)
    if cube_side <= d:
        raise GeometryError(f"cube_side {cube_side:.6g} must exceed spacing d = {d:.6g}")

    partition = partition_domain(N.grid, cube_side)
    lattice = _Lattice.over(N.grid, d)
    tol = _REL_TOL * cube_side
    omegas = [float(w) for w in h.freqs]
    cubes = []
    for cube, nu in zip(partition.cubes, _ball_counts(N, partition, radius_a)):
        capacity = lattice.capacity(cube, tol)
        if nu > capacity:
            raise CapacityExceededError(
                cube.index, nu, capacity, smallest_feasible_radius(N, partition, radius_a, kappa)
            )
        voxel = h.grid.nearest_voxel(cube.center)
        zeta = [(w, complex(z) / radius_a) for w, z in zip(omegas, h.values[voxel])]
        cubes.append(CubeEntry(cube.index, cube.center, cube.lo, cube.hi, nu, lattice.points(cube, nu, tol), zeta))
    return EmbeddingManifest(float(radius_a), float(d), float(kappa), float(cube_side), cubes)


# --- verification ------------------------------------------------------------


@dataclass(frozen=True)
class CubeCheck:
    index: int
    count: int
    nu: int
    integral: float
    deviation: float
    relative_deviation: Optional[float]
    within_rounding: bool
    centers_inside: bool


@dataclass(frozen=True)
class VerificationReport:
    cubes: list[CubeCheck]
    total_count: int
    total_integral: float
    total_deviation: float
    deviation_bound: float
    min_spacing: Optional[float]
    spacing_d: float

    @property
    def relative_deviation(self) -> Optional[float]:
        return self.total_deviation / self.total_integral if self.total_integral > 0 else None

    @property
    def spacing_ok(self) -> bool:
        return self.min_spacing is None or self.min_spacing >= self.spacing_d * (1 - _REL_TOL)

    @property
    def deviation_ok(self) -> bool:
        return self.total_deviation <= self.deviation_bound * (1 + _REL_TOL) + 1e-12

    @property
    def passed(self) -> bool:
        return (
            self.spacing_ok
            and self.deviation_ok
            and all(c.within_rounding and c.centers_inside and c.count == c.nu for c in self.cubes)
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "kind": "verification",
            "passed": self.passed,
            "spacing_ok": self.spacing_ok,
            "deviation_ok": self.deviation_ok,
            "min_spacing": self.min_spacing,
            "spacing_d": self.spacing_d,
            "total_count": self.total_count,
            "total_integral": self.total_integral,
            "total_deviation": self.total_deviation,
            "relative_deviation": self.relative_deviation,
            "deviation_bound": self.deviation_bound,
            "cubes": [c.__dict__ for c in self.cubes],
        }


def min_pairwise_distance(points: np.ndarray) -> Optional[float]:
    if len(points) < 2:
        return None
    dist, _ = cKDTree(points).query(points, k=2)
    return float(dist[:, 1].min())


def verify_manifest(manifest: EmbeddingManifest, N: DensityField) -> VerificationReport:
    """Compare ``a * count`` with the density integral per cube and in total."""
    a = manifest.radius_a
    checks = []
    for c in manifest.cubes:
        integral = cube_integral(N, c.lo, c.hi)
        count = len(c.balls)
        dev = abs(a * count - integral)
        inside = bool(np.all((c.balls > c.lo) & (c.balls < c.hi))) if count else True
        checks.append(
            CubeCheck(
                index=c.index,
                count=count,
                nu=c.nu,
                integral=integral,
                deviation=dev,
                relative_deviation=dev / integral if integral > 0 else None,
                within_rounding=dev <= 0.5 * a * (1 + _REL_TOL) + 1e-12,
                centers_inside=inside,
            )
        )
    total_count = sum(c.count for c in checks)
    total_integral = sum(c.integral for c in checks)
    return VerificationReport(
        cubes=checks,
        total_count=total_count,
        total_integral=total_integral,
        total_deviation=abs(a * total_count - total_integral),
        deviation_bound=0.5 * a * len(checks),
        min_spacing=min_pairwise_distance(manifest.all_centers()),
        spacing_d=manifest.spacing_d,
    )
