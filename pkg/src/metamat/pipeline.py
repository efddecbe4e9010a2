"""Batch design run: fields in, design artifacts and a JSON report out."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import dispersion, inversion, placement
from .fields import MediumConstants, SampledField, domain_diameter, load_field, save_density, save_field

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    n0sq_descriptor: Path
    n0sq_values: Path
    nsq_descriptor: Path
    nsq_values: Path
    out: Path
    radius_a: float
    c: float = 1.0
    rho_target: float = inversion.DEFAULT_RHO_TARGET
    kappa: float = 1.0
    cube_side: Optional[float] = None
    absorption_threshold: float = dispersion.DEFAULT_ABSORPTION_THRESHOLD
    require_negative: bool = False

    def __post_init__(self):
        if not (0 < self.rho_target < 1):
            raise ValueError(f"rho_target must lie in (0, 1), got {self.rho_target}")
        for name in ("radius_a", "c", "kappa", "absorption_threshold"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive number, got {value!r}")
        if self.cube_side is not None and not self.cube_side > 0:
            raise ValueError(f"cube_side must be positive, got {self.cube_side}")
        for name in ("n0sq_descriptor", "n0sq_values", "nsq_descriptor", "nsq_values"):
            if not Path(getattr(self, name)).is_file():
                raise FileNotFoundError(f"{name}: no such file {getattr(self, name)}")

    @classmethod
    def from_mapping(cls, data: dict, base: Path = Path("."), **overrides) -> "RunConfig":
        """Build from the JSON config layout; relative paths resolve against ``base``.

        Expected keys: ``n0sq`` and ``nsq`` (each ``{"descriptor", "values"}``),
        ``radius_a``, and optionally ``out``, ``c``, ``rho_target``, ``kappa``,
        ``cube_side``, ``absorption_threshold``, ``require_negative``.
        """
        data = dict(data)
        kwargs = {}
        for key in ("n0sq", "nsq"):
            entry = data.pop(key, None) or {}
            for part in ("descriptor", "values"):
                if f"{key}_{part}" in overrides and overrides[f"{key}_{part}"] is not None:
                    continue
                if part not in entry:
                    raise ValueError(f"config needs {key}.{part}")
                kwargs[f"{key}_{part}"] = base / entry[part]
        if "out" in data:
            kwargs["out"] = base / data.pop("out")
        known = {f.name for f in dc_fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs.update(data)
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        for key in ("n0sq_descriptor", "n0sq_values", "nsq_descriptor", "nsq_values", "out"):
            if key in kwargs:
                kwargs[key] = Path(kwargs[key])
        missing = {"out", "radius_a"} - set(kwargs)
        if missing:
            raise ValueError(f"config needs {sorted(missing)}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        path = Path(path)
        return cls.from_mapping(json.loads(path.read_text()), base=path.parent, **overrides)


@dataclass
class DesignOutcome:
    report: dict
    plan: Optional[inversion.MaterialPlanFields] = None
    manifest: Optional[placement.EmbeddingManifest] = None

    @property
    def passed(self) -> bool:
        return all(self.report["gates"].values())


def criterion_table(nsq: SampledField) -> list[dict]:
    """Per-frequency min/max of the negative-refraction criterion across voxels.

    Each voxel's n(omega) is rebuilt from its n^2 samples; a voxel whose Re n is
    not positive contributes no value. Needs at least two frequencies.
    """
    omegas = nsq.omegas
    if len(omegas) < 2:
        return [{"omega": float(w), "min": None, "max": None, "holds_all": None} for w in omegas]
    values = np.full(nsq.values.shape, np.nan)
    for v in range(nsq.grid.n_voxels):
        n = dispersion.principal_index(nsq.values[v])
        if np.any(n.real <= 0):
            continue
        model = dispersion.TabulatedModel(omegas, n)
        for f, w in enumerate(omegas):
            values[v, f] = dispersion.negative_refraction_criterion(model, float(w)).value
    table = []
    for f, w in enumerate(omegas):
        col = values[:, f]
        defined = bool(np.all(np.isfinite(col)))
        table.append(
            {
                "omega": float(w),
                "min": float(np.nanmin(col)) if np.any(np.isfinite(col)) else None,
                "max": float(np.nanmax(col)) if np.any(np.isfinite(col)) else None,
                "holds_all": bool(defined and np.all(col < -1.0)),
            }
        )
    return table


def absorption_table(nsq: SampledField, threshold: float) -> tuple[float, list[dict]]:
    L = domain_diameter(nsq.grid)
    check = dispersion.absorption_check(nsq.values, L, threshold)
    rows = [
        {"omega": float(w), "max_ratio": float(check.ratio[:, f].max()), "pass": bool(check.passed[:, f].all())}
        for f, w in enumerate(nsq.omegas)
    ]
    return L, rows


def run_design(cfg: RunConfig) -> DesignOutcome:
    """Steps 1-3 of the recipe plus diagnostics; writes artifacts to ``cfg.out``.

    Module errors (bad files, Im p > 0, geometry) propagate. A capacity error
    is recorded in the report and fails the ``capacity_ok`` gate.
    """
    n0sq = load_field(cfg.n0sq_descriptor, cfg.n0sq_values)
    nsq = load_field(cfg.nsq_descriptor, cfg.nsq_values)
    medium = MediumConstants(cfg.c)
    log.info("designing on %s voxels x %s frequencies", nsq.grid.n_voxels, len(nsq.freqs))

    plan, inv = inversion.design_material(n0sq, nsq, medium, cfg.rho_target)
    residual_ok = inv.residual_ok
    crit = criterion_table(nsq)
    L, absorption = absorption_table(nsq, cfg.absorption_threshold)

    manifest = None
    capacity_error = None
    verification = None
    try:
        manifest = placement.plan_embedding(plan.N, plan.h, cfg.radius_a, cfg.kappa, cfg.cube_side)
    except placement.CapacityExceededError as exc:
        log.error("%s", exc)
        capacity_error = {
            "message": str(exc),
            "cube": exc.cube_index,
            "nu": exc.nu,
            "capacity": exc.capacity,
            "suggested_radius_a": exc.suggested_radius,
        }
    if manifest is not None:
        verification = placement.verify_manifest(manifest, plan.N)

    gates = {
        "residuals_pass": bool(residual_ok.all()),
        "capacity_ok": capacity_error is None,
        "manifest_verified": bool(verification is not None and verification.passed),
    }
    if cfg.require_negative:
        gates["negative_refraction"] = all(row["holds_all"] for row in crit)

    samples = [
        {"voxel": v, "freq_index": f, "rho": float(inv.rho[v, f]), "residual": float(inv.residual[v, f])}
        for v in range(inv.rho.shape[0])
        for f in range(inv.rho.shape[1])
    ]
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "design",
        "parameters": {
            "c": cfg.c,
            "rho_target": cfg.rho_target,
            "radius_a": cfg.radius_a,
            "kappa": cfg.kappa,
            "cube_side": cfg.cube_side,
            "absorption_threshold": cfg.absorption_threshold,
        },
        "gates": gates,
        "max_residual": inv.max_residual,
        "residual_rtol": inversion.RESIDUAL_RTOL,
        "rho_max_used": plan.rho_max_used,
        "domain_diameter": L,
        "criterion": crit,
        "absorption": absorption,
        "manifest": None
        if manifest is None
        else {
            "n_cubes": len(manifest.cubes),
            "total_balls": manifest.total_balls,
            "radius_a": manifest.radius_a,
            "spacing_d": manifest.spacing_d,
            "total_deviation": verification.total_deviation,
            "deviation_bound": verification.deviation_bound,
            "min_spacing": verification.min_spacing,
        },
        "capacity_error": capacity_error,
        "samples": samples,
    }

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_field(plan.h, out / "h_field.json", out / "h_field.csv")
    save_density(plan.N, out / "density.json", out / "density.csv")
    if manifest is not None:
        placement.write_manifest(manifest, out / "manifest.json")
        placement.write_geometry_csv(manifest, out / "manifest_geometry.csv")
    (out / "design_report.json").write_text(json.dumps(report, indent=1) + "\n")
    return DesignOutcome(report, plan, manifest)

