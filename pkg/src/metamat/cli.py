"""Command line entry point: ``metamat {design,dispersion,verify,report}``.

Exit status is 0 when the command ran and every declared gate passed, 1 when
it ran but a gate failed, and 2 on input or module errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import dispersion, placement
from .fields import FieldFormatError, FrequencyGrid, load_density
from .pipeline import RunConfig, run_design

log = logging.getLogger("metamat")

EXIT_OK, EXIT_GATE, EXIT_ERROR = 0, 1, 2


def _setup_logging() -> None:
    level = os.environ.get("METAMAT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _write_json(data: dict, out: Path | None, name: str) -> None:
    text = json.dumps(data, indent=1) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    out = Path(out)
    if out.suffix == ".json":
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def cmd_design(args) -> int:
    overrides = dict(
        out=args.out,
        rho_target=args.rho_target,
        radius_a=args.radius_a,
        kappa=args.kappa,
        cube_side=args.cube_side,
        absorption_threshold=args.absorption_threshold,
        c=args.c,
        require_negative=True if args.require_negative else None,
    )
    cfg = RunConfig.from_file(args.config, **overrides)
    outcome = run_design(cfg)
    gates = outcome.report["gates"]
    print(f"max residual {outcome.report['max_residual']:.3e}; gates: " + ", ".join(f"{k}={v}" for k, v in gates.items()))
    if outcome.report["capacity_error"]:
        print(outcome.report["capacity_error"]["message"], file=sys.stderr)
    return EXIT_OK if outcome.passed else EXIT_GATE


def _band(args) -> FrequencyGrid:
    if args.frequencies:
        return FrequencyGrid([float(w) for w in args.frequencies.split(",")])
    if args.band_min is None or args.band_max is None:
        raise ValueError("give --frequencies or both --band-min and --band-max")
    if args.band_samples == 1 or args.band_min == args.band_max:
        return FrequencyGrid([args.band_min])
    return FrequencyGrid.linspace(args.band_min, args.band_max, args.band_samples)


def cmd_dispersion(args) -> int:
    if args.table:
        model = dispersion.TabulatedModel.from_csv(args.table)
    else:
        if args.c_param is None:
            raise ValueError("--c-param is required for the inverse-quadratic model")
        model = dispersion.InverseQuadraticModel(args.c_param)
    band = _band(args)
    for w in band:
        if not model.contains(w):
            raise ValueError(f"band frequency {w} outside model range {model.omega_range}")
    report = dispersion.dispersion_report(model, band, args.diameter, args.absorption_threshold)
    report["require_negative"] = bool(args.require_negative)
    _write_json(report, args.out, "dispersion_report.json")
    holds = report["criterion_holds_over_band"]
    print(f"criterion holds over band: {holds}", file=sys.stderr)
    if args.require_negative and not holds:
        return EXIT_GATE
    return EXIT_OK


def cmd_verify(args) -> int:
    manifest = placement.read_manifest(args.manifest)
    N = load_density(args.density_descriptor, args.density_values)
    report = placement.verify_manifest(manifest, N)
    _write_json(report.to_dict(), args.out, "verification_report.json")
    print(
        f"verification {'passed' if report.passed else 'FAILED'}: total deviation "
        f"{report.total_deviation:.3e} (bound {report.deviation_bound:.3e}), "
        f"min spacing {report.min_spacing} (d = {report.spacing_d:.6g})",
        file=sys.stderr,
    )
    return EXIT_OK if report.passed else EXIT_GATE


def _summarise(report: dict) -> list[str]:
    kind = report.get("kind")
    lines = [f"{kind} report (schema {report.get('schema_version')})"]
    if kind == "design":
        lines.append(f"max residual: {report['max_residual']:.3e}")
        lines += [f"gate {k}: {'pass' if v else 'FAIL'}" for k, v in report["gates"].items()]
        for row in report["criterion"]:
            lines.append(f"omega={row['omega']:.6g} criterion min={row['min']} max={row['max']} holds={row['holds_all']}")
        if report["manifest"]:
            m = report["manifest"]
            lines.append(f"manifest: {m['n_cubes']} cubes, {m['total_balls']} balls, a={m['radius_a']}, d={m['spacing_d']:.6g}")
    elif kind == "dispersion":
        lines.append(f"criterion holds over band: {report['criterion_holds_over_band']}")
        for row in report["rows"]:
            lines.append(
                f"omega={row['omega']:.6g} n={row['n_re']:.6g}{row['n_im']:+.3g}i "
                f"value={row['criterion_value']:.6g} holds={row['criterion_holds']} "
                f"absorption={row['absorption_ratio']:.3g}"
            )
    elif kind == "verification":
        lines.append(f"passed: {report['passed']}")
        lines.append(f"total deviation {report['total_deviation']:.3e} <= {report['deviation_bound']:.3e}: {report['deviation_ok']}")
        lines.append(f"min spacing {report['min_spacing']} vs d={report['spacing_d']:.6g}: {report['spacing_ok']}")
    else:
        raise ValueError(f"unrecognised report kind {kind!r}")
    return lines


def cmd_report(args) -> int:
    report = json.loads(Path(args.path).read_text())
    print("\n".join(_summarise(report)))
    if "gates" in report:
        return EXIT_OK if all(report["gates"].values()) else EXIT_GATE
    if "passed" in report:
        return EXIT_OK if report["passed"] else EXIT_GATE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metamat", description="Small-particle metamaterial design toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="compute N, h and the embedding manifest")
    p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, help="output directory (overrides config)")
    p.add_argument("--rho-target", type=float)
    p.add_argument("--radius-a", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--cube-side", type=float)
    p.add_argument("--absorption-threshold", type=float)
    p.add_argument("--c", type=float, help="free-space wave speed")
    p.add_argument("--require-negative", action="store_true", help="fail unless the criterion holds everywhere")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("dispersion", help="negative-refraction analysis of n(omega) over a band")
    model = p.add_mutually_exclusive_group(required=True)
    model.add_argument("--c-param", type=float, help="use n = 1/(1 + c_param * omega^2)")
    model.add_argument("--table", type=Path, help="CSV with header omega,n_re,n_im")
    p.add_argument("--band-min", type=float)
    p.add_argument("--band-max", type=float)
    p.add_argument("--band-samples", type=int, default=33)
    p.add_argument("--frequencies", help="comma-separated frequencies (instead of a band)")
    p.add_argument("--diameter", type=float, default=1.0, help="domain diameter L for the absorption ratio")
    p.add_argument("--absorption-threshold", type=float, default=dispersion.DEFAULT_ABSORPTION_THRESHOLD)
    p.add_argument("--require-negative", action="store_true")
    p.add_argument("--out", type=Path, help="report file (.json) or directory; stdout if omitted")
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("verify", help="check a manifest against its density field")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--density-descriptor", required=True, type=Path)
    p.add_argument("--density-values", required=True, type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="print a human-readable summary of a JSON report")
    p.add_argument("path", type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, FieldFormatError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
