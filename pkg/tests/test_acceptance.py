"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line in the summary."""

import json
import math
import time

import numpy as np
import pytest

from metamat.cli import main
from metamat.dispersion import (
    InverseQuadraticModel,
    WavePacketSpec,
    band_criterion,
    group_velocity,
    negative_refraction_criterion,
    simulate_wavepacket,
    solve_branch,
    solve_dispersion,
)
from metamat.fields import DensityField, FrequencyGrid, MediumConstants, SampledField, SpatialGrid, load_density
from metamat.inversion import choose_density, forward_p, intermediates, real_imag_equations, solve_h
from metamat.placement import plan_embedding, read_manifest, verify_manifest, write_manifest
from tests.helpers import negative_band_design

UNIT_C = MediumConstants(1.0)
N_SAMPLES = 10_000
N_FREQS = 4


def random_targets(seed):
    """10^4 samples with |p| in [0, 1e3] and Im p <= 0, grouped as 2500 voxels x 4 frequencies."""
    rng = np.random.default_rng(seed)
    R = rng.uniform(0, 1e3, N_SAMPLES)
    R[rng.choice(N_SAMPLES, 50, replace=False)] = 0.0
    psi = rng.uniform(-math.pi, 0, N_SAMPLES)
    psi[:20] = 0.0
    psi[20:40] = -math.pi / 2
    p = R * np.exp(1j * psi)
    p.imag[:20] = 0.0
    grid = SpatialGrid((0, 0, 0), (1, 1, 1), (N_SAMPLES // N_FREQS, 1, 1))
    return SampledField(grid, FrequencyGrid([1.0, 2.0, 3.0, 4.0]), p.reshape(-1, N_FREQS))


@pytest.mark.criterion("round-trip inversion")
@pytest.mark.parametrize("rho_target", [0.3, 0.5, 0.9])
def test_round_trip_inversion(rho_target, record_criterion):
    p = random_targets(1)
    start = time.perf_counter()
    N = choose_density(p, rho_target).values[:, None]
    h = solve_h(p.values, N)
    err = np.abs(forward_p(h, N) - p.values)
    elapsed = time.perf_counter() - start
    assert np.all(err <= 1e-10 * (1 + np.abs(p.values)))
    assert elapsed < 1.0
    record_criterion(f"round-trip inversion (rho_target={rho_target}, {elapsed * 1e3:.1f} ms)")


@pytest.mark.criterion("sign and range of h")
@pytest.mark.parametrize("rho_target", [0.3, 0.5, 0.9])
def test_sign_range_and_real_equations(rho_target, record_criterion):
    p = random_targets(2)
    N = choose_density(p, rho_target).values[:, None]
    h = solve_h(p.values, N)
    inter, _ = intermediates(p.values, N)
    phi = inter.phi
    assert np.all(h.imag <= 0)
    assert np.all(inter.cos_phi > 0)
    assert np.all((phi > -math.pi / 2) & (phi <= 0))
    re, im = real_imag_equations(h, N)
    scale = 1 + np.abs(p.values)
    assert np.all(np.abs(re - p.values.real) <= 1e-10 * scale)
    assert np.all(np.abs(im - p.values.imag) <= 1e-10 * scale)
    record_criterion(f"sign and range of h, real/imaginary equations (rho_target={rho_target})")


@pytest.mark.criterion("inverse-quadratic threshold")
def test_inverse_quadratic_threshold(record_criterion):
    rng = np.random.default_rng(3)
    c = np.exp(rng.uniform(math.log(0.05), math.log(20), 1000))
    x = np.exp(rng.uniform(math.log(0.1), math.log(10), 1000))
    omega = np.sqrt(x / c)
    fd_mismatch = []
    for ci, wi in zip(c, omega):
        model = InverseQuadraticModel(float(ci))
        expected = ci * wi**2 > 1
        assert negative_refraction_criterion(model, float(wi), method="closed-form").holds == expected
        if negative_refraction_criterion(model, float(wi), method="fd").holds != expected:
            fd_mismatch.append(abs(ci * wi**2 - 1))
    assert all(m < 1e-4 for m in fd_mismatch)

    for _ in range(50):
        w_min = float(rng.uniform(0.2, 3))
        band = FrequencyGrid.linspace(w_min, w_min * float(rng.uniform(1.1, 3)), 17)
        for ci in (float(rng.uniform(0.5, 1.5)) / w_min**2, 1.01 / w_min**2, 0.99 / w_min**2):
            assert band_criterion(InverseQuadraticModel(ci), band).holds == (ci > 1 / w_min**2)
    record_criterion("inverse-quadratic threshold (closed form exact, FD within 1e-4, bands)")


@pytest.mark.criterion("dispersion roots")
def test_dispersion_roots(record_criterion):
    model = InverseQuadraticModel(1.0)
    k = 0.4
    roots = solve_dispersion(model, k, UNIT_C)
    # omega / (1 + omega^2) = 0.4  ->  0.4 omega^2 - omega + 0.4 = 0
    disc = math.sqrt(1 - 4 * 0.4 * 0.4)
    expected = [(1 - disc) / 0.8, (1 + disc) / 0.8]
    assert len(roots) == 2
    assert roots == pytest.approx(expected, abs=1e-8)
    for w in roots:
        assert abs(w * model.n(w).real - k) <= 1e-8 * k
    record_criterion("dispersion roots {0.5, 2.0}")


def _packet(model, k, bracket):
    spec = WavePacketSpec(k, 0.01 * k, k_samples=128)
    w = solve_branch(model, k, UNIT_C, bracket)
    vg = group_velocity(model, w, [1, 0, 0], UNIT_C).v_g[0]
    width = 4 / spec.half_width
    duration = 2 * width / abs(vg)
    extent = 2 * (abs(vg) * duration + 8 * width)
    return simulate_wavepacket(model, spec, UNIT_C, duration, extent, bracket), w


@pytest.mark.criterion("negative group velocity")
def test_negative_group_velocity(record_criterion):
    model = InverseQuadraticModel(1.0)
    start = time.perf_counter()

    upper, w_up = _packet(model, 0.4, (1.0, 50.0))
    assert negative_refraction_criterion(model, w_up).value == pytest.approx(-1.6, rel=1e-9)
    n, dn = model.n(w_up).real, model.dn_domega(w_up).real
    assert upper.envelope_velocity * upper.phase_velocity < 0
    assert upper.envelope_velocity == pytest.approx(1 / (n + w_up * dn), rel=0.02)

    lower, w_lo = _packet(model, 0.4, (1e-9, 1.0))
    n, dn = model.n(w_lo).real, model.dn_domega(w_lo).real
    assert lower.envelope_velocity > 0 and lower.phase_velocity > 0
    assert lower.envelope_velocity == pytest.approx(1 / (n + w_lo * dn), rel=0.02)

    elapsed = time.perf_counter() - start
    assert elapsed < 10
    record_criterion(
        f"negative group velocity (v_env={upper.envelope_velocity:.4f}, v_p={upper.phase_velocity:.4f}; "
        f"{elapsed:.2f} s)"
    )


@pytest.mark.criterion("placement convergence")
def test_placement_convergence(tmp_path, record_criterion):
    grid = SpatialGrid((0, 0, 0), (1, 1, 1), (1, 1, 1))
    N = DensityField.constant(grid, 1.0)
    h = SampledField(grid, FrequencyGrid([1.0]), [[-0.1 - 0.1j]])
    radii = (0.1, 0.05, 0.025, 0.0125)
    devs = []
    for a in radii:
        manifest = plan_embedding(N, h, a, kappa=1.0, cube_side=1.0)
        rep = verify_manifest(manifest, N)
        assert rep.passed
        devs.append(abs(a * manifest.total_balls - 1))
        assert devs[-1] <= len(manifest.cubes) * a / 2
        assert rep.min_spacing >= a ** (1 / 3) * (1 - 1e-12)
        write_manifest(manifest, tmp_path / "first.json")
        write_manifest(plan_embedding(N, h, a, kappa=1.0, cube_side=1.0), tmp_path / "second.json")
        assert (tmp_path / "first.json").read_bytes() == (tmp_path / "second.json").read_bytes()
    assert all(later <= earlier for earlier, later in zip(devs, devs[1:]))
    record_criterion(f"placement convergence (deviations {', '.join(f'{d:.3g}' for d in devs)})")


@pytest.mark.criterion("end-to-end design")
def test_end_to_end(tmp_path, record_criterion):
    cfg = negative_band_design(tmp_path)
    start = time.perf_counter()
    assert main(["design", "--config", cfg, "--require-negative"]) == 0
    out = tmp_path / "out"
    report = json.loads((out / "design_report.json").read_text())
    manifest = read_manifest(out / "manifest.json")
    N = load_density(out / "density.json", out / "density.csv")
    verified = verify_manifest(manifest, N)
    elapsed = time.perf_counter() - start

    assert report["max_residual"] < 1e-10
    assert all(row["holds_all"] for row in report["criterion"])
    assert verified.passed
    assert manifest.total_balls > 0
    assert elapsed < 5
    record_criterion(
        f"end-to-end design (max residual {report['max_residual']:.2e}, "
        f"{manifest.total_balls} balls, {elapsed:.2f} s)"
    )
