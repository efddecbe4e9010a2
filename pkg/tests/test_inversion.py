import cmath
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from metamat.fields import DensityField, FrequencyGrid, MediumConstants, SampledField, SpatialGrid
from metamat.inversion import (
    DensityRequiredError,
    InversionError,
    PoleError,
    SignConventionError,
    SingularParameterizationError,
    choose_density,
    compute_p,
    design_material,
    forward_p,
    intermediates,
    polar_decompose,
    real_imag_equations,
    solve_h,
)

PI = math.pi
ONE = SpatialGrid((0, 0, 0), (1, 1, 1), (1, 1, 1))


def field(values, freqs=(1.0,), grid=ONE):
    return SampledField(grid, FrequencyGrid(freqs), values)


# --- compute_p ---------------------------------------------------------------


def test_compute_p_identity_is_zero():
    n = field([1.3 + 0.1j, 0.7], freqs=(1.0, 2.0))
    assert np.all(compute_p(n, n, MediumConstants(3.0)).values == 0)


def test_compute_p_direct():
    # omega / c = 2
    p = compute_p(field([1.0], (4.0,)), field([0.5], (4.0,)), MediumConstants(2.0))
    assert p.values[0, 0] == 2.0


def test_compute_p_positive_imag_flagged_downstream():
    n0, n = field([1.0]), field([1 - 1j])
    p = compute_p(n0, n, MediumConstants(1.0))
    assert p.values[0, 0] == 1j
    with pytest.raises(SignConventionError, match="voxel 0, frequency index 0"):
        design_material(n0, n, MediumConstants(1.0))


def test_compute_p_mismatch():
    with pytest.raises(ValueError, match="frequency"):
        compute_p(field([1.0]), field([1.0], (2.0,)), MediumConstants(1.0))
    other = SpatialGrid((0, 0, 0), (2, 1, 1), (1, 1, 1))
    with pytest.raises(ValueError, match="grid"):
        compute_p(field([1.0]), field([1.0], grid=other), MediumConstants(1.0))


# --- polar form --------------------------------------------------------------


@pytest.mark.parametrize(
    "p, R, psi",
    [(0, 0.0, 0.0), (-2j * PI, 2 * PI, -PI / 2), (-3 + 0j, 3.0, PI), (complex(-3, -0.0), 3.0, PI)],
)
def test_polar_decompose(p, R, psi):
    out = polar_decompose(p)
    assert out.R == pytest.approx(R, rel=1e-15)
    assert out.psi == pytest.approx(psi, rel=1e-15, abs=0)


@given(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False))
def test_polar_reconstructs(p):
    pol = polar_decompose(p)
    assert -PI < pol.psi <= PI
    assert abs(pol.R * cmath.exp(1j * pol.psi) - p) <= 4e-16 * (abs(p) + 1e-300) * 4


# --- choose_density ----------------------------------------------------------


def test_choose_density_zero_branch():
    assert choose_density(field([0j, 0j], (1.0, 2.0)), 0.5).values[0] == 0.0


def test_choose_density_sup_over_frequencies():
    p = field([PI, -2j * PI, -4 * PI], (1.0, 2.0, 3.0))
    N = choose_density(p, 0.8)
    assert N.values[0] == pytest.approx(1.25, rel=1e-15)
    rho, _ = intermediates(p.values[0], N.values[0])
    np.testing.assert_allclose(rho.rho, [0.2, 0.4, 0.8], rtol=1e-15)


def test_choose_density_simple():
    assert choose_density(field([2 * PI]), 0.5).values[0] == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("rho", [0.0, 1.0, -0.1, 1.5])
def test_choose_density_rejects_bad_target(rho):
    with pytest.raises(ValueError):
        choose_density(field([1.0]), rho)


# --- solve_h / forward_p -----------------------------------------------------


def test_solve_h_zero():
    assert solve_h(0j, 0.0) == 0
    assert solve_h(0j, 3.0) == 0


def test_solve_h_real_case():
    # oracle: back-substitution, 4 pi * 1 * 1/(1+1) = 2 pi
    h = solve_h(2 * PI, 1.0)
    assert h == pytest.approx(1 + 0j, abs=1e-15)
    assert 4 * PI * h / (1 + h) == pytest.approx(2 * PI, rel=1e-15)


def test_solve_h_imaginary_case():
    h = solve_h(-2j * PI, 1.0)
    assert h == pytest.approx(-0.2 - 0.4j, abs=1e-15)
    assert (-0.2 - 0.4j) / (0.8 - 0.4j) == pytest.approx(-0.5j, abs=1e-15)


def test_solve_h_intermediates_match_closed_forms():
    inter, _ = intermediates(-2j * PI, 1.0)
    # rho = 0.5, psi = -pi/2: rho^2 - 2 rho cos + 1 = 1.25
    assert inter.rho == pytest.approx(0.5)
    assert inter.r == pytest.approx(1 / math.sqrt(1.25))
    assert inter.sin_phi == pytest.approx(-0.5 / math.sqrt(1.25))
    assert inter.cos_phi == pytest.approx(1 / math.sqrt(1.25))


def test_solve_h_density_required():
    with pytest.raises(DensityRequiredError, match="density required"):
        solve_h(1 - 1j, 0.0)


def test_solve_h_singular():
    # p = 4 pi N exactly: rho = 1, psi = 0
    with pytest.raises(SingularParameterizationError, match="increase N"):
        solve_h(4 * PI, 1.0)


def test_forward_p_examples():
    assert forward_p(0j, 5.0) == 0
    assert forward_p(1.0, 1.0) == pytest.approx(2 * PI, rel=1e-15)
    assert forward_p(-0.2 - 0.4j, 1.0) == pytest.approx(-2j * PI, abs=1e-14)
    with pytest.raises(PoleError):
        forward_p(-1.0, 1.0)


passive_p = st.builds(
    lambda r, t: r * cmath.exp(1j * t),
    st.one_of(st.just(0.0), st.floats(1e-300, 1e3)),
    st.floats(-PI, 0.0),
)


@settings(max_examples=300)
@given(passive_p, st.floats(0.01, 0.99))
def test_round_trip_and_sign(p, rho_target):
    N = abs(p) / (4 * PI * rho_target)
    h = solve_h(p, N)
    assert abs(forward_p(h, N) - p) <= 1e-10 * (1 + abs(p))
    if p.imag <= 0:
        assert h.imag <= 0
    inter, _ = intermediates(p, N)
    assert abs(inter.sin_phi**2 + inter.cos_phi**2 - 1) <= 1e-12
    assert inter.cos_phi > 0 and inter.r > 0
    assert -PI / 2 < inter.phi <= 0
    re, im = real_imag_equations(h, N)
    assert abs(re - p.real) <= 1e-10 * abs(p)
    assert abs(im - p.imag) <= 1e-10 * abs(p)


@given(passive_p)
def test_non_uniqueness(p):
    assume(abs(p) > 1e-6)
    sols = []
    for rho_target in (0.3, 0.7):
        N = abs(p) / (4 * PI * rho_target)
        h = solve_h(p, N)
        assert abs(forward_p(h, N) - p) <= 1e-10 * (1 + abs(p))
        sols.append((h, N))
    assert sols[0][1] != sols[1][1] and sols[0][0] != sols[1][0]


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(4)
    p = rng.normal(size=50) * 10 - 1j * np.abs(rng.normal(size=50)) * 10
    N = np.abs(p) / (4 * PI * 0.5)
    hv = solve_h(p, N)
    for i in range(50):
        assert hv[i] == solve_h(complex(p[i]), float(N[i]))


# --- design_material ---------------------------------------------------------


def test_design_identity():
    grid = SpatialGrid((0, 0, 0), (1, 1, 1), (2, 1, 1))
    n = field([1.5, 1.4 + 0.1j, 1.0, 0.9], (1.0, 2.0), grid)
    plan, rep = design_material(n, n, MediumConstants(1.0))
    assert np.all(plan.h.values == 0) and np.all(plan.N.values == 0)
    assert rep.max_residual == 0


def test_design_single_sample():
    # c = 1, omega = 1: p = n0^2 - n^2 = -2 pi i
    plan, rep = design_material(field([1.0]), field([1 + 2j * PI]), MediumConstants(1.0), 0.5)
    assert plan.N.values[0] == pytest.approx(1.0, rel=1e-15)
    assert plan.h.values[0, 0] == pytest.approx(-0.2 - 0.4j, abs=1e-14)
    assert rep.rho[0, 0] == pytest.approx(0.5)


def test_design_random_field_residual():
    rng = np.random.default_rng(0)
    grid = SpatialGrid((0, 0, 0), (1, 1, 1), (3, 2, 2))
    freqs = (0.5, 1.0, 2.0, 4.0)
    shape = (grid.n_voxels, len(freqs))
    n0 = rng.normal(size=shape) + 1j * rng.uniform(0, 0.1, size=shape)
    n = rng.normal(size=shape) + 1j * (n0.imag + rng.uniform(0, 2, size=shape))
    plan, rep = design_material(field(n0, freqs, grid), field(n, freqs, grid), MediumConstants(0.7))
    assert np.all(rep.residual < 1e-10 * (1 + np.abs(rep.p.values)))
    assert np.all(plan.h.values.imag <= 0)
    assert np.all(rep.rho <= 0.5 + 1e-15)
    assert plan.rho_max_used == 0.5


def test_design_with_supplied_density():
    n0, n = field([1.0]), field([1 + 2j * PI])
    plan, rep = design_material(n0, n, MediumConstants(1.0), density=DensityField(ONE, [2.0]))
    assert plan.rho_max_used == pytest.approx(0.25)
    assert rep.max_residual < 1e-12
    with pytest.raises(InversionError, match="rho"):
        design_material(n0, n, MediumConstants(1.0), density=DensityField(ONE, [0.4]))
