"""Inverse design of particle density and boundary impedance.

Embedding small balls with boundary impedance parameter ``h`` at density ``N``
shifts the squared refraction coefficient of the host by ``-p / k**2`` where::

    p = 4*pi*N*h / (1 + h)

Given a target ``p`` (with ``Im p <= 0``) this module picks an
frequency-independent ``N`` and solves for ``h`` in closed form through the
polar parametrisation

    p = R exp(i psi),  rho = R / (4 pi N),  1 + h = r exp(i phi),
    r = 1 / sqrt(rho^2 - 2 rho cos(psi) + 1).

Everything here is vectorised over numpy arrays; scalar inputs give scalar
outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import DensityField, MediumConstants, SampledField

FOUR_PI = 4.0 * math.pi
DEFAULT_RHO_TARGET = 0.5
SINGULAR_TOL = 1e-8
RESIDUAL_RTOL = 1e-10


class InversionError(ValueError):
    pass


class DensityRequiredError(InversionError):
    pass


class SingularParameterizationError(InversionError):
    pass


class PoleError(InversionError):
    pass


class SignConventionError(InversionError):
    """Target requires Im p > 0, which no passive (Im h <= 0) particle achieves."""


@dataclass(frozen=True)
class PolarForm:
    R: float
    psi: float


@dataclass(frozen=True)
class InversionIntermediate:
    rho: np.ndarray
    r: np.ndarray
    sin_phi: np.ndarray
    cos_phi: np.ndarray

    @property
    def phi(self) -> np.ndarray:
        return np.arctan2(self.sin_phi, self.cos_phi)


@dataclass(frozen=True)
class MaterialPlanFields:
    h: SampledField
    N: DensityField
    rho_max_used: float


@dataclass(frozen=True)
class InversionReport:
    p: SampledField
    rho: np.ndarray  # (n_voxels, n_freqs)
    residual: np.ndarray  # |forward_p(h, N) - p|

    @property
    def max_residual(self) -> float:
        return float(self.residual.max()) if self.residual.size else 0.0

    @property
    def residual_ok(self) -> np.ndarray:
        return self.residual <= RESIDUAL_RTOL * (1.0 + np.abs(self.p.values))


def _unwrap(result, scalar: bool):
    if scalar:
        return result.item() if isinstance(result, np.ndarray) else result
    return result


def compute_p(n0sq: SampledField, nsq: SampledField, medium: MediumConstants) -> SampledField:
    """Susceptibility shift ``(omega/c)**2 * (n0sq - nsq)`` per sample."""
    n0sq.check_compatible(nsq)
    k2 = (n0sq.omegas / medium.c) ** 2
    return n0sq.with_values(k2[None, :] * (n0sq.values - nsq.values))


def polar_decompose(p: complex) -> PolarForm:
    p = complex(p)
    R = abs(p)
    if R == 0.0:
        return PolarForm(0.0, 0.0)
    psi = math.atan2(p.imag, p.real)
    if psi <= -math.pi:  # atan2(-0.0, x<0) lands on -pi; keep psi in (-pi, pi]
        psi = math.pi
    return PolarForm(R, psi)


def choose_density(p: SampledField, rho_target: float = DEFAULT_RHO_TARGET) -> DensityField:
    """Smallest density keeping ``rho <= rho_target`` at every sampled frequency."""
    if not (0.0 < rho_target < 1.0):
        raise ValueError(f"rho_target must lie in (0, 1), got {rho_target}")
    R_max = np.abs(p.values).max(axis=1)
    return DensityField(p.grid, R_max / (FOUR_PI * rho_target))


def density_ratio(p, N) -> np.ndarray:
    """rho = |p| / (4 pi N), with rho = 0 wherever p = 0."""
    R = np.abs(np.asarray(p, dtype=complex))
    N = np.broadcast_to(np.asarray(N, dtype=float), R.shape)
    if np.any((R > 0) & (N <= 0)):
        raise DensityRequiredError("density required: p != 0 where N = 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(R > 0, R / (FOUR_PI * np.where(N > 0, N, 1.0)), 0.0)


def _polar_parts(p: np.ndarray):
    R = np.abs(p)
    safe = np.where(R > 0, R, 1.0)
    cos_psi = np.where(R > 0, p.real / safe, 1.0)
    sin_psi = np.where(R > 0, p.imag / safe, 0.0)
    return R, cos_psi, sin_psi


def intermediates(p, N) -> tuple[InversionIntermediate, np.ndarray]:
    """Return (rho, r, sin phi, cos phi) and the quadratic ``rho^2 - 2 rho cos psi + 1``."""
    p = np.asarray(p, dtype=complex)
    rho = density_ratio(p, N)
    _, cos_psi, sin_psi = _polar_parts(p)
    # (1 - rho cos)^2 + (rho sin)^2 == rho^2 - 2 rho cos + 1, without cancellation
    quad = (1.0 - rho * cos_psi) ** 2 + (rho * sin_psi) ** 2
    if np.any(quad < SINGULAR_TOL):
        raise SingularParameterizationError(
            "parameterization singular (rho*exp(i*psi) ~ 1), increase N"
        )
    root = np.sqrt(quad)
    inter = InversionIntermediate(
        rho=rho,
        r=1.0 / root,
        sin_phi=rho * sin_psi / root,
        cos_phi=(1.0 - rho * cos_psi) / root,
    )
    return inter, quad


def solve_h(p, N):
    """Impedance parameter h with ``4 pi N h / (1 + h) == p``.

    Accepts scalars or broadcastable arrays. Raises DensityRequiredError if
    ``p != 0`` where ``N == 0`` and SingularParameterizationError when the
    chosen density puts ``rho * exp(i psi)`` within reach of 1.
    """
    scalar = np.ndim(p) == 0 and np.ndim(N) == 0
    p = np.asarray(p, dtype=complex)
    inter, quad = intermediates(p, N)
    _, cos_psi, sin_psi = _polar_parts(p)
    rho = inter.rho
    # h1 = r cos(phi) - 1 and h2 = r sin(phi), expanded to avoid subtracting 1
    h1 = rho * (cos_psi - rho) / quad
    h2 = rho * sin_psi / quad
    h = h1 + 1j * h2
    return _unwrap(h, scalar)


def forward_p(h, N):
    """Evaluate ``4 pi N h / (1 + h)``."""
    scalar = np.ndim(h) == 0 and np.ndim(N) == 0
    h = np.asarray(h, dtype=complex)
    if np.any(h == -1):
        raise PoleError("h = -1 is a pole of 4 pi N h / (1 + h)")
    out = FOUR_PI * np.asarray(N, dtype=float) * h / (1.0 + h)
    return _unwrap(out, scalar)


def real_imag_equations(h, N):
    """Real and imaginary parts of the forward map, written without complex division.

    Returns ``(4 pi N [h1(1+h1) + h2^2] / |1+h|^2, 4 pi N h2 / |1+h|^2)``.
    """
    h = np.asarray(h, dtype=complex)
    h1, h2 = h.real, h.imag
    denom = (1.0 + h1) ** 2 + h2**2
    N = np.asarray(N, dtype=float)
    return FOUR_PI * N * (h1 * (1.0 + h1) + h2**2) / denom, FOUR_PI * N * h2 / denom


def first_positive_imag(p: SampledField):
    """(voxel, freq_index) of the first sample with Im p > 0, or None."""
    bad = np.argwhere(p.values.imag > 0)
    if bad.size == 0:
        return None
    return int(bad[0, 0]), int(bad[0, 1])


def design_material(
    n0sq: SampledField,
    nsq: SampledField,
    medium: MediumConstants,
    rho_target: float = DEFAULT_RHO_TARGET,
    density: DensityField | None = None,
) -> tuple[MaterialPlanFields, InversionReport]:
    """Compute p, pick N (unless supplied) and solve for h at every sample."""
    p = compute_p(n0sq, nsq, medium)
    bad = first_positive_imag(p)
    if bad is not None:
        v, f = bad
        raise SignConventionError(
            f"Im p > 0 at voxel {v}, frequency index {f} (omega={p.omegas[f]!r}): "
            f"p={p.values[v, f]!r}; target needs Im n^2 >= Im n0^2"
        )

    if density is None:
        N = choose_density(p, rho_target)
        rho_bound = rho_target
    else:
        if density.grid != p.grid:
            raise ValueError("density grid does not match field grid")
        N = density
        rho_bound = None

    Ncol = N.values[:, None]
    rho = density_ratio(p.values, Ncol)
    if rho_bound is None:
        over = np.argwhere(rho >= 1.0)
        if over.size:
            v, f = (int(i) for i in over[0])
            raise InversionError(f"supplied density gives rho={rho[v, f]:.6g} >= 1 at voxel {v}, frequency index {f}")
        rho_bound = float(rho.max()) if rho.size else 0.0

    h = solve_h(p.values, Ncol)
    residual = np.abs(forward_p(h, Ncol) - p.values)
    plan = MaterialPlanFields(h=p.with_values(h), N=N, rho_max_used=float(rho_bound))
    return plan, InversionReport(p=p, rho=rho, residual=residual)
