"""Dispersion relation, negative-refraction criterion and velocities.

For an isotropic medium with refraction coefficient ``n(omega)`` the dispersion
relation is ``omega * n(omega) = |k| c``. Differentiating in ``k`` gives the
group velocity ``c / (n + omega dn/domega)`` along ``k/|k|``, which points
against the wave vector exactly when ``(omega / n) dn/domega < -1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .fields import FrequencyGrid, MediumConstants

GROUP_SINGULAR_TOL = 1e-8
DEFAULT_ABSORPTION_THRESHOLD = 0.1
REPORT_SCHEMA_VERSION = 1


class DispersionError(ValueError):
    pass


class UndefinedCriterionError(DispersionError):
    pass


class GroupVelocitySingularityError(DispersionError):
    pass


class BranchAmbiguityError(DispersionError):
    pass


class TruncationError(DispersionError):
    def __init__(self, message: str, suggested_extent: float):
        super().__init__(message)
        self.suggested_extent = suggested_extent


# --- models ------------------------------------------------------------------


class DispersionModel:
    """Scalar map omega -> n(omega) at a fixed point in space."""

    omega_range: tuple[float, float]

    def n(self, omega):
        raise NotImplementedError

    def dn_domega(self, omega: float) -> Optional[float]:
        """Closed-form derivative of Re n, or None if the model has none."""
        return None

    def log_derivative(self, omega: float) -> Optional[float]:
        """Closed-form ``(omega / n) dn/domega``, or None."""
        return None

    def contains(self, omega: float) -> bool:
        lo, hi = self.omega_range
        return lo <= omega <= hi


class InverseQuadraticModel(DispersionModel):
    """``n(omega) = 1 / (1 + c_param * omega**2)`` with ``c_param > 0``.

    Criterion value reduces to ``-2x / (1 + x)`` with ``x = c_param omega^2``,
    so the band above ``omega = 1/sqrt(c_param)`` refracts negatively.
    """

    def __init__(self, c_param: float, omega_max: float | None = None):
        if not (c_param > 0 and math.isfinite(c_param)):
            raise ValueError(f"c_param must be positive, got {c_param}")
        self.c_param = float(c_param)
        if omega_max is None:
            omega_max = 1e3 / math.sqrt(self.c_param)
        self.omega_range = (0.0, float(omega_max))

    def __repr__(self):
        return f"InverseQuadraticModel(c_param={self.c_param!r})"

    def n(self, omega):
        omega = np.asarray(omega, dtype=float)
        out = 1.0 / (1.0 + self.c_param * omega**2)
        return out.item() if out.ndim == 0 else out

    def dn_domega(self, omega):
        x = self.c_param * omega**2
        return -2.0 * self.c_param * omega / (1.0 + x) ** 2

    def log_derivative(self, omega):
        x = self.c_param * omega**2
        return -2.0 * x / (1.0 + x)


class ConstantIndexModel(DispersionModel):
    def __init__(self, n: complex = 1.0, omega_range: tuple[float, float] = (0.0, 1e6)):
        self.value = complex(n)
        self.omega_range = (float(omega_range[0]), float(omega_range[1]))

    def __repr__(self):
        return f"ConstantIndexModel(n={self.value!r})"

    def n(self, omega):
        if np.ndim(omega) == 0:
            return self.value if self.value.imag else self.value.real
        return np.full(np.shape(omega), self.value if self.value.imag else self.value.real)

    def dn_domega(self, omega):
        return 0.0

    def log_derivative(self, omega):
        return 0.0


class TabulatedModel(DispersionModel):
    """Complex n sampled on a strictly increasing omega grid.

    Real and imaginary parts are each interpolated with a shape-preserving
    (monotone) piecewise cubic, so the derivative does not ring between samples.
    """

    def __init__(self, omegas: Sequence[float], n_values: Sequence[complex]):
        omegas = np.asarray(omegas, dtype=float)
        n_values = np.asarray(n_values, dtype=complex)
        if omegas.ndim != 1 or omegas.size < 2 or omegas.shape != n_values.shape:
            raise ValueError("need matching 1-D omega and n arrays with >= 2 samples")
        if np.any(np.diff(omegas) <= 0):
            raise ValueError("tabulated omegas must be strictly increasing")
        if not (np.all(np.isfinite(omegas)) and np.all(np.isfinite(n_values))):
            raise ValueError("tabulated values must be finite")
        self.omegas = omegas
        self.n_values = n_values
        self._re = PchipInterpolator(omegas, n_values.real, extrapolate=False)
        self._im = PchipInterpolator(omegas, n_values.imag, extrapolate=False)
        self.omega_range = (float(omegas[0]), float(omegas[-1]))

    def __repr__(self):
        return f"TabulatedModel({self.omegas.size} samples on [{self.omega_range[0]}, {self.omega_range[1]}])"

    def n(self, omega):
        if np.ndim(omega) == 0:
            if not self.contains(float(omega)):
                raise DispersionError(f"omega={omega} outside tabulated range {self.omega_range}")
            return complex(self._re(omega), self._im(omega))
        omega = np.asarray(omega, dtype=float)
        if np.any((omega < self.omega_range[0]) | (omega > self.omega_range[1])):
            raise DispersionError(f"omega outside tabulated range {self.omega_range}")
        return self._re(omega) + 1j * self._im(omega)

    @classmethod
    def from_csv(cls, path) -> "TabulatedModel":
        """Read a CSV with header ``omega,n_re,n_im``."""
        import csv

        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            if header != ["omega", "n_re", "n_im"]:
                raise DispersionError(f"{path}: expected header omega,n_re,n_im")
            rows = []
            for i, row in enumerate(reader, start=1):
                if not row:
                    continue
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise DispersionError(f"{path}: row {i}: not numeric") from None
                if len(rows[-1]) != 3:
                    raise DispersionError(f"{path}: row {i}: expected 3 columns")
        if len(rows) < 2:
            raise DispersionError(f"{path}: need at least 2 rows")
        arr = np.asarray(rows)
        try:
            return cls(arr[:, 0], arr[:, 1] + 1j * arr[:, 2])
        except ValueError as exc:
            raise DispersionError(f"{path}: {exc}") from None


def _re_n(model: DispersionModel, omega):
    return np.real(model.n(omega))


# --- derivative and criterion ------------------------------------------------


@dataclass(frozen=True)
class Derivative:
    value: float
    one_sided: bool = False
    method: str = "closed-form"


def refraction_derivative(model: DispersionModel, omega: float, method: str = "auto") -> Derivative:
    """d(Re n)/domega at ``omega``.

    ``method="auto"`` uses the model's closed form when it has one, else a
    central difference with step ``max(1e-6 * omega, 1e-9)``. At the edge of the
    model range a one-sided difference is used and flagged.
    """
    if method not in ("auto", "closed-form", "fd"):
        raise ValueError(f"unknown method {method!r}")
    if not model.contains(omega):
        raise DispersionError(f"omega={omega} outside model range {model.omega_range}")
    if method != "fd":
        exact = model.dn_domega(omega)
        if exact is not None:
            return Derivative(float(exact))
        if method == "closed-form":
            raise DispersionError(f"{model!r} has no closed-form derivative")

    step = max(1e-6 * omega, 1e-9)
    lo, hi = model.omega_range
    left, right = omega - step, omega + step
    if left >= lo and right <= hi:
        return Derivative((_re_n(model, right) - _re_n(model, left)) / (2 * step), False, "fd")
    if right <= hi:
        return Derivative((_re_n(model, right) - _re_n(model, omega)) / step, True, "fd")
    if left >= lo:
        return Derivative((_re_n(model, omega) - _re_n(model, left)) / step, True, "fd")
    raise DispersionError(f"model range {model.omega_range} too narrow to differentiate at {omega}")


@dataclass(frozen=True)
class CriterionResult:
    omega: float
    value: float
    holds: bool
    one_sided: bool = False


def negative_refraction_criterion(model: DispersionModel, omega: float, method: str = "auto") -> CriterionResult:
    """Evaluate ``(omega / Re n) d(Re n)/domega`` and whether it is below -1."""
    n_re = float(_re_n(model, omega))
    if n_re <= 0:
        raise UndefinedCriterionError(f"Re n = {n_re} <= 0 at omega={omega}; criterion undefined")
    if method != "fd":
        closed = model.log_derivative(omega)
        if closed is not None:
            value = float(closed)
            return CriterionResult(omega, value, value < -1.0)
    d = refraction_derivative(model, omega, method)
    value = omega / n_re * d.value
    return CriterionResult(omega, value, value < -1.0, d.one_sided)


@dataclass(frozen=True)
class BandCriterion:
    holds: bool
    rows: list[CriterionResult]


def band_criterion(model: DispersionModel, band: FrequencyGrid, method: str = "auto") -> BandCriterion:
    rows = [negative_refraction_criterion(model, w, method) for w in band]
    return BandCriterion(all(r.holds for r in rows), rows)


# --- absorption --------------------------------------------------------------


@dataclass(frozen=True)
class AbsorptionCheck:
    ratio: np.ndarray
    passed: np.ndarray
    threshold: float

    @property
    def all_pass(self) -> bool:
        return bool(np.all(self.passed))


def principal_index(nsq) -> np.ndarray:
    """Principal square root of n^2 (Re n >= 0); rejects the negative real axis."""
    nsq = np.asarray(nsq, dtype=complex)
    on_cut = (nsq.imag == 0) & (nsq.real < 0)
    if np.any(on_cut):
        raise BranchAmbiguityError("n^2 on the negative real axis: square-root branch is ambiguous")
    return np.sqrt(nsq)


def absorption_check(nsq, L: float, threshold: float = DEFAULT_ABSORPTION_THRESHOLD) -> AbsorptionCheck:
    """Ratio ``L * |Im n|`` per sample; small ratios mean the wave barely decays across D."""
    n = principal_index(nsq)
    ratio = L * np.abs(n.imag)
    return AbsorptionCheck(ratio, ratio < threshold, threshold)


# --- dispersion relation -----------------------------------------------------


def _bisect(f: Callable[[float], float], a: float, b: float, fa: float, rtol: float) -> float:
    while b - a > rtol * max(abs(a), abs(b)):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def solve_dispersion(
    model: DispersionModel,
    k_mag: float,
    medium: MediumConstants,
    omega_range: tuple[float, float] | None = None,
    samples: int = 4096,
    rtol: float = 1e-10,
) -> list[float]:
    """All positive roots of ``omega * Re n(omega) = k_mag * c`` in the range, ascending.

    Roots are bracketed by sign changes on a mixed linear/geometric sampling
    of the range and then refined by bisection.
    """
    if not k_mag > 0:
        raise ValueError(f"k_mag must be positive, got {k_mag}")
    lo, hi = omega_range if omega_range is not None else model.omega_range
    target = k_mag * medium.c

    def f(w):
        return w * float(_re_n(model, w)) - target

    grid = np.linspace(lo, hi, samples)
    start = lo if lo > 0 else hi * 1e-9
    grid = np.unique(np.concatenate([grid, np.geomspace(start, hi, samples)]))
    grid = grid[grid > 0]
    values = grid * np.real(model.n(grid)) - target

    roots = []
    for i, v in enumerate(values):
        if v == 0.0:
            roots.append(float(grid[i]))
        elif i + 1 < len(values) and values[i + 1] != 0.0 and (v < 0) != (values[i + 1] < 0):
            roots.append(_bisect(f, float(grid[i]), float(grid[i + 1]), float(v), rtol))
    return sorted(roots)


def solve_branch(
    model: DispersionModel, k_mag: float, medium: MediumConstants, bracket: tuple[float, float], rtol: float = 1e-13
) -> float:
    """The unique root of the dispersion relation inside ``bracket``."""
    target = k_mag * medium.c

    def f(w):
        return w * float(_re_n(model, w)) - target

    a, b = bracket
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if (fa < 0) == (fb < 0):
        raise DispersionError(f"no sign change of omega*n(omega) - |k|c on {bracket} for |k|={k_mag}")
    return _bisect(f, a, b, fa, rtol)


# --- velocities --------------------------------------------------------------


@dataclass(frozen=True)
class VelocityResult:
    v_p: np.ndarray
    v_g: np.ndarray
    k0: np.ndarray
    omega: float

    @property
    def group_along_k(self) -> float:
        return float(self.v_g @ self.k0)


def group_velocity(
    model: DispersionModel, omega: float, k0: Sequence[float], medium: MediumConstants, method: str = "auto"
) -> VelocityResult:
    k0 = np.asarray(k0, dtype=float)
    norm = np.linalg.norm(k0)
    if not norm > 0:
        raise ValueError("k0 must be a nonzero vector")
    k0 = k0 / norm
    n_re = float(_re_n(model, omega))
    if n_re <= 0:
        raise DispersionError(f"Re n = {n_re} <= 0 at omega={omega}")
    denom = n_re + omega * refraction_derivative(model, omega, method).value
    if abs(denom) < GROUP_SINGULAR_TOL:
        raise GroupVelocitySingularityError(f"group-velocity singularity: n + omega dn/domega = {denom:.3g}")
    return VelocityResult(v_p=medium.c / n_re * k0, v_g=medium.c / denom * k0, k0=k0, omega=float(omega))


# --- wave packet -------------------------------------------------------------


@dataclass(frozen=True)
class WavePacketSpec:
    center_k: float
    half_width: float
    amplitude: Optional[Callable[[np.ndarray], np.ndarray]] = None
    k_samples: int = 128

    def __post_init__(self):
        if not self.center_k > 0:
            raise ValueError("center_k must be positive")
        if not (0 < self.half_width < self.center_k):
            raise ValueError("half_width must lie in (0, center_k)")
        if self.k_samples < 16:
            raise ValueError("k_samples must be >= 16")

    def wavenumbers(self) -> np.ndarray:
        # open interval (k - delta, k + delta): drop the two endpoints
        ks = np.linspace(self.center_k - self.half_width, self.center_k + self.half_width, self.k_samples + 2)
        return ks[1:-1]

    def amplitudes(self, ks: np.ndarray) -> np.ndarray:
        if self.amplitude is None:
            sigma = self.half_width / 4.0
            return np.exp(-0.5 * ((ks - self.center_k) / sigma) ** 2)
        a = np.asarray(self.amplitude(ks), dtype=complex)
        if not np.all(np.isfinite(a)):
            raise ValueError("packet amplitudes must be finite")
        return a


@dataclass(frozen=True)
class WavePacketResult:
    envelope_velocity: float
    phase_velocity: float
    times: np.ndarray
    centroids: np.ndarray


def simulate_wavepacket(
    model: DispersionModel,
    spec: WavePacketSpec,
    medium: MediumConstants,
    duration: float,
    line_extent: float,
    omega_bracket: tuple[float, float],
    n_times: int = 24,
    n_points: int = 2048,
    tail_tol: float = 1e-5,
) -> WavePacketResult:
    """Superpose plane waves on a line and track the envelope centroid.

    ``u(x, t) = sum_k a(k) exp(i (k x - omega(k) t))`` with ``omega(k)`` taken
    from the dispersion branch inside ``omega_bracket``. The envelope velocity
    is the least-squares slope of the ``|u|^2``-weighted centroid over time.
    """
    ks = spec.wavenumbers()
    amps = spec.amplitudes(ks)
    omegas = np.array([solve_branch(model, k, medium, omega_bracket) for k in ks])
    dk = ks[1] - ks[0]
    if line_extent >= 2 * math.pi / dk:
        raise ValueError(f"line_extent must be shorter than the packet period {2 * math.pi / dk:.6g}")

    xs = np.linspace(-line_extent / 2, line_extent / 2, n_points)
    times = np.linspace(0.0, duration, n_times)
    # Only the envelope matters: factor out the carrier exp(i k_bar x).
    spatial = np.exp(1j * np.outer(xs, ks - spec.center_k))
    centroids = np.empty(n_times)
    widths = np.empty(n_times)
    truncated_at = None
    for i, t in enumerate(times):
        u = spatial @ (amps * np.exp(-1j * omegas * t))
        intensity = np.abs(u) ** 2
        total = intensity.sum()
        centroids[i] = (xs * intensity).sum() / total
        widths[i] = math.sqrt(((xs - centroids[i]) ** 2 * intensity).sum() / total)
        if truncated_at is None and max(intensity[0], intensity[-1]) > tail_tol * intensity.max():
            truncated_at = t
    if truncated_at is not None:
        suggested = max(2 * (np.abs(centroids).max() + 6 * widths.max()), 1.5 * line_extent)
        raise TruncationError(
            f"packet reaches the line ends at t={truncated_at:.6g}; try line_extent >= {suggested:.6g}",
            suggested_extent=float(suggested),
        )

    slope = np.polyfit(times, centroids, 1)[0] if n_times > 1 else 0.0
    omega_bar = solve_branch(model, spec.center_k, medium, omega_bracket)
    return WavePacketResult(
        envelope_velocity=float(slope),
        phase_velocity=float(omega_bar / spec.center_k),
        times=times,
        centroids=centroids,
    )


# --- report ------------------------------------------------------------------


def dispersion_report(
    model: DispersionModel,
    band: FrequencyGrid,
    L: float,
    threshold: float = DEFAULT_ABSORPTION_THRESHOLD,
) -> dict:
    """Per-frequency JSON-ready rows plus the band verdict."""
    rows = []
    for w in band:
        n = complex(model.n(w))
        d = refraction_derivative(model, w)
        crit = negative_refraction_criterion(model, w)
        ratio = float(L * abs(n.imag))
        rows.append(
            {
                "omega": w,
                "n_re": n.real,
                "n_im": n.imag,
                "dn_domega": d.value,
                "criterion_value": crit.value,
                "criterion_holds": crit.holds,
                "absorption_ratio": ratio,
                "absorption_pass": ratio < threshold,
                "one_sided": d.one_sided,
            }
        )
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "dispersion",
        "model": repr(model),
        "diameter": L,
        "absorption_threshold": threshold,
        "criterion_holds_over_band": all(r["criterion_holds"] for r in rows),
        "absorption_pass_over_band": all(r["absorption_pass"] for r in rows),
        "rows": rows,
    }
