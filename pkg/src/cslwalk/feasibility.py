"""Environmental-noise ceilings and scans over the collapse strength lambda*alpha.

Every bound comes in two flavours.  The ``*`` functions use the rounded
coefficients (100, 73, 0.8) that go with the 10 nm / 0.25 s / 1e9 amu design;
the ``*_exact`` functions rebuild the same inequality from the underlying
variances so the rounding can be measured.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .analytic import sigma2_csl
from .errors import ParameterDomainError
from .montecarlo import required_samples, required_samples_bound, required_samples_exact
from .params import CONSTANTS, DEFAULT_ALPHA, ExperimentSetup, convert_pressure, make_csl_params

__all__ = [
    "SphereParams",
    "FeasibilityEnvelope",
    "AccessibleRegion",
    "RAD_COEFF",
    "sigma2_rad",
    "max_internal_temperature",
    "max_internal_temperature_exact",
    "collision_time",
    "max_pressure",
    "max_pressure_chain",
    "max_pressure_exact",
    "scan",
    "scan_to_csv",
    "parse_grid",
    "accessible_region",
    "envelope",
    "region_to_csv",
    "points_in_polygon",
    "load_exclusion_csv",
]

RAD_COEFF = 4.0e-43  # SI, photon-emission recoil variance coefficient
NOISE_MARGIN = 10.0  # collapse signal must beat each noise source by this factor
DESIGN_T = 0.25  # s


@dataclass(frozen=True)
class SphereParams:
    radius: float = 1e-7  # m
    density: float = 1e3  # kg/m^3
    internal_temperature: float = 0.0  # K

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ParameterDomainError("radius", self.radius, "must be > 0")
        if not self.density > 0.0:
            raise ParameterDomainError("density", self.density, "must be > 0")
        if not self.internal_temperature >= 0.0:
            raise ParameterDomainError("internal_temperature", self.internal_temperature, "must be >= 0")

    @property
    def mass(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3 * self.density


def sigma2_rad(s: SphereParams, t: float) -> float:
    """Position variance from thermal photon-emission recoil after time ``t``."""
    if not t > 0.0:
        raise ParameterDomainError("t", t, "must be > 0")
    return RAD_COEFF * s.density**-2 * s.radius**-3 * s.internal_temperature**6 * t**3


def _lambda_alpha(la) -> float:
    la = float(la)
    if math.isnan(la) or not la > 0.0:
        raise ParameterDomainError("lambda_alpha", la, "must be > 0")
    return la


def max_internal_temperature(lambda_alpha: float) -> float:
    """Internal-temperature ceiling, 73 (lambda alpha)^(1/6) K."""
    return 73.0 * _lambda_alpha(lambda_alpha) ** (1.0 / 6.0)


def max_internal_temperature_exact(lambda_alpha: float, sphere: SphereParams | None = None,
                                   t: float = DESIGN_T, margin: float = NOISE_MARGIN) -> float:
    """Solve sigma2_CSL = margin * sigma2_RAD for T_i (t cancels: both grow as t^3)."""
    la = _lambda_alpha(lambda_alpha)
    sphere = sphere or SphereParams()
    setup = ExperimentSetup(t_flight=t)
    # sigma2_CSL is mass independent; any mass gives the same value
    s2 = sigma2_csl(setup, make_csl_params(la / DEFAULT_ALPHA, DEFAULT_ALPHA, 1e9))
    per_T6 = RAD_COEFF * sphere.density**-2 * sphere.radius**-3 * t**3
    return (s2 / (margin * per_T6)) ** (1.0 / 6.0)


def collision_time(pressure_ptorr: float, t_ext_ratio: float = 1.0) -> float:
    """Mean time (s) between gas-molecule impacts at ``pressure_ptorr`` picoTorr."""
    if not pressure_ptorr > 0.0:
        raise ParameterDomainError("pressure", pressure_ptorr, "must be > 0")
    if not t_ext_ratio > 0.0:
        raise ParameterDomainError("t_ext_ratio", t_ext_ratio, "must be > 0")
    return 2.0 * math.sqrt(t_ext_ratio) / pressure_ptorr


def max_pressure_chain(n: float, t: float = DESIGN_T, t_ext_ratio: float = 1.0,
                       margin: float = NOISE_MARGIN) -> float:
    """Pressure ceiling in Torr from collision_time >= margin * n * t."""
    ptorr = 2.0 * math.sqrt(t_ext_ratio) / (margin * n * t)
    return convert_pressure(ptorr, "picoTorr", "Torr")


def max_pressure(lambda_alpha: float) -> float:
    """Pressure ceiling in Torr, 0.8 / [2 (100/(lambda alpha) + 10)^2 + 1] picoTorr."""
    ptorr = 0.8 / required_samples_bound(_lambda_alpha(lambda_alpha))
    return convert_pressure(ptorr, "picoTorr", "Torr")


def max_pressure_exact(lambda_alpha: float, setup: ExperimentSetup | None = None, mass_amu: float = 1e9) -> float:
    setup = setup or ExperimentSetup()
    n = required_samples_exact(lambda_alpha, setup=setup, mass_amu=mass_amu)
    t_ratio = setup.temperature_ext / CONSTANTS.T0
    return max_pressure_chain(n, t=setup.t_flight, t_ext_ratio=t_ratio)


@dataclass(frozen=True)
class FeasibilityEnvelope:
    lambda_alpha: float
    n_min: int
    t_i_max: float  # K
    p_max: float  # Torr

    def row(self) -> tuple:
        return self.lambda_alpha, self.n_min, self.t_i_max, self.p_max


def envelope(lambda_alpha: float, exact: bool = False) -> FeasibilityEnvelope:
    la = _lambda_alpha(lambda_alpha)
    if exact:
        return FeasibilityEnvelope(la, required_samples_exact(la), max_internal_temperature_exact(la),
                                   max_pressure_exact(la))
    return FeasibilityEnvelope(la, required_samples(la), max_internal_temperature(la), max_pressure(la))


def scan(lambda_alpha_grid: Sequence[float], exact: bool = False) -> list[FeasibilityEnvelope]:
    grid = [_lambda_alpha(v) for v in lambda_alpha_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ParameterDomainError("lambda_alpha_grid", lambda_alpha_grid, "must be sorted ascending")
    return [envelope(v, exact=exact) for v in grid]


SCAN_CSV_HEADER = ("lambda_alpha", "n_min", "t_i_max_K", "p_max_torr")


def scan_to_csv(rows: Sequence[FeasibilityEnvelope]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_CSV_HEADER)
    for r in rows:
        w.writerow([repr(r.lambda_alpha), r.n_min, repr(r.t_i_max), repr(r.p_max)])
    return buf.getvalue()


_GRID = re.compile(r"^\s*([^:]+):([^:]+):(\d+)\s*(log|lin)?\s*$")


def parse_grid(spec: str) -> np.ndarray:
    """``start:stop:count[log|lin]`` -> grid values (log spacing by default)."""
    m = _GRID.match(spec)
    if m is None:
        raise ParameterDomainError("grid", spec, "expected start:stop:count[log|lin]")
    try:
        start, stop = float(m.group(1)), float(m.group(2))
    except ValueError:
        raise ParameterDomainError("grid", spec, "start and stop must be numbers") from None
    count = int(m.group(3))
    if count < 1:
        raise ParameterDomainError("grid", spec, "count must be >= 1")
    if (m.group(4) or "log") == "log":
        if not (start > 0.0 and stop > 0.0):
            raise ParameterDomainError("grid", spec, "log grids need positive bounds")
        return np.logspace(math.log10(start), math.log10(stop), count)
    return np.linspace(start, stop, count)


# --- accessible region ---------------------------------------------------------


@dataclass(frozen=True)
class AccessibleRegion:
    """Where correlated walks are observable: lambda*alpha high enough, 1/sqrt(alpha) long enough."""

    alpha_max: float = 1e4  # 1/m^2; 1/sqrt(alpha) >= 1 cm
    lambda_alpha_min: float = 1.0  # 1/(m^2 s)

    def contains(self, lam, alpha):
        lam = np.asarray(lam, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        out = (lam * alpha >= self.lambda_alpha_min) & (alpha <= self.alpha_max)
        return bool(out) if out.ndim == 0 else out

    def boundary(self, log10_lambda_range=(-20.0, 4.0), log10_alpha_range=(-4.0, 20.0)) -> np.ndarray:
        """Boundary polyline (log10 lambda, log10 alpha) clipped to the plot window."""
        l_lo, l_hi = log10_lambda_range
        a_lo, a_hi = log10_alpha_range
        log_prod = math.log10(self.lambda_alpha_min)
        a_top = min(math.log10(self.alpha_max), a_hi)
        # diagonal edge log lambda + log alpha = log_prod, from the window bottom up to alpha_max
        a_start = max(a_lo, log_prod - l_hi)
        pts = [(log_prod - a_start, a_start), (log_prod - a_top, a_top), (l_hi, a_top)]
        return np.array([(min(max(x, l_lo), l_hi), y) for x, y in pts])

    def grid_rows(self, log10_lambda: np.ndarray, log10_alpha: np.ndarray, exclusion=None):
        """Rows (log10 lambda, log10 alpha, inside[, excluded]) over the tensor grid."""
        LL, AA = np.meshgrid(log10_lambda, log10_alpha, indexing="ij")
        inside = self.contains(10.0**LL, 10.0**AA)
        cols = [LL.ravel(), AA.ravel(), inside.ravel().astype(int)]
        if exclusion is not None:
            cols.append(points_in_polygon(LL.ravel(), AA.ravel(), exclusion).astype(int))
        return list(zip(*cols))


def points_in_polygon(x, y, polygon) -> np.ndarray:
    """Even-odd ray casting; ``polygon`` is an (m, 2) vertex list, closed implicitly."""
    poly = np.asarray(polygon, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
        raise ParameterDomainError("exclusion", poly.shape, "need at least three (x, y) vertices")
    x = np.asarray(x, dtype=float)[:, None]
    y = np.asarray(y, dtype=float)[:, None]
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    crosses = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    return (np.count_nonzero(crosses & (x < x_at), axis=1) % 2) == 1


def load_exclusion_csv(path) -> np.ndarray:
    """Read an exclusion polygon: two columns (log10 lambda, log10 alpha), optional header."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except (ValueError, IndexError):
                if rows:
                    raise ParameterDomainError("exclusion", rec, "expected two numeric columns") from None
    return np.array(rows, dtype=float)


def accessible_region(alpha_max_from_separation: float = 1e4, lambda_alpha_min: float = 1.0) -> AccessibleRegion:
    if not alpha_max_from_separation > 0.0:
        raise ParameterDomainError("alpha_max_from_separation", alpha_max_from_separation, "must be > 0")
    if not lambda_alpha_min > 0.0:
        raise ParameterDomainError("lambda_alpha_min", lambda_alpha_min, "must be > 0")
    return AccessibleRegion(alpha_max=alpha_max_from_separation, lambda_alpha_min=lambda_alpha_min)


def region_to_csv(rows, with_exclusion: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["log10_lambda", "log10_alpha", "inside"] + (["excluded"] if with_exclusion else []))
    for r in rows:
        w.writerow([repr(float(r[0])), repr(float(r[1]))] + [int(v) for v in r[2:]])
    return buf.getvalue()
