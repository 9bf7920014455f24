"""Physical constants, unit conversion and validated parameter containers.

Everything inside the package is SI.  Conversions from the user-facing units
(nm, cm, amu, picoTorr, ...) happen here and nowhere else.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ModelDomainError, ParameterDomainError, UnitError

__all__ = [
    "CONSTANTS",
    "PhysicalConstants",
    "CslParams",
    "ExperimentSetup",
    "make_csl_params",
    "lambda_alpha_product",
    "convert_pressure",
    "convert_length",
    "parse_param_text",
    "load_param_file",
    "DEFAULT_ALPHA",
]


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.054571817e-34  # J s
    amu: float = 1.66053907e-27  # kg
    T0: float = 300.0  # K, room-temperature reference
    torr_per_picotorr: float = 1e-12
    pa_per_torr: float = 133.322


CONSTANTS = PhysicalConstants()

# Default localization scale when only the product lambda*alpha is given:
# 1/sqrt(alpha) = 1 cm, the edge of the accessible region.
DEFAULT_ALPHA = 1e4


def _require(name: str, value, ok: bool, requirement: str) -> None:
    if not ok:
        raise ParameterDomainError(name, value, requirement)


def _finite(name: str, value) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ParameterDomainError(name, value, "must be a real number") from None
    _require(name, value, math.isfinite(v), "must be finite")
    return v


@dataclass(frozen=True)
class CslParams:
    """Collapse parameters plus the particle mass.

    ``D`` is a derived property so it can never disagree with the other fields.
    """

    lam: float  # collapse rate, 1/s
    alpha: float  # inverse squared localization length, 1/m^2
    mass: float  # kg

    def __post_init__(self):
        lam = _finite("lambda", self.lam)
        alpha = _finite("alpha", self.alpha)
        mass = _finite("mass", self.mass)
        _require("lambda", lam, lam >= 0.0, "must be >= 0")
        _require("alpha", alpha, alpha > 0.0, "must be > 0")
        _require("mass", mass, mass > 0.0, "must be > 0")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "mass", mass)

    @property
    def D(self) -> float:
        hbar = CONSTANTS.hbar
        return hbar * hbar * self.lam * self.alpha / 4.0 * (self.mass / CONSTANTS.amu) ** 2

    @property
    def lambda_alpha(self) -> float:
        return self.lam * self.alpha

    @property
    def localization_length(self) -> float:
        return 1.0 / math.sqrt(self.alpha)

    @property
    def mass_amu(self) -> float:
        return self.mass / CONSTANTS.amu

    def with_lambda_alpha(self, lambda_alpha: float) -> "CslParams":
        """Same alpha and mass, rate rescaled so that lam*alpha == lambda_alpha."""
        return replace(self, lam=lambda_alpha / self.alpha)

    def without_collapse(self) -> "CslParams":
        return replace(self, lam=0.0)


def make_csl_params(lam: float, alpha: float, mass_amu: float) -> CslParams:
    mass_amu = _finite("mass_amu", mass_amu)
    _require("mass_amu", mass_amu, mass_amu > 0.0, "must be > 0")
    return CslParams(lam=lam, alpha=alpha, mass=mass_amu * CONSTANTS.amu)


def lambda_alpha_product(p: CslParams) -> float:
    return p.lam * p.alpha


@dataclass(frozen=True)
class ExperimentSetup:
    """Drop experiment geometry and statistics, SI units.

    Defaults are the paper's design point: 10 nm traps, 0.25 s of free fall
    (a 30 cm drop), 10 nm position error and traps 1 mm apart.
    """

    sigma: float = 10e-9
    mu: float = 0.5e-3
    t_flight: float = 0.25
    sigma_err: float = 10e-9
    n_samples: int = 24201
    temperature_ext: float = 300.0
    pressure: float = 3.3e-17  # Torr

    def __post_init__(self):
        for name in ("sigma", "mu", "t_flight", "sigma_err", "temperature_ext", "pressure"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        _require("sigma", self.sigma, self.sigma > 0.0, "must be > 0")
        _require("mu", self.mu, self.mu > 0.0, "must be > 0")
        _require("t_flight", self.t_flight, self.t_flight > 0.0, "must be > 0")
        _require("sigma_err", self.sigma_err, self.sigma_err >= 0.0, "must be >= 0")
        _require("temperature_ext", self.temperature_ext, self.temperature_ext > 0.0, "must be > 0")
        _require("pressure", self.pressure, self.pressure >= 0.0, "must be >= 0")
        n = self.n_samples
        if isinstance(n, float) and n.is_integer():
            n = int(n)
        _require("n_samples", n, isinstance(n, int) and n >= 2, "must be an integer >= 2")
        object.__setattr__(self, "n_samples", n)

    def localization_valid(self, p: CslParams) -> bool:
        """True when 1/sqrt(alpha) is at least ten trap separations."""
        return p.localization_length >= 10.0 * (2.0 * self.mu)

    def require_localization(self, p: CslParams) -> None:
        """Hard limit: the approximation is meaningless once 1/sqrt(alpha) < 2 mu."""
        if p.localization_length < 2.0 * self.mu:
            raise ModelDomainError(
                f"localization length 1/sqrt(alpha)={p.localization_length:.3g} m is below "
                f"the trap separation 2*mu={2 * self.mu:.3g} m"
            )


# --- unit conversion -------------------------------------------------------

_PRESSURE_TO_TORR = {
    "torr": 1.0,
    "picotorr": CONSTANTS.torr_per_picotorr,
    "ptorr": CONSTANTS.torr_per_picotorr,
    "pa": 1.0 / CONSTANTS.pa_per_torr,
}

_LENGTH_TO_M = {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "nm": 1e-9}


def _unit_factor(table: dict, unit: str, kind: str) -> float:
    try:
        return table[unit.strip().lower()]
    except (KeyError, AttributeError):
        raise UnitError(f"unknown {kind} unit {unit!r}; expected one of {sorted(table)}") from None


def convert_pressure(value: float, from_unit: str, to_unit: str) -> float:
    """Convert between Torr, picoTorr and Pa."""
    a = _unit_factor(_PRESSURE_TO_TORR, from_unit, "pressure")
    b = _unit_factor(_PRESSURE_TO_TORR, to_unit, "pressure")
    if a == b:
        return float(value)
    return value * a / b


def convert_length(value: float, from_unit: str, to_unit: str = "m") -> float:
    a = _unit_factor(_LENGTH_TO_M, from_unit, "length")
    b = _unit_factor(_LENGTH_TO_M, to_unit, "length")
    return value * a / b


# --- parameter files ---------------------------------------------------------

# unit suffix -> (SI multiplier, physical kind)
_SUFFIXES = {
    "nm": (1e-9, "length"),
    "cm": (1e-2, "length"),
    "m": (1.0, "length"),
    "s": (1.0, "time"),
    "amu": (CONSTANTS.amu, "mass"),
    "K": (1.0, "temperature"),
    "Torr": (1.0, "pressure"),
    "pTorr": (CONSTANTS.torr_per_picotorr, "pressure"),
}

_LINE = re.compile(r"^\s*([a-z][a-z0-9_]*)\s*=\s*(\S+)(?:\s+(\S+))?\s*$")


def parse_param_text(text: str) -> dict[str, float]:
    """Parse ``key = value [unit]`` lines into SI floats.

    ``#`` starts a comment.  A unit suffix scales the value to SI (lengths to
    m, masses to kg, pressures to Torr).  Keys are returned unchanged.
    """
    out: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _LINE.match(line)
        if m is None:
            raise UnitError(f"line {lineno}: expected 'key = value [unit]', got {raw.strip()!r}")
        key, value, unit = m.groups()
        try:
            v = float(value)
        except ValueError:
            raise UnitError(f"line {lineno}: {value!r} is not a number") from None
        if unit is not None:
            if unit not in _SUFFIXES:
                raise UnitError(f"line {lineno}: unknown unit {unit!r}; expected one of {list(_SUFFIXES)}")
            v *= _SUFFIXES[unit][0]
        if key in out:
            raise UnitError(f"line {lineno}: duplicate key {key!r}")
        out[key] = v
    return out


def load_param_file(path: str | Path) -> dict[str, float]:
    return parse_param_text(Path(path).read_text())
