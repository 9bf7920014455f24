"""Closed forms for two free particles under collapse-induced diffusion.

The density-matrix propagator, the post-flight joint position density of the
double-trap state and the spreads of its two peaks.  All functions accept
numpy arrays wherever a coordinate is expected.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterDomainError
from .params import CONSTANTS, CslParams, ExperimentSetup

__all__ = [
    "PropagatorPoint",
    "VarianceTerms",
    "JointDistribution",
    "PeakOverlapWarning",
    "kernel_phase",
    "kernel_damping",
    "evaluate_propagator",
    "free_kernel",
    "variance_terms",
    "joint_distribution",
    "pdf",
    "sigma2_csl",
    "cm_rel_transform",
    "cm_rel_inverse",
]

# exp() underflows to zero below this anyway; returning 0.0 keeps it explicit
UNDERFLOW_EXPONENT = -700.0


class PeakOverlapWarning(UserWarning):
    """The two mixture peaks are closer than 5 widths; the omitted interference term may matter."""


@dataclass(frozen=True)
class PropagatorPoint:
    """Final (x1, y1, x2, y2) and initial (primed) coordinates plus elapsed time."""

    x1: float
    y1: float
    x2: float
    y2: float
    x1p: float
    y1p: float
    x2p: float
    y2p: float
    t: float

    def __post_init__(self):
        if not np.all(np.asarray(self.t) > 0.0):
            raise ParameterDomainError("t", self.t, "propagator is singular at t <= 0")

    def final(self):
        return self.x1, self.y1, self.x2, self.y2

    def initial(self):
        return self.x1p, self.y1p, self.x2p, self.y2p

    def shifted(self, d: float) -> "PropagatorPoint":
        return PropagatorPoint(*(c + d for c in self.final() + self.initial()), self.t)

    def swapped_particles(self) -> "PropagatorPoint":
        return PropagatorPoint(self.x2, self.y2, self.x1, self.y1,
                               self.x2p, self.y2p, self.x1p, self.y1p, self.t)

    def bra_ket_exchanged(self) -> "PropagatorPoint":
        return PropagatorPoint(self.y1, self.x1, self.y2, self.x2,
                               self.y1p, self.x1p, self.y2p, self.x2p, self.t)


HBAR = CONSTANTS.hbar


# The two kernel factors below are plain arithmetic on purpose: they accept
# numpy arrays, complex coordinates, and compile unchanged under numba.
def kernel_phase(x1, y1, x2, y2, x1p, y1p, x2p, y2p, t, mass):
    """Free-evolution phase of the propagator (radians)."""
    a = mass / (2.0 * HBAR * t)
    return a * ((x1 - x1p) ** 2 - (y1 - y1p) ** 2 + (x2 - x2p) ** 2 - (y2 - y2p) ** 2)


def kernel_damping(x1, y1, x2, y2, x1p, y1p, x2p, y2p, t, D):
    """Collapse-induced log-amplitude of the propagator (<= 0 for real input).

    The pair sum over (x_i - y_j)^2 minus the same-side terms collapses to
    S^2 with S = (x1 - y1) + (x2 - y2), the summed ket-bra offsets.  S moves
    linearly from S' to S during the flight, so its time-averaged square is
    (S^2 + S S' + S'^2)/3.  Evaluating the collapsed form avoids cancelling
    terms of size (trap separation)^2.
    """
    c = D * t / (3.0 * HBAR * HBAR)
    s = (x1 - y1) + (x2 - y2)
    sp = (x1p - y1p) + (x2p - y2p)
    return -c * (s * s + s * sp + sp * sp)


def evaluate_propagator(pt: PropagatorPoint, p: CslParams):
    """Density-matrix propagator J at ``pt``; complex scalar or array."""
    t = np.asarray(pt.t, dtype=float)
    args = tuple(np.asarray(c, dtype=float) for c in pt.final() + pt.initial())
    pref = (p.mass / (2.0 * math.pi * HBAR * t)) ** 2
    phase = kernel_phase(*args, t, p.mass)
    damp = kernel_damping(*args, t, p.D)
    with np.errstate(under="ignore"):
        mag = np.where(damp < UNDERFLOW_EXPONENT, 0.0, pref * np.exp(np.maximum(damp, UNDERFLOW_EXPONENT)))
    out = mag * (np.cos(phase) + 1j * np.sin(phase))
    return out[()] if out.ndim == 0 else out


def free_kernel(x, xp, t, mass):
    """Single-particle free Schroedinger kernel K(x, t | xp, 0)."""
    pref = np.sqrt(mass / (2j * math.pi * HBAR * t))
    return pref * np.exp(1j * mass * (np.asarray(x) - xp) ** 2 / (2.0 * HBAR * t))


@dataclass(frozen=True)
class VarianceTerms:
    """The three bracket terms of a peak variance, each in units of sigma^2/2."""

    csl: float
    dispersion: float
    initial: float = 1.0


def variance_terms(setup: ExperimentSetup, p: CslParams) -> VarianceTerms:
    m, s, t = p.mass, setup.sigma, setup.t_flight
    csl = 4.0 * p.D * t**3 / (3.0 * m * m * s * s)
    dispersion = HBAR * HBAR * t * t / (4.0 * m * m * s**4)
    return VarianceTerms(csl=csl, dispersion=dispersion)


@dataclass(frozen=True)
class JointDistribution:
    """Two Gaussian peaks at (X=0, xi/2=+-mu) with widths sigma_X and sigma_rel."""

    mu: float
    sigma2_X: float
    sigma2_rel: float
    validity_flag: bool
    terms: VarianceTerms | None = None

    @property
    def sigma_X(self) -> float:
        return math.sqrt(self.sigma2_X)

    @property
    def sigma_rel(self) -> float:
        return math.sqrt(self.sigma2_rel)

    @property
    def sigma2_csl(self) -> float:
        return self.sigma2_X - self.sigma2_rel


def joint_distribution(setup: ExperimentSetup, p: CslParams) -> JointDistribution:
    setup.require_localization(p)
    terms = variance_terms(setup, p)
    half = 0.5 * setup.sigma**2
    s2x = half * (terms.csl + terms.dispersion + terms.initial)
    s2r = half * (terms.dispersion + terms.initial)
    ok = setup.mu >= 5.0 * math.sqrt(s2r)
    if not ok:
        warnings.warn(
            f"peaks at +-mu={setup.mu:.3g} m overlap (sigma_rel={math.sqrt(s2r):.3g} m); "
            "interference term is not modelled",
            PeakOverlapWarning,
            stacklevel=2,
        )
    return JointDistribution(mu=setup.mu, sigma2_X=s2x, sigma2_rel=s2r, validity_flag=ok, terms=terms)


def pdf(jd: JointDistribution, X, xi):
    """Joint density of centre-of-mass X and separation xi, per m^2."""
    X = np.asarray(X, dtype=float)
    half = 0.5 * np.asarray(xi, dtype=float)
    norm = 1.0 / (8.0 * math.pi * jd.sigma_X * jd.sigma_rel)
    gx = np.exp(-(X * X) / (2.0 * jd.sigma2_X))
    g_plus = np.exp(-((half - jd.mu) ** 2) / (2.0 * jd.sigma2_rel))
    g_minus = np.exp(-((half + jd.mu) ** 2) / (2.0 * jd.sigma2_rel))
    out = norm * gx * (g_plus + g_minus)
    return out[()] if out.ndim == 0 else out


def sigma2_csl(setup: ExperimentSetup, p: CslParams) -> float:
    """Collapse-induced excess variance of the centre of mass, 2 D t^3 / 3 m^2."""
    return 2.0 * p.D * setup.t_flight**3 / (3.0 * p.mass**2)


def cm_rel_transform(x1, x2):
    """(x1, x2) -> (X, xi) = ((x1 + x2)/2, x1 - x2)."""
    return 0.5 * (x1 + x2), x1 - x2


def cm_rel_inverse(X, xi):
    return X + 0.5 * xi, X - 0.5 * xi
