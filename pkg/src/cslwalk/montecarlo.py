"""Virtual drop-and-measure experiment.

Each trial releases the two particles, draws their landing positions from
one of the two peaks of the joint density and adds independent Gaussian
detector error to each coordinate.  Repeating ``n`` trials gives the sample
variances whose difference is the collapse signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from ._accel import PARALLEL_JIT_OPTIONS, USE_NUMBA, njit, prange
from ._files import atomic_write_text
from .analytic import JointDistribution, joint_distribution, sigma2_csl
from .errors import InsufficientDataError, ParameterDomainError
from .params import DEFAULT_ALPHA, CslParams, ExperimentSetup, make_csl_params
from .rng import _ndtri_scalar, _uniform_scalar, ndtri, stream_key, uniform

__all__ = [
    "TrialRecord",
    "TrialSet",
    "VarianceEstimate",
    "ExperimentBatch",
    "PowerResult",
    "sample_trials",
    "estimate_variances",
    "simulate_experiments",
    "var_of_s2X",
    "required_samples",
    "required_samples_exact",
    "detection_power",
    "TRIAL_CSV_HEADER",
]

# counters per trial: component, X, xi/2, error on x1, error on x2
STRIDE = 5
_STRIDE_U = np.uint64(STRIDE)

TRIAL_CSV_HEADER = "trial,component,x1_m,x2_m,X_m,xi_m"

# stream ids under one seed
_STREAM_SIGNAL = 0
_STREAM_NULL = 1


class TrialRecord(NamedTuple):
    trial: int
    component: int  # +1 for the peak at xi/2 = +mu, -1 for -mu
    x1_meas: float
    x2_meas: float
    X_meas: float
    xi_meas: float


@dataclass(frozen=True)
class TrialSet:
    """Measured positions for a run of trials, stored as arrays."""

    x1: np.ndarray
    x2: np.ndarray
    component: np.ndarray
    mu: float
    start: int = 0

    def __len__(self) -> int:
        return self.x1.size

    @property
    def X(self) -> np.ndarray:
        return 0.5 * (self.x1 + self.x2)

    @property
    def xi(self) -> np.ndarray:
        return self.x1 - self.x2

    def records(self) -> Iterator[TrialRecord]:
        X, xi = self.X, self.xi
        for i in range(len(self)):
            yield TrialRecord(self.start + i, int(self.component[i]), float(self.x1[i]), float(self.x2[i]),
                              float(X[i]), float(xi[i]))

    def to_csv_text(self) -> str:
        X, xi = self.X.tolist(), self.xi.tolist()
        x1, x2, comp = self.x1.tolist(), self.x2.tolist(), self.component.tolist()
        # repr() of a float is the shortest string that round-trips
        lines = [TRIAL_CSV_HEADER]
        lines.extend(
            f"{self.start + i},{comp[i]},{x1[i]!r},{x2[i]!r},{X[i]!r},{xi[i]!r}" for i in range(len(x1))
        )
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv_text())


@njit(**PARALLEL_JIT_OPTIONS)
def _sample_numba(key, start, n, sx, sr, mu, serr):
    x1 = np.empty(n)
    x2 = np.empty(n)
    comp = np.empty(n, dtype=np.int8)
    for i in prange(n):
        base = (start + np.uint64(i)) * _STRIDE_U
        c = 1 if _uniform_scalar(key, base) < 0.5 else -1
        X = sx * _ndtri_scalar(_uniform_scalar(key, base + np.uint64(1)))
        r = c * mu + sr * _ndtri_scalar(_uniform_scalar(key, base + np.uint64(2)))
        e1 = serr * _ndtri_scalar(_uniform_scalar(key, base + np.uint64(3)))
        e2 = serr * _ndtri_scalar(_uniform_scalar(key, base + np.uint64(4)))
        x1[i] = (X + r) + e1
        x2[i] = (X - r) + e2
        comp[i] = c
    return x1, x2, comp


def _sample_numpy(key, start, n, sx, sr, mu, serr):
    base = (np.uint64(start) + np.arange(n, dtype=np.uint64)) * _STRIDE_U
    comp = np.where(uniform(key, base) < 0.5, 1, -1).astype(np.int8)
    X = sx * ndtri(uniform(key, base + np.uint64(1)))
    r = comp * mu + sr * ndtri(uniform(key, base + np.uint64(2)))
    e1 = serr * ndtri(uniform(key, base + np.uint64(3)))
    e2 = serr * ndtri(uniform(key, base + np.uint64(4)))
    return (X + r) + e1, (X - r) + e2, comp


def _draw(key: int, start: int, n: int, jd: JointDistribution, serr: float):
    if USE_NUMBA:
        return _sample_numba(np.uint64(key), np.uint64(start), n, jd.sigma_X, jd.sigma_rel, jd.mu, serr)
    return _sample_numpy(key, start, n, jd.sigma_X, jd.sigma_rel, jd.mu, serr)


def sample_trials(setup: ExperimentSetup, p: CslParams, seed: int, n: int, *, start: int = 0,
                  stream: int = _STREAM_SIGNAL) -> TrialSet:
    """Draw ``n`` noisy trials; trial ``i`` depends only on (seed, stream, start + i)."""
    if n < 1:
        raise InsufficientDataError(f"need at least one trial, got n={n}")
    jd = joint_distribution(setup, p)
    x1, x2, comp = _draw(stream_key(seed, stream), start, n, jd, setup.sigma_err)
    return TrialSet(x1=x1, x2=x2, component=comp, mu=setup.mu, start=start)


@dataclass(frozen=True)
class VarianceEstimate:
    s2_X: float
    s2_rel: float
    n: int

    @property
    def s2_diff(self) -> float:
        return self.s2_X - self.s2_rel


def _sample_vars(x1, x2, comp, mu, axis=-1):
    X = 0.5 * (x1 + x2)
    rel = 0.5 * (x1 - x2) - comp * mu
    return np.var(X, axis=axis, ddof=1), np.var(rel, axis=axis, ddof=1)


def estimate_variances(trials: TrialSet) -> VarianceEstimate:
    """Unbiased sample variances of X and of xi/2 about the realised peak centre."""
    n = len(trials)
    if n < 2:
        raise InsufficientDataError(f"need at least two trials for a sample variance, got {n}")
    s2x, s2r = _sample_vars(trials.x1, trials.x2, trials.component, trials.mu)
    return VarianceEstimate(s2_X=float(s2x), s2_rel=float(s2r), n=n)


@dataclass(frozen=True)
class ExperimentBatch:
    """Per-experiment variance estimates for repeated runs of ``n`` trials."""

    s2_X: np.ndarray
    s2_rel: np.ndarray
    n: int

    @property
    def s2_diff(self) -> np.ndarray:
        return self.s2_X - self.s2_rel

    def __len__(self) -> int:
        return self.s2_X.size


def simulate_experiments(setup: ExperimentSetup, p: CslParams, seed: int, n: int, repetitions: int,
                         *, stream: int = _STREAM_SIGNAL, chunk_trials: int = 2_000_000) -> ExperimentBatch:
    """Run ``repetitions`` independent experiments of ``n`` trials each.

    Experiment ``r`` uses trials ``[r n, (r + 1) n)`` of the stream.
    """
    if n < 2:
        raise InsufficientDataError(f"need at least two trials per experiment, got n={n}")
    if repetitions < 1:
        raise ParameterDomainError("repetitions", repetitions, "must be >= 1")
    jd = joint_distribution(setup, p)
    key = stream_key(seed, stream)
    per_chunk = max(1, chunk_trials // n)
    s2x = np.empty(repetitions)
    s2r = np.empty(repetitions)
    for r0 in range(0, repetitions, per_chunk):
        r1 = min(repetitions, r0 + per_chunk)
        x1, x2, comp = _draw(key, r0 * n, (r1 - r0) * n, jd, setup.sigma_err)
        shape = (r1 - r0, n)
        s2x[r0:r1], s2r[r0:r1] = _sample_vars(x1.reshape(shape), x2.reshape(shape), comp.reshape(shape), jd.mu)
    return ExperimentBatch(s2_X=s2x, s2_rel=s2r, n=n)


def var_of_s2X(setup: ExperimentSetup, p: CslParams) -> float:
    """Variance of the unbiased estimator s2_X over ``setup.n_samples`` noisy trials."""
    jd = joint_distribution(setup, p)
    n = setup.n_samples
    return 2.0 * (jd.sigma2_X + 0.5 * setup.sigma_err**2) ** 2 / (n - 1)


def _check_lambda_alpha(lambda_alpha: float) -> float:
    la = float(lambda_alpha)
    if not (math.isfinite(la) or la == math.inf) or not la > 0.0:
        raise ParameterDomainError("lambda_alpha", lambda_alpha, "must be > 0")
    return la


def required_samples_bound(lambda_alpha: float) -> float:
    """Right-hand side of the sample-count bound, 2 (100/(lambda alpha) + 10)^2 + 1."""
    la = _check_lambda_alpha(lambda_alpha)
    return 2.0 * (100.0 / la + 10.0) ** 2 + 1.0


def required_samples(lambda_alpha: float) -> int:
    """Sample count from the rounded closed-form bound (paper's fixed setup)."""
    return int(math.ceil(required_samples_bound(lambda_alpha)))


def required_samples_exact(lambda_alpha: float, setup: ExperimentSetup | None = None, mass_amu: float = 1e9,
                           margin: float = 10.0) -> int:
    """Smallest n with sqrt(Var[s2_X]) <= sigma2_CSL / margin, from the full variances."""
    la = _check_lambda_alpha(lambda_alpha)
    setup = setup or ExperimentSetup()
    p = make_csl_params(la / DEFAULT_ALPHA, DEFAULT_ALPHA, mass_amu)
    jd = joint_distribution(setup, p)
    ratio = (jd.sigma2_X + 0.5 * setup.sigma_err**2) / sigma2_csl(setup, p)
    return int(math.ceil(1.0 + 2.0 * margin * margin * ratio * ratio))


@dataclass(frozen=True)
class PowerResult:
    n: int
    repetitions: int
    n_sigma: float
    threshold: float  # m^2, on s2_X - s2_rel
    detection_rate: float
    false_positive_rate: float
    mean_s2_diff: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def null_spread(setup: ExperimentSetup, p: CslParams, n: int) -> float:
    """Standard deviation of s2_X - s2_rel when there is no collapse.

    X and xi/2 are independent (their detector errors are (e1 +- e2)/2), so
    the two estimator variances add.
    """
    jd0 = joint_distribution(setup, p.without_collapse())
    v = 2.0 * (jd0.sigma2_rel + 0.5 * setup.sigma_err**2) ** 2 / (n - 1)
    return math.sqrt(2.0 * v)


def detection_power(setup: ExperimentSetup, p: CslParams, n: int, repetitions: int, seed: int,
                    n_sigma: float = 5.0) -> PowerResult:
    """Fraction of simulated experiments whose s2_X - s2_rel clears ``n_sigma`` null spreads.

    The same threshold is applied to a run with the collapse switched off,
    giving the false-positive rate.
    """
    if n < 2:
        raise InsufficientDataError(f"need at least two trials per experiment, got n={n}")
    thr = n_sigma * null_spread(setup, p, n)
    sig = simulate_experiments(setup, p, seed, n, repetitions, stream=_STREAM_SIGNAL)
    null = simulate_experiments(setup, p.without_collapse(), seed, n, repetitions, stream=_STREAM_NULL)
    return PowerResult(
        n=n,
        repetitions=repetitions,
        n_sigma=n_sigma,
        threshold=thr,
        detection_rate=float(np.mean(sig.s2_diff > thr)),
        false_positive_rate=float(np.mean(null.s2_diff > thr)),
        mean_s2_diff=float(np.mean(sig.s2_diff)),
    )
