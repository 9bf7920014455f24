"""Counter-based random numbers.

Every variate is a pure function of ``(key, counter)``: the SplitMix64 output
function applied to ``key + (counter + 1) * GOLDEN``.  When item ``i`` of a
job owns counters ``[i * k, (i + 1) * k)``, any partition of the items over
threads reproduces the same numbers.  Normals come from the
inverse CDF (Wichura's AS 241, ~1e-16 relative) rather than rejection, which
keeps the draw count per trial fixed.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = ["MASK64", "GOLDEN", "mix64", "stream_key", "uniform", "uniform_jit", "normal", "ndtri"]

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TWO_M53 = 2.0**-53


def mix64(z: int) -> int:
    """SplitMix64 finaliser on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int = 0) -> int:
    """Independent 64-bit key for (seed, stream); streams split one seed."""
    return mix64(mix64(seed & MASK64) ^ ((stream * GOLDEN) & MASK64))


# --- inverse normal CDF (AS 241, PPND16) -----------------------------------

_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3, 1.3731693765509461125e4,
      4.5921953931549871457e4, 6.7265770927008700853e4, 3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4, 5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0, 3.64784832476320460504e0,
      1.27045825245236838258e0, 2.41780725177450611770e-1, 2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4, 1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0, 2.96560571828504891230e-1,
      2.65321895265761230930e-2, 1.24266094738807843860e-3, 2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7, 2.04426310338993978564e-15)

A_ = np.array(_A)
B_ = np.array(_B)
C_ = np.array(_C)
D_ = np.array(_D)
E_ = np.array(_E)
F_ = np.array(_F)


@njit(cache=True)
def _horner(c, x):
    acc = c[7]
    for k in range(6, -1, -1):
        acc = acc * x + c[k]
    return acc


@njit(cache=True)
def _ndtri_scalar(p):
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _horner(A_, r) / _horner(B_, r)
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _horner(C_, r) / _horner(D_, r)
    else:
        r -= 5.0
        val = _horner(E_, r) / _horner(F_, r)
    return -val if q < 0.0 else val


def _horner_np(c, x):
    acc = np.full_like(x, c[7])
    for k in range(6, -1, -1):
        acc = acc * x + c[k]
    return acc


def ndtri(p):
    """Inverse standard normal CDF for p in (0, 1), vectorised numpy path."""
    p = np.asarray(p, dtype=float)
    shape = p.shape
    p = p.reshape(-1)
    q = p - 0.5
    central = np.abs(q) <= 0.425
    r = 0.180625 - q * q
    out = q * _horner_np(_A, r) / _horner_np(_B, r)
    tail = ~central
    if np.any(tail):
        pt = np.where(q[tail] < 0.0, p[tail], 1.0 - p[tail])
        s = np.sqrt(-np.log(pt))
        near = s <= 5.0
        v = np.where(
            near,
            _horner_np(_C, s - 1.6) / _horner_np(_D, s - 1.6),
            _horner_np(_E, s - 5.0) / _horner_np(_F, s - 5.0),
        )
        out[tail] = np.where(q[tail] < 0.0, -v, v)
    out = out.reshape(shape)
    return out[()] if out.ndim == 0 else out


# --- uniforms ------------------------------------------------------------------

_U30, _U27, _U31, _U11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
_GOLDEN_U = np.uint64(GOLDEN)
_M1_U = np.uint64(_M1)
_M2_U = np.uint64(_M2)
_ONE_U = np.uint64(1)


@njit(cache=True)
def _uniform_scalar(key, counter):
    z = key + (counter + _ONE_U) * _GOLDEN_U
    z = (z ^ (z >> _U30)) * _M1_U
    z = (z ^ (z >> _U27)) * _M2_U
    z = z ^ (z >> _U31)
    return (float(z >> _U11) + 0.5) * _TWO_M53


def uniform(key: int, counters) -> np.ndarray:
    """Uniforms in (0, 1) for an array of counters (numpy path)."""
    c = np.asarray(counters, dtype=np.uint64)
    z = np.uint64(key) + (c + _ONE_U) * _GOLDEN_U
    z = (z ^ (z >> _U30)) * _M1_U
    z = (z ^ (z >> _U27)) * _M2_U
    z = z ^ (z >> _U31)
    return ((z >> _U11).astype(np.float64) + 0.5) * _TWO_M53


def normal(key: int, counters) -> np.ndarray:
    return ndtri(uniform(key, counters))


@njit(cache=True)
def _uniform_block_numba(key, start, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = _uniform_scalar(key, start + np.uint64(i))
    return out


def uniform_jit(key: int, start: int, n: int) -> np.ndarray:
    """Uniforms for counters start..start+n-1 through the compiled path."""
    if not USE_NUMBA:
        return uniform(key, np.arange(start, start + n, dtype=np.uint64))
    return _uniform_block_numba(np.uint64(key), np.uint64(start), n)
