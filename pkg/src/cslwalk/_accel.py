"""Kernel backend selection.

Hot loops are written twice: a numba ``@njit`` kernel and a vectorised numpy
fallback.  The backend is fixed at import time:

* ``CSLWALK_DISABLE_NUMBA=1`` forces the numpy path;
* the numpy path is also used when numba cannot be imported.
"""

from __future__ import annotations

import os

JIT_OPTIONS = {"nogil": True, "cache": True}
PARALLEL_JIT_OPTIONS = {**JIT_OPTIONS, "parallel": True}


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    if _env_flag("CSLWALK_DISABLE_NUMBA"):
        raise ImportError("numba disabled by CSLWALK_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    # the bundled TBB is too old on some systems and numba warns on every
    # parallel launch; prefer OpenMP, then the built-in workqueue
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

    USE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via subprocess tests
    numba = None
    USE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


BACKEND = "numba" if USE_NUMBA else "numpy"


def max_threads() -> int:
    if USE_NUMBA:
        return int(numba.config.NUMBA_NUM_THREADS)
    return 1


def set_threads(n: int | None) -> int:
    """Cap kernel worker threads at ``n`` (clamped to what numba was started with).

    Returns the number of threads actually in use.  Results never depend on it.
    """
    if not USE_NUMBA:
        return 1
    if n is None:
        n = max_threads()
    n = max(1, min(int(n), max_threads()))
    numba.set_num_threads(n)
    return n
