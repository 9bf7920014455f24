"""Correlated collapse-induced random walks of two free particles.

Submodules are imported on first attribute access so that the command-line
entry point can size the numba thread pool before numba loads.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("params", "analytic", "oracle", "montecarlo", "feasibility", "rng", "errors", "cli")

_EXPORTS = {
    "CslParams": "params",
    "ExperimentSetup": "params",
    "make_csl_params": "params",
    "joint_distribution": "analytic",
    "sigma2_csl": "analytic",
    "pdf": "analytic",
    "quadrature_propagate": "oracle",
    "moment_ode_evolve": "oracle",
    "pde_residual": "oracle",
    "sample_trials": "montecarlo",
    "estimate_variances": "montecarlo",
    "required_samples": "montecarlo",
    "detection_power": "montecarlo",
    "scan": "feasibility",
    "accessible_region": "feasibility",
}

__all__ = ["__version__", *_SUBMODULES, *_EXPORTS]


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
