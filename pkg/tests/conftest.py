import os
import subprocess
import sys
import warnings

import pytest

from cslwalk.analytic import PeakOverlapWarning
from cslwalk.params import ExperimentSetup, make_csl_params


@pytest.fixture
def design_setup():
    return ExperimentSetup()


@pytest.fixture
def design_params():
    # lambda*alpha = 1 with 1/sqrt(alpha) = 1 cm, 1e9 amu
    return make_csl_params(1e-4, 1e4, 1e9)


@pytest.fixture
def desk_setup():
    """Closely spaced traps (mu = 100 nm) used for the oracle comparisons."""
    return ExperimentSetup(mu=100e-9)


@pytest.fixture(autouse=True)
def _quiet_overlap():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PeakOverlapWarning)
        yield


def run_cli(*args, env=None, cwd=None):
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run([sys.executable, "-m", "cslwalk", *map(str, args)], capture_output=True, text=True,
                          env=full_env, cwd=cwd)


def run_python(code, env=None):
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=full_env)
