import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cslwalk.errors import ModelDomainError, ParameterDomainError, UnitError
from cslwalk.params import (
    CONSTANTS,
    CslParams,
    ExperimentSetup,
    convert_length,
    convert_pressure,
    lambda_alpha_product,
    load_param_file,
    make_csl_params,
    parse_param_text,
)

# hbar^2 lambda alpha / 4 (m/m0)^2 evaluated with mpmath at 40 digits
D_GRW_1E9 = 2.7803042930267037225e-53


def test_pinned_constants():
    assert CONSTANTS.hbar == 1.054571817e-34
    assert CONSTANTS.amu == 1.66053907e-27
    assert CONSTANTS.T0 == 300.0
    assert CONSTANTS.torr_per_picotorr == 1e-12


def test_D_at_grw_values():
    p = make_csl_params(1e-16, 1e14, 1e9)
    assert p.D == pytest.approx(D_GRW_1E9, rel=1e-15)


def test_D_unit_mass():
    p = make_csl_params(1e-16, 1e14, 1.0)
    assert p.D == pytest.approx(CONSTANTS.hbar**2 * 1e-2 / 4.0, rel=1e-15)


def test_D_zero_rate():
    assert make_csl_params(0.0, 1e14, 1e9).D == 0.0


@pytest.mark.parametrize(
    "lam,alpha,mass,field",
    [
        (-1.0, 1.0, 1.0, "lambda"),
        (1.0, 0.0, 1.0, "alpha"),
        (1.0, 1.0, 0.0, "mass_amu"),
        (math.nan, 1.0, 1.0, "lambda"),
        (1.0, math.inf, 1.0, "alpha"),
    ],
)
def test_make_csl_params_rejects(lam, alpha, mass, field):
    with pytest.raises(ParameterDomainError) as exc:
        make_csl_params(lam, alpha, mass)
    assert exc.value.field == field
    assert exc.value.exit_code == 3


def test_lambda_alpha_product():
    assert lambda_alpha_product(make_csl_params(1e-16, 1e14, 1.0)) == pytest.approx(1e-2, rel=1e-15)
    assert lambda_alpha_product(make_csl_params(0.0, 123.0, 1.0)) == 0.0
    assert lambda_alpha_product(make_csl_params(1e-4, 1e4, 1.0)) == 1.0


@given(st.floats(1e-30, 1e10), st.floats(1e-10, 1e20), st.floats(1e-3, 1e15))
def test_D_quadratic_in_mass(lam, alpha, m):
    a = make_csl_params(lam, alpha, m).D
    b = make_csl_params(lam, alpha, 2 * m).D
    assert b == pytest.approx(4 * a, rel=1e-14)


@given(st.floats(1e-30, 1e10), st.floats(1e-10, 1e20), st.floats(1e-3, 1e3))
def test_D_linear_in_rate(lam, alpha, c):
    a = make_csl_params(lam, alpha, 1e9).D
    b = make_csl_params(c * lam, alpha, 1e9).D
    assert b == pytest.approx(c * a, rel=1e-14)


def test_D_recomputed_not_stored():
    p = make_csl_params(1e-4, 1e4, 1e9)
    q = p.with_lambda_alpha(2.0)
    assert q.D == pytest.approx(2 * p.D, rel=1e-15)
    assert p.without_collapse().D == 0.0


def test_convert_pressure_examples():
    assert convert_pressure(3.3e-5, "picoTorr", "Torr") == pytest.approx(3.3e-17, rel=1e-15)
    assert convert_pressure(1.0, "Torr", "Torr") == 1.0
    assert convert_pressure(1.0, "Torr", "Pa") == pytest.approx(133.322, rel=1e-15)


def test_convert_pressure_unknown_unit():
    with pytest.raises(UnitError):
        convert_pressure(1.0, "bar", "Torr")


@given(st.floats(1e-30, 1e30), st.sampled_from(["Torr", "picoTorr", "Pa"]), st.sampled_from(["Torr", "picoTorr", "Pa"]))
def test_pressure_round_trip(v, a, b):
    assert convert_pressure(convert_pressure(v, a, b), b, a) == pytest.approx(v, rel=1e-15)


def test_convert_length():
    assert convert_length(10.0, "nm") == pytest.approx(1e-8, rel=1e-15)
    assert convert_length(1.0, "cm", "mm") == pytest.approx(10.0, rel=1e-15)


def test_setup_defaults_are_design_point():
    s = ExperimentSetup()
    assert (s.sigma, s.t_flight, s.sigma_err, s.n_samples) == (10e-9, 0.25, 10e-9, 24201)


@pytest.mark.parametrize("kw", [{"sigma": 0.0}, {"mu": -1.0}, {"t_flight": 0.0}, {"sigma_err": -1e-9},
                                {"n_samples": 1}, {"n_samples": 2.5}, {"sigma": math.nan}])
def test_setup_rejects(kw):
    with pytest.raises(ParameterDomainError):
        ExperimentSetup(**kw)


def test_localization_flags():
    s = ExperimentSetup(mu=0.5e-3)
    ok = make_csl_params(1e-4, 1e4, 1e9)  # 1 cm = 10 x separation
    assert s.localization_valid(ok)
    marginal = make_csl_params(1e-4, 1e5, 1e9)  # 3.2 mm: flagged, still allowed
    assert not s.localization_valid(marginal)
    s.require_localization(marginal)
    bad = make_csl_params(1e-16, 1e14, 1e9)  # 100 nm < 1 mm
    with pytest.raises(ModelDomainError):
        s.require_localization(bad)


def test_param_file_grammar(tmp_path):
    text = """
    # design point
    sigma = 10 nm
    t_flight = 0.25 s   # free fall
    mass = 1e9 amu
    pressure = 33 pTorr
    alpha = 1e4
    """
    vals = parse_param_text(text)
    assert vals["sigma"] == pytest.approx(1e-8)
    assert vals["t_flight"] == 0.25
    assert vals["mass"] == pytest.approx(1e9 * CONSTANTS.amu)
    assert vals["pressure"] == pytest.approx(3.3e-11)
    assert vals["alpha"] == 1e4
    f = tmp_path / "p.txt"
    f.write_text(text)
    assert load_param_file(f) == vals


@pytest.mark.parametrize("bad", ["sigma 10", "sigma = ten", "sigma = 1 furlong", "a = 1\na = 2"])
def test_param_file_errors(bad):
    with pytest.raises(UnitError):
        parse_param_text(bad)


def test_params_are_immutable():
    p = make_csl_params(1e-4, 1e4, 1e9)
    with pytest.raises(AttributeError):
        p.lam = 1.0
    assert isinstance(p, CslParams)
