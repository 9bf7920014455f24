import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cslwalk.analytic import (
    HBAR,
    PeakOverlapWarning,
    PropagatorPoint,
    cm_rel_inverse,
    cm_rel_transform,
    evaluate_propagator,
    free_kernel,
    joint_distribution,
    kernel_damping,
    pdf,
    sigma2_csl,
    variance_terms,
)
from cslwalk.errors import ModelDomainError, ParameterDomainError
from cslwalk.params import ExperimentSetup, make_csl_params

# Frozen from an mpmath evaluation (40 digits) of the closed forms at
# sigma = 10 nm, t = 0.25 s, m = 1e9 amu, lambda*alpha = 1.
HAND = {
    "sigma2_X": 6.0818327516787833184e-17,
    "sigma2_rel": 5.031509691796469417e-17,
    "csl": 0.21006461197646278026,
    "dispersion": 0.0063019383592938834079,
    "sigma2_csl": 1.0503230598823139013e-17,
}


def _pairwise_damping(x1, y1, x2, y2, x1p, y1p, x2p, y2p, t, D):
    """Reference: explicit sum over every (x_i - y_j) pair minus same-side pairs."""
    def avg(q, qp):
        return q * q + q * qp + qp * qp

    cross = sum(avg(a - b, ap - bp) for a, ap in ((x1, x1p), (x2, x2p)) for b, bp in ((y1, y1p), (y2, y2p)))
    same = avg(x1 - x2, x1p - x2p) + avg(y1 - y2, y1p - y2p)
    return -D * t / (3 * HBAR**2) * (cross - same)


def _random_point(rng, n, scale, t=0.25):
    c = rng.normal(scale=scale, size=(8, n))
    return PropagatorPoint(*c, np.full(n, t))


# --- variances -------------------------------------------------------------------


def test_variances_match_hand_oracle(design_setup, design_params):
    jd = joint_distribution(design_setup, design_params)
    assert jd.sigma2_X == pytest.approx(HAND["sigma2_X"], rel=1e-10)
    assert jd.sigma2_rel == pytest.approx(HAND["sigma2_rel"], rel=1e-10)
    assert jd.terms.csl == pytest.approx(HAND["csl"], rel=1e-10)
    assert jd.terms.dispersion == pytest.approx(HAND["dispersion"], rel=1e-10)
    assert jd.terms.initial == 1.0


def test_sigma2_csl_value(design_setup, design_params):
    assert sigma2_csl(design_setup, design_params) == pytest.approx(HAND["sigma2_csl"], rel=1e-12)
    # mass independent: hbar^2 t^3 lambda alpha / (6 m0^2)
    for m in (1e6, 1e12):
        assert sigma2_csl(design_setup, make_csl_params(1e-4, 1e4, m)) == pytest.approx(HAND["sigma2_csl"], rel=1e-12)


def test_sigma2_csl_scaling(design_setup, design_params):
    assert sigma2_csl(design_setup, design_params.without_collapse()) == 0.0
    s2 = ExperimentSetup(t_flight=0.5)
    assert sigma2_csl(s2, design_params) == pytest.approx(8 * sigma2_csl(design_setup, design_params), rel=1e-14)


def test_zero_D_gives_equal_widths(design_setup, design_params):
    jd = joint_distribution(design_setup, design_params.without_collapse())
    assert jd.sigma2_X == jd.sigma2_rel


def test_short_time_limit(design_params):
    jd = joint_distribution(ExperimentSetup(t_flight=1e-12), design_params)
    assert jd.sigma2_X == pytest.approx(0.5e-16, rel=1e-12)
    assert jd.sigma2_rel == pytest.approx(0.5e-16, rel=1e-12)


setups = st.builds(
    ExperimentSetup,
    sigma=st.floats(1e-10, 1e-6),
    mu=st.just(1e-3),
    t_flight=st.floats(1e-3, 10.0),
)
csl = st.builds(make_csl_params, st.floats(0.0, 1e2), st.floats(1e-2, 1e4), st.floats(1e3, 1e12))


@settings(max_examples=300)
@given(setups, csl)
def test_difference_identity(s, p):
    jd = joint_distribution(s, p)
    # the subtraction loses digits relative to sigma_X^2, not to the difference
    assert abs(jd.sigma2_X - jd.sigma2_rel - sigma2_csl(s, p)) <= 1e-14 * jd.sigma2_X


@given(setups, csl, st.floats(1.01, 10.0))
def test_sigma_X_monotone_in_t_lambda_alpha(s, p, f):
    base = joint_distribution(s, p).sigma2_X
    longer = ExperimentSetup(sigma=s.sigma, mu=s.mu, t_flight=s.t_flight * f)
    assert joint_distribution(longer, p).sigma2_X >= base
    assert joint_distribution(s, make_csl_params(p.lam * f, p.alpha, p.mass_amu)).sigma2_X >= base * (1 - 1e-15)
    assert joint_distribution(s, make_csl_params(p.lam, p.alpha * f, p.mass_amu)).sigma2_X >= base * (1 - 1e-15)


@given(setups, csl, st.floats(1.01, 10.0))
def test_sigma_X_nonincreasing_in_mass(s, p, f):
    # the collapse term is mass independent and the dispersion term falls as 1/m^2
    base = joint_distribution(s, p).sigma2_X
    heavier = make_csl_params(p.lam, p.alpha, p.mass_amu * f)
    assert joint_distribution(s, heavier).sigma2_X <= base * (1 + 1e-15)


def test_localization_violation_raises(design_setup):
    with pytest.raises(ModelDomainError):
        joint_distribution(design_setup, make_csl_params(1e-16, 1e14, 1e9))


def test_overlap_warns_not_fails(design_params):
    with pytest.warns(PeakOverlapWarning):
        jd = joint_distribution(ExperimentSetup(mu=20e-9), design_params)
    assert not jd.validity_flag


# --- propagator ------------------------------------------------------------------


def test_propagator_equal_coordinates(design_params):
    for t in (1e-3, 0.25, 3.0):
        pt = PropagatorPoint(*([1.3e-7] * 8), t)
        expected = (design_params.mass / (2 * math.pi * HBAR * t)) ** 2
        assert evaluate_propagator(pt, design_params) == pytest.approx(expected, rel=1e-15)


def test_propagator_rejects_nonpositive_time(design_params):
    with pytest.raises(ParameterDomainError):
        PropagatorPoint(*([0.0] * 8), 0.0)


def test_zero_D_factorises(design_params):
    p0 = design_params.without_collapse()
    rng = np.random.default_rng(3)
    ell = math.sqrt(HBAR * 0.25 / p0.mass)
    pt = _random_point(rng, 100, 3 * ell)
    J = evaluate_propagator(pt, p0)
    m, t = p0.mass, 0.25
    ref = (free_kernel(pt.x1, pt.x1p, t, m) * np.conj(free_kernel(pt.y1, pt.y1p, t, m))
           * free_kernel(pt.x2, pt.x2p, t, m) * np.conj(free_kernel(pt.y2, pt.y2p, t, m)))
    assert np.max(np.abs(J - ref) / np.abs(ref)) < 1e-12


def test_damping_equals_pairwise_sum(design_params):
    rng = np.random.default_rng(4)
    pt = _random_point(rng, 200, 1e-7)
    fast = kernel_damping(*pt.final(), *pt.initial(), pt.t, design_params.D)
    ref = _pairwise_damping(*pt.final(), *pt.initial(), pt.t, design_params.D)
    assert np.allclose(fast, ref, rtol=1e-9, atol=1e-12 * np.max(np.abs(ref)))


def test_translation_invariance(design_params):
    rng = np.random.default_rng(5)
    pt = _random_point(rng, 100, 1e-10)
    a = evaluate_propagator(pt, design_params)
    b = evaluate_propagator(pt.shifted(1e-7), design_params)
    assert np.max(np.abs(a - b) / np.abs(a)) < 1e-12


def test_hermiticity_and_exchange(design_params):
    rng = np.random.default_rng(6)
    pt = _random_point(rng, 100, 1e-10)
    J = evaluate_propagator(pt, design_params)
    Jh = evaluate_propagator(pt.bra_ket_exchanged(), design_params)
    Js = evaluate_propagator(pt.swapped_particles(), design_params)
    assert np.max(np.abs(J - np.conj(Jh)) / np.abs(J)) < 1e-12
    assert np.max(np.abs(J - Js) / np.abs(J)) < 1e-12


def test_large_separation_underflows_to_zero(design_params):
    pt = PropagatorPoint(1e-3, -1e-3, 0.0, 0.0, 1e-3, -1e-3, 0.0, 0.0, 0.25)
    assert evaluate_propagator(pt, design_params) == 0


# --- pdf -------------------------------------------------------------------------


def test_pdf_even_in_xi(design_setup, design_params):
    jd = joint_distribution(design_setup, design_params)
    rng = np.random.default_rng(7)
    X = rng.normal(scale=jd.sigma_X, size=1000)
    xi = 2 * (rng.choice([-1, 1], 1000) * jd.mu + rng.normal(scale=jd.sigma_rel, size=1000))
    a, b = pdf(jd, X, xi), pdf(jd, X, -xi)
    assert np.max(np.abs(a - b) / a) <= 1e-15


def test_pdf_normalised(desk_setup, design_params):
    jd = joint_distribution(desk_setup, design_params)
    X = np.linspace(-8 * jd.sigma_X, 8 * jd.sigma_X, 801)
    total = 0.0
    for c in (1, -1):
        xi = 2 * np.linspace(c * jd.mu - 8 * jd.sigma_rel, c * jd.mu + 8 * jd.sigma_rel, 801)
        vals = pdf(jd, X[:, None], xi[None, :])
        total += np.trapezoid(np.trapezoid(vals, xi, axis=1), X)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_pdf_peak_height(design_setup, design_params):
    jd = joint_distribution(design_setup, design_params)
    peak = 1.0 / (8 * math.pi * jd.sigma_X * jd.sigma_rel)
    assert pdf(jd, 0.0, 2 * jd.mu) == pytest.approx(peak, rel=1e-12)


@given(st.floats(-1e-6, 1e-6), st.floats(-1e-6, 1e-6))
def test_pdf_nonnegative(X, xi):
    jd = joint_distribution(ExperimentSetup(mu=1e-7), make_csl_params(1e-4, 1e4, 1e9))
    assert pdf(jd, X, xi) >= 0.0


# --- coordinates -----------------------------------------------------------------


def test_cm_rel_examples():
    assert cm_rel_transform(1.0, 1.0) == (1.0, 0.0)
    assert cm_rel_transform(2.0, 0.0) == (1.0, 2.0)


def test_cm_rel_round_trip():
    rng = np.random.default_rng(8)
    x1, x2 = rng.normal(size=(2, 1000))
    y1, y2 = cm_rel_inverse(*cm_rel_transform(x1, x2))
    # exact in real arithmetic; floats can differ in the last couple of ulps
    assert np.all(np.abs(y1 - x1) <= 4 * np.spacing(np.maximum(np.abs(x1), np.abs(x2))))
    assert np.all(np.abs(y2 - x2) <= 4 * np.spacing(np.maximum(np.abs(x1), np.abs(x2))))


def test_variance_terms_are_exposed(design_setup, design_params):
    t = variance_terms(design_setup, design_params)
    half = design_setup.sigma**2 / 2
    assert half * (t.csl + t.dispersion + t.initial) == pytest.approx(HAND["sigma2_X"], rel=1e-12)
