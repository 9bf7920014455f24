import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cslwalk.analytic import sigma2_csl
from cslwalk.errors import ParameterDomainError
from cslwalk.feasibility import (
    AccessibleRegion,
    SphereParams,
    accessible_region,
    collision_time,
    envelope,
    load_exclusion_csv,
    max_internal_temperature,
    max_internal_temperature_exact,
    max_pressure,
    max_pressure_chain,
    max_pressure_exact,
    parse_grid,
    points_in_polygon,
    region_to_csv,
    scan,
    scan_to_csv,
    sigma2_rad,
)
from cslwalk.montecarlo import required_samples, required_samples_bound
from cslwalk.params import ExperimentSetup, make_csl_params

# mpmath evaluation of 4e-43 * 1e3^-2 * 1e-7^-3 * 73^6 * 0.25^3
RAD_AT_73K = 9.4583891430625e-19
# mpmath root of sigma2_CSL(lambda alpha = 1) = 10 sigma2_RAD
T_EXACT_AT_1 = 74.286029629049182067


def _csl_over_10(la):
    return sigma2_csl(ExperimentSetup(), make_csl_params(la / 1e4, 1e4, 1e9)) / 10


def test_sphere_validation():
    for kw in ({"radius": 0.0}, {"density": -1.0}, {"internal_temperature": -1.0}):
        with pytest.raises(ParameterDomainError):
            SphereParams(**kw)


def test_sigma2_rad_values():
    assert sigma2_rad(SphereParams(internal_temperature=73.0), 0.25) == pytest.approx(RAD_AT_73K, rel=1e-14)
    assert sigma2_rad(SphereParams(internal_temperature=0.0), 0.25) == 0.0
    a = sigma2_rad(SphereParams(internal_temperature=40.0), 0.25)
    b = sigma2_rad(SphereParams(internal_temperature=80.0), 0.25)
    assert b == pytest.approx(64 * a, rel=1e-14)


def test_temperature_bound():
    assert max_internal_temperature(1.0) == 73.0
    assert max_internal_temperature(1e-2) == pytest.approx(33.88, abs=0.01)
    assert max_internal_temperature(2.0**6) == pytest.approx(146.0, rel=1e-14)
    with pytest.raises(ParameterDomainError):
        max_internal_temperature(0.0)


def test_exact_temperature_bound():
    assert max_internal_temperature_exact(1.0) == pytest.approx(T_EXACT_AT_1, rel=1e-12)


@given(st.floats(1e-4, 1e4))
def test_exact_temperature_closes(la):
    s = SphereParams(internal_temperature=max_internal_temperature_exact(la))
    assert sigma2_rad(s, 0.25) == pytest.approx(_csl_over_10(la), rel=1e-10)


@given(st.floats(1e-3, 1.0))
def test_exact_temperature_independent_of_time(t):
    assert max_internal_temperature_exact(1.0, t=t) == pytest.approx(T_EXACT_AT_1, rel=1e-12)


def test_collision_time_examples():
    assert collision_time(1.0) == 2.0
    assert collision_time(2.0) == 1.0
    assert collision_time(1.0, 4.0) == 4.0
    with pytest.raises(ParameterDomainError):
        collision_time(0.0)


def test_pressure_bound_examples():
    assert max_pressure(1.0) == pytest.approx(0.8 / 24201 * 1e-12, rel=1e-14)
    assert max_pressure(1.0) == pytest.approx(3.3e-17, rel=0.02)
    assert max_pressure(1e12) == pytest.approx(0.8 / 201 * 1e-12, rel=1e-6)
    small = 1e-3
    assert max_pressure(small) / max_pressure(small / 2) == pytest.approx(4.0, rel=0.01)
    with pytest.raises(ParameterDomainError):
        max_pressure(-1.0)


@given(st.floats(1e-4, 1e4))
def test_collision_chain_closes(la):
    tau = collision_time(max_pressure(la) * 1e12)
    need = 10 * required_samples(la) * 0.25
    # ceil() on n makes the rounded chain agree to within one trial
    assert tau == pytest.approx(need, rel=1.0 / required_samples(la) + 1e-12)


def test_exact_pressure_chain():
    n = 22266
    assert max_pressure_exact(1.0) == pytest.approx(max_pressure_chain(n), rel=1e-15)
    assert collision_time(max_pressure_exact(1.0) * 1e12) == pytest.approx(10 * n * 0.25, rel=1e-12)


def test_scan_headline_triple():
    (e,) = scan([1.0])
    assert (e.n_min, e.t_i_max) == (24201, 73.0)
    assert e.p_max == pytest.approx(3.3e-17, rel=0.02)


def test_scan_grw_product():
    (e,) = scan([1e-2])
    assert e.n_min == 200_400_201
    assert e.t_i_max == pytest.approx(33.9, abs=0.05)
    assert e.p_max == pytest.approx(0.8 / 200_400_201 * 1e-12, rel=1e-14)


def test_scan_monotone_and_smooth():
    grid = np.logspace(-4, 4, 161)
    rows = scan(grid)
    n = np.array([r.n_min for r in rows], dtype=float)
    T = np.array([r.t_i_max for r in rows])
    P = np.array([r.p_max for r in rows])
    # the integer count plateaus near its limit of 202 once lambda*alpha >~ 1e3; the bound itself keeps falling
    assert np.all(np.diff(n) <= 0) and np.all(np.diff(T) > 0) and np.all(np.diff(P) > 0)
    assert np.all(np.diff([required_samples_bound(v) for v in grid]) < 0)
    # no jumps: neighbouring log-spaced points differ by a bounded factor
    for v in (n, T, P):
        assert np.max(np.abs(np.diff(np.log(v)))) < 0.25


def test_scan_rejects_unsorted():
    with pytest.raises(ParameterDomainError):
        scan([2.0, 1.0])


def test_envelope_invariants():
    for la in (1e-3, 1.0, 1e3):
        e = envelope(la)
        assert e.n_min == required_samples(la)
        assert min(e.n_min, e.t_i_max, e.p_max) > 0


def test_scan_csv():
    text = scan_to_csv(scan([1.0, 10.0]))
    lines = text.splitlines()
    assert lines[0] == "lambda_alpha,n_min,t_i_max_K,p_max_torr"
    assert lines[1].split(",")[:3] == ["1.0", "24201", "73.0"]


def test_parse_grid():
    g = parse_grid("1e-2:1e2:25log")
    assert g.size == 25 and g[0] == pytest.approx(1e-2) and g[-1] == pytest.approx(1e2)
    assert np.allclose(parse_grid("1:3:3lin"), [1, 2, 3])
    assert np.allclose(parse_grid("1:100:3"), [1, 10, 100])
    for bad in ("1:2", "a:b:3", "0:1:3log", "1:2:0"):
        with pytest.raises(ParameterDomainError):
            parse_grid(bad)


def test_region_examples():
    r = accessible_region()
    assert r.contains(1e-4, 1e4)
    assert not r.contains(1e-16, 1e14)
    assert not r.contains(1.0, 1e-2)
    assert r.contains(1e2, 1e-2)
    with pytest.raises(ParameterDomainError):
        accessible_region(0.0, 1.0)


def test_region_boundary_polyline():
    b = AccessibleRegion().boundary((-20, 4), (-4, 20))
    # diagonal lambda*alpha = 1 up to alpha = 1e4, then horizontal to the window edge
    assert np.allclose(b, [[4, -4], [-4, 4], [4, 4]])
    assert np.allclose(b[:2].sum(axis=1), 0.0)


def test_region_grid_and_overlay(tmp_path):
    poly_file = tmp_path / "excl.csv"
    poly_file.write_text("log10_lambda,log10_alpha\n-10,0\n0,0\n0,5\n-10,5\n")
    poly = load_exclusion_csv(poly_file)
    rows = AccessibleRegion().grid_rows(np.array([-8.0, -4.0]), np.array([2.0, 4.0, 6.0]), exclusion=poly)
    text = region_to_csv(rows, with_exclusion=True).splitlines()
    assert text[0] == "log10_lambda,log10_alpha,inside,excluded"
    assert "-4.0,4.0,1,1" in text
    assert "-8.0,6.0,0,0" in text


def test_points_in_polygon():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert points_in_polygon([0.5, 2.0, -0.1], [0.5, 0.5, 0.5], sq).tolist() == [True, False, False]
    with pytest.raises(ParameterDomainError):
        points_in_polygon([0.0], [0.0], [(0, 0), (1, 1)])
