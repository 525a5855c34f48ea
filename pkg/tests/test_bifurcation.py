import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from memodiff.bifurcation import (
    REGION_I,
    REGION_II,
    REGION_III,
    classify_region,
    compute_r,
    critical_D,
    hopf_quantities,
    r_parts,
)
from memodiff.errors import DegenerateProfile, HypothesisViolated, OutOfRange
from memodiff.expr import sample_profile
from memodiff.grid import make_grid
from oracles import constant_dirichlet_raw


@pytest.fixture(scope="module")
def cubic():
    g = make_grid(n=401)
    return g, sample_profile("-x^3+5", g)


@pytest.fixture(scope="module")
def flat_dirichlet():
    g = make_grid(n=401, bc="dirichlet")
    return g, sample_profile("4", g)


@pytest.mark.xfail(strict=True, reason="unit-L2 eigenfunction gives r1=0.0360, r2/D=-0.0542; see decisions ledger")
def test_cubic_r_values_unit_l2(cubic):
    g, m = cubic
    r1, r2 = compute_r(g, m, 1.0, "unit-l2")
    assert r1 == pytest.approx(0.0755, abs=1e-3)
    assert r2 == pytest.approx(-0.1100, abs=1e-3)


@pytest.mark.xfail(strict=True, reason="grid-converged Dbar is 0.6648 in every normalization; see decisions ledger")
def test_cubic_critical_D(cubic):
    assert critical_D(*cubic) == pytest.approx(0.6864, abs=2e-3)


def test_cubic_values_frozen(cubic):
    # grid-converged values at n=401, checked against n=801 to 1e-5
    g, m = cubic
    r1, r2 = compute_r(g, m, 1.0, "unit-l2")
    assert r1 == pytest.approx(0.03602, abs=1e-4)
    assert r2 == pytest.approx(-0.05419, abs=1e-4)
    r1, r2 = compute_r(g, m, 1.0, "raw")
    assert r1 == pytest.approx(0.0755, abs=1e-3)
    assert critical_D(g, m) == pytest.approx(0.6648, abs=1e-3)


def test_dirichlet_constant_profile_values(flat_dirichlet):
    g, m = flat_dirichlet
    lam_star, r1_ref, r2_ref, dbar_ref = constant_dirichlet_raw(4.0, 0.7)
    r1, r2 = compute_r(g, m, 0.7, "raw")
    assert r1 == pytest.approx(1 / 3, abs=1e-3) and r1 == pytest.approx(r1_ref, abs=1e-3)
    assert r2 == pytest.approx(-7 / 15, abs=1e-3) and r2 == pytest.approx(r2_ref, abs=1e-3)
    assert r1 - r2 == pytest.approx(4 / 5, abs=1e-3)
    assert r1 + r2 == pytest.approx(-2 / 15, abs=1e-3)
    assert critical_D(g, m, "raw") == pytest.approx(0.5, abs=1e-3)


def test_zero_memory_rate(cubic):
    assert compute_r(*cubic, 0.0)[1] == 0.0


def test_critical_D_matches_root_find():
    g = make_grid(n=201)
    for src in ("-x^3+5", "2*(-x^3+5)"):
        m = sample_profile(src, g)
        r1 = compute_r(g, m, 0.0)[0]
        root = brentq(lambda D: r1 + compute_r(g, m, D)[1], 0.0, 10.0, xtol=1e-14)
        assert critical_D(g, m) == pytest.approx(root, abs=1e-8)


def test_critical_D_degenerate():
    g = make_grid(n=101)
    with pytest.raises(DegenerateProfile):
        critical_D(g, sample_profile("sin(x)+1", g))


def test_hopf_dirichlet(flat_dirichlet):
    g, m = flat_dirichlet
    h = hopf_quantities(g, m, 0.7, 0.35, "raw")
    assert h.region == REGION_II
    assert h.theta_star == pytest.approx(math.acos(-5 / 7), abs=1e-3)
    assert h.theta_star == pytest.approx(2.3664, abs=1e-3)
    assert h.h_star == pytest.approx(4 / math.sqrt(6), abs=1e-3)
    assert h.omega == pytest.approx(0.16330, abs=1e-4)
    assert h.tau_list[0] == pytest.approx(14.49, abs=0.01)


def test_hopf_cubic_regions(cubic):
    g, m = cubic
    h = hopf_quantities(g, m, 0.8, 0.6)
    assert h.region == REGION_II and h.tau_list[0] > 0
    h = hopf_quantities(g, m, 0.3, 0.6)
    assert h.region == REGION_I and h.tau_list == () and h.theta_star is None


def test_hopf_errors(cubic):
    g, m = cubic
    with pytest.raises(OutOfRange):
        hopf_quantities(g, m, 0.8, 0.01)
    with pytest.raises(HypothesisViolated) as info:
        hopf_quantities(g, m, -1.0, 0.6)
    assert "(H1)" in str(info.value)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_region_rules(r1, r2):
    region = classify_region(r1, r2)
    if r1 - r2 <= 0:
        assert region == REGION_III
    elif r1 + r2 < 0:
        assert region == REGION_II
    else:
        assert region == REGION_I


profiles = st.tuples(st.floats(0.3, 2.0), st.floats(2.5, 6.0), st.integers(1, 3))


@given(profiles, st.floats(0.01, 3.0))
def test_hopf_invariants(prof, extra):
    a, b, p = prof
    g = make_grid(n=101)
    m = sample_profile(f"-{a}*x^{p}+{b}", g)
    if m.case != "A1":
        return
    parts = r_parts(g, m)
    D = critical_D(g, m) + extra  # region II
    lam = parts.lambda_star + 0.1
    h = hopf_quantities(g, m, D, lam)
    assert h.region == REGION_II
    assert math.pi / 2 < h.theta_star < math.pi and math.sin(h.theta_star) > 0
    assert h.h_star > 0
    gaps = np.diff(h.tau_list)
    assert np.all(gaps > 0)
    assert np.allclose(gaps, 2 * math.pi / h.omega, rtol=1e-12)


@given(profiles, st.floats(0.0, 3.0))
def test_normalization_invariance(prof, D):
    a, b, p = prof
    g = make_grid(n=101)
    m = sample_profile(f"-{a}*x^{p}+{b}", g)
    if m.case != "A1":
        return
    assert critical_D(g, m, "unit-l2") == pytest.approx(critical_D(g, m, "raw"), rel=1e-10)
    u, r = r_parts(g, m, "unit-l2"), r_parts(g, m, "raw")
    assert u.r1 > 0
    if u.r1 + u.r2(D) < 0:
        hu = hopf_quantities(g, m, D, u.lambda_star + 0.1, "unit-l2")
        hr = hopf_quantities(g, m, D, u.lambda_star + 0.1, "raw")
        assert hu.theta_star == pytest.approx(hr.theta_star, rel=1e-10)
        assert hu.h_star == pytest.approx(hr.h_star, rel=1e-10)
