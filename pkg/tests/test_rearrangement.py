import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import symstab as ss
from symstab.geometry import GridDomain, rasterize
from symstab.rearrangement import (MonotoneProfile, ScalarField,
                                   decreasing_rearrangement,
                                   distribution_function, g_sub_h,
                                   hardy_littlewood_gap, lorentz_lambda_norm,
                                   lp_norm, quantitative_hl_deficit,
                                   running_mean_nonincreasing,
                                   schwarz_rearrangement, theta_p)


def tiny_domain(n=4, h=1.0):
    mask = np.zeros((n + 2, n + 2), dtype=bool)
    mask[1:-1, 1:-1] = True
    return GridDomain(mask, h, (0.0, 0.0))


def field_from_list(vals, h=1.0):
    vals = np.asarray(vals, dtype=float)
    n = int(round(math.sqrt(vals.size)))
    dom = tiny_domain(n, h)
    arr = np.zeros(dom.mask.shape)
    arr[dom.mask] = vals
    return ScalarField(dom, arr)


def test_scalar_field_validation():
    dom = tiny_domain(2)
    ones = np.ones(dom.mask.shape)
    zeroed = ScalarField(dom, ones)        # outside-mask values are dropped
    assert zeroed.values[0, 0] == 0.0
    assert zeroed.integral() == pytest.approx(4.0)
    neg = np.zeros(dom.mask.shape)
    neg[dom.mask] = -1.0
    with pytest.raises(ValueError):
        ScalarField(dom, neg, nonnegative=True)
    nan = np.zeros(dom.mask.shape)
    nan[1, 1] = np.nan
    with pytest.raises(ValueError):
        ScalarField(dom, nan)


def test_distribution_function_loop_oracle():
    vals = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0]
    u = field_from_list(vals, h=0.5)
    mu = distribution_function(u)
    for t in [0.0, 0.5, 1.0, 2.5, 5.0, 8.9, 9.0, 10.0]:
        oracle = sum(1 for v in vals if v > t) * 0.25
        assert mu(t) == pytest.approx(oracle, abs=0.0)


def test_distribution_cone_analytic():
    # u = 1 - |x| on the unit disk: mu(t) = pi (1 - t)^2
    h = 1.0 / 64.0
    dom = rasterize(ss.DomainSpec.disk((0.0, 0.0), 1.0), h)
    u = ScalarField.from_function(
        dom, lambda x, y: np.maximum(1.0 - np.hypot(x, y), 0.0))
    mu = distribution_function(u)
    for t in (0.2, 0.5, 0.8):
        assert mu(t) == pytest.approx(math.pi * (1 - t) ** 2, abs=8 * h)


def test_decreasing_rearrangement_equidistribution():
    vals = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0]
    u = field_from_list(vals, h=0.5)
    star = decreasing_rearrangement(u)
    assert list(star.values) == sorted(vals, reverse=True)
    assert np.all(np.diff(star.edges) == pytest.approx(0.25))
    for p in (1.0, 2.0, math.inf):
        assert star.lp_norm(p) == pytest.approx(u.lp(p), rel=1e-13)


def test_schwarz_rearrangement_radial_and_idempotent():
    vals = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0]
    u = field_from_list(vals)
    sharp = schwarz_rearrangement(u)
    r = sharp.ball_radius
    assert r == pytest.approx(math.sqrt(9.0 / math.pi))
    # radial nonincreasing along a ray
    rr = np.linspace(0.0, r * 0.999, 50)
    along = sharp.evaluate(rr, np.zeros_like(rr))
    assert np.all(np.diff(along) <= 1e-12)
    assert sharp.evaluate(0.0, 0.0) == pytest.approx(9.0)
    assert sharp.evaluate(2 * r, 0.0) == 0.0


def test_step_profile_semantics():
    prof = MonotoneProfile([0.0, 1.0, 2.0], [3.0, 1.0], "step")
    assert prof(0.0) == 3.0
    assert prof(0.999) == 3.0
    assert prof(1.0) == 1.0          # right-continuous
    assert prof.integral() == pytest.approx(4.0)
    assert prof.lp_norm(2.0) == pytest.approx(math.sqrt(10.0))
    with pytest.raises(ValueError):
        MonotoneProfile([0.0, 1.0, 2.0], [1.0, 3.0], "step")  # increasing


def test_linear_profile_lp_closed_form():
    # v(s) = 1 - s on [0, 1]: ||v||_p^p = 1/(p+1)
    prof = MonotoneProfile([0.0, 1.0], [1.0, 0.0], "linear")
    for p in (1.0, 2.0, 3.5):
        assert prof.lp_norm(p) ** p == pytest.approx(1.0 / (p + 1.0))


def test_as_linear_end_extension():
    prof = MonotoneProfile([0.0, 1.0, 2.0], [3.0, 1.0], "step")
    lin = prof.as_linear()
    # nodes at left edges, final node extends the last slope (3 -> 1
    # over one unit, so -1 at s = 2); it may go below zero by design
    assert list(lin.edges) == [0.0, 1.0, 2.0]
    assert list(lin.values) == [3.0, 1.0, -1.0]


def test_hardy_littlewood_gap_oracle():
    h = field_from_list([3.0, 1.0, 2.0, 0.0])
    g = field_from_list([1.0, 2.0, 0.0, 4.0])
    # sorted pairing: 3*4 + 2*2 + 1*1 + 0*0 = 17; plain: 3+2+0+0 = 5
    assert hardy_littlewood_gap(h, g) == pytest.approx(12.0)
    assert hardy_littlewood_gap(h, h) == pytest.approx(0.0)


def test_g_sub_h_rank_semantics():
    h = field_from_list([3.0, 1.0, 2.0, 0.0])
    g = field_from_list([1.0, 2.0, 0.0, 4.0])
    gh = g_sub_h(g, h)
    # cell with k-th largest h gets k-th largest g
    assert list(gh.masked()) == [4.0, 1.0, 2.0, 0.0]


def test_theta_p_two_cell_closed_form():
    hstar = MonotoneProfile([0.0, 1.0, 2.0], [3.0, 1.0], "step")
    theta = theta_p(hstar, 2.0)
    assert theta.finite
    # both linear-reading slopes are -2: with p = p' = 2,
    # theta_2(s) = (int_0^s |m|^(-1))^(1/p') = sqrt(s/2)
    for s in (0.5, 1.0, 2.0):
        assert theta(s) == pytest.approx(math.sqrt(s / 2.0))
    unit = MonotoneProfile([0.0, 1.0, 2.0], [2.0, 1.0], "step")
    th1 = theta_p(unit, 2.0)
    assert th1(2.0) == pytest.approx(math.sqrt(2.0))  # slope -1: sqrt(s)


def test_theta_p_flat_inadmissible():
    hstar = MonotoneProfile([0.0, 1.0, 2.0, 3.0], [2.0, 2.0, 1.0], "step")
    theta = theta_p(hstar, 2.0)
    assert not theta.finite


def test_theta_p_divergence_sniff():
    # h*(s) = 1 - s^2: slope magnitude 2s ~ s^(p-1) for p = 2 -> the
    # integrand (2s)^(-1) is non-integrable at 0
    s = np.linspace(0.0, 1.0, 400)
    prof = MonotoneProfile(s, 1.0 - s ** 2, "linear")
    assert not theta_p(prof, 2.0).finite


def test_lorentz_lambda_norm_closed_form():
    hstar = MonotoneProfile([0.0, 1.0, 2.0], [3.0, 1.0], "step")
    gstar_field = field_from_list([2.0, 1.0, 0.0, 0.0])
    # theta_2(s) = sqrt(s/2); g* = (2,1,0,0) on unit cells:
    # lambda_1 = 2*sqrt(1/2) + 1*(1 - sqrt(1/2)) = 1 + sqrt(2)/2
    lam = lorentz_lambda_norm(gstar_field, hstar, 2.0, 1.0)
    assert lam == pytest.approx(1.0 + math.sqrt(2.0) / 2.0)


def test_lambda_norm_pq_window():
    hstar = MonotoneProfile([0.0, 1.0, 2.0], [3.0, 1.0], "step")
    g = field_from_list([2.0, 1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        lorentz_lambda_norm(g, hstar, 2.0, 1.6)   # q >= 2 - 1/p
    with pytest.raises(ValueError):
        lorentz_lambda_norm(g, hstar, 2.0, 0.3)   # q < 1/p


def test_quantitative_hl_two_cell_oracle():
    mask = np.zeros((3, 4), dtype=bool)
    mask[1, 1:3] = True
    dom = GridDomain(mask, 1.0, (0.0, 0.0))
    hf = ScalarField(dom, np.where(mask, [[0] * 4, [0, 3.0, 1.0, 0], [0] * 4],
                                   0.0))
    gf = ScalarField(dom, np.where(mask, [[0] * 4, [0, 1.0, 2.0, 0], [0] * 4],
                                   0.0))
    rec = quantitative_hl_deficit(hf, gf, 2.0, 1.0)
    assert rec.lhs_gap == pytest.approx(2.0)     # (3*2+1*1) - (3*1+1*2)
    assert rec.m == pytest.approx(1.0)
    assert rec.diff_norm_m == pytest.approx(2.0)
    lam = 1.0 + math.sqrt(2.0) / 2.0
    assert rec.lambda_norm == pytest.approx(lam)
    expect = (1.0 / (8.0 * math.e)) * lam ** (-2.0) * 2.0 ** 3
    assert rec.deficit_term == pytest.approx(expect)
    assert expect == pytest.approx(0.1263, abs=2e-4)
    assert rec.verdict is True


def test_quantitative_hl_inadmissible_skipped():
    h = field_from_list([2.0, 2.0, 2.0, 2.0])    # flat h*
    g = field_from_list([1.0, 2.0, 3.0, 4.0])
    rec = quantitative_hl_deficit(h, g, 2.0, 1.0)
    assert rec.verdict is None
    assert "inadmissible" in rec.reason


def test_running_mean_nonincreasing():
    good = MonotoneProfile([0.0, 1.0, 2.0, 3.0], [3.0, 2.0, 1.0], "step")
    assert running_mean_nonincreasing(good)


def test_lp_norm_dispatch():
    u = field_from_list([3.0, 4.0, 0.0, 0.0])
    assert lp_norm(2.0, u) == pytest.approx(5.0)
    assert lp_norm(math.inf, u) == pytest.approx(4.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 100.0), min_size=16, max_size=16),
       st.lists(st.floats(0.0, 100.0), min_size=16, max_size=16))
def test_hl_gap_nonnegative_property(a, b):
    h = field_from_list(a)
    g = field_from_list(b)
    assert hardy_littlewood_gap(h, g) >= -1e-9 * (1 + max(a) * max(b))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 50.0), min_size=9, max_size=9))
def test_rearrangement_properties(vals):
    u = field_from_list(vals)
    star = decreasing_rearrangement(u)
    assert np.all(np.diff(star.values) <= 1e-12)
    assert star.integral() == pytest.approx(u.integral(), rel=1e-12,
                                            abs=1e-12)
    assert running_mean_nonincreasing(star)
