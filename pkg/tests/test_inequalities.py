"""Verdict classification, moments, and the inequality verifiers."""

import json
import math

import numpy as np
import pytest

from covlab import (BoxSet, HalfLine, HalfSpace, Interval, bl3_reference_rhs,
                    classify, covariance, covariance_pairsum, field_from_function,
                    layer_cake_split, make_gaussian, make_piecewise_1d,
                    make_quadratic_form, make_radial_named, mean_value,
                    grid_for_measure, smooth_measure, variance, verify_asym,
                    verify_bl_variance, verify_cov6, verify_divided_difference)
from covlab.exceptions import ConfigError, DomainError, UnsupportedForm
from covlab.inequalities import divdiff_set, gradient_l1, set_perimeter
from covlab.suites import coord_field, tanh_field


# ---------------------------------------------------------------- verdicts

def test_classify_three_way_rules():
    assert classify(1.0, 2.0) == "holds"
    assert classify(2.0, 1.0) == "violated"
    assert classify(1.002, 1.0) == "violated"
    assert classify(1.0005, 1.0) == "holds-at-equality"
    assert classify(0.9995, 1.0) == "holds-at-equality"
    assert classify(0.0, 0.0) == "holds-at-equality"
    assert classify(1e-15, 0.0) == "holds-at-equality"  # both under the floor
    assert classify(1e-6, 0.0) == "violated"  # positive mass against zero
    # a Monte Carlo interval widens the equality band
    assert classify(1.05, 1.0, ci=0.1) == "holds-at-equality"
    assert classify(1.2, 1.0, ci=0.1) == "violated"


def test_report_serializes_to_plain_json(gauss1, gauss1_x, gauss1_tanh):
    rep = verify_asym(gauss1, gauss1_tanh, gauss1_x, "inf")
    d = rep.to_dict()
    assert d["p"] == "inf"
    assert d["q"] == 1.0
    assert [s["name"] for s in d["subs"]] == ["corollary-lam", "cobo7", "BL4.2"]
    json.dumps(d)  # every leaf is a native scalar


# ------------------------------------------------------------------ moments

def test_covariance_and_pairsum_agree(gauss1, gauss1_x, gauss1_tanh):
    c = covariance(gauss1, gauss1_x, gauss1_tanh)
    assert c == pytest.approx(0.6057055090998835, rel=1e-12)
    assert c == pytest.approx(0.6057055096021587, rel=1e-8)  # adaptive oracle
    assert covariance_pairsum(gauss1, gauss1_x, gauss1_tanh) == \
        pytest.approx(c, rel=1e-12)
    assert mean_value(gauss1, gauss1_tanh) == 0.0


def test_gaussian_integration_by_parts(gauss1, gauss1_x, gauss1_tanh):
    # cov(x, h) = E[h'] for the standard normal
    assert covariance(gauss1, gauss1_x, gauss1_tanh) == \
        pytest.approx(gradient_l1(gauss1, gauss1_tanh), abs=1e-9)


def test_variance_pins(gauss1, gauss1_x, gauss1_tanh):
    assert variance(gauss1, gauss1_x) == pytest.approx(1.0, rel=1e-8)
    v = variance(gauss1, gauss1_tanh)
    assert v == pytest.approx(0.3942944903473967, rel=1e-12)
    assert v == pytest.approx(0.3942944903978409, rel=1e-8)  # adaptive oracle


# ------------------------------------------------------------ variance form

def test_variance_bound_on_tanh(gauss1, gauss1_tanh):
    rep = verify_bl_variance(gauss1, gauss1_tanh)
    assert rep.name == "BL-var" and rep.n == 1
    assert rep.verdict == "holds"
    assert rep.lhs == pytest.approx(0.3942944903473967, rel=1e-12)
    assert rep.rhs == pytest.approx(0.46440290248694527, rel=1e-12)
    assert rep.rhs == pytest.approx(0.46440290244826815, rel=1e-8)  # oracle
    assert rep.ratio == pytest.approx(rep.lhs / rep.rhs, rel=1e-15)


def test_variance_bound_rejects_piecewise():
    uni = make_piecewise_1d([-1.0, 1.0], [1.0])
    grid = grid_for_measure(uni, points_per_segment=33)
    with pytest.raises(UnsupportedForm):
        verify_bl_variance(uni, coord_field(grid))


# ----------------------------------------------------------- asymmetric form

def test_asym_bound_across_exponents(gauss1, gauss1_x, gauss1_tanh):
    by_p = {p: verify_asym(gauss1, gauss1_tanh, gauss1_x, p)
            for p in (2, 4, "inf")}
    for rep in by_p.values():
        assert rep.name == "BL4"
        assert rep.lhs == pytest.approx(0.6057055090998835, rel=1e-12)
        assert rep.verdict in ("holds", "holds-at-equality")
        assert all(s.verdict != "violated" for s in rep.subs)
    assert by_p[2].rhs == pytest.approx(0.6814711310737567, rel=1e-12)
    assert by_p[4].rhs == pytest.approx(0.6352662797083338, rel=1e-12)
    # at p = inf the bound collapses onto E|h'| for this pair: equality
    assert by_p["inf"].rhs == pytest.approx(0.6057055096526034, rel=1e-12)
    assert by_p["inf"].verdict == "holds-at-equality"
    assert [s.name for s in by_p[2].subs] == ["corollary-lam", "cobo7", "BL2"]
    assert [s.name for s in by_p[4].subs] == ["corollary-lam", "cobo7"]
    assert [s.name for s in by_p["inf"].subs] == \
        ["corollary-lam", "cobo7", "BL4.2"]


def test_asym_bound_saturates_on_correlated_quadratic():
    # var(x1) = (A^{-1})_11 = 1.25 exactly, and p = 2 reproduces it
    m = smooth_measure(make_quadratic_form(np.array([[1.0, 0.5], [0.5, 1.25]])), 129)
    x1 = coord_field(m.grid)
    rep = verify_asym(m, x1, x1, 2)
    assert rep.lhs == pytest.approx(1.249999906308457, rel=1e-12)
    assert rep.rhs == pytest.approx(1.25, rel=1e-9)
    assert rep.verdict == "holds-at-equality"


def test_asym_bound_guards(gauss1, gauss1_x):
    with pytest.raises(DomainError):
        verify_asym(gauss1, gauss1_x, gauss1_x, 1.5)
    uni = make_piecewise_1d([-1.0, 1.0], [1.0])
    grid = grid_for_measure(uni, points_per_segment=33)
    with pytest.raises(UnsupportedForm):
        verify_asym(uni, coord_field(grid), coord_field(grid), 2)


def test_product_form_matches_sup_estimate_at_p_inf():
    m = smooth_measure(make_radial_named("cosh-radial", 1), 129)
    x = coord_field(m.grid)
    th = tanh_field(m.grid)
    rep = verify_asym(m, x, th, math.inf)
    direct = bl3_reference_rhs(m, x, th)
    assert direct == pytest.approx(0.9999999999999998, rel=1e-12)
    assert rep.rhs == pytest.approx(direct, rel=1e-6)
    assert rep.ratio == pytest.approx(0.49526410313561064, rel=1e-12)


def test_product_form_guards(gauss2):
    uni = make_piecewise_1d([-1.0, 1.0], [1.0])
    grid = grid_for_measure(uni, points_per_segment=33)
    with pytest.raises(UnsupportedForm):
        bl3_reference_rhs(uni, coord_field(grid), coord_field(grid))
    x = coord_field(gauss2.grid)
    with pytest.raises(UnsupportedForm):
        bl3_reference_rhs(gauss2, x, x)


# ----------------------------------------------------- perimeters and sets

def test_set_perimeter_closed_forms(gauss1, gauss2):
    phi0 = 1.0 / math.sqrt(2.0 * math.pi)
    phi1 = math.exp(-0.5) / math.sqrt(2.0 * math.pi)
    assert set_perimeter(gauss1, HalfLine(0.0), gauss1.grid) == \
        pytest.approx(phi0, rel=1e-7)
    assert set_perimeter(gauss1, Interval(-1.0, 1.0), gauss1.grid) == \
        pytest.approx(2.0 * phi1, rel=1e-7)
    assert set_perimeter(gauss2, HalfSpace((1.0, 0.0), 0.0), gauss2.grid) == \
        pytest.approx(phi0, rel=1e-7)
    # four faces of the unit box, each phi(1) * P(|x| < 1); the strict
    # indicator clips half a cell per face end, hence the loose tolerance
    box = BoxSet(((-1.0, 1.0), (-1.0, 1.0)))
    width = math.erf(1.0 / math.sqrt(2.0))
    assert set_perimeter(gauss2, box, gauss2.grid) == \
        pytest.approx(4.0 * phi1 * width, rel=0.03)
    with pytest.raises(ConfigError):
        set_perimeter(gauss1, "everything", gauss1.grid)


# ------------------------------------------------------- divided differences

def test_divided_difference_characteristic_mode(gauss1):
    rep = verify_divided_difference(gauss1, HalfLine(0.0), grid=gauss1.grid)
    assert rep.meta["mode"] == "characteristic"
    assert rep.lhs == pytest.approx(0.496388603625373, rel=1e-12)
    assert rep.lhs == pytest.approx(
        divdiff_set(gauss1, HalfLine(0.0), gauss1.grid), rel=1e-15)
    assert rep.rhs == pytest.approx(0.7978845608693157, rel=1e-12)
    assert rep.meta["ratio_no_prefactor"] == \
        pytest.approx(1.2442617089483343, rel=1e-12)
    assert rep.verdict == "holds"
    with pytest.raises(ConfigError):
        verify_divided_difference(gauss1, HalfLine(0.0))


def test_divided_difference_field_mode_piecewise():
    uni = make_piecewise_1d([-1.0, 1.0], [1.0])
    ug = grid_for_measure(uni, points_per_segment=129)
    rep = verify_divided_difference(uni, coord_field(ug))
    assert rep.meta["mode"] == "field"
    assert (rep.lhs, rep.rhs) == (1.0, 2.0)
    assert rep.meta["ratio_no_prefactor"] == pytest.approx(1.0, rel=1e-12)
    assert rep.verdict == "holds"
    rep_h = verify_divided_difference(uni, HalfLine(0.0), grid=ug)
    assert rep_h.lhs == pytest.approx(math.log(2.0), abs=1e-8)
    assert rep_h.rhs == pytest.approx(1.0, rel=1e-12)

    eps = 0.1
    spike = make_piecewise_1d([-1.0, -eps, eps, 1.0],
                              [0.25 / (1 - eps), 0.25 / eps, 0.25 / (1 - eps)])
    sg = grid_for_measure(spike, points_per_segment=129)
    rs = verify_divided_difference(spike, coord_field(sg))
    assert rs.lhs == pytest.approx(1.012189700279707, rel=1e-12)
    assert rs.rhs == pytest.approx(2.0121527777777777, rel=1e-12)
    assert rs.verdict == "holds"
    rsh = verify_divided_difference(spike, HalfLine(0.0), grid=sg)
    # the boundary sits inside the spike: rhs is exactly twice its density
    assert rsh.rhs == pytest.approx(5.0, rel=1e-12)
    assert rsh.lhs == pytest.approx(2.410520615066946, rel=1e-12)
    assert rsh.verdict == "holds"


# ----------------------------------------------------------------- layer cake

def test_layer_cake_split_converges_in_one_dimension():
    rels = []
    for pts in (65, 129, 257):
        m = smooth_measure(make_gaussian(1), pts)
        pos = field_from_function(m.grid, lambda p: 1.0 + np.tanh(p[..., 0]),
                                  grad=lambda p: 1.0 / np.cosh(p) ** 2)
        direct, split = layer_cake_split(m, pos)
        rels.append(abs(direct - split) / direct)
        if pts == 129:
            assert direct == pytest.approx(0.6813562982638294, rel=1e-12)
    assert rels[0] == pytest.approx(0.01068884764165964, rel=1e-9)
    assert rels[1] == pytest.approx(0.0026645255445353704, rel=1e-9)
    assert rels[2] == pytest.approx(0.0006635504401208963, rel=1e-9)
    assert rels[0] / rels[1] >= 3.0
    assert rels[1] / rels[2] >= 3.0


def test_layer_cake_split_two_dimensional():
    m = smooth_measure(make_gaussian(2), 49)
    pos = field_from_function(m.grid, lambda p: 1.0 + np.tanh(p[..., 0]))
    direct, split = layer_cake_split(m, pos)
    assert direct == pytest.approx(0.42269880526628406, rel=1e-12)
    assert abs(direct - split) / direct == \
        pytest.approx(0.016035139245313027, rel=1e-9)


def test_layer_cake_rejects_signed_fields(gauss1, gauss1_tanh):
    with pytest.raises(DomainError):
        layer_cake_split(gauss1, gauss1_tanh)


# --------------------------------------------------------------------- cov6

def test_sup_gradient_bound(gauss1, gauss1_tanh):
    rep = verify_cov6(gauss1, gauss1_tanh, gauss1_tanh)
    assert rep.name == "cov6" and rep.verdict == "holds"
    assert rep.lhs == pytest.approx(0.3942944903473967, rel=1e-12)
    assert rep.rhs == pytest.approx(0.6057055096526034, rel=1e-12)
    # sup |grad h| / lam_min = sech(0)^2 = 1 on the symmetric grid
    assert rep.meta["C"] == 1.0
    assert rep.meta["grad_term"] == pytest.approx(rep.rhs, rel=1e-15)
    uni = make_piecewise_1d([-1.0, 1.0], [1.0])
    grid = grid_for_measure(uni, points_per_segment=33)
    with pytest.raises(UnsupportedForm):
        verify_cov6(uni, coord_field(grid), coord_field(grid))
