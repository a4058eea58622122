"""Sharp-constant scans, blow-up reports, Cheeger and ball-mass bounds."""

import json
import math

import pytest

from covlab import (cheeger_estimate, cheeger_scan, halfspace_reduction_check,
                    item1_blowup_report, item2_epsilon_fit, ledoux_bound,
                    ledoux_scan, make_gaussian, make_piecewise_1d,
                    scan_sharp_constant_1d, smooth_measure)
from covlab.constants import _trial_ratio
from covlab.exceptions import ConfigError, DomainError, InvalidDimension


UNIFORM = make_piecewise_1d([-1.0, 1.0], [1.0])


def test_trial_ratio_degenerate_rules():
    assert _trial_ratio(0.5, 0.25, 1e-14) == (2.0, "")
    assert _trial_ratio(0.0, 0.0, 1e-14) == (0.0, "skip")
    ratio, flag = _trial_ratio(0.5, 0.0, 1e-14)
    assert flag == "+inf" and ratio == 0.5 / 1e-14


def test_halfline_scan_uniform_peaks_at_centre():
    scan = scan_sharp_constant_1d(UNIFORM, points_per_segment=129)
    assert scan.tag == "char-1d"
    assert scan.meta == {"mode": "half-lines", "nodes": 129}
    assert scan.best_ratio == pytest.approx(2.0 * math.log(2.0), rel=1e-12)
    assert scan.best_ratio == pytest.approx(1.3862943611198837, rel=1e-12)
    assert scan.best_parameter == 0.0
    assert all(f == "" for f in scan.flags)
    assert len(scan.rows()) == len(scan.parameters)


def test_interval_scan_uniform():
    scan = scan_sharp_constant_1d(UNIFORM, mode="intervals",
                                  trials=[(-0.5, 0.5)])
    assert scan.parameters == ["(-0.5,0.5)"]
    assert scan.ratios[0] == pytest.approx(0.9547712524422158, rel=1e-12)
    assert scan.flags == [""]


def test_scan_guards(gauss2):
    with pytest.raises(InvalidDimension):
        scan_sharp_constant_1d(gauss2)
    with pytest.raises(ConfigError):
        scan_sharp_constant_1d(UNIFORM, mode="rays")


def test_cheeger_scan_closed_forms(gauss1):
    cu = cheeger_scan(UNIFORM)
    assert cu.meta == {"lower_bound": True}
    # mu(A)(1 - mu(A)) = 1/4 against the flat density 1/2, at the midpoint
    assert cu.best_ratio == pytest.approx(0.5, rel=1e-12)
    assert cu.best_parameter == 0.0
    cg = cheeger_scan(gauss1)
    # max of Phi(t)(1-Phi(t))/phi(t) = sqrt(2 pi)/4 at t = 0
    assert cg.best_ratio == pytest.approx(math.sqrt(2.0 * math.pi) / 4.0,
                                          rel=1e-9)
    assert cg.best_ratio == pytest.approx(0.6266570686055601, rel=1e-12)
    assert cheeger_estimate(gauss1, gauss1.grid) == cg.best_ratio


def test_ball_mass_bound_never_exceeds_two_to_n(gauss1):
    scan = ledoux_scan(gauss1, cheeger_estimate(gauss1))
    assert scan.tag == "ledoux"
    assert scan.meta["bound"] == 2.0  # the R -> inf candidate wins here
    assert scan.meta["argmin_R"] == "inf"
    assert scan.meta["symmetric"] is True
    assert scan.parameters[-1] == "inf"
    assert min(scan.ratios) == scan.meta["bound"]
    json.dumps(scan.to_dict())
    assert ledoux_bound(UNIFORM, 0.5) == 2.0
    with pytest.raises(DomainError):
        ledoux_scan(gauss1, 0.0)
    with pytest.raises(DomainError):
        ledoux_bound(gauss1, -1.0)


def test_zero_density_cell_ratios_diverge():
    rep = item1_blowup_report()
    assert rep["resolutions"] == [17, 33, 65]
    assert rep["flagged"] == [True, True, True]
    assert all(r > 1e3 for r in rep["max_ratios"])
    assert rep["max_ratios"][0] == pytest.approx(94969375895950.5, rel=1e-9)
    assert rep["max_ratios"][2] == pytest.approx(94969375895950.67, rel=1e-9)
    # trials clear of the dead cell stay bounded across refinements
    assert rep["max_unflagged_ratios"][0] == pytest.approx(1.89938751791901,
                                                           rel=1e-9)
    assert max(rep["max_unflagged_ratios"]) < 2.0
    assert abs(rep["log_slope"]) < 1e-10
    assert [s.label for s in rep["scans"]] == \
        ["item1-pps17", "item1-pps33", "item1-pps65"]


def test_spike_family_ratio_grows_logarithmically():
    rep = item2_epsilon_fit()
    assert rep["eps"] == [1e-1, 1e-2, 1e-3]
    assert rep["ratios"][0] == pytest.approx(2.1287112627416174, rel=1e-9)
    assert rep["ratios"][2] == pytest.approx(6.592733139590669, rel=1e-9)
    assert rep["a"] == pytest.approx(-0.11971177351816216, rel=1e-9)
    assert rep["b"] == pytest.approx(0.9693500341054702, rel=1e-9)
    assert rep["r2"] == pytest.approx(0.9998378240785911, rel=1e-9)
    assert rep["r2"] > 0.99 and rep["b"] > 0.9


def test_halfspace_ratio_below_marginal():
    m = smooth_measure(make_gaussian(2), 65)
    rep = halfspace_reduction_check(m, (1.0, 0.0))
    assert rep.name == "halfspace-reduction" and rep.n == 2
    assert rep.lhs == pytest.approx(0.7557353763838649, rel=1e-12)
    assert rep.rhs == pytest.approx(1.246711926725719, rel=1e-12)
    assert rep.verdict == "holds"
    assert rep.meta["marginal_mass_defect"] < 1e-8
    assert rep.meta["skipped"] is False
    with pytest.raises(InvalidDimension):
        halfspace_reduction_check(UNIFORM, (1.0,))
