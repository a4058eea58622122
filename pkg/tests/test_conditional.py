"""Conditional decompositions, the Fisher transfer chain, spike-scale scan."""

import numpy as np
import pytest

from covlab import (SplitMeasure, bl35_impossibility_scan, build_grid,
                    conditional_decompose, field_from_function, make_custom,
                    make_gaussian, make_piecewise_1d, make_radial_named,
                    normalize, smooth_measure, verify_conditional_fisher)
from covlab.exceptions import (DegenerateSliceError, DomainError,
                               InvalidDimension, UnsupportedForm)

CHAIN_LINKS = ("eig2", "eig3", "eig3_block", "eig37", "eig4", "eig5", "eig8")


def mix_field(grid, weights=(1.0, 0.3)):
    w = np.asarray(weights, dtype=float)

    def fn(p):
        return 1.0 + 0.5 * np.tanh(p @ w)

    def grad(p):
        s = 0.5 / np.cosh(p @ w) ** 2
        return s[..., None] * w

    return field_from_function(grid, fn, grad=grad, name="1+tanh-mix")


def test_split_measure_guards(gauss2):
    uni = make_piecewise_1d([-1.0, 1.0], [1.0])
    with pytest.raises(UnsupportedForm):
        SplitMeasure(uni)
    with pytest.raises(InvalidDimension):
        SplitMeasure(gauss2, m_y=0)
    with pytest.raises(InvalidDimension):
        SplitMeasure(gauss2, m_y=2)


def test_split_measure_tables(gauss2):
    sm = SplitMeasure(gauss2)
    y = gauss2.grid.axes[0]
    phi = np.exp(-y ** 2 / 2.0) / np.sqrt(2.0 * np.pi)
    assert float(np.max(np.abs(sm.marginal() - phi))) == \
        pytest.approx(3.322520036874721e-11, rel=1e-6)
    ones = sm.conditional_mean(np.ones(gauss2.grid.shape))
    assert float(np.max(np.abs(ones - 1.0))) == 0.0
    assert sm.y_grid().n == 1 and sm.n_z == 1


def test_conditional_decompose_closed_form(gauss2):
    # E[exp(yz) | y] = exp(y^2/2) for the product standard normal
    def fn(p):
        return np.exp(p[..., 0] * p[..., 1])

    def grad(p):
        e = np.exp(p[..., 0] * p[..., 1])
        return np.stack([p[..., 1] * e, p[..., 0] * e], axis=-1)

    h = field_from_function(gauss2.grid, fn, grad=grad, name="exp(yz)")
    cond, nu = conditional_decompose(SplitMeasure(gauss2), h)
    assert cond.name == "<exp(yz)>_z" and nu.name == "nu"
    y = cond.grid.axes[0]
    sel = np.abs(y) <= 3.0
    exact = np.exp(y[sel] ** 2 / 2.0)
    rel = float(np.max(np.abs(cond.values[sel] - exact) / exact))
    assert rel == pytest.approx(0.00019140927440968773, rel=1e-6)
    phi = np.exp(-y ** 2 / 2.0) / np.sqrt(2.0 * np.pi)
    assert float(np.max(np.abs(nu.values - phi))) < 1e-10


def test_degenerate_slice_is_rejected():
    def val(x):
        return 5e5 * x[..., 0] ** 2 + 0.5 * x[..., 1] ** 2

    def grad(x):
        g = np.zeros_like(x)
        g[..., 0] = 1e6 * x[..., 0]
        g[..., 1] = x[..., 1]
        return g

    def hess(x):
        H = np.zeros(x.shape[:-1] + (2, 2))
        H[..., 0, 0] = 1e6
        H[..., 1, 1] = 1.0
        return H

    m = normalize(make_custom(2, val, gradient=grad, hessian=hess),
                  build_grid([(-6.0, 6.0), (-6.0, 6.0)], 33))
    with pytest.raises(DegenerateSliceError):
        SplitMeasure(m).marginal()


def test_fisher_transfer_gaussian_mix(gauss2):
    rep = verify_conditional_fisher(SplitMeasure(gauss2), mix_field(gauss2.grid))
    assert rep.name == "appl" and rep.verdict == "holds"
    assert rep.meta["kappa"] == 1.0
    assert rep.meta["C"] == 2.0
    assert rep.ratio == pytest.approx(0.4346569111107671, rel=1e-12)
    assert rep.meta["fd_identity_gap"] == \
        pytest.approx(0.0012631990372752866, rel=1e-9)
    assert rep.meta["flags"] == []
    assert rep.meta["normalization"] == pytest.approx(1.0, rel=1e-12)
    for link in CHAIN_LINKS:
        assert rep.meta[link]["violations"] == 0, link
    # the slice Cauchy-Schwarz link is airtight on this case
    assert rep.meta["eig5"]["worst_excess_rel"] <= 0.0


def test_fisher_transfer_radial_mix():
    m = smooth_measure(make_radial_named("s/2+s^2/10", 2), 129)
    rep = verify_conditional_fisher(SplitMeasure(m), mix_field(m.grid))
    assert rep.verdict == "holds"
    assert rep.ratio == pytest.approx(0.060378908562515356, rel=1e-12)
    assert rep.meta["kappa"] == pytest.approx(2.723870598050038, rel=1e-12)
    assert rep.meta["C"] == pytest.approx(2.0 * rep.meta["kappa"] ** 2, rel=1e-15)
    assert rep.meta["fd_identity_gap"] == \
        pytest.approx(0.0004505976130765865, rel=1e-9)
    for link in CHAIN_LINKS:
        assert rep.meta[link]["violations"] == 0, link


def test_fisher_transfer_two_dimensional_y():
    m = smooth_measure(make_gaussian(3), 33)
    h = mix_field(m.grid, weights=(1.0, 0.4, 0.3))
    rep = verify_conditional_fisher(SplitMeasure(m, m_y=2), h)
    assert rep.verdict == "holds"
    assert rep.ratio == pytest.approx(0.43916057253945856, rel=1e-12)
    assert rep.meta["fd_identity_gap"] == \
        pytest.approx(0.01933633010427055, rel=1e-9)
    for link in CHAIN_LINKS:
        assert rep.meta[link]["violations"] == 0, link


def test_fisher_transfer_floors_signed_fields(gauss2):
    dip = field_from_function(gauss2.grid,
                              lambda p: np.tanh(p[..., 0]) + 0.5, name="dip")
    rep = verify_conditional_fisher(SplitMeasure(gauss2), dip)
    assert rep.meta["flags"] == ["h_floored"]
    assert rep.verdict == "holds"
    assert rep.ratio == pytest.approx(0.5, rel=1e-12)


def test_spike_scale_scan_grows_linearly():
    scan = bl35_impossibility_scan()
    assert scan.tag == "bl35" and scan.label == "spike"
    assert scan.parameters == [10.0, 100.0, 1000.0]
    assert scan.ratios[0] == pytest.approx(10.512296093928098, rel=1e-12)
    assert scan.ratios[1] == pytest.approx(100.25089594015456, rel=1e-12)
    assert scan.ratios[2] == pytest.approx(997.7337580708981, rel=1e-12)
    assert scan.ratios[2] / scan.ratios[0] >= 10.0
    for row in scan.meta["cases"]:
        assert row["product_bound"] > 0.0
    with pytest.raises(DomainError):
        bl35_impossibility_scan(M_values=(0.5,))
