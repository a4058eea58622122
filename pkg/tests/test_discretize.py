"""Grids, quadrature, fields, and the divided-difference kernels."""

import math

import numpy as np
import pytest

from covlab import (Field, Grid, build_grid, build_segmented_grid_1d,
                    field_from_function, grid_for_measure, integrate_values,
                    make_gaussian, make_piecewise_1d, smooth_measure)
from covlab.discretize import (divided_difference_char_1d,
                               double_integral_divided_difference,
                               trapezoid_weights)
from covlab.exceptions import (BudgetError, ConfigError, InvalidDimension,
                               ModeError, QuadratureError)
from covlab.suites import coord_field, tanh_field


def test_trapezoid_weights_three_nodes():
    np.testing.assert_allclose(trapezoid_weights(np.array([-1.0, 0.0, 1.0])),
                               [0.5, 1.0, 0.5])


def test_trapezoid_quadrature_second_order():
    errs = []
    for pts in (33, 65, 129):
        g = build_grid([(-3.0, 3.0)], pts)
        errs.append(abs(integrate_values(g, g.axes[0] ** 2) - 18.0))
    assert errs[0] / errs[1] >= 3.0
    assert errs[1] / errs[2] >= 3.0


def test_gauss_rule_is_exact_for_low_degree():
    g = build_grid([(0.0, 2.0)], 16, rule="gauss")
    vals = g.axes[0] ** 5 - g.axes[0] ** 3 + 1.0
    # int_0^2 x^5 - x^3 + 1 dx = 64/6 - 4 + 2
    assert integrate_values(g, vals) == pytest.approx(64.0 / 6.0 - 2.0, rel=1e-13)


def test_build_grid_guards():
    with pytest.raises(ConfigError):
        build_grid([(-1.0, 1.0)], 8)  # below the minimum node count
    g = build_grid([(-1.0, 1.0)], 8, enforce_min=False)
    assert g.shape == (8,)
    with pytest.raises(ConfigError):
        build_grid([(1.0, -1.0)], 33)
    with pytest.raises(ConfigError):
        build_grid([(-1.0, 1.0)], 33, rule="simpson")
    with pytest.raises(BudgetError):
        build_grid([(-1.0, 1.0)] * 3, 300)  # 2.7e7 nodes over the budget


def test_grid_geometry_and_refinement():
    g = build_grid([(-2.0, 2.0), (0.0, 1.0)], [17, 33])
    assert g.n == 2 and g.shape == (17, 33) and g.size == 17 * 33
    assert g.bounds == [(-2.0, 2.0), (0.0, 1.0)]
    assert g.is_uniform
    fine = g.refine()
    assert fine.shape == (33, 65)
    # coarse nodes nest into the refined axes
    assert np.all(np.isin(g.axes[0], fine.axes[0]))
    assert np.sum(fine.axis_weights[0]) == pytest.approx(4.0)


def test_grid_rejects_bad_axes():
    with pytest.raises(InvalidDimension):
        Grid([np.array([0.0, 0.0, 1.0])], [np.array([0.1, 0.1, 0.1])])
    with pytest.raises(QuadratureError):
        Grid([np.array([0.0, 1.0])], [np.array([1.0, -0.5])])
    with pytest.raises(QuadratureError):
        Grid([np.array([0.0, 1.0])], [np.array([1.0, 1.0])])  # wrong span


def test_segmented_grid_hits_breakpoints():
    g = build_segmented_grid_1d([-1.0, -0.1, 0.1, 1.0], 33)
    for b in (-1.0, -0.1, 0.1, 1.0):
        assert np.min(np.abs(g.axes[0] - b)) == 0.0
    assert np.sum(g.axis_weights[0]) == pytest.approx(2.0)


def test_field_guards_and_gradient(gauss1):
    grid = gauss1.grid
    with pytest.raises(InvalidDimension):
        Field(grid, np.zeros(5))
    bad = np.zeros(grid.shape)
    bad[3] = np.nan
    with pytest.raises(QuadratureError):
        Field(grid, bad)
    th = tanh_field(grid)
    assert not th.uses_fd_gradient
    fd = Field(grid, th.values)
    assert fd.uses_fd_gradient
    # central differences approach the analytic gradient away from the faces;
    # the second-order bound for tanh at this spacing is max|u'''| dx^2/6 ~ 5e-3
    gap = np.max(np.abs(fd.gradient()[0][2:-2] - th.gradient()[0][2:-2]))
    assert gap < 5e-3


def test_gaussian_mass_and_moments(gauss1):
    rho = gauss1.density(gauss1.grid.points()).reshape(gauss1.grid.shape)
    assert integrate_values(gauss1.grid, rho) == pytest.approx(1.0, abs=1e-10)
    x = gauss1.grid.axes[0]
    assert integrate_values(gauss1.grid, rho * x) == pytest.approx(0.0, abs=1e-12)
    assert integrate_values(gauss1.grid, rho * x * x) == pytest.approx(
        1.0, abs=1e-8)


def test_divided_difference_linear_field_is_total_mass(gauss1, gauss1_x):
    # |x - y| / |x - y| integrates to exactly the squared total mass
    out = double_integral_divided_difference(gauss1, gauss1_x)
    assert out["mc_ci"] is None
    assert out["value"] == pytest.approx(1.0, abs=1e-8)


def test_divided_difference_char_half_line_uniform():
    m = make_piecewise_1d([-1.0, 1.0], [1.0])
    grid = grid_for_measure(m, points_per_segment=129)
    mids = 0.5 * (grid.axes[0][:-1] + grid.axes[0][1:])
    # int over x < 0 < y of (1/4)/(y-x), both orderings: exactly ln 2
    val = divided_difference_char_1d(m, mids < 0.0, grid)
    assert val == pytest.approx(math.log(2.0), abs=1e-8)


def test_monte_carlo_agrees_with_quadrature_within_ci(gauss1, gauss1_tanh):
    quad = double_integral_divided_difference(gauss1, gauss1_tanh)
    assert quad["value"] == pytest.approx(0.6813562982638294, rel=1e-12)
    mc = double_integral_divided_difference(
        gauss1, gauss1_tanh, pair_budget=100,
        mc={"enabled": True, "samples": 200_000, "seed": [7, 0]})
    assert mc["mc_ci"] > 0.0
    assert abs(mc["value"] - quad["value"]) <= mc["mc_ci"]
    again = double_integral_divided_difference(
        gauss1, gauss1_tanh, pair_budget=100,
        mc={"enabled": True, "samples": 200_000, "seed": [7, 0]})
    assert again["value"] == mc["value"]


def test_monte_carlo_requires_seed_and_budget_guard(gauss1, gauss1_tanh):
    with pytest.raises(BudgetError):
        double_integral_divided_difference(gauss1, gauss1_tanh, pair_budget=100)
    with pytest.raises(ConfigError):
        double_integral_divided_difference(
            gauss1, gauss1_tanh, pair_budget=100,
            mc={"enabled": True, "samples": 1000})


def test_step_field_is_rejected_in_lipschitz_mode():
    m = make_piecewise_1d([-1.0, 1.0], [1.0])
    grid = grid_for_measure(m, points_per_segment=129)
    step = Field(grid, (grid.axes[0] > 0.0).astype(float))
    with pytest.raises(ModeError):
        double_integral_divided_difference(m, step)
