"""Numerical verification lab for covariance inequalities over log-concave
probability measures: quadrature measures and grids, the weighted-Laplacian
dual route, the inequality verdicts themselves, sharp-constant scans, the
conditional Fisher transfer, and the standalone algebraic lemmas."""

__version__ = "0.1.0"

from .conditional import (SplitMeasure, bl35_impossibility_scan,
                          conditional_decompose, verify_conditional_fisher)
from .constants import (ScanResult, cheeger_estimate, cheeger_scan,
                        halfspace_reduction_check, item1_blowup_report,
                        item2_epsilon_fit, ledoux_bound, ledoux_scan,
                        scan_sharp_constant_1d)
from .discretize import (Field, Grid, build_grid, build_segmented_grid_1d,
                         field_from_function, grid_for_measure, integrate,
                         integrate_values)
from .exceptions import CovlabError
from .inequalities import (BoxSet, HalfLine, HalfSpace, InequalityReport,
                           Interval, bl3_reference_rhs, classify, covariance,
                           covariance_pairsum, layer_cake_split, mean_value,
                           variance, verify_asym, verify_bl_variance,
                           verify_cov6, verify_divided_difference)
from .lemmas import (DiscreteMeasure2D, check_matrix_power_lemma,
                     check_quotient_convexity, matrix_power_suite,
                     quotient_convexity_suite, random_spd,
                     verify_inductive_step)
from .measures import (Measure, Potential, choose_truncation, make_custom,
                       make_gaussian, make_piecewise_1d, make_quadratic_form,
                       make_radial, make_radial_named, normalize, regularize,
                       smooth_measure)
from .operators import (apply_generator, check_commutation, conjugate_exponent,
                        parse_exponent, solve_poisson, solve_poisson_1d_exact,
                        spectral_gap, weighted_gradient_norm)
