"""Local tangent cones of weighted polynomial vector-field frames.

The package builds, from a frame of polynomial vector fields with
degree weights, the family of base-pointed dilations of the underlying
space, the graded nilpotent group that arises as their limit, and the
numerical checks that tie the two together: dilation axioms,
convergence orders, scaled-word associativity, and differentials of
maps between charted spaces.
"""

from .errors import (CarnotError, ConfigError, Diverging, GradingViolation,
                     JacobiViolation, NoConvergence, OutOfChart, OutOfDomain,
                     SingularFrame, StepFailure, UnsupportedDepth)
from .expmap import (Box, Chart, dilate_at, dist_inf,
                     estimate_quasimetric_constants, flow)
from .frame import (Frame, StructureField, bracket, builtin_frame,
                    builtin_names, eval_frame, load_frame, make_frame,
                    resolve_frame, structure_constants, validate_regularity,
                    weighted_norm)
from .limits import (ConvergenceReport, DivergenceReport, EpsilonLadder,
                     SampledMap, SuiteConfig, check_integral_line_divergence,
                     check_local_approximation, distortion, estimate_limit,
                     inv_eps, lambda_eps, rescaled_family_distortion,
                     run_axiom_suite, sigma_eps)
from .nilpotent import (GradedAlgebra, GroupElement, algebra_at, bch_coords,
                        bch_product, dilate_coords, dist_inf_group,
                        estimate_symmetry_defect, estimate_triangle_constant,
                        group_inverse, homogeneous_dilation, homogeneous_norm,
                        nilpotent_field, nilpotent_frame_matrix, nilpotentize)
from .pansu import (HomogeneousHom, PointMap, builtin_map, builtin_map_names,
                    chain_rule_check, check_equivalences,
                    check_homogeneous_hom, compose_maps, make_map,
                    pansu_differential, resolve_map)
from .report import CheckRow, Rung, render_csv, render_text
from .tangent import (Word, associativity_spread, contract_once,
                      contractibility_witness, dilation_path_modulus,
                      left_comb, parenthesizations, right_comb, scaled_product,
                      word_distance, word_scale)

__version__ = "0.1.0"
