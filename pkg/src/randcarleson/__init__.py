"""Numerical laboratory for random Carleson sequences in the polydisc and the ball."""
from .errors import InvalidInputError, NumericError, RandCarlesonError, ResourceLimitError
from .kernels import (Domain, KernelSpec, Point, kernel_eval, kernel_matrix, normalized_inner,
                      normalized_matrix, pseudo_hyperbolic, rho_s, schur_product)
from .sequences import (MIDPOINT, UNIFORM_IN_BAND, CountingProfile, Criterion, DyadicIndex, RandomSequence,
                        derive_seed, region_of_point, sample, series_criterion)
from .gramian import (BlockScheme, ChernoffParams, GramMatrix, build_gram, chernoff_bound,
                      expected_sq_entry_dirichlet, expected_sq_entry_szego, gram_norm, operator_norm,
                      truncated_frame)
from .separation import (cluster_count, greedy_partition, rectangle_collisions, separation_constant,
                         uniform_separation_product)
from .occupancy import OccupancyProblem, brute_force_prob, exact_prob, normal_approx, ratio_check
from .carleson import bloch_profile_classifier, boe_nicolau_count, hyperbolic_distance, onebox_constant
from .experiments import ExperimentConfig, run_experiment, summarize

__version__ = "0.1.0"
