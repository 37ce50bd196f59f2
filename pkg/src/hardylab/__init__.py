"""hardylab: a numerical laboratory for diffusion operators built from
vector-field frames, their Hardy-type inequalities, and the weighted
contractivity of the associated heat semigroups."""

from .calculus import (Diffusion, FrameDiffusion, chain_rule_defect, eval_L,
                       gamma, gamma_definition_defect, gamma_w, ibp_defect)
from .catalog import (GeometrySpec, Weight, as_diffusion, estimate_kappa,
                      make_geometry, make_weight)
from .conditions import (QcondReport, check_curvature, check_suffcond,
                         interior_powers, power_range, qcond_report)
from .errors import (DegenerateInputError, DomainError, NumericError,
                     PreconditionError, UsageError)
from .fields import (ConstField, CoordinateField, FuncField, NormField,
                     PolyField, ScalarField, SmoothMap, VectorField, with_fd)
from .grid import Grid, default_grid, integrate, make_grid
from .inequalities import (HardyReport, dilation_hardy_report,
                           dilation_log_hardy_report, estimate_best_constant,
                           funcineq_report, funcineqgeneral_report,
                           hardy_report, homogeneous_norm_report,
                           log_hardy_report, radial_hardy_report,
                           radial_log_hardy_report, rayleigh_ratio,
                           weighted_log_hardy_report)
from .operators import (dilation_operator, drifted_operator, radial_operator,
                        weighted_operator)
from .semigroup import (ContractionTrace, contraction_trace, evolve,
                        subcommutation_check, symmetry_defect)
from .testfunctions import (bump_corpus, make_test_function, radial_bump,
                            smoothed_power, tensor_bump)

__version__ = "0.1.0"
