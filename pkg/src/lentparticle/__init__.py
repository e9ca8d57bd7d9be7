"""Carré du champ and gradients on marked point processes by lending particles."""

from .config_space import (BasePoint, Configuration, DensityLevy, DiracLevy, LevyMeasure,
                           MarkedPoint, PowerLawLevy, ProcessSpec, child_seed,
                           config_from_json, config_to_json, configuration, eps_minus,
                           eps_plus, isotropic_attribute, mark_points, radial_attribute,
                           simulate, simulate_base)
from .density import (DensityEstimate, NondegeneracyReport, det_lower_bound, isotropic_gamma,
                      isotropy_check, jump_sequence_to_zero, kde_estimate,
                      nondegeneracy_survey, poisson_two_point_bound, prop4_span_test,
                      sample_isotropic_endpoint, scott_bandwidth, survey_configurations,
                      survey_truncations)
from .errors import (BandwidthNonPositive, CoefficientNotVanishing, ConfigError,
                     LentParticleError, NonFiniteState, NonFiniteValue, SingularJacobian,
                     TruncatedMassZero)
from .lent import (CallableFunctional, ExpFunctional, Functional, StackedFunctional,
                   SumFunctional, gamma_contributions, gamma_total, gamma_total_oracle,
                   make_exp, make_jump_sum, make_linear, make_polar_jump_sum, relative_error,
                   sharp_sample)
from .marks import (CircleMarkSpace, MarkFunction, MarkSpace, circle_flat_sample,
                    circle_gamma_one, circle_sample)
from .sde import (DriverPath, FlowState, SDECoefficients, WienerMarkSpace, euler_solve,
                  flat_sde_sample, gamma_sde, lemma3_moment_check, make_sde_jump_sum, preset,
                  prop4_fields, sample_driver, spanning_matrices)

__version__ = "0.1.0"
