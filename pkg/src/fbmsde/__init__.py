"""Pathwise SDEs driven by fractional Brownian motion.

Exact fBm sampling, Newton-Cotes and symmetric pathwise integrals, ODE flows
and Doss-Sussmann solutions, Euler and Crank-Nicholson schemes, and a Monte
Carlo harness for convergence rates and barrier phenomena.
"""

__version__ = "0.1.0"

from .errors import (CapabilityError, ConfigError, DivergenceError, DomainError, ExperimentError, FbmSdeError,
                     GenerationError, ModelError, NumericalError, PoleError, SearchError, SingularityError,
                     StepSolveError)
from .fbm import FbmPath, HurstIndex, generate_path, generate_paths, increments, path_seed
from .fields import QuadraticSigmaSquared, parse_field
from .flow import (FlowMap, VectorField, doss_map, doss_map_with_derivative, doss_map_y_derivative,
                   expansion_coefficients, flow, flow_inverse, flow_many)
from .harness import (ExperimentConfig, PowerSumStudy, RateEstimate, cn_asymptotic_law_study, cn_barrier_study,
                      euler_limit_check, ito_formula_study, l2_error_curve, power_sum_study)
from .rvint import (NewtonCotesMeasure, SampledPath, m_threshold, n_threshold, nc_functional,
                    newton_cotes_measure, power_sum, symmetric_integral)
from .sde import (SdeProblem, SolutionPath, cn_step, crank_nicholson_scheme, euler_scheme, residual_check,
                  solve_doss_sussmann, solve_zero_drift)

__all__ = [name for name in dir() if not name.startswith("_")]
