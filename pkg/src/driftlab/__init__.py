"""driftlab: numerical laboratory for gradient-contraction properties of
dissipative drift-diffusion operators on truncated box grids."""

from .discretize import (Diffusion, Grid, Lyapunov, build_grid,
                         diffusion_bounds, discrete_gradient,
                         suggest_truncation)
from .errors import (ConvergenceError, DomainError, DriftLabError,
                     InvalidInput, LyapunovFailure, SolverError,
                     StationarityError, SupportError)
from .fields import (CompositeField, DissipativityReport, LinearField,
                     MollifiedField, Mollifier, NegSignField,
                     PolynomialGradientField, TabulatedField, VectorField,
                     YosidaField, check_dissipative, mollify, regularized_drift,
                     sample_pairs, standard_mollifier, yosida_field,
                     yosida_resolve)
from .generator import DiscreteGenerator, assemble_generator, generator_to_coo_csv
from .measure import (DiscreteDensity, DualDriftResult, dual_drift,
                      duality_residual, stationary_density)
from .solver import (CoefficientSchedule, ParabolicResult, SolveReport,
                     parabolic_solve, resolvent_apply, schedule_from_rates,
                     semigroup_apply, semigroup_trajectory, time_sampler)
from .verify import (BoundCheckReport, OracleSpec, check_parabolic_sup_bound,
                     check_resolvent_gradient_bound,
                     check_semigroup_gradient_bound, check_sup_resolvent_bound,
                     check_sup_semigroup_bound, lipschitz_seminorm,
                     observed_orders, ou_oracle, pointwise_tolerance,
                     test_function)

__version__ = "0.1.0"
