"""Long-horizon optimal control solvers and turnpike diagnostics."""

from .diagnostics import (AdjointBoundReport, AuditRecord, DeviationSeries, ExpFit,
                          IntervalFinding, TurnpikeReport, audit_adjoint_bound,
                          audit_excont_bound, audit_expstab_bound, deviation_series,
                          exceedance_measure, fit_exponential, largest_interval,
                          turnpike_report, w_norm)
from .dynamic import (SolveOptions, adjoint_solve, discrete_objective, forward_solve, make_grid,
                      reduced_gradient, solve_ocp)
from .errors import (ArgumentError, ConvergenceError, DecompositionError, FitUnavailableError,
                     LinearAlgebraError, NotApplicableError, StiffStepError, TurnpikeError)
from .experiment import ExperimentSpec, compare_runs, run_experiment
from .heat import HeatConfig, build_heat_system, discrete_norms, reference_field
from .linalg import InnerProduct
from .models import MODEL_NAMES, Model, get_model, load_model, model_document, save_model
from .ocp_core import (ControlSystem, CostFunctional, RemainderSeries, Trajectory,
                       kkt_residual, linearize_at, remainder_series)
from .spectral import (ObservabilityCertificate, SemigroupBound, SpectralSplit,
                       hautus_detectable, observability_constant, semigroup_bound,
                       spectral_split, transform_adjoint)
from .steady import SteadyOptimum, SteadyOptions, solve_steady

__version__ = "0.1.0"
