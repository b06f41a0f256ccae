"""Optimal investment, underwriting and consumption for an insurer with CRRA
preferences, with Monte Carlo verification of optimality."""

from .claims import ClaimDistribution, Gamma, Pareto, PointMass, TruncationMode
from .duality import (DualControls, OptimalStrategy, SolveReport, SolverOptions, dual_controls,
                      dual_rate_and_x1, eval_h, existence_margin, optimal_pi, solve_kappa)
from .errors import (AlmError, DomainError, InvalidParams, NoRootInRange, NumericalFailure,
                     PositivityBreach, QuadratureFailure)
from .model import LiabilityParams, MarketParams, ModelConfig, Preferences, example_config, validate
from .simulate import McEstimate, PathEnsemble, Policy, SimulationSpec, simulate_deflator, simulate_wealth
from .verify import PerturbationGrid, VerificationReport, run_verification

__version__ = "0.1.0"
