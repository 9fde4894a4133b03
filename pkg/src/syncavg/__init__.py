"""Random products of maps: synchronization-on-average diagnostics and exact finite checks."""

from .base import (BaseSystem, SymbolPath, path_at_state, path_from_symbols, sample_path, shift,
                   splice_future, symbol_frequency, truncate_to_future)
from .diagnostics import (ConstantGraph, DiagnosticsReport, GraphEstimate, PullbackGraph, Verdict,
                          basin_average_distance, diameter_sequences, estimate_invariant_graph,
                          finite_strong_sync, finite_sync_limit, invariance_residual,
                          past_dependence_check, property_suite, strong_sync_profile, sync_average,
                          vanishing_attractor_scenario)
from .errors import (ConfigError, DomainError, InvalidBaseError, InvalidInputError, InvalidShiftError,
                     ScenarioPreconditionError)
from .measures import (EmpiricalMeasure, FiniteInvariantMeasureSet, d_functional, empirical_x_marginal,
                       finite_invariant_measures, wasserstein1)
from .product import (FiberFamily, RandomProduct, apply_fiber, swap_identity_system, halving_ifs, image_points,
                      iterate, make_preset, pullback_compose, reversed_forward_compose, skew_step)
from .space import MetricSpace, distance, epsilon_net, finite_diameter

__version__ = "0.1.0"
