"""Transfer-matrix spectral toolkit for Schrödinger operators with measure
potentials built over substitution subshifts."""

from .errors import (ConfigError, InsufficientWindowError, NumericError,
                     QuasispecError, TruncationError, WindowError)
from .measures import (DecompositionAlphabet, DensitySegment, PieceMeasure,
                       WindowMeasure, check_sfdp, concatenate, reflect,
                       total_variation, translate)
from .subshift import (CylinderStats, Substitution, SubshiftWord,
                       boshernitzan_profile, cylinder_frequencies,
                       factor_complexity, iterate_substitution,
                       letter_frequencies, minimal_period,
                       periodic_approximant, substitution_prefix, two_sided)
from .suspension import (HullSample, SuspensionModel, boundary_times,
                         build_omega, hull_grid, hull_sample)
from .propagator import (SolutionState, TransferMatrix, discrete_cocycle,
                         step_atom, step_interval, transfer_matrix)
from .lyapunov import (gamma_translation_bound, lyapunov_curve,
                       lyapunov_estimate, semi_uniform_check,
                       semi_uniform_harness, splitting_consistency,
                       splitting_detect,
                       uniformity_scan)
from .spectral import (BandSet, ac_diagnostic, approximant_cascade,
                       box_dimension, floquet_bands, gamma_zero_scan,
                       m_function, period_traces, trace_map_fibonacci,
                       weyl_disk)

__version__ = "0.1.0"
