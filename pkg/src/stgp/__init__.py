"""Dynamical state-space modeling, filtering and change monitoring for
convolution-generated spatio-temporal Gaussian processes."""

from .core import (DataFormatError, EstimationError, GridSizeError, GridSpec,
                   NumericalError, PhysicalParams, SpaceTimeCube, StgpError,
                   make_grid)
from .basis import (BasisMatrix, ModeRates, WavenumberSets, basis_matrix,
                    mode_rates, mode_rates_omega, noise_weight_table,
                    periodized_noise_cov, process_noise_weights, wavenumber_sets)
from .covariance import (QuadratureConfig, SpectrumQuery, kernel_transfer,
                         noise_covariance, noise_spectrum, power_spectrum,
                         space_time_kernel, spectral_factor, stationary_covariance)
from .dynamics import (FieldPair, NoiseMoments, StateSpaceModel, build_model,
                       exact_noise_block, noise_moments, rank1_noise_block,
                       rank1_offdiag_gap, transition_block,
                       transition_block_complex)
from .kalman import (FilterResult, ObsNoiseSpec, SmootherResult, kalman_filter,
                     modal_amplitude, reconstruct_fields, rts_smoother)
from .baseline import build_baseline, mode_propagator
from .simulate import (ScenarioSpec, SourceSpec, default_sources,
                       sample_grf_exponential, simulate_spde,
                       simulate_statespace, source_field,
                       spde_equivalent_params)
from .detect import (AlarmReport, DetectionConfig, alpha_traces, beta_traces,
                     default_watch_set, detect)
from .estimation import (FitResult, FitTemplate, OptimizerConfig, adam_step,
                         fit, neg_loglik, neg_loglik_grad)
from .gridfile import read_cube, write_cube

__version__ = "0.1.0"
