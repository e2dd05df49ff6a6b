"""Twin-beam far-field simulator and spatial correlation toolkit.

Simulates stochastic signal/idler frames from high-gain parametric
down-conversion (Wigner-representation split-step model) and computes the
full suite of spatial quantum-correlation estimators: difference variance
against the shot-noise level, cross-correlation degree and coherence
length, degeneracy-factor fits, Cauchy-Schwarz margins, and the binning /
symmetry-misalignment sweeps that map the quantum-to-classical
transition.
"""

from .config import AnalysisSettings, IOSettings, RunConfig, load_config
from .detector import (DetectorConfig, DetectorFrame, add_background,
                       apply_loss, bin_frame, cells_per_pixel, far_field,
                       integrate_pixels, poisson_frame)
from .framestore import (ChecksumError, FrameFormatError, TruncatedFileError,
                         VersionError, import_csv, read_frames, write_frames)
from .lattice import (ComplexField, ConfigError, GridSpec, ShotSeed,
                      fft_backward, fft_forward, make_grid, sample_vacuum)
from .phasematch import (CrystalConfig, DispersionSet, RingGeometry,
                         dispersion_coeffs, matched_crystal,
                         matching_angle_deg, phase_mismatch, ring_geometry)
from .pipeline import simulate_frames, shot_seed
from .propagator import (NumericalDivergenceError, PumpConfig, ShotResult,
                         plane_wave_gain, propagate_shot, pump_field)
from .stats import (CauchySchwarzResult, CorrelationProfile,
                    CorrelationReport, DegeneracyFit, EstimatorError,
                    PixelPairEnsemble, SweepTable, analyze_pair,
                    background_correct, build_ensemble, cauchy_schwarz_check,
                    coherence_length, correlation_degree, difference_variance,
                    ensemble_moments, fit_degeneracy, gamma_zero,
                    quantum_bound, snl_normalize, sweep_binning,
                    sweep_misalignment, thermal_m_direct)

__version__ = "0.1.0"
