"""Heralded single-phonon preparation, storage, and readout in a pulsed
optomechanical cavity, computed three independent ways.

The package simulates the protocol - an upper-sideband write pulse whose
scattered photon heralds a stored phonon, a dark storage interval, and a
lower-sideband readout pulse that maps the phonon back onto light - and
evaluates the conditional photon statistics of the emitted field:

* :mod:`~phonon_herald.analytic` - closed forms in the adiabatic limit;
* :mod:`~phonon_herald.covariance` / :mod:`~phonon_herald.correlations` -
  the full linearized two-mode model via Gaussian moment propagation;
* :mod:`~phonon_herald.fock` - a brute-force truncated number-basis
  oracle used to certify the other two on small instances.

The ``phonon-herald`` command line (:mod:`~phonon_herald.cli`) turns these
into reproducible CSV tables.
"""

from .analytic import (
    ConditionalPhononState,
    CoolingSteadyState,
    DlczEstimate,
    conditional_state,
    conversion_efficiency,
    cooling_steady_state,
    dlcz_estimate,
    dlcz_gain_for_fidelity,
    g2_conditional_zero,
    g2_conditional_zero_threshold_detector,
    herald_click_probability,
    herald_rate,
    rabi_frequency,
    rabi_threshold_photon_number,
    write_state_amplitudes,
)
from .correlations import (
    CoherenceEstimate,
    CorrelationKind,
    CorrelationRecord,
    coherence_time,
    conditional_g1,
    conditional_g2,
    conditional_photon_number,
    gaussian_moment,
    herald_intensity,
)
from .covariance import (
    CovarianceBlock,
    CovarianceSet,
    DriftMatrix,
    EigenSystem,
    Op,
    build_drift,
    eigensystem,
    evolve_schedule,
    noise_integral,
    noise_matrix,
    propagator,
    thermal_block,
)
from .exceptions import (
    CoherenceNotResolved,
    ConditioningError,
    ConfigError,
    InvalidScheduleError,
    NumericalError,
    PhononHeraldError,
    ThresholdSeriesDiverged,
    TruncationError,
)
from .params import (
    DriveSchedule,
    PulseSegment,
    RegimeReport,
    SegmentKind,
    Sideband,
    SystemParams,
    coupling_pair,
    default_params,
    effective_coupling,
    photon_number_to_power,
    power_to_photon_number,
    protocol_schedule,
    tilde_gain,
    validate_regime,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # params
    "SystemParams",
    "PulseSegment",
    "DriveSchedule",
    "SegmentKind",
    "Sideband",
    "RegimeReport",
    "default_params",
    "protocol_schedule",
    "coupling_pair",
    "effective_coupling",
    "tilde_gain",
    "power_to_photon_number",
    "photon_number_to_power",
    "validate_regime",
    # analytic
    "ConditionalPhononState",
    "conditional_state",
    "g2_conditional_zero",
    "g2_conditional_zero_threshold_detector",
    "herald_rate",
    "herald_click_probability",
    "write_state_amplitudes",
    "conversion_efficiency",
    "CoolingSteadyState",
    "cooling_steady_state",
    "rabi_frequency",
    "rabi_threshold_photon_number",
    "DlczEstimate",
    "dlcz_estimate",
    "dlcz_gain_for_fidelity",
    # covariance
    "Op",
    "DriftMatrix",
    "EigenSystem",
    "CovarianceBlock",
    "CovarianceSet",
    "build_drift",
    "eigensystem",
    "propagator",
    "noise_integral",
    "noise_matrix",
    "thermal_block",
    "evolve_schedule",
    # correlations
    "CorrelationKind",
    "CorrelationRecord",
    "CoherenceEstimate",
    "gaussian_moment",
    "herald_intensity",
    "conditional_photon_number",
    "conditional_g1",
    "conditional_g2",
    "coherence_time",
    # exceptions
    "PhononHeraldError",
    "ConfigError",
    "InvalidScheduleError",
    "NumericalError",
    "ThresholdSeriesDiverged",
    "ConditioningError",
    "CoherenceNotResolved",
    "TruncationError",
]
