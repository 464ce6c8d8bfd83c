"""pollink: polarization-entanglement link simulation and analysis.

Models wavelength- and time-dependent polarization rotation of deployed
fiber, a probabilistic entangled-pair source with coincidence detection,
count-based Bell-fidelity bounding, and the automated polarization
compensation loop with its uptime ledger.
"""

from ._backend import backend_name
from .polarization import (
    CANONICAL_PROBES,
    MeasurementMode,
    PoincareRotation,
    StokesVector,
    TwoQubitState,
    apply_one_sided,
    bell_phi_plus,
    coincidence_probability,
    fidelity_from_residual_rotation,
    fidelity_to_phi_plus,
    poincare_from_su2,
    rotation_angle,
    su2_from_poincare,
    werner_state,
)
from .channel import (
    DEFAULT_WAVELENGTHS_NM,
    DriftProcess,
    FiberChannel,
    LossBudget,
    PolarimeterModel,
    default_loss_budget,
    estimate_rotation,
    probe_response,
    step_drift,
    synth_dispersive_channel,
    total_loss_db,
    transmission,
)
from .dispersion import (
    DispersionReport,
    PolarimeterSweep,
    analyze_sweep,
    corrected_fidelity_curve,
    load_sweep,
    rotation_per_nm,
    rotation_relative_to_mean,
    rotations_vs_wavelength,
    save_sweep,
    simulate_sweep,
    spectral_weighted_fidelity,
    temporal_fidelity_map,
)
from .source import (
    BOUNDS_MODE_PAIRS,
    CoincidenceCounts,
    DetectorModel,
    MeasurementPlan,
    SourceModel,
    default_detectors,
    fidelity_from_gsi,
    gsi_at_rate,
    pair_rate_from_counts,
    simulate_counts,
    state_at_rate,
)
from .bounds import (
    FidelityBounds,
    bound_uncertainties,
    bounds_from_counts,
    bounds_with_uncertainties,
)
from .apc import (
    APCConfig,
    CompensationCycleResult,
    CompensatorState,
    LongRunResult,
    UptimeLedger,
    classical_fidelity,
    compensation_cycle,
    reference_capture,
    run_long_term,
    uptime,
)
from .errors import ConfigError, EstimationError, PolLinkError, SchemaError

__version__ = "0.1.0"


def backend_info() -> dict:
    """Which kernel implementation is active ("compiled" or "python")."""
    return {"name": backend_name(), "version": __version__}
