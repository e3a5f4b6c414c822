"""Clock-transition search and spin-bath coherence simulation."""

__version__ = "0.1.0"

from .spincore import (
    CentralSpinModel,
    EigenSystem,
    SpinSpecies,
    TransitionRecord,
    build_central_hamiltonian,
    eigensystem,
    eigensystem_at,
    spin_operators,
    state_labels,
    transition_table,
)
from .clockfinder import (
    ClockPoint,
    NoiseModel,
    TransitionSensitivity,
    angular_scan,
    calibrate_sigma,
    field_scan,
    find_clock_points,
    rapid_t2,
    track_states,
    transition_curvature,
    transition_gradient,
)
from .lattice import (
    BathConfiguration,
    BathSpin,
    CrystalCell,
    O17,
    BATH_ELECTRON,
    dipolar_tensor,
    generate_supercell,
    sample_bath,
    thermal_polarization,
)
from .cce import (
    CCEConfig,
    CoherenceCurve,
    PulseSequence,
    cce_coherence,
    cluster_coherence,
    ensemble_run,
    enumerate_clusters,
    exact_reference,
    factorized_coherence,
)
from .analysis import (
    FitResult,
    HistogramGrid,
    ScalingResult,
    aggregate_histogram,
    fit_power_law,
    fit_stretched_exponential,
)
