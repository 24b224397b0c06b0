"""eomtrace: single photons in modulator-equipped interferometer networks.

Simulates the joint path-frequency state of one photon crossing a netlist of
beam splitters, phase shifters, electro-optic phase modulators and blocks;
renders detection-port spectra behind a tunable etalon; extracts operational
trajectories from sideband peaks; and independently predicts trajectories
and weak values from forward/backward (two-state) propagation.
"""

from .state import (
    CARRIER,
    CARRIER_GHZ,
    PhotonState,
    SidebandVector,
    SpectralDensity,
    SpectralEnvelope,
    carrier_state,
    detuning_grid,
    norm_squared,
    render_spectrum,
    total_shift,
)
from .elements import (
    BeamSplitterSpec,
    BlockSpec,
    EomSpec,
    EtalonSpec,
    PhaseShifterSpec,
    apply_beam_splitter,
    apply_block,
    apply_eom,
    apply_phase,
    eom_coefficients,
    etalon_transmission,
)
from .netlist import (
    Circuit,
    Diagnostic,
    ParseResult,
    circuit_from_parts,
    format_netlist,
    parse_netlist,
    propagate,
    propagate_full,
    validate_circuit,
)
from .tsvf import (
    ProjectorSpec,
    ScalingFit,
    TwoStateVector,
    WeakValueReport,
    tsvf_trajectory,
    two_state,
    weak_value,
    weak_value_scaling,
)
from .experiments import (
    REFERENCE_OMEGAS,
    PeakReport,
    ScanConfig,
    SpectralScan,
    build_reference,
    detect_peaks,
    infer_weak_value,
    phase_sweep,
    reference_projectors,
    reference_trajectory_eoms,
    reference_weak_value_family,
    reference_weak_values,
    run_spectrum_scan,
    visibility,
)
from .oracle import OracleError, TimeDomainConfig, compare, time_domain_propagate
from .scenario import Scenario, format_scenario, parse_scenario

__version__ = "0.1.0"
