"""Multi-photon stimulated Raman transitions between Zeeman sublevels.

A numerical library for four- and six-photon Raman transfers in the
metastable manifold of a trapped ion: single-photon coupling matrices,
effective multi-photon Rabi frequencies (closed forms and a pathway
generator), six-level time-domain dynamics, ac Stark machinery, decoherence
and scattering error budgets, and least-squares beam calibration.
"""

from .atom import (
    AtomSystem,
    Beam,
    Level,
    Manifold,
    RabiMatrix,
    ca40,
    coupling_coefficient,
    parallel_beam,
    peak_field_amplitude,
    perpendicular_beam,
    polarization_from_fractions,
    rabi_matrix,
    zeeman_splitting,
)
from .calibrate import (
    Dataset,
    FitResult,
    constrain_perp_polarization,
    fit_flop,
    fit_ramsey,
    joint_fit_beams,
)
from .dynamics import (
    PulseEnvelope,
    Trajectory,
    extract_rabi_frequency,
    pi_pulse_metrics,
    propagate,
    pulse_psd,
    rabi_spectroscopy,
)
from .hamiltonian import EffectiveHamiltonian, build_effective_hamiltonian
from .noise import (
    DephasingModel,
    ScatterModel,
    cascade_population_bound,
    decohered_flop,
    pi_pulse_scatter_error,
    ramsey_contrast,
    scale_sensitivity,
    scattering_rate,
    total_fidelity_budget,
)
from .pathways import (
    Pathway,
    RabiExpression,
    RabiMatrixSet,
    enumerate_pathways,
    f_state_correction,
    four_photon_rabi,
    generate_rabi_expression,
    six_photon_rabi,
    two_photon_rabi,
)
from .stark import (
    DressedSplittings,
    ShiftTable,
    dressed_splittings,
    light_shift_second_order,
    numeric_dressed_energies,
    resonance_frequency,
    shift_table,
)

__version__ = "0.1.0"
