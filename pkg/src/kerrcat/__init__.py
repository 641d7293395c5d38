"""kerrcat: two coupled Kerr parametric oscillators, end to end.

Simulation of cat-state generation, Bell-state preparation and a
two-qubit gate between cat qubits, plus Wigner-function sampling and
density-matrix reconstruction from the sampled data.
"""

from .fockspace import (
    MHZ,
    EigenCats,
    Operator,
    QuantumState,
    annihilation,
    cahill_glauber_T,
    coherent,
    coherent_cat,
    creation,
    displaced_parity,
    displacement,
    fock,
    identity,
    kpo_eigen_cats,
    number,
    pad_dim,
    parity,
    superposition,
    tensor,
    thermal_state,
    truncate_density,
)
from .model import (
    ConfigurationError,
    DriveSpec,
    ScheduleError,
    SystemParams,
    build_hamiltonian,
    collapse_operators,
    dressed_bell_detunings,
    drives_from_schedule,
)
from .pulses import (
    BELL_AMPLITUDE,
    BELL_LENGTH,
    GATE_AMPLITUDE,
    ISWAP_LENGTH,
    PUMP_DETUNING_OFFSETS,
    SQRT_ISWAP_LENGTH,
    PulseSchedule,
    Segment,
    chirped_detuning,
    preset_schedule,
    sin2_ramp,
    square_pulse,
)
from .evolve import (
    IntegrationDivergedError,
    Trajectory,
    evolve_lindblad,
    evolve_unitary,
    fidelity,
    gate_unitary_reference,
    load_state_txt,
    phase_maximized_bell_fidelity,
    save_state_txt,
)
from .wigner import (
    DATASET_OFFSETS,
    WignerGrid,
    imim_grid,
    joint_parity_from_probs,
    load_dataset,
    measure_grid,
    one_mode_grid,
    one_mode_wigner,
    rere_grid,
    tomography_dataset,
    two_mode_wigner,
    write_dataset,
)
from .tomography import (
    ReconstructionConfig,
    ReconstructionDivergedError,
    ReconstructionResult,
    predict_dataset,
    project_T,
    reconstruct,
    rho_from_T,
    write_report,
)

__version__ = "0.1.0"
