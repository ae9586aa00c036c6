"""oamtomo: simulator and tomography toolkit for azimuthal Wigner distributions.

The package reconstructs the discrete Wigner distribution and the OAM
density matrix of a finite-dimensional photonic state from simulated
ancilla-coupled rotation measurements with wedge post-selection.
"""

from .hilbert import (
    Basis,
    ConversionMatrix,
    DensityMatrix,
    Dimension,
    StateVector,
    ang_state,
    apply_rotation,
    build_conversion_matrix,
    conversion_coefficient,
    inverse_sinc,
    mw_state,
    oam_state,
    wedge_projection,
)
from .protocol import (
    JointState,
    MeasurementRecord,
    MeasurementSetting,
    evolve,
    measurement_plan,
    pauli_expectations,
    port_probabilities,
    prepare_joint,
    run_campaign,
    sample_counts,
    synth_polar_frame,
)
from .recon import (
    ITERATIVE_MLE,
    NEAREST_PSD,
    QualityReport,
    WignerGrid,
    ang_from_wedge,
    marginals,
    oam_from_wigner,
    quality_report,
    restore_physicality,
    run_reconstruction,
    wedge_matrix_from_records,
    wigner_from_ang,
)

__version__ = "0.1.0"
