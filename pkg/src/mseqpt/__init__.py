"""Selective quantum process tomography from product-operator expectation values."""
from .channels import (
    GateSpec,
    InvalidChannelError,
    QuantumChannel,
    amplitude_damping,
    apply,
    depolarizing,
    kraus_to_chi,
    make_gate,
    phase_damping,
    unitary_to_chi,
)
from .designs import DesignSet, build_mub_design, state_coefficients, verify_2design
from .estimators import (
    ChiEstimate,
    compute_coefficients,
    mseqpt_element,
    mseqpt_full,
    seqpt_element,
    standard_qpt,
)
from .measurement import MeasurementBackend, ResourceLedger, build_observable_map
from .operators import OperatorBasis, build_pauli_basis, expand_in_basis
from .reporting import fidelity, project_physical

__version__ = "0.1.0"
