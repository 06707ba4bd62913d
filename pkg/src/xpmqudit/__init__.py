"""Hybrid qudit/qubus simulator for entangled-qudit generation with weak cross-Kerr coupling."""

from .elements import MIRRORED_PLAN, CouplingPlan, beamsplitter_5050, bit_flip, phase_shift, photon_phase, xpm_couple
from .hybrid_state import (
    HybridState,
    HybridTerm,
    QuditKet,
    StateError,
    coherent_overlap,
    fidelity,
    inner,
    norm,
    normalize,
    product_state,
    schmidt_coefficients,
)
from .measurement import BranchSet, MeasurementBranch, TailMassError, pnnd_herald, qnd_project, sample_branch
from .protocols import (
    ProtocolParams,
    ProtocolResult,
    QuditSpec,
    apply_loss,
    cascade,
    generate_entangled,
    loss_robustness_report,
)

__version__ = "0.1.0"
