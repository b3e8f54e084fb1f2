"""Superposition masking for reversible arithmetic, on an exact sparse simulator."""

from qmask.errors import MaskingError
from qmask.protocols import (
    PROTOCOLS,
    InputSpec,
    ProtocolResult,
    masked_divmod,
    masked_hom_inverse,
    masked_kth_root,
    masked_mod_inverse,
    masked_mod_inverse_composite,
    masked_mod_inverse_zero_safe,
    masked_sparse_solve,
    masked_sqrt,
)
from qmask.state import MeasurementRecord, SparseState, fidelity

__all__ = [
    "PROTOCOLS",
    "InputSpec",
    "MaskingError",
    "MeasurementRecord",
    "ProtocolResult",
    "SparseState",
    "fidelity",
    "masked_divmod",
    "masked_hom_inverse",
    "masked_kth_root",
    "masked_mod_inverse",
    "masked_mod_inverse_composite",
    "masked_mod_inverse_zero_safe",
    "masked_sparse_solve",
    "masked_sqrt",
]
