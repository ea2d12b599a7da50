"""Quantum model: three coherent modes mixing under a chi(2) interaction."""

from .evolution import (
    PUMP_PHASE_REFERENCE,
    QuantumConfig,
    QuantumScan,
    SeriesDivergenceWarning,
    auto_cutoffs,
    evolve_exact,
    evolve_series,
    evolve_state,
    gamma_profile,
    quantum_kappa_scan,
    quantum_term,
    quantum_terms_batch,
)
from .operators import (
    ModeOperatorSet,
    TruncationError,
    build_operators,
    coherent_state,
    product_state,
)

__all__ = [
    "PUMP_PHASE_REFERENCE",
    "ModeOperatorSet",
    "QuantumConfig",
    "QuantumScan",
    "SeriesDivergenceWarning",
    "TruncationError",
    "auto_cutoffs",
    "build_operators",
    "coherent_state",
    "evolve_exact",
    "evolve_series",
    "evolve_state",
    "gamma_profile",
    "product_state",
    "quantum_kappa_scan",
    "quantum_term",
    "quantum_terms_batch",
]
