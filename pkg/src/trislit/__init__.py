"""Sorkin-parameter simulation and calibration for three beams mixing in a chi(2) crystal."""

from .core import (
    ALL_MASKS,
    TERM_NAMES,
    BeamParams,
    ConversionPowers,
    InvalidTermsError,
    NumericalError,
    SlitMask,
    SorkinTerms,
    TriField,
    TrislitError,
    mask_fields,
    sorkin_kappa,
    total_input_power,
)
from .classical import (
    CouplingTriple,
    CrystalModel,
    PhaseTriple,
    base_coupling,
    classical_term,
    conversion_decomposition,
    coupling_profile,
    field_from_power,
    fringe_period,
    phase_profile,
    solve_coupled_waves,
)
from .scan import ScanConfig, ScanRecord, find_kappa_max, reference_beams, run_static, run_zscan
from .calibrate import FitError, FitResult, PowerSample, fit_eta, fit_gamma, fit_theta

__all__ = [
    "ALL_MASKS", "TERM_NAMES", "BeamParams", "ConversionPowers", "InvalidTermsError", "NumericalError",
    "SlitMask", "SorkinTerms", "TriField", "TrislitError", "mask_fields", "sorkin_kappa", "total_input_power",
    "CouplingTriple", "CrystalModel", "PhaseTriple", "base_coupling", "classical_term",
    "conversion_decomposition", "coupling_profile", "field_from_power", "fringe_period", "phase_profile",
    "solve_coupled_waves", "ScanConfig", "ScanRecord", "find_kappa_max", "reference_beams", "run_static",
    "run_zscan", "FitError", "FitResult", "PowerSample", "fit_eta", "fit_gamma", "fit_theta",
]
