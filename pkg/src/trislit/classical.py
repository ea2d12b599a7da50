"""Classical three-wave mixing: coupled-wave equations with Z-dependent couplings.

Signal (mode 1) and idler (mode 2) sit at omega, the pump (mode 3) at 2*omega.
Inside the crystal the fields obey

    dE1/dz = i g1 E3 E2* exp(-i dk z)
    dE2/dz = i g2 E3 E1* exp(-i dk z)
    dE3/dz = i 2 g3 E1 E2 exp(-i dk z)

integrated with a fixed-step RK4 scheme. Translating the crystal by Z along the
scan axis changes both the coupling strength (Gaussian envelope around the
focus) and the phase each beam picks up before the interaction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.constants import c, epsilon_0

from .core import (
    ALL_MASKS,
    ConversionPowers,
    NumericalError,
    SlitMask,
    SorkinTerms,
    TriField,
    BeamParams,
    sorkin_kappa,
    total_input_power,
)

DEFAULT_STEPS = 2000


class SolverError(NumericalError):
    def __init__(self, message, step=None, z=None):
        super().__init__(message)
        self.step = step
        self.z = z


class AsymmetryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CrystalModel:
    length: float = 1e-3
    n: float = 1.611
    d_eff: float = 0.749e-12
    delta_k: float = 0.0
    eta: tuple[float, float, float] = (0.15, 0.15, 0.05)
    interaction_width: float = 5.0e-4
    three_beam_factor: float = 0.3
    theta: float = math.radians(6.2)
    focus_z: float = 0.35e-2

    def __post_init__(self):
        object.__setattr__(self, "eta", tuple(float(e) for e in self.eta))
        if len(self.eta) != 3:
            raise ValueError("eta needs three entries")
        checks = [
            (self.length > 0, "length must be > 0"),
            (self.n > 1, "n must be > 1"),
            # d_eff = 0 switches the nonlinearity off; used for null checks
            (self.d_eff >= 0, "d_eff must be >= 0"),
            (math.isfinite(self.delta_k), "delta_k must be finite"),
            (self.interaction_width > 0, "interaction_width must be > 0"),
            (0 < self.three_beam_factor <= 1, "three_beam_factor must be in (0, 1]"),
            (0 <= self.theta < math.pi / 2, "theta must be in [0, pi/2)"),
            (all(e >= 0 for e in self.eta), "eta entries must be >= 0"),
            (math.isfinite(self.focus_z), "focus_z must be finite"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message)


@dataclass(frozen=True)
class CouplingTriple:
    g1: float
    g2: float
    g3: float

    def __post_init__(self):
        if min(self.g1, self.g2, self.g3) < 0:
            raise ValueError("couplings must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.g1, self.g2, self.g3])


@dataclass(frozen=True)
class PhaseTriple:
    phi1: float
    phi2: float
    phi3: float

    def __post_init__(self):
        if not all(math.isfinite(p) for p in (self.phi1, self.phi2, self.phi3)):
            raise ValueError("phases must be finite")

    @property
    def relative(self) -> float:
        """Phi = phi1 + phi2 - phi3, the only phase a three-beam run responds to."""
        return self.phi1 + self.phi2 - self.phi3

    def as_array(self) -> np.ndarray:
        return np.array([self.phi1, self.phi2, self.phi3])


def _eq17_factor(beam: BeamParams) -> float:
    """|E|^2 per watt of average power for a Gaussian pulse train."""
    return (
        (math.log(2) / math.pi) ** 1.5
        * 16.0
        / (beam.rep_rate * beam.pulse_fwhm * beam.waist_diameter**2 * epsilon_0 * c)
    )


def field_from_power(beam: BeamParams) -> float:
    """Peak field amplitude (V/m) of a pulsed beam of given average power."""
    return math.sqrt(_eq17_factor(beam) * beam.avg_power)


def power_from_field(amplitude, beam: BeamParams):
    """Inverse of :func:`field_from_power`, using ``beam``'s pulse parameters."""
    return np.abs(amplitude) ** 2 / _eq17_factor(beam)


def base_coupling(crystal: CrystalModel, omega1: float) -> float:
    if not omega1 > 0:
        raise ValueError("omega1 must be > 0")
    return 2.0 * crystal.d_eff * omega1 / c


def _coupling_array(z, crystal: CrystalModel, omega1: float, three_beams_open) -> np.ndarray:
    """Couplings shaped (3, len(z)); ``three_beams_open`` may be a bool or a bool array."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    envelope = np.exp(-2.0 * (z - crystal.focus_z) ** 2 / crystal.interaction_width**2)
    scale = np.where(np.asarray(three_beams_open), crystal.three_beam_factor, 1.0)
    g = base_coupling(crystal, omega1)
    eta = np.asarray(crystal.eta)[:, None]
    return eta * g * envelope[None, :] * scale


def coupling_profile(Z: float, crystal: CrystalModel, three_beams_open: bool, omega1: float) -> CouplingTriple:
    g = _coupling_array(Z, crystal, omega1, three_beams_open)[:, 0]
    return CouplingTriple(*map(float, g))


def _phase_array(z, crystal: CrystalModel, wavelengths) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    lam1, lam2, lam3 = wavelengths
    k = 2.0 * math.pi * crystal.n
    cos_t = math.cos(crystal.theta)
    return np.stack([k * z / (lam1 * cos_t), k * z / (lam2 * cos_t), k * z / lam3])


def phase_profile(Z: float, crystal: CrystalModel, wavelengths: Sequence[float]) -> PhaseTriple:
    """Phase each beam acquires when the crystal sits at scan position Z.

    Z = 0 is the scan origin where the relative phase is defined to vanish.
    """
    return PhaseTriple(*map(float, _phase_array(Z, crystal, wavelengths)[:, 0]))


def fringe_period(crystal: CrystalModel, wavelengths: Sequence[float]) -> float:
    """Z distance over which Phi = phi1 + phi2 - phi3 advances by 2*pi."""
    lam1, lam2, lam3 = wavelengths
    rate = crystal.n * abs((1 / lam1 + 1 / lam2) / math.cos(crystal.theta) - 1 / lam3)
    return math.inf if rate == 0 else 1.0 / rate


# --------------------------------------------------------------------------
# integrator
# --------------------------------------------------------------------------

def _rhs(e1, e2, e3, g1, g2, g3, phase):
    if phase is None:
        return (1j * g1 * e3 * np.conj(e2), 1j * g2 * e3 * np.conj(e1), 2j * g3 * e1 * e2)
    return (
        1j * g1 * e3 * np.conj(e2) * phase,
        1j * g2 * e3 * np.conj(e1) * phase,
        2j * g3 * e1 * e2 * phase,
    )


def integrate_batch(initial, couplings, delta_k: float, length: float, steps: int, trajectory: bool = False):
    """RK4 integration of many independent field triples at once.

    ``initial`` has shape (3, M) (or (3,)), ``couplings`` (3, M) or (3,).
    Returns the final fields with the same shape as ``initial``, or the whole
    trajectory of shape (steps + 1, 3, M) when ``trajectory`` is set.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not length > 0:
        raise ValueError("length must be > 0")
    e = np.array(initial, dtype=complex)
    squeeze = e.ndim == 1
    if squeeze:
        e = e[:, None]
    g = np.asarray(couplings, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    g1, g2, g3 = np.broadcast_to(g, (3, e.shape[1]))
    e1, e2, e3 = e[0].copy(), e[1].copy(), e[2].copy()
    h = length / steps
    # overflow is caught by the finiteness check below, not by numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _rk4_loop(e1, e2, e3, g1, g2, g3, delta_k, h, steps, trajectory, squeeze)


def _rk4_loop(e1, e2, e3, g1, g2, g3, delta_k, h, steps, trajectory, squeeze):
    path = [np.stack([e1, e2, e3])] if trajectory else None

    for i in range(steps):
        if delta_k:
            z0 = i * h
            p0, pm, p1 = (np.exp(-1j * delta_k * zz) for zz in (z0, z0 + h / 2, z0 + h))
        else:
            p0 = pm = p1 = None
        k1 = _rhs(e1, e2, e3, g1, g2, g3, p0)
        k2 = _rhs(e1 + 0.5 * h * k1[0], e2 + 0.5 * h * k1[1], e3 + 0.5 * h * k1[2], g1, g2, g3, pm)
        k3 = _rhs(e1 + 0.5 * h * k2[0], e2 + 0.5 * h * k2[1], e3 + 0.5 * h * k2[2], g1, g2, g3, pm)
        k4 = _rhs(e1 + h * k3[0], e2 + h * k3[1], e3 + h * k3[2], g1, g2, g3, p1)
        e1 = e1 + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        e2 = e2 + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        e3 = e3 + (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        if not (np.isfinite(e1).all() and np.isfinite(e2).all() and np.isfinite(e3).all()):
            raise SolverError(
                f"non-finite field after step {i + 1} (z = {(i + 1) * h:.6g} m)",
                step=i + 1,
                z=(i + 1) * h,
            )
        if trajectory:
            path.append(np.stack([e1, e2, e3]))

    if trajectory:
        out = np.stack(path)
        return out[:, :, 0] if squeeze else out
    out = np.stack([e1, e2, e3])
    return out[:, 0] if squeeze else out


def solve_coupled_waves(initial: TriField, couplings: CouplingTriple, delta_k: float, length: float,
                        steps: int = DEFAULT_STEPS) -> TriField:
    out = integrate_batch(initial.as_array(), couplings.as_array(), delta_k, length, steps)
    return TriField.from_array(out)


# --------------------------------------------------------------------------
# configuration terms
# --------------------------------------------------------------------------

def _input_fields(beams: Sequence[BeamParams], scale: float = 1.0) -> np.ndarray:
    return np.array([math.sqrt(_eq17_factor(b) * b.avg_power * scale) for b in beams])


def classical_terms(beams: Sequence[BeamParams], crystal: CrystalModel, z, masks=ALL_MASKS,
                    steps: int = DEFAULT_STEPS, phase_offset=None) -> np.ndarray:
    """Normalized mode-3 output for every (Z, mask) pair.

    Returns an array shaped (len(z), len(masks)). ``phase_offset`` (scalar or
    one value per Z) is added to the pump phase with the opposite sign, i.e.
    it shifts Phi = phi1 + phi2 - phi3 by that amount; the noise emulator uses
    it for phase drift.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    masks = tuple(masks)
    n_z, n_m = len(z), len(masks)
    total = total_input_power(beams)
    if not total > 0:
        raise ValueError("total input power must be > 0")

    amplitudes = _input_fields(beams)
    base_phase = np.broadcast_to(np.array([b.phase for b in beams])[:, None], (3, n_z)).copy()
    if phase_offset is not None:
        base_phase[2] -= np.broadcast_to(np.asarray(phase_offset, dtype=float), (n_z,))
    # the scan phase reaches ~1e5 rad; adding small phases to it would round them
    # at the 1e-11 level, so the two are applied as separate factors
    scan_phase = _phase_array(z, crystal, [b.wavelength for b in beams])
    fields0 = amplitudes[:, None] * np.exp(1j * scan_phase) * np.exp(1j * base_phase)  # (3, n_z)

    open_arr = np.array([m.as_tuple() for m in masks], dtype=float).T  # (3, n_m)
    three_open = np.array([m.n_open == 3 for m in masks])
    initial = (fields0[:, :, None] * open_arr[:, None, :]).reshape(3, n_z * n_m)

    omega1 = beams[0].omega
    g_two = _coupling_array(z, crystal, omega1, False)
    g_three = _coupling_array(z, crystal, omega1, True)
    g = np.where(three_open[None, None, :], g_three[:, :, None], g_two[:, :, None]).reshape(3, n_z * n_m)

    final = integrate_batch(initial, g, crystal.delta_k, crystal.length, steps)
    out_power = power_from_field(final[2], beams[2])
    return (out_power / total).reshape(n_z, n_m)


def classical_term(mask: SlitMask, beams: Sequence[BeamParams], crystal: CrystalModel, Z: float,
                   steps: int = DEFAULT_STEPS) -> float:
    """Mode-3 power for one slit configuration, normalized by the total input power."""
    return float(classical_terms(beams, crystal, [Z], masks=(mask,), steps=steps)[0, 0])


def sorkin_terms_at(beams, crystal: CrystalModel, Z: float, steps: int = DEFAULT_STEPS) -> SorkinTerms:
    return SorkinTerms.from_array(classical_terms(beams, crystal, [Z], steps=steps)[0])


@dataclass
class Decomposition:
    """SFG/DFG split of the Sorkin parameter, with both routes to kappa."""

    powers: ConversionPowers
    total_power: float
    pump_power: float
    terms: SorkinTerms
    kappa_conversion: float
    kappa_terms: float
    asymmetry: float
    warnings: list[str] = field(default_factory=list)


def conversion_decomposition(beams: Sequence[BeamParams], crystal: CrystalModel, Z: float,
                             steps: int = DEFAULT_STEPS, symmetry_tol: float = 1e-6) -> Decomposition:
    """Split the configuration powers into SFG and DFG contributions.

    Two-beam SFG is the mode-3 power with signal and idler open; two-beam DFG
    is the pump deficit with pump plus one omega beam, averaged over the two
    pairings. The primed three-beam SFG is the signal+idler SFG evaluated with
    the three-beam couplings, and the primed DFG closes

        P123 * P_total = P_pump - 2 P'_DFG + P'_SFG.
    """
    total = total_input_power(beams)
    pump = beams[2].avg_power
    row = classical_terms(beams, crystal, [Z], steps=steps)[0]
    terms = SorkinTerms.from_array(row)

    sfg_three = _sfg_with_three_beam_couplings(beams, crystal, Z, steps)
    p_sfg2 = terms.p12 * total
    p_dfg2 = pump - 0.5 * (terms.p13 + terms.p23) * total
    p_sfg3 = sfg_three * total
    p_dfg3 = 0.5 * (pump + p_sfg3 - terms.p123 * total)
    powers = ConversionPowers(p_sfg2, p_dfg2, p_sfg3, p_dfg3)
    kappa_conv = ((p_sfg3 - p_sfg2) - 2.0 * (p_dfg3 - p_dfg2)) / total

    asym = abs(terms.p13 - terms.p23)
    notes = []
    if asym > symmetry_tol:
        message = f"P13 and P23 differ by {asym:.3g} (normalized); DFG power averaged over both pairings"
        notes.append(message)
        warnings.warn(message, AsymmetryWarning, stacklevel=2)
    return Decomposition(powers, total, pump, terms, kappa_conv, sorkin_kappa(terms), asym, notes)


def _sfg_with_three_beam_couplings(beams, crystal, Z, steps):
    omega1 = beams[0].omega
    g = _coupling_array(Z, crystal, omega1, True)[:, 0]
    amplitudes = _input_fields(beams)
    scan_phase = _phase_array(Z, crystal, [b.wavelength for b in beams])[:, 0]
    base_phase = np.array([b.phase for b in beams])
    initial = amplitudes * np.exp(1j * scan_phase) * np.exp(1j * base_phase) * np.array([1.0, 1.0, 0.0])
    final = integrate_batch(initial, g, crystal.delta_k, crystal.length, steps)
    return float(power_from_field(final[2], beams[2])) / total_input_power(beams)
