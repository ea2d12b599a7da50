"""Coherent-state evolution under the three-mode interaction, exact and by series.

Only the interaction part of the Hamiltonian is propagated. The free terms
commute with every number operator, so their effect is a phase on each
amplitude, which is exactly what the input phases already carry. With
hbar = 1 and G = tau * chi the propagator is U = exp(G K) with
K = a1 a2 a3^dag - a1^dag a2^dag a3, and the detected mode-3 number is
<psi| U^dag n3 U |psi>.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import poisson

from ..classical import CrystalModel, PhaseTriple, _phase_array
from ..core import ALL_MASKS, SlitMask, sorkin_kappa
from .blocks import block_structure
from .operators import (
    TruncationError,
    _real_dtype,
    build_operators,
    product_state,
    tail_rule,
)

#: phase added to the pump amplitude so that, as in the classical equations,
#: weak SFG builds up mode 3 as +i * a1 * a2
PUMP_PHASE_REFERENCE = -math.pi / 2

LEAKAGE_TOL = 1e-8
_AUTO_TAIL = 1e-13


class SeriesDivergenceWarning(UserWarning):
    def __init__(self, message, partial_sums=()):
        super().__init__(message)
        self.partial_sums = tuple(partial_sums)


def auto_cutoffs(alpha) -> tuple[int, int, int]:
    """Per-mode cutoffs that hold the populations the interaction can reach.

    Mode 3 can gain at most min(n1, n2) photons and modes 1, 2 at most n3, so
    the cutoff covers a Poisson tail of the enlarged mean below 1e-13.
    """
    n = [abs(a) ** 2 for a in alpha]
    reach = (n[0] + n[2], n[1] + n[2], n[2] + min(n[0], n[1]))
    out = []
    for mean, amp in zip(reach, alpha):
        cutoff = max(2, tail_rule(amp))
        while mean > 0 and poisson.sf(cutoff - 2, mean) > _AUTO_TAIL:
            cutoff += 1
        out.append(cutoff)
    return tuple(out)


@dataclass(frozen=True)
class QuantumConfig:
    alpha: tuple[complex, complex, complex]
    gamma: float
    cutoff: tuple[int, int, int] | int | None = None
    series_order: int = 6

    def __post_init__(self):
        alpha = tuple(complex(a) for a in self.alpha)
        if len(alpha) != 3:
            raise ValueError("alpha needs three amplitudes")
        object.__setattr__(self, "alpha", alpha)
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")
        if not 1 <= self.series_order <= 12:
            raise ValueError("series_order must be in [1, 12]")
        cutoff = self.cutoff
        if cutoff is None:
            cutoff = auto_cutoffs(alpha)
        elif isinstance(cutoff, int):
            cutoff = (cutoff,) * 3
        cutoff = tuple(int(n) for n in cutoff)
        for k, (n, a) in enumerate(zip(cutoff, alpha)):
            if n < max(2, tail_rule(a)):
                raise TruncationError(
                    f"cutoff {n} for mode {k + 1} violates the tail rule for |alpha| = {abs(a):.4g} "
                    f"(need >= {max(2, tail_rule(a))})"
                )
        object.__setattr__(self, "cutoff", cutoff)

    def with_alpha(self, alpha) -> "QuantumConfig":
        return QuantumConfig(tuple(alpha), self.gamma, self.cutoff, self.series_order)

    def with_gamma(self, gamma: float) -> "QuantumConfig":
        return QuantumConfig(self.alpha, gamma, self.cutoff, self.series_order)


@dataclass
class Evolution:
    state: np.ndarray
    numbers: tuple
    norm: float
    leakage: float

    @property
    def n3(self) -> float:
        return self.numbers[2]


@lru_cache(maxsize=16)
def _number_diagonals(cutoffs, precision):
    real = _real_dtype(precision)
    grids = np.meshgrid(*(np.arange(n, dtype=real) for n in cutoffs), indexing="ij")
    edge = np.zeros(grids[0].shape, dtype=bool)
    for g, n in zip(grids, cutoffs):
        edge |= g == n - 1
    return tuple(g.ravel() for g in grids), edge.ravel()


def _initial_leakage(alpha, cutoffs) -> float:
    return float(sum(poisson.sf(n - 1, abs(a) ** 2) for a, n in zip(alpha, cutoffs) if a != 0))


def _measure(state, cutoffs, precision, initial_leak, check=True) -> Evolution:
    numbers, edge = _number_diagonals(cutoffs, precision)
    prob = np.abs(state) ** 2
    norm = np.sqrt(prob.sum())
    leakage = initial_leak + float(prob[edge].sum())
    if check and leakage > LEAKAGE_TOL:
        raise TruncationError(
            f"truncation leakage {leakage:.3g} exceeds {LEAKAGE_TOL:g}; increase the Fock cutoff "
            f"(currently {cutoffs})"
        )
    # kept in the working dtype so extended-precision runs stay extended
    expect = tuple((prob * n).sum() for n in numbers)
    return Evolution(state, expect, norm, leakage)


def evolve_state(config: QuantumConfig, precision: str = "double", check: bool = True) -> Evolution:
    """Propagate the product coherent state exactly and measure it."""
    psi = product_state(config.alpha, config.cutoff, precision)
    if config.gamma:
        blocks = block_structure(config.cutoff, precision)
        psi = blocks.apply(blocks.unitary(config.gamma), psi)
    return _measure(psi, config.cutoff, precision, _initial_leakage(config.alpha, config.cutoff), check)


def evolve_exact(config: QuantumConfig, precision: str = "double") -> float:
    """<n3> after the interaction, by exact matrix exponential.

    Returns a numpy scalar of the working precision (float64 or longdouble).
    """
    return evolve_state(config, precision).n3


# --------------------------------------------------------------------------
# commutator series on truncated matrices
# --------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _series_matrices(cutoffs, order, precision):
    ops = build_operators(cutoffs, precision)
    k = ops.generator
    terms = [ops.number[2]]
    for _ in range(order):
        c = terms[-1]
        nxt = (c @ k - k @ c).tocsr()
        nxt.eliminate_zeros()
        terms.append(nxt)
    return tuple(terms)


def series_coefficients(config: QuantumConfig, order: int, precision: str = "double") -> np.ndarray:
    """<C_m> for m = 0 .. order on the configured coherent state."""
    psi = product_state(config.alpha, config.cutoff, precision)
    mats = _series_matrices(config.cutoff, order, precision)
    return np.array([np.vdot(psi, c @ psi).real for c in mats])


def evolve_series(config: QuantumConfig, order: int | None = None, precision: str = "double") -> float:
    """<n3> from the order-k Heisenberg series sum_m G^m/m! <C_m>."""
    order = config.series_order if order is None else order
    if not 0 <= order <= 12:
        raise ValueError("order must be in [0, 12]")
    real = _real_dtype(precision)
    coeffs = series_coefficients(config, order, precision)
    gamma = real(config.gamma)
    terms = [gamma**m / real(math.factorial(m)) * coeffs[m] for m in range(order + 1)]
    partial = np.cumsum(terms)
    mags = np.abs(terms)
    # odd orders vanish identically for some inputs, so compare two orders back too
    if order >= 2 and mags[-1] > mags[-2] and mags[-1] > mags[-3] and mags[-1] > 0:
        warnings.warn(
            SeriesDivergenceWarning(
                f"series terms still growing at order {order} (gamma = {config.gamma:g})",
                [float(p) for p in partial],
            ),
            stacklevel=2,
        )
    return partial[-1]


# --------------------------------------------------------------------------
# configuration terms and scans
# --------------------------------------------------------------------------

def _masked_alpha(mask: SlitMask, alpha, phases) -> tuple[complex, complex, complex]:
    offsets = (0.0, 0.0, PUMP_PHASE_REFERENCE)
    return tuple(
        a * np.exp(1j * (phi + off)) if is_open else 0j
        for a, phi, off, is_open in zip(alpha, phases, offsets, mask.as_tuple())
    )


def quantum_term(mask: SlitMask, config: QuantumConfig, phases: PhaseTriple, method: str = "exact",
                 precision: str = "double") -> float:
    """Mode-3 photon number for one configuration over the total input photon number."""
    total = sum(abs(a) ** 2 for a in config.alpha)
    alpha = _masked_alpha(mask, config.alpha, phases.as_array())
    if total == 0 or not any(alpha):
        return 0.0
    cfg = config.with_alpha(alpha)
    if method == "exact":
        n3 = evolve_exact(cfg, precision)
    elif method == "series":
        n3 = evolve_series(cfg, precision=precision)
    else:
        raise ValueError(f"method must be 'exact' or 'series', got {method!r}")
    return n3 / total


def quantum_terms_batch(config: QuantumConfig, phases, masks=ALL_MASKS) -> np.ndarray:
    """All configuration terms at one gamma for several phase triples.

    ``phases`` has shape (S, 3). One propagator is built and applied to every
    masked input state. Returns shape (S, len(masks)).
    """
    phases = np.atleast_2d(np.asarray(phases, dtype=float))
    total = sum(abs(a) ** 2 for a in config.alpha)
    masks = tuple(masks)
    out = np.zeros((len(phases), len(masks)))
    if total == 0:
        return out
    states, slots, leaks = [], [], []
    for s, phi in enumerate(phases):
        for m, mask in enumerate(masks):
            alpha = _masked_alpha(mask, config.alpha, phi)
            if any(alpha):
                states.append(product_state(alpha, config.cutoff))
                slots.append((s, m))
                leaks.append(_initial_leakage(alpha, config.cutoff))
    if not states:
        return out
    psi = np.stack(states, axis=1)
    if config.gamma:
        blocks = block_structure(config.cutoff, "double")
        psi = blocks.apply(blocks.unitary(config.gamma), psi)
    for col, (s, m) in enumerate(slots):
        out[s, m] = _measure(psi[:, col], config.cutoff, "double", leaks[col]).n3 / total
    return out


def gamma_profile(z, gamma_peak: float, crystal: CrystalModel) -> np.ndarray:
    """Gaussian Z-dependence of the effective coupling, peaked at the focus."""
    z = np.asarray(z, dtype=float)
    return gamma_peak * np.exp(-2.0 * (z - crystal.focus_z) ** 2 / crystal.interaction_width**2)


@dataclass
class QuantumScan:
    z: np.ndarray
    gamma: np.ndarray
    phases: np.ndarray  # (3, n_z)
    terms: np.ndarray  # (n_z, 8)
    kappa: np.ndarray


def quantum_kappa_scan(z, config: QuantumConfig, crystal: CrystalModel, wavelengths,
                       base_phases=(0.0, 0.0, 0.0)) -> QuantumScan:
    """kappa(Z) with gamma(Z) Gaussian around the focus and Z-scan phases."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    gammas = gamma_profile(z, config.gamma, crystal)
    phases = _phase_array(z, crystal, wavelengths) + np.asarray(base_phases, dtype=float)[:, None]
    terms = np.zeros((len(z), 8))
    for i, (gamma, phi) in enumerate(zip(gammas, phases.T)):
        terms[i] = quantum_terms_batch(config.with_gamma(float(gamma)), phi[None, :])[0]
    return QuantumScan(z, gammas, phases, terms, sorkin_kappa(terms))
