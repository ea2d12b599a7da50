"""Z-scans, static shutter-cycle runs and the kappa-maximum finder.

A scan evaluates all eight slit configurations at every crystal position and
keeps the per-term traces, so the SFG/DFG panels can be recovered alongside
kappa(Z).
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .classical import (
    DEFAULT_STEPS,
    CouplingTriple,
    CrystalModel,
    PhaseTriple,
    _coupling_array,
    _phase_array,
    classical_terms,
    fringe_period,
)
from .core import BeamParams, NumericalError, SorkinTerms, TrislitError, sorkin_kappa
from .quantum.evolution import QuantumConfig, gamma_profile, quantum_terms_batch

ENGINES = ("classical", "quantum")
# grid points per worker task; fixed so the batching, and therefore every
# floating-point result, does not depend on the worker count
CHUNK = 64


class FringeSamplingWarning(UserWarning):
    pass


class ScanError(NumericalError):
    """An engine failure at a specific crystal position."""

    def __init__(self, message, z=None):
        super().__init__(message)
        self.z = z


def reference_beams() -> tuple[BeamParams, BeamParams, BeamParams]:
    """Signal, idler and pump at the powers of the reference experiment."""
    common = dict(pulse_fwhm=140e-15, rep_rate=76e6, waist_diameter=26e-6)
    return (
        BeamParams(800e-9, 0.870, **common),
        BeamParams(800e-9, 0.600, **common),
        BeamParams(400e-9, 0.345, **common),
    )


@dataclass(frozen=True)
class ScanConfig:
    beams: tuple[BeamParams, BeamParams, BeamParams] = field(default_factory=reference_beams)
    crystal: CrystalModel = field(default_factory=CrystalModel)
    z_start: float = 0.0
    z_end: float = 0.6e-2
    z_points: int = 601
    engine: str = "classical"
    quantum: QuantumConfig | None = None
    steps: int = DEFAULT_STEPS

    def __post_init__(self):
        object.__setattr__(self, "beams", tuple(self.beams))
        if len(self.beams) != 3:
            raise ValueError("need three beams")
        if not self.z_start < self.z_end:
            raise ValueError("z_start must be < z_end")
        if self.z_points < 2:
            raise ValueError("z_points must be >= 2")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.engine == "quantum" and self.quantum is None:
            raise ValueError("the quantum engine needs a QuantumConfig")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def wavelengths(self) -> tuple[float, float, float]:
        return tuple(b.wavelength for b in self.beams)

    def grid(self) -> np.ndarray:
        return np.linspace(self.z_start, self.z_end, self.z_points)

    def scaled_powers(self, factor: float) -> "ScanConfig":
        beams = tuple(replace(b, avg_power=b.avg_power * factor) for b in self.beams)
        return replace(self, beams=beams)


@dataclass(frozen=True)
class ScanRecord:
    """One crystal position of a scan.

    ``couplings`` holds the two-beam classical couplings g_i(Z); for the
    quantum engine the effective strength is ``gamma`` instead.
    """

    z: float
    terms: SorkinTerms
    kappa: float
    phase: PhaseTriple
    couplings: CouplingTriple
    gamma: float | None = None


def check_fringe_sampling(config: ScanConfig) -> float:
    """Warn when the grid has fewer than 8 points per fringe; returns points per fringe."""
    period = fringe_period(config.crystal, config.wavelengths)
    step = (config.z_end - config.z_start) / (config.z_points - 1)
    per_fringe = period / step
    if per_fringe < 8:
        warnings.warn(
            f"z step {step:.3g} m gives {per_fringe:.2f} points per fringe period "
            f"({period:.3g} m); at least 8 are needed to resolve the fringes",
            FringeSamplingWarning,
            stacklevel=3,
        )
    return per_fringe


def _base_phases(config: ScanConfig) -> np.ndarray:
    return np.array([b.phase for b in config.beams])


def _terms_chunk(config: ScanConfig, z: np.ndarray) -> np.ndarray:
    """(len(z), 8) normalized terms; failures are pinned to the offending Z."""
    try:
        return _terms_chunk_raw(config, z)
    except NumericalError as exc:
        if len(z) == 1:
            raise ScanError(f"engine failure at Z = {z[0]:.6g} m: {exc}", z=float(z[0])) from exc
    # locate the first failing position
    for zz in z:
        try:
            _terms_chunk_raw(config, np.array([zz]))
        except NumericalError as exc:
            raise ScanError(f"engine failure at Z = {zz:.6g} m: {exc}", z=float(zz)) from exc
    raise ScanError("engine failure in a batch that succeeds point by point")


def _terms_chunk_raw(config: ScanConfig, z: np.ndarray) -> np.ndarray:
    if config.engine == "classical":
        return classical_terms(config.beams, config.crystal, z, steps=config.steps)
    gammas = gamma_profile(z, config.quantum.gamma, config.crystal)
    phases = _phase_array(z, config.crystal, config.wavelengths) + _base_phases(config)[:, None]
    out = np.empty((len(z), 8))
    for i, gamma in enumerate(gammas):
        out[i] = quantum_terms_batch(config.quantum.with_gamma(float(gamma)), phases[:, i][None, :])[0]
    return out


def scan_terms(config: ScanConfig, z=None, workers: int = 1) -> np.ndarray:
    """Normalized terms for every grid point, shape (n_z, 8)."""
    z = config.grid() if z is None else np.atleast_1d(np.asarray(z, dtype=float))
    chunks = [z[i:i + CHUNK] for i in range(0, len(z), CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_terms_chunk, [config] * len(chunks), chunks))
    else:
        parts = [_terms_chunk(config, c) for c in chunks]
    return np.concatenate(parts, axis=0)


def run_zscan(config: ScanConfig, workers: int = 1) -> list[ScanRecord]:
    """Evaluate all eight configurations across the Z grid."""
    check_fringe_sampling(config)
    z = config.grid()
    terms = scan_terms(config, z, workers)
    kappa = sorkin_kappa(terms)
    phases = _phase_array(z, config.crystal, config.wavelengths) + _base_phases(config)[:, None]
    g = _coupling_array(z, config.crystal, config.beams[0].omega, False)
    gammas = gamma_profile(z, config.quantum.gamma, config.crystal) if config.engine == "quantum" else None
    return [
        ScanRecord(
            z=float(z[i]),
            terms=SorkinTerms.from_array(terms[i]),
            kappa=float(kappa[i]),
            phase=PhaseTriple(*map(float, phases[:, i])),
            couplings=CouplingTriple(*map(float, g[:, i])),
            gamma=None if gammas is None else float(gammas[i]),
        )
        for i in range(len(z))
    ]


def records_arrays(records: Sequence[ScanRecord]) -> dict[str, np.ndarray]:
    """Column arrays (z, terms (n, 8), kappa, phases (n, 3), couplings (n, 3))."""
    return {
        "z": np.array([r.z for r in records]),
        "terms": np.array([r.terms.as_array() for r in records]).reshape(-1, 8),
        "kappa": np.array([r.kappa for r in records]),
        "phases": np.array([r.phase.as_array() for r in records]).reshape(-1, 3),
        "couplings": np.array([r.couplings.as_array() for r in records]).reshape(-1, 3),
    }


# --------------------------------------------------------------------------
# static runs
# --------------------------------------------------------------------------

def static_terms(config: ScanConfig, z: float, phase_offsets) -> np.ndarray:
    """Noiseless terms at one Z for each Phi offset; shape (len(offsets), 8)."""
    offsets = np.atleast_1d(np.asarray(phase_offsets, dtype=float))
    zz = np.full(len(offsets), float(z))
    if config.engine == "classical":
        return classical_terms(config.beams, config.crystal, zz, steps=config.steps, phase_offset=offsets)
    phases = _phase_array(zz, config.crystal, config.wavelengths) + _base_phases(config)[:, None]
    phases[2] -= offsets
    gamma = float(gamma_profile(z, config.quantum.gamma, config.crystal))
    return quantum_terms_batch(config.quantum.with_gamma(gamma), phases.T)


def run_static(config: ScanConfig, z: float, cycles: int, noise=None) -> list[SorkinTerms]:
    """Repeat the eight-shutter cycle at a fixed crystal position.

    Without noise each cycle yields one record and all are identical. With a
    :class:`~trislit.lab.noise.NoiseModel` every cycle contributes
    ``noise.readings`` records, one per power reading, so 100 cycles of 500
    readings give 50 000 samples.
    """
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    if noise is None:
        row = static_terms(config, z, [0.0])[0]
        return [SorkinTerms.from_array(row) for _ in range(cycles)]
    samples = static_samples(config, z, cycles, noise)
    return [SorkinTerms.from_array(s) for s in samples]


def static_samples(config: ScanConfig, z: float, cycles: int, noise) -> np.ndarray:
    """Noisy term samples as an array of shape (cycles * readings, 8)."""
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    rng = noise.generator()
    offsets = noise.phase_walk(cycles, rng)
    clean = static_terms(config, z, offsets)  # (cycles, 8)
    total = sum(b.avg_power for b in config.beams)
    return noise.readings_from(clean, total, rng).reshape(-1, 8)


# --------------------------------------------------------------------------
# kappa maximum
# --------------------------------------------------------------------------

def _vertex(x, y):
    """Vertex of the parabola through three points, or None if it opens upward."""
    (x0, x1, x2), (y0, y1, y2) = x, y
    d01, d12 = (y1 - y0) / (x1 - x0), (y2 - y1) / (x2 - x1)
    curv = (d12 - d01) / (x2 - x0)
    if not curv < 0:
        return None
    xv = 0.5 * (x0 + x1) - d01 / (2.0 * curv)
    yv = y1 + d01 * (xv - x1) + curv * (xv - x0) * (xv - x1)
    return xv, yv


def find_kappa_max(scan) -> tuple[float, float]:
    """Largest kappa on the scan, refined by a parabola through the neighbours.

    ``scan`` is a sequence of :class:`ScanRecord` or a pair of arrays (z, kappa).
    Ties resolve to the smallest Z; a maximum at either end of the grid is
    returned unrefined.
    """
    if isinstance(scan, tuple) and len(scan) == 2 and not isinstance(scan[0], ScanRecord):
        z, kappa = (np.asarray(a, dtype=float) for a in scan)
    else:
        z = np.array([r.z for r in scan], dtype=float)
        kappa = np.array([r.kappa for r in scan], dtype=float)
    if z.size == 0:
        raise TrislitError("cannot locate a maximum on an empty scan")
    order = np.argsort(z, kind="stable")
    z, kappa = z[order], kappa[order]
    i = int(np.argmax(kappa))  # first occurrence, i.e. smallest Z
    if 0 < i < len(z) - 1:
        vertex = _vertex(z[i - 1:i + 2], kappa[i - 1:i + 2])
        if vertex is not None and z[i - 1] <= vertex[0] <= z[i + 1]:
            return float(vertex[0]), float(vertex[1])
    return float(z[i]), float(kappa[i])


def max_abs_kappa(records: Sequence[ScanRecord]) -> float:
    return max(abs(r.kappa) for r in records)
