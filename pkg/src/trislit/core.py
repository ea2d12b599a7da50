"""Domain types shared by every engine: beams, fields, slit masks and Sorkin terms.

All quantities are SI. Powers are watts; the config layer converts milliwatts
before anything reaches these types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

#: canonical term order used by every array of eight configuration values
TERM_NAMES = ("p0", "p1", "p2", "p3", "p12", "p13", "p23", "p123")


class TrislitError(Exception):
    """Base class for errors raised by this package."""


class InvalidTermsError(TrislitError, ValueError):
    pass


class NumericalError(TrislitError):
    """A computation produced unusable numbers (non-finite, divergent, leaking)."""


@dataclass(frozen=True)
class BeamParams:
    """One input beam: wavelength, average power, pulse shape and phase."""

    wavelength: float
    avg_power: float
    pulse_fwhm: float
    rep_rate: float
    waist_diameter: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")
        if not self.avg_power >= 0:
            raise ValueError(f"avg_power must be >= 0, got {self.avg_power}")
        if not self.pulse_fwhm > 0:
            raise ValueError(f"pulse_fwhm must be > 0, got {self.pulse_fwhm}")
        if not self.rep_rate > 0:
            raise ValueError(f"rep_rate must be > 0, got {self.rep_rate}")
        if not self.waist_diameter > 0:
            raise ValueError(f"waist_diameter must be > 0, got {self.waist_diameter}")
        if not math.isfinite(self.phase):
            raise ValueError(f"phase must be finite, got {self.phase}")
        reduced = math.fmod(self.phase, TWO_PI)
        if reduced < 0:
            reduced += TWO_PI
        if reduced >= TWO_PI:  # fmod of a tiny negative can round up to 2*pi
            reduced = 0.0
        object.__setattr__(self, "phase", reduced)

    @property
    def omega(self) -> float:
        from scipy.constants import c

        return TWO_PI * c / self.wavelength


@dataclass(frozen=True)
class TriField:
    """Complex field amplitudes (V/m) of signal, idler and pump."""

    e1: complex
    e2: complex
    e3: complex

    def __post_init__(self):
        for name in ("e1", "e2", "e3"):
            value = complex(getattr(self, name))
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                raise ValueError(f"field component {name} is not finite: {value}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.e1, self.e2, self.e3], dtype=complex)

    @classmethod
    def from_array(cls, values: Sequence[complex]) -> "TriField":
        e1, e2, e3 = values
        return cls(complex(e1), complex(e2), complex(e3))


@dataclass(frozen=True)
class SlitMask:
    open1: bool
    open2: bool
    open3: bool

    @property
    def label(self) -> str:
        digits = "".join(str(k + 1) for k, is_open in enumerate(self.as_tuple()) if is_open)
        return digits or "0"

    @property
    def term_name(self) -> str:
        return "p" + self.label

    @property
    def n_open(self) -> int:
        return sum(self.as_tuple())

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.open1, self.open2, self.open3)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def parse(cls, label: str) -> "SlitMask":
        label = label.strip()
        if label in ("0", "", "∅", "none"):
            return cls(False, False, False)
        if not set(label) <= {"1", "2", "3"} or len(set(label)) != len(label):
            raise ValueError(f"not a slit configuration: {label!r}")
        return cls("1" in label, "2" in label, "3" in label)


#: the eight configurations in canonical order (∅),(1),(2),(3),(12),(13),(23),(123)
ALL_MASKS: tuple[SlitMask, ...] = tuple(
    SlitMask.parse(label) for label in ("0", "1", "2", "3", "12", "13", "23", "123")
)
MASK_INDEX = {mask: i for i, mask in enumerate(ALL_MASKS)}


@dataclass(frozen=True)
class SorkinTerms:
    """Normalized detected power for each of the eight slit configurations."""

    p0: float
    p1: float
    p2: float
    p3: float
    p12: float
    p13: float
    p23: float
    p123: float

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            # NaN is let through so sorkin_kappa can report it as invalid input
            if value < 0:
                raise ValueError(f"{f.name} must be >= 0, got {value}")
            object.__setattr__(self, f.name, value)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in TERM_NAMES])

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "SorkinTerms":
        values = list(values)
        if len(values) != 8:
            raise ValueError(f"expected 8 terms, got {len(values)}")
        return cls(*values)

    @classmethod
    def from_powers(cls, powers: Sequence[float], total_power: float) -> "SorkinTerms":
        """Normalize eight detected powers (canonical order) by the total input power."""
        if not total_power > 0:
            raise ValueError(f"total_power must be > 0, got {total_power}")
        return cls.from_array(np.asarray(powers, dtype=float) / total_power)

    def __getitem__(self, mask: SlitMask) -> float:
        return getattr(self, mask.term_name)


@dataclass(frozen=True)
class ConversionPowers:
    """SFG/DFG powers (W) with two beams open and, primed, with all three open.

    The primed DFG power can come out negative when three-beam interference
    feeds the pump instead of depleting it.
    """

    p_sfg2: float
    p_dfg2: float
    p_sfg3: float
    p_dfg3: float

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} is not finite")


def sorkin_kappa(terms):
    """Sorkin parameter p123 - p12 - p23 - p13 + p1 + p2 + p3 - p0.

    Accepts a ``SorkinTerms`` (returns a float) or an array whose last axis
    holds the eight terms in canonical order (returns an array).
    """
    if isinstance(terms, SorkinTerms):
        values = terms.as_array()
    else:
        values = np.asarray(terms, dtype=float)
        if values.shape[-1:] != (8,):
            raise InvalidTermsError(f"expected 8 terms on the last axis, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise InvalidTermsError("Sorkin terms contain non-finite values")
    p0, p1, p2, p3, p12, p13, p23, p123 = np.moveaxis(values, -1, 0)
    kappa = p123 - p12 - p23 - p13 + p1 + p2 + p3 - p0
    if isinstance(terms, SorkinTerms) or np.ndim(kappa) == 0:
        return float(kappa)
    return kappa


def mask_fields(mask: SlitMask, full: TriField) -> TriField:
    return TriField(
        full.e1 if mask.open1 else 0j,
        full.e2 if mask.open2 else 0j,
        full.e3 if mask.open3 else 0j,
    )


def total_input_power(beams: Sequence[BeamParams]) -> float:
    signal, idler, pump = beams
    return signal.avg_power + idler.avg_power + pump.avg_power
