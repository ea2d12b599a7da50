"""Synthetic calibration datasets generated from the models with known truths.

The shipped copies live in ``trislit/data`` and can be rebuilt byte for byte
with ``python3 -m trislit.lab.fixtures <dir>``.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.constants import c, h

from ..calibrate import PowerSample, photons_per_pulse, sfg_photons
from ..classical import CrystalModel, classical_terms
from ..core import SlitMask
from ..scan import reference_beams
from .io import write_samples

GAMMA_TRUTH = 1.05e-6
ETA_TRUTH = (0.15, 0.15, 0.05)
DELTA_TRUTH = 5.0e-4
ETA_Z = np.linspace(0.2e-2, 0.5e-2, 61)

FILES = ("gamma_samples.csv", "eta_13.csv", "eta_23.csv", "eta_12.csv", "truth.json")


def gamma_samples(gamma: float = GAMMA_TRUTH, beams=None) -> list[PowerSample]:
    """Signal/idler power pairs on a fixed grid and the model's SFG output."""
    beams = reference_beams() if beams is None else beams
    p1 = np.repeat(np.linspace(0.2, 0.9, 5), 4)
    p2 = np.tile(np.linspace(0.15, 0.6, 4), 5)
    n1 = photons_per_pulse(p1, beams[0].wavelength, beams[0].rep_rate)
    n2 = photons_per_pulse(p2, beams[1].wavelength, beams[1].rep_rate)
    n3 = sfg_photons(n1, n2, gamma)
    pout = n3 * beams[2].rep_rate * h * c / beams[2].wavelength
    return [PowerSample(a, b, 0.0, o) for a, b, o in zip(p1, p2, pout)]


def eta_samples(label: str, z=ETA_Z, beams=None, crystal: CrystalModel | None = None,
                steps: int = 2000) -> list[PowerSample]:
    """Two-beam z-scan of the mode-3 power for configuration 13, 23 or 12."""
    beams = reference_beams() if beams is None else beams
    crystal = CrystalModel() if crystal is None else crystal
    mask = SlitMask.parse(label)
    total = sum(b.avg_power for b in beams)
    pout = classical_terms(beams, crystal, z, masks=(mask,), steps=steps)[:, 0] * total
    powers = [b.avg_power if is_open else 0.0 for b, is_open in zip(beams, mask.as_tuple())]
    return [PowerSample(*powers, p, zz) for p, zz in zip(pout, z)]


def generate(directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    crystal = replace(CrystalModel(), eta=ETA_TRUTH, interaction_width=DELTA_TRUTH)
    out = [write_samples(directory / "gamma_samples.csv", gamma_samples(),
                         [f"synthetic SFG samples, gamma = {GAMMA_TRUTH!r}"])]
    for label in ("13", "23", "12"):
        out.append(write_samples(directory / f"eta_{label}.csv", eta_samples(label, crystal=crystal),
                                 [f"synthetic two-beam z-scan, configuration {label}"]))
    truth = {"gamma": GAMMA_TRUTH, "eta": list(ETA_TRUTH), "delta_m": DELTA_TRUTH}
    path = directory / "truth.json"
    path.write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    out.append(path)
    return out


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("trislit") / "data" / name))


def truth() -> dict:
    return json.loads(fixture_path("truth.json").read_text())


if __name__ == "__main__":
    for p in generate(sys.argv[1] if len(sys.argv) > 1 else "."):
        print(p)
