"""Lab configuration: named presets, TOML files and command-line overrides.

A configuration is a nested mapping with the sections [beams], [crystal],
[scan], [quantum] and [noise]. Values are given in lab units (mW, nm, fs,
MHz, um, cm, pm/V, degrees) and converted to SI when the simulation objects
are built.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..classical import CrystalModel
from ..core import BeamParams, TrislitError
from ..quantum.evolution import QuantumConfig
from ..quantum.operators import TruncationError
from ..scan import ScanConfig
from .noise import NoiseModel


class ConfigError(TrislitError):
    """Malformed or invalid configuration; the message names the field and line."""


# section -> key -> (default, kind). kind: "float", "int", "str", "vec3" (three floats)
SCHEMA: dict[str, dict[str, tuple[object, str]]] = {
    "beams": {
        "power_mw": ([870.0, 600.0, 345.0], "vec3"),
        "wavelength_nm": ([800.0, 800.0, 400.0], "vec3"),
        "pulse_fs": (140.0, "float"),
        "rep_rate_mhz": (76.0, "float"),
        "waist_um": (26.0, "float"),
        "phase_rad": ([0.0, 0.0, 0.0], "vec3"),
    },
    "crystal": {
        "length_mm": (1.0, "float"),
        "n": (1.611, "float"),
        "deff": (0.749, "float"),  # pm/V
        "delta_k": (0.0, "float"),  # 1/m
        "eta": ([0.15, 0.15, 0.05], "vec3"),
        "width_cm": (0.05, "float"),
        "three_beam_factor": (0.3, "float"),
        "theta_deg": (6.2, "float"),
        "focus_cm": (0.35, "float"),
    },
    "scan": {
        "z_start_cm": (0.0, "float"),
        "z_end_cm": (0.6, "float"),
        "z_points": (601, "int"),
        "engine": ("classical", "str"),
        "steps": (2000, "int"),
        "workers": (1, "int"),
    },
    "quantum": {
        "alpha": ([1.2, 1.0, 0.8], "vec3"),
        "gamma_peak": (0.05, "float"),
        "cutoff": (0, "int"),  # 0 picks cutoffs automatically
        "series_order": (6, "int"),
    },
    "noise": {
        "phase_jitter_rad": (0.05, "float"),
        "power_noise_rel": (0.01, "float"),
        "readings": (500, "int"),
        "background_mw": (0.0, "float"),
        "seed": (20240601, "int"),
        "cycles": (100, "int"),
    },
}


def _defaults() -> dict:
    return {sec: {k: copy.deepcopy(v[0]) for k, v in keys.items()} for sec, keys in SCHEMA.items()}


PRESETS: dict[str, tuple[str, dict]] = {
    "paper": ("reference experiment: 870/600/345 mW, LBO-like crystal, classical engine", {}),
    "quantum-desk": (
        "desk-scale coherent states |alpha| ~ 1 with the exact quantum engine",
        {"scan": {"engine": "quantum"}},
    ),
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return merge(_defaults(), PRESETS[name][1])


def merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for sec, values in update.items():
        out.setdefault(sec, {}).update(copy.deepcopy(values))
    return out


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", stripped)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*=", stripped):
            return lineno
    return None


def _where(source: str | None, text: str | None, section: str, key: str | None) -> str:
    field = f"[{section}]" + (f" {key}" if key else "")
    if text is None:
        return f"{field} (command line)" if source == "<override>" else field
    line = _line_of(text, section, key)
    return f"{source}:{line}: {field}" if line else f"{source}: {field}"


def check_types(cfg: dict, source: str | None = None, text: str | None = None) -> None:
    """Reject unknown sections/keys and values of the wrong shape."""
    for sec, values in cfg.items():
        if sec not in SCHEMA:
            raise ConfigError(f"{_where(source, text, sec, None)}: unknown section; expected one of {list(SCHEMA)}")
        if not isinstance(values, dict):
            raise ConfigError(f"{_where(source, text, sec, None)}: expected a table")
        for key, value in values.items():
            if key not in SCHEMA[sec]:
                raise ConfigError(
                    f"{_where(source, text, sec, key)}: unknown key; expected one of {list(SCHEMA[sec])}"
                )
            kind = SCHEMA[sec][key][1]
            ok = {
                "float": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
                "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
                "str": lambda v: isinstance(v, str),
                "vec3": lambda v: isinstance(v, list) and len(v) == 3
                and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v),
            }[kind](value)
            if not ok:
                expected = {"float": "a number", "int": "an integer", "str": "a string",
                            "vec3": "a list of three numbers"}[kind]
                raise ConfigError(f"{_where(source, text, sec, key)}: expected {expected}, got {value!r}")


def load_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    check_types(data, str(path), text)
    return data


def parse_value(raw: str):
    """Interpret an override value as a TOML literal; bare comma lists become arrays."""
    candidates = [raw]
    if "," in raw and not raw.strip().startswith("["):
        candidates.insert(0, f"[{raw}]")
    for cand in candidates:
        try:
            return tomllib.loads(f"v = {cand}")["v"]
        except tomllib.TOMLDecodeError:
            continue
    return raw


def apply_overrides(cfg: dict, overrides: list[tuple[str, str]]) -> dict:
    """Apply ("section.key", raw value) pairs, converting ints to floats where needed."""
    out = copy.deepcopy(cfg)
    for dotted, raw in overrides:
        if "." not in dotted:
            raise ConfigError(f"override --{dotted}: expected --section.key")
        sec, key = dotted.split(".", 1)
        value = parse_value(raw) if isinstance(raw, str) else raw
        check_types({sec: {key: value}}, "<override>", None)
        out.setdefault(sec, {})[key] = value
    return out


def config_hash(cfg: dict, extra: dict | None = None) -> str:
    payload = {"config": normalized(cfg), "extra": extra or {}}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def normalized(cfg: dict) -> dict:
    """All keys present with numbers as floats where the schema says float."""
    out = merge(_defaults(), cfg)
    for sec, keys in SCHEMA.items():
        for key, (_, kind) in keys.items():
            if kind == "float":
                out[sec][key] = float(out[sec][key])
            elif kind == "vec3":
                out[sec][key] = [float(x) for x in out[sec][key]]
    return out


@dataclass(frozen=True)
class LabConfig:
    raw: dict
    scan: ScanConfig
    noise: NoiseModel
    cycles: int
    workers: int

    @property
    def beams(self):
        return self.scan.beams

    @property
    def crystal(self) -> CrystalModel:
        return self.scan.crystal

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def build(cfg: dict) -> LabConfig:
    """Turn a checked nested mapping into simulation objects, in SI units."""
    check_types(cfg)
    c = normalized(cfg)
    b, k, s, q, nz = (c[x] for x in ("beams", "crystal", "scan", "quantum", "noise"))

    def guard(section, fn):
        try:
            return fn()
        except (ValueError, TruncationError) as exc:
            raise ConfigError(f"[{section}]: {exc}") from exc

    beams = guard("beams", lambda: tuple(
        BeamParams(
            wavelength=b["wavelength_nm"][i] * 1e-9,
            avg_power=b["power_mw"][i] * 1e-3,
            pulse_fwhm=b["pulse_fs"] * 1e-15,
            rep_rate=b["rep_rate_mhz"] * 1e6,
            waist_diameter=b["waist_um"] * 1e-6,
            phase=b["phase_rad"][i],
        )
        for i in range(3)
    ))
    crystal = guard("crystal", lambda: CrystalModel(
        length=k["length_mm"] * 1e-3,
        n=k["n"],
        d_eff=k["deff"] * 1e-12,
        delta_k=k["delta_k"],
        eta=tuple(k["eta"]),
        interaction_width=k["width_cm"] * 1e-2,
        three_beam_factor=k["three_beam_factor"],
        theta=math.radians(k["theta_deg"]),
        focus_z=k["focus_cm"] * 1e-2,
    ))
    quantum = guard("quantum", lambda: QuantumConfig(
        alpha=tuple(q["alpha"]),
        gamma=q["gamma_peak"],
        cutoff=None if q["cutoff"] == 0 else q["cutoff"],
        series_order=q["series_order"],
    ))
    if s["workers"] < 1:
        raise ConfigError("[scan] workers: must be >= 1")
    scan = guard("scan", lambda: ScanConfig(
        beams=beams,
        crystal=crystal,
        z_start=s["z_start_cm"] * 1e-2,
        z_end=s["z_end_cm"] * 1e-2,
        z_points=s["z_points"],
        engine=s["engine"],
        quantum=quantum,
        steps=s["steps"],
    ))
    noise = guard("noise", lambda: NoiseModel(
        phase_jitter_sigma=nz["phase_jitter_rad"],
        power_noise_rel=nz["power_noise_rel"],
        readings_per_measurement=nz["readings"],
        background_power=nz["background_mw"] * 1e-3,
        seed=nz["seed"],
    ))
    if nz["cycles"] < 1:
        raise ConfigError("[noise] cycles: must be >= 1")
    return LabConfig(c, scan, noise, nz["cycles"], s["workers"])


def dump_toml(cfg: dict) -> str:
    """Serialize a configuration mapping back to TOML text."""
    lines = []
    for sec in SCHEMA:
        if sec not in cfg:
            continue
        lines.append(f"[{sec}]")
        for key, value in cfg[sec].items():
            lines.append(f"{key} = {json.dumps(value)}")
        lines.append("")
    return "\n".join(lines)
