"""Flat-file outputs: CSV datasets, run manifests and SVG plots."""

from __future__ import annotations

import csv
import json
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..calibrate import PowerSample

OUTPUT_ENV = "TRISLIT_OUTPUT_DIR"
ZSCAN_COLUMNS = (
    "z_m", "p0", "p1", "p2", "p3", "p12", "p13", "p23", "p123", "kappa",
    "phi1", "phi2", "phi3", "g1", "g2", "g3",
)
SAMPLE_COLUMNS = ("p1_w", "p2_w", "p3_w", "pout_w")


class DataFormatError(ValueError):
    """An input data file lacks a required column or holds unusable values."""


def version_tag() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "trislit-out"))


def fmt(x) -> str:
    """Shortest round-trip representation of a float."""
    return repr(float(x))


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence], header: Sequence[str] = ()) -> Path:
    """CSV with ``# `` comment lines first, then a header row and the data."""
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.lstrip().startswith("#") and ln.strip()]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataFormatError(f"{path}: no header row") from None
    return header, [row for row in reader]


def read_columns(path: Path, required: Sequence[str], optional: Sequence[str] = ()) -> dict[str, np.ndarray]:
    header, rows = read_csv(path)
    missing = [c for c in required if c not in header]
    if missing:
        raise DataFormatError(f"{path}: missing column {missing[0]!r} (found {header})")
    out = {}
    for name in list(required) + [c for c in optional if c in header]:
        j = header.index(name)
        try:
            out[name] = np.array([float(r[j]) for r in rows])
        except (ValueError, IndexError) as exc:
            raise DataFormatError(f"{path}: column {name!r} has a non-numeric or missing value") from exc
    return out


def read_samples(path: Path) -> list[PowerSample]:
    """Fit samples from the ``p1_w,p2_w,p3_w,pout_w[,z_m]`` format."""
    cols = read_columns(path, SAMPLE_COLUMNS, optional=("z_m",))
    z = cols.get("z_m")
    try:
        return [
            PowerSample(cols["p1_w"][i], cols["p2_w"][i], cols["p3_w"][i], cols["pout_w"][i],
                        None if z is None else z[i])
            for i in range(len(cols["p1_w"]))
        ]
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def write_samples(path: Path, samples: Sequence[PowerSample], header: Sequence[str] = ()) -> Path:
    with_z = any(s.z is not None for s in samples)
    columns = SAMPLE_COLUMNS + (("z_m",) if with_z else ())
    rows = [(s.p1, s.p2, s.p3, s.pout) + ((s.z,) if with_z else ()) for s in samples]
    return write_csv(path, columns, rows, header)


# --------------------------------------------------------------------------
# run directories and manifests
# --------------------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config_hash: str
    engine: str
    version: str
    started: str
    finished: str = ""
    outputs: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


class RunDirectory:
    """Output directory of one run, holding an exclusive lock while it is written.

    Files are registered as they are produced; on failure every registered
    file is removed so no partial dataset survives.
    """

    LOCK = ".trislit.lock"
    MANIFEST = "manifest.json"

    def __init__(self, path: Path, command: str, config_hash: str, engine: str):
        self.path = Path(path)
        self.manifest = RunManifest(command, config_hash, engine, version_tag(), _now())
        self._lock_fd = None

    def file(self, name: str) -> Path:
        target = self.path / name
        self.manifest.outputs.append(name)
        return target

    @contextmanager
    def session(self):
        self.path.mkdir(parents=True, exist_ok=True)
        lock = self.path / self.LOCK
        self._lock_fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        try:
            yield self
        except BaseException:
            for name in self.manifest.outputs:
                try:
                    (self.path / name).unlink()
                except FileNotFoundError:
                    pass
            raise
        else:
            self.manifest.finished = _now()
            (self.path / self.MANIFEST).write_text(self.manifest.to_json())
        finally:
            os.close(self._lock_fd)
            lock.unlink(missing_ok=True)


# --------------------------------------------------------------------------
# plots
# --------------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "trislit"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt

    plt.close(fig)
    return path


def plot_kappa(path: Path, z_cm, kappa, title: str = "") -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(z_cm, kappa, lw=0.8)
    ax.axhline(0.0, color="0.6", lw=0.5)
    ax.set_xlabel("Z (cm)")
    ax.set_ylabel("kappa")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_terms(path: Path, z_cm, terms: np.ndarray) -> Path:
    """Two-beam SFG/DFG traces and the three-beam trace against Z."""
    plt = _pyplot()
    fig, axes = plt.subplots(2, 2, figsize=(8, 5), sharex=True)
    for ax, (j, name) in zip(axes.ravel(), [(5, "P13"), (6, "P23"), (4, "P12"), (7, "P123")]):
        ax.plot(z_cm, terms[:, j], lw=0.8)
        ax.set_title(name)
    for ax in axes[-1]:
        ax.set_xlabel("Z (cm)")
    fig.tight_layout()
    return _save(fig, path)


def plot_histograms(path: Path, samples: np.ndarray, kappa: np.ndarray, names: Sequence[str], bins: int) -> Path:
    plt = _pyplot()
    fig, axes = plt.subplots(3, 3, figsize=(9, 8))
    for ax, j in zip(axes.ravel()[:8], range(8)):
        ax.hist(samples[:, j], bins=bins)
        ax.set_title(names[j])
    axes.ravel()[8].hist(kappa, bins=bins, color="C3")
    axes.ravel()[8].set_title("kappa")
    fig.tight_layout()
    return _save(fig, path)


def plot_trace(path: Path, x, y, xlabel: str, ylabel: str) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(x, y, lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    return _save(fig, path)
