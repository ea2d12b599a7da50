"""``trislit`` command line: scans, noise emulation, fits and decompositions.

Exit codes: 0 success, 2 configuration or input-format error, 3 numerical
failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
import warnings
from pathlib import Path

import numpy as np
from scipy.stats import skew

from ..calibrate import FitError, fit_eta, fit_gamma, fit_theta
from ..classical import AsymmetryWarning, conversion_decomposition
from ..core import TERM_NAMES, NumericalError, TrislitError, sorkin_kappa
from ..scan import (
    FringeSamplingWarning,
    find_kappa_max,
    records_arrays,
    run_zscan,
    static_samples,
    static_terms,
)
from . import config as cfgmod
from .fixtures import fixture_path
from .io import (
    ZSCAN_COLUMNS,
    DataFormatError,
    RunDirectory,
    default_output_root,
    plot_histograms,
    plot_kappa,
    plot_terms,
    plot_trace,
    read_columns,
    read_samples,
    write_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

# shorthand flags and the config keys they set
ALIASES = {
    "engine": "scan.engine",
    "deff": "crystal.deff",
    "alpha": "quantum.alpha",
    "gamma_peak": "quantum.gamma_peak",
    "seed": "noise.seed",
    "cycles": "noise.cycles",
    "z_points": "scan.z_points",
    "steps": "scan.steps",
    "workers": "scan.workers",
}
_OVERRIDE = re.compile(r"^--([a-z_]+)\.([a-z_0-9]+)(?:=(.*))?$")


def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("configuration")
    g.add_argument("--preset", default="paper", help="named preset to start from (default: paper)")
    g.add_argument("--config", type=Path, help="TOML file merged over the preset")
    g.add_argument("--out", type=Path, help="run directory (default: $TRISLIT_OUTPUT_DIR/<command>-<hash>)")
    g.add_argument("--engine", choices=("classical", "quantum"))
    g.add_argument("--deff", help="d_eff in pm/V")
    g.add_argument("--alpha", help="coherent amplitudes, e.g. 1.2,1.0,0.8")
    g.add_argument("--gamma-peak", dest="gamma_peak", help="peak effective coupling of the quantum engine")
    g.add_argument("--seed")
    g.add_argument("--cycles")
    g.add_argument("--z-points", dest="z_points")
    g.add_argument("--steps", help="RK4 steps through the crystal")
    g.add_argument("--workers", help="parallel worker processes for scans")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trislit",
        description="Sorkin-parameter simulations of three beams mixing in a chi(2) crystal. "
        "Any config key can be overridden with --section.key VALUE.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("zscan", help="kappa and all eight terms across the crystal scan", allow_abbrev=False)
    _common(p)

    p = sub.add_parser("histogram", help="emulate the shutter-cycle measurement at fixed Z", allow_abbrev=False)
    _common(p)
    p.add_argument("--z-cm", type=float, help="crystal position (default: the kappa maximum of a scan)")
    p.add_argument("--bins", type=int, default=60)
    p.add_argument("--write-samples", action="store_true", help="also write every kappa sample")

    p = sub.add_parser("stability", help="P123 against cycle index under phase drift", allow_abbrev=False)
    _common(p)
    p.add_argument("--z-cm", type=float, help="crystal position (default: focus)")

    p = sub.add_parser("fit", help="calibration fits", allow_abbrev=False)
    fsub = p.add_subparsers(dest="fit_kind", required=True)
    q = fsub.add_parser("gamma", help="nonlinear strength from SFG samples", allow_abbrev=False)
    _common(q)
    q.add_argument("--data", type=Path, help="sample CSV (default: shipped fixture)")
    q = fsub.add_parser("eta", help="efficiencies and interaction width from two-beam z-scans",
                        allow_abbrev=False)
    _common(q)
    for label in ("13", "23", "12"):
        q.add_argument(f"--data{label}", type=Path, help=f"configuration {label} scan CSV (default: fixture)")
    q = fsub.add_parser("theta", help="intersection angle from the kappa fringe period", allow_abbrev=False)
    _common(q)
    q.add_argument("--scan", type=Path, help="zscan CSV (default: run a scan from the configuration)")

    p = sub.add_parser("decompose", help="SFG/DFG split of kappa at one Z", allow_abbrev=False)
    _common(p)
    p.add_argument("--z-cm", type=float, help="crystal position (default: focus)")

    p = sub.add_parser("preset", help="list or show presets", allow_abbrev=False)
    psub = p.add_subparsers(dest="preset_cmd", required=True)
    psub.add_parser("list")
    q = psub.add_parser("show")
    q.add_argument("name")
    return parser


def _split_overrides(extra: list[str]) -> list[tuple[str, str]]:
    out, i = [], 0
    while i < len(extra):
        m = _OVERRIDE.match(extra[i])
        if not m:
            raise cfgmod.ConfigError(f"unrecognized argument {extra[i]!r}")
        key = f"{m.group(1)}.{m.group(2)}"
        if m.group(3) is not None:
            out.append((key, m.group(3)))
            i += 1
        else:
            if i + 1 >= len(extra):
                raise cfgmod.ConfigError(f"override --{key} needs a value")
            out.append((key, extra[i + 1]))
            i += 2
    return out


def resolve_config(args, extra) -> dict:
    cfg = cfgmod.preset(args.preset)
    if args.config is not None:
        cfg = cfgmod.merge(cfg, cfgmod.load_file(args.config))
    overrides = [(key, getattr(args, name)) for name, key in ALIASES.items() if getattr(args, name, None) is not None]
    return cfgmod.apply_overrides(cfg, overrides + _split_overrides(extra))


def _run_dir(args, command: str, cfg_hash: str, engine: str) -> RunDirectory:
    path = args.out if args.out is not None else default_output_root() / f"{command}-{cfg_hash[:12]}"
    return RunDirectory(path, command, cfg_hash, engine)


def _header(command: str, cfg_hash: str, engine: str) -> list[str]:
    return [f"trislit {command}", f"config_hash {cfg_hash}", f"engine {engine}"]


def _say(**values) -> None:
    for k, v in values.items():
        print(f"{k} = {v}")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_zscan(args, lab, cfg_hash) -> int:
    scan = lab.scan
    run = _run_dir(args, "zscan", cfg_hash, scan.engine)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", FringeSamplingWarning)
        with run.session():
            records = run_zscan(scan, workers=lab.workers)
            a = records_arrays(records)
            rows = np.column_stack([a["z"], a["terms"], a["kappa"], a["phases"], a["couplings"]])
            write_csv(run.file("zscan.csv"), ZSCAN_COLUMNS, rows, _header("zscan", cfg_hash, scan.engine))
            plot_kappa(run.file("kappa.svg"), a["z"] * 100, a["kappa"], f"{scan.engine} engine")
            plot_terms(run.file("terms.svg"), a["z"] * 100, a["terms"])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    z_star, k_star = find_kappa_max(records)
    _say(run_dir=run.path, rows=len(records), max_abs_kappa=f"{np.max(np.abs(a['kappa'])):.6g}",
         kappa_max=f"{k_star:.6g}", z_kappa_max_cm=f"{z_star * 100:.5g}")
    return EXIT_OK


def _kappa_max_z(lab) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FringeSamplingWarning)
        return find_kappa_max(run_zscan(lab.scan, workers=lab.workers))[0]


def cmd_histogram(args, lab, cfg_hash) -> int:
    z = args.z_cm * 1e-2 if args.z_cm is not None else _kappa_max_z(lab)
    run = _run_dir(args, "histogram", cfg_hash, lab.scan.engine)
    with run.session():
        samples = static_samples(lab.scan, z, lab.cycles, lab.noise)
        kappa = sorkin_kappa(samples)
        clean = sorkin_kappa(static_terms(lab.scan, z, [0.0])[0])
        n = len(samples)
        mean = samples.mean(axis=0)
        std = samples.std(axis=0, ddof=1) if n > 1 else np.zeros(8)
        std[np.ptp(samples, axis=0) == 0] = 0.0  # identical readings; drop the mean's roundoff
        sem = std / math.sqrt(n)
        kappa_of_means = float(sorkin_kappa(mean))
        kappa_err = float(math.sqrt(np.sum(sem**2)))  # all Sorkin coefficients are +-1
        kappa_std = float(kappa.std(ddof=1)) if n > 1 and np.ptp(kappa) > 0 else 0.0

        header = _header("histogram", cfg_hash, lab.scan.engine) + [f"z_m {z!r}", f"samples {n}"]
        write_csv(run.file("histogram_summary.csv"), ("term", "mean", "std", "sem"),
                  [(name, mean[j], std[j], sem[j]) for j, name in enumerate(TERM_NAMES)]
                  + [("kappa", float(kappa.mean()), kappa_std, kappa_std / math.sqrt(n))],
                  header)
        rows = []
        for name, values in list(zip(TERM_NAMES, samples.T)) + [("kappa", kappa)]:
            counts, edges = np.histogram(values, bins=args.bins)
            rows += [(name, edges[i], edges[i + 1], str(int(counts[i]))) for i in range(len(counts))]
        write_csv(run.file("histograms.csv"), ("quantity", "bin_left", "bin_right", "count"), rows, header)
        plot_histograms(run.file("histograms.svg"), samples, kappa, TERM_NAMES, args.bins)
        if args.write_samples:
            write_csv(run.file("kappa_samples.csv"), ("kappa",), ((k,) for k in kappa), header)
    skewness = float(skew(kappa)) if np.ptp(kappa) > 0 else 0.0
    _say(run_dir=run.path, z_cm=f"{z * 100:.5g}", samples=n, kappa_noiseless=f"{clean:.6g}",
         kappa_mean=f"{kappa.mean():.6g}", kappa_of_term_means=f"{kappa_of_means:.6g}",
         kappa_error=f"{kappa_err:.3g}", kappa_skewness=f"{skewness:.4g}")
    return EXIT_OK


def cmd_stability(args, lab, cfg_hash) -> int:
    z = args.z_cm * 1e-2 if args.z_cm is not None else lab.crystal.focus_z
    run = _run_dir(args, "stability", cfg_hash, lab.scan.engine)
    with run.session():
        rng = lab.noise.generator()
        offsets = lab.noise.phase_walk(lab.cycles, rng)
        clean = static_terms(lab.scan, z, offsets)
        total = sum(b.avg_power for b in lab.beams)
        measured = lab.noise.readings_from(clean, total, rng).mean(axis=1)
        rows = [(str(i), offsets[i], clean[i, 7], measured[i, 7]) for i in range(lab.cycles)]
        write_csv(run.file("stability.csv"), ("cycle", "phi_offset_rad", "p123", "p123_measured"), rows,
                  _header("stability", cfg_hash, lab.scan.engine) + [f"z_m {z!r}"])
        plot_trace(run.file("stability.svg"), np.arange(lab.cycles), measured[:, 7], "cycle", "P123")
    _say(run_dir=run.path, cycles=lab.cycles, p123_first=f"{clean[0, 7]:.6g}",
         p123_std=f"{clean[:, 7].std():.3g}")
    return EXIT_OK


def _write_fit(run: RunDirectory, result, header, kind: str) -> None:
    (run.file("report.txt")).write_text(f"fit {kind}\n" + result.report() + "\n")
    write_csv(run.file("residuals.csv"), ("index", "residual"),
              [(str(i), r) for i, r in enumerate(result.residuals)], header)


def cmd_fit(args, lab, cfg_hash) -> int:
    kind = args.fit_kind
    run = _run_dir(args, f"fit-{kind}", cfg_hash, "classical")
    header = _header(f"fit {kind}", cfg_hash, "classical")
    if kind == "gamma":
        samples = read_samples(args.data or fixture_path("gamma_samples.csv"))
        result = fit_gamma(samples, beams=lab.beams)
    elif kind == "eta":
        datasets = {label: read_samples(getattr(args, f"data{label}") or fixture_path(f"eta_{label}.csv"))
                    for label in ("13", "23", "12")}
        result = fit_eta(datasets, beams=lab.beams, crystal=lab.crystal)
    else:
        wavelengths = tuple(b.wavelength for b in lab.beams)
        if args.scan is not None:
            cols = read_columns(args.scan, ("z_m", "kappa"))
            trace = (cols["z_m"], cols["kappa"])
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", FringeSamplingWarning)
                trace = run_zscan(lab.scan, workers=lab.workers)
        result = fit_theta(trace, n=lab.crystal.n, wavelengths=wavelengths)
    with run.session():
        _write_fit(run, result, header, kind)
    print(f"run_dir = {run.path}")
    print(result.report())
    return EXIT_OK


def cmd_decompose(args, lab, cfg_hash) -> int:
    z = args.z_cm * 1e-2 if args.z_cm is not None else lab.crystal.focus_z
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AsymmetryWarning)
        d = conversion_decomposition(lab.beams, lab.crystal, z, steps=lab.scan.steps)
    run = _run_dir(args, "decompose", cfg_hash, "classical")
    lines = [
        f"z_cm = {z * 100:.6g}",
        f"p_sfg_two_beam_w = {d.powers.p_sfg2!r}",
        f"p_dfg_two_beam_w = {d.powers.p_dfg2!r}",
        f"p_sfg_three_beam_w = {d.powers.p_sfg3!r}",
        f"p_dfg_three_beam_w = {d.powers.p_dfg3!r}",
        f"kappa_from_terms = {d.kappa_terms!r}",
        f"kappa_from_conversion = {d.kappa_conversion!r}",
        f"p13_p23_asymmetry = {d.asymmetry!r}",
    ] + [f"warning = {w}" for w in d.warnings]
    with run.session():
        run.file("decompose.txt").write_text("\n".join(lines) + "\n")
    print(f"run_dir = {run.path}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_preset(args) -> int:
    if args.preset_cmd == "list":
        for name, (desc, _) in cfgmod.PRESETS.items():
            print(f"{name}\t{desc}")
    else:
        print(cfgmod.dump_toml(cfgmod.preset(args.name)), end="")
    return EXIT_OK


COMMANDS = {
    "zscan": cmd_zscan,
    "histogram": cmd_histogram,
    "stability": cmd_stability,
    "fit": cmd_fit,
    "decompose": cmd_decompose,
}


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "preset":
            if extra:
                raise cfgmod.ConfigError(f"unrecognized arguments {extra}")
            return cmd_preset(args)
        cfg = resolve_config(args, extra)
        lab = cfgmod.build(cfg)
        extra_key = {"command": args.command, "fit": getattr(args, "fit_kind", None),
                     "z_cm": getattr(args, "z_cm", None)}
        return COMMANDS[args.command](args, lab, cfgmod.config_hash(cfg, extra_key))
    except (cfgmod.ConfigError, DataFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrislitError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
