"""Acceptance criteria 1 to 9, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line; the lines are printed in the terminal
summary (and immediately with ``-s``).
"""

import math
import time
import warnings
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE
from trislit.calibrate import PowerSample, fit_eta, fit_gamma, fit_theta, photons_per_pulse, sfg_photons
from trislit.classical import CrystalModel, classical_terms, integrate_batch
from trislit.core import ALL_MASKS, MASK_INDEX, TERM_NAMES, SlitMask
from trislit.lab.cli import main
from trislit.lab.fixtures import DELTA_TRUTH, ETA_TRUTH, GAMMA_TRUTH, eta_samples, gamma_samples
from trislit.lab.io import read_columns, read_csv
from trislit.quantum import QuantumConfig, evolve_exact, evolve_series, evolve_state, quantum_terms_batch
from trislit.scan import FringeSamplingWarning, ScanConfig, reference_beams, records_arrays, run_zscan

H, C = 6.62607015e-34, 299792458.0
FOCUS, DELTA = 0.35e-2, 0.05e-2


@contextmanager
def criterion(number, title, budget_s):
    start = time.perf_counter()
    try:
        yield
        elapsed = time.perf_counter() - start
        assert elapsed < budget_s, f"took {elapsed:.1f} s, budget {budget_s} s"
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        ACCEPTANCE[number] = ("FAIL", f"{title} ({elapsed:.1f} s): {str(exc).splitlines()[0] if str(exc) else type(exc).__name__}")
        print(f"criterion {number}: FAIL  {ACCEPTANCE[number][1]}")
        raise
    ACCEPTANCE[number] = ("PASS", f"{title} ({elapsed:.1f} s)")
    print(f"criterion {number}: PASS  {ACCEPTANCE[number][1]}")


def scan(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FringeSamplingWarning)
        return records_arrays(run_zscan(cfg))


def beams_with_phases(phases):
    return tuple(replace(b, phase=float(p)) for b, p in zip(reference_beams(), phases))


def test_criterion_1_linear_limit_null():
    with criterion(1, "linear-limit null, |kappa| <= 1e-12", 5):
        classical = scan(ScanConfig(crystal=replace(CrystalModel(), d_eff=0.0)))
        assert len(classical["kappa"]) == 601
        assert np.max(np.abs(classical["kappa"])) <= 1e-12
        quantum = scan(ScanConfig(engine="quantum", quantum=QuantumConfig((1.2, 1.0, 0.8), 0.0)))
        assert np.max(np.abs(quantum["kappa"])) <= 1e-12


def test_criterion_2_reference_regime_magnitude():
    with criterion(2, "reference-regime max|kappa| within x2 of 0.0334", 60):
        a = scan(ScanConfig())
        z, k = a["z"], a["kappa"]
        peak = np.max(np.abs(k))
        assert 0.0334 / 2 <= peak <= 0.0334 * 2, f"max|kappa| = {peak:.4g}"
        near = np.abs(z - FOCUS) <= 2 * DELTA
        signs = np.sign(k[near][np.abs(k[near]) > 0.05 * peak])
        assert np.count_nonzero(signs[1:] != signs[:-1]) >= 6  # alternating fringes
        assert np.max(np.abs(k[~near])) <= 0.05 * peak  # localized near the focus


def test_criterion_3_conservation():
    with criterion(3, "conservation: classical 1e-9, quantum 1e-9 and norm 1e-10", 30):
        rng = np.random.default_rng(3)
        for _ in range(5):
            g = rng.uniform(1e-6, 2e-5)
            init = rng.uniform(1e8, 3e8, 3) * np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
            path = integrate_batch(init, [g, g, g], 0.0, 1e-3, 2000, trajectory=True)
            total = np.sum(np.abs(path) ** 2, axis=1)
            assert np.max(np.abs(total / total[0] - 1)) <= 1e-9
        for _ in range(10):
            alpha = tuple(rng.uniform(0, 1.5, 3) * np.exp(1j * rng.uniform(0, 2 * np.pi, 3)))
            gamma = rng.uniform(0.0, 0.1)
            before = evolve_state(QuantumConfig(alpha, 0.0))
            after = evolve_state(QuantumConfig(alpha, gamma))
            weight = np.array([1, 1, 2])
            assert abs(weight @ np.array(after.numbers) - weight @ np.array(before.numbers)) <= 1e-9
            assert abs(after.norm - 1) <= 1e-10


def test_criterion_4_phase_laws():
    with criterion(4, "phase laws over 100 random assignments", 120):
        rng = np.random.default_rng(4)
        cr = CrystalModel()
        two_beam = [m for m in ALL_MASKS if m.n_open <= 2]
        three = (SlitMask.parse("123"),)
        ref = classical_terms(beams_with_phases((0, 0, 0)), cr, [FOCUS], masks=two_beam)[0]
        qcfg = QuantumConfig((1.2, 1.0, 0.8), 0.05)
        phases = rng.uniform(-10, 10, (100, 3))
        shifts = rng.uniform(-5, 5, (100, 2))
        kept = phases + np.column_stack([shifts, shifts.sum(axis=1)])
        for p, q in zip(phases, kept):
            out = classical_terms(beams_with_phases(p), cr, [FOCUS], masks=two_beam)[0]
            assert np.all(np.abs(out - ref) <= 1e-12 * np.maximum(np.abs(ref), 1e-300))
            x = classical_terms(beams_with_phases(p), cr, [FOCUS], masks=three)[0, 0]
            y = classical_terms(beams_with_phases(q), cr, [FOCUS], masks=three)[0, 0]
            assert abs(x - y) <= 1e-12 * abs(x)
        qa, qb = quantum_terms_batch(qcfg, phases), quantum_terms_batch(qcfg, kept)
        q0 = quantum_terms_batch(qcfg, np.zeros((1, 3)))[0]
        j = MASK_INDEX[SlitMask.parse("123")]
        for m in two_beam:
            assert np.max(np.abs(qa[:, MASK_INDEX[m]] - q0[MASK_INDEX[m]])) <= 1e-10
        assert np.max(np.abs(qa[:, j] - qb[:, j])) <= 1e-10
        assert np.ptp(qa[:, j]) > 1e-3


def test_criterion_5_series_exact_equivalence():
    with criterion(5, "order-6 series vs exact: 1e-6 and Gamma^7 scaling", 120):
        rng = np.random.default_rng(5)
        for _ in range(10):
            alpha = tuple(rng.uniform(0, 1.5, 3) * np.exp(1j * rng.uniform(0, 2 * np.pi, 3)))
            cfg = QuantumConfig(alpha, 0.01, cutoff=25, series_order=6)
            exact = evolve_exact(cfg)
            assert abs(evolve_series(cfg) - exact) <= 1e-6 * abs(exact)
        # the Gamma = 0.01 discrepancy is ~1e-13 relative, so resolve it in extended precision
        alpha = (1.5 * np.exp(0.3j), 1.2 * np.exp(1.1j), 1.0 * np.exp(-0.7j))
        errs = []
        for gamma in (0.01, 0.005):
            cfg = QuantumConfig(alpha, gamma, cutoff=25)
            errs.append(abs(evolve_series(cfg, precision="extended") - evolve_exact(cfg, precision="extended")))
        ratio = float(errs[0] / errs[1])
        assert 2**7 * 0.8 <= ratio <= 2**7 * 1.2, f"ratio {ratio:.1f}"


def test_criterion_6_round_trip_calibration():
    with criterion(6, "round-trip calibration of Gamma, eta/Delta and theta", 60):
        assert fit_gamma(gamma_samples()).params["gamma"] == pytest.approx(GAMMA_TRUTH, rel=1e-3)

        rng = np.random.default_rng(6)
        errors = []
        for _ in range(100):
            p1, p2 = rng.uniform(0.2, 0.9, 50), rng.uniform(0.15, 0.6, 50)
            n3 = sfg_photons(photons_per_pulse(p1, 800e-9, 76e6), photons_per_pulse(p2, 800e-9, 76e6), GAMMA_TRUTH)
            pout = n3 * 76e6 * H * C / 400e-9 * (1 + 0.01 * rng.standard_normal(50))
            fit = fit_gamma([PowerSample(a, b, 0.0, o) for a, b, o in zip(p1, p2, pout)])
            errors.append(abs(fit.params["gamma"] / GAMMA_TRUTH - 1))
        assert np.percentile(errors, 95) <= 0.02

        crystal = replace(CrystalModel(), eta=ETA_TRUTH, interaction_width=DELTA_TRUTH)
        fit = fit_eta({label: eta_samples(label, crystal=crystal) for label in ("13", "23", "12")})
        got = [fit.params[k] for k in ("eta1", "eta2", "eta3", "delta")]
        assert got == pytest.approx([0.15, 0.15, 0.05, 0.05e-2], rel=0.01)

        for deg in (6.2, 3.0):
            records = scan(ScanConfig(crystal=replace(CrystalModel(), theta=math.radians(deg))))
            assert fit_theta((records["z"], records["kappa"])).params["theta_deg"] == pytest.approx(deg, abs=0.1)


def test_criterion_7_undepleted_scaling():
    with criterion(7, "max|kappa| strictly decreasing as powers scale down", 120):
        peaks = [np.max(np.abs(scan(ScanConfig().scaled_powers(eps))["kappa"])) for eps in (1, 1e-1, 1e-2, 1e-3)]
        assert all(a > b for a, b in zip(peaks, peaks[1:])), peaks


def test_criterion_8_histogram_asymmetry(tmp_path, capsys):
    with criterion(8, "50000-sample kappa histogram skews low under phase jitter", 120):
        out = tmp_path / "hist"
        assert main(["histogram", "--out", str(out)]) == 0
        said = dict(line.split(" = ", 1) for line in capsys.readouterr().out.splitlines() if " = " in line)
        assert said["samples"] == "50000"
        assert float(said["kappa_skewness"]) < 0
        assert float(said["kappa_mean"]) < float(said["kappa_noiseless"])
        _, bins = read_csv(out / "histograms.csv")
        quantities = {b[0] for b in bins}
        assert quantities == set(TERM_NAMES) | {"kappa"} and len(TERM_NAMES) == 8
        svg = (out / "histograms.svg").read_text()
        assert all(f">{name}<" in svg for name in TERM_NAMES)


def test_criterion_9_trace_shapes(tmp_path):
    with criterion(9, "DFG dips, flat P12 and oscillating P123 on the emitted CSV", 60):
        out = tmp_path / "zscan"
        assert main(["zscan", "--preset", "paper", "--out", str(out)]) == 0
        cols = read_columns(out / "zscan.csv", ("z_m", "p12", "p13", "p23", "p123", "p3"))
        z = cols["z_m"]
        near = np.abs(z - FOCUS) <= DELTA

        p12 = cols["p12"]
        assert np.all(p12 >= 0)
        assert np.ptp(p12) <= 0.05
        i = int(np.argmax(p12))
        assert np.all(np.diff(p12[: i + 1]) >= -1e-12) and np.all(np.diff(p12[i:]) <= 1e-12)  # unimodal

        for name in ("p13", "p23"):
            trace = cols[name]
            assert np.all(trace <= cols["p3"] + 1e-12)  # pump only loses power
            assert near[np.argmin(trace)]
            assert trace.min() < trace[0]

        p123 = cols["p123"][near]
        d = np.sign(np.diff(p123))
        assert np.count_nonzero(d[1:] * d[:-1] < 0) >= 6
