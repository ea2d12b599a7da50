"""Model calibration: nonlinear strength, per-beam efficiencies with the
interaction width, and the beam intersection angle.

Least-squares problems are solved with ``scipy.optimize.least_squares`` and
1-D searches with ``scipy.optimize.minimize_scalar``; this module supplies
the models, initial guesses, bookkeeping and error reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.constants import c, h
from scipy.optimize import least_squares, minimize_scalar

from .classical import CrystalModel, _eq17_factor, base_coupling, integrate_batch
from .core import TrislitError
from .quantum.normal_order import series_n3, series_n3_derivative

MAX_ITER = 200
XTOL = 1e-10
MIN_THETA = math.radians(0.5)
ETA_MASKS = ("13", "23", "12")


class FitError(TrislitError):
    """A fit could not be carried out or did not converge."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


@dataclass(frozen=True)
class PowerSample:
    """Input powers of the three beams and the measured mode-3 output, in watts."""

    p1: float
    p2: float
    p3: float
    pout: float
    z: float | None = None

    def __post_init__(self):
        for name in ("p1", "p2", "p3", "pout"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
            object.__setattr__(self, name, value)
        if self.z is not None:
            object.__setattr__(self, "z", float(self.z))

    @property
    def powers(self) -> tuple[float, float, float]:
        return (self.p1, self.p2, self.p3)


@dataclass
class FitResult:
    params: dict[str, float]
    stderr: dict[str, float]
    residual_norm: float
    initial_residual_norm: float
    iterations: int
    converged: bool
    residuals: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    trace: tuple[float, ...] = field(repr=False, default=())

    def report(self) -> str:
        lines = []
        for name, value in self.params.items():
            err = self.stderr.get(name, float("nan"))
            lines.append(f"{name} = {value:.10g} +/- {err:.3g}")
        lines.append(f"residual_norm = {self.residual_norm:.6g}")
        lines.append(f"initial_residual_norm = {self.initial_residual_norm:.6g}")
        lines.append(f"iterations = {self.iterations}")
        lines.append(f"converged = {str(self.converged).lower()}")
        return "\n".join(lines)


class _Traced:
    """Wraps a residual function and records the norm of every evaluation."""

    def __init__(self, fn):
        self.fn = fn
        self.trace: list[float] = []

    def __call__(self, x):
        r = self.fn(x)
        self.trace.append(float(np.linalg.norm(r)))
        return r


def _stderr(jac: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """Linearized standard errors from the Jacobian at the optimum."""
    m, p = jac.shape
    dof = max(m - p, 1)
    s2 = float(residuals @ residuals) / dof
    try:
        cov = np.linalg.pinv(jac.T @ jac) * s2
    except np.linalg.LinAlgError:
        return np.full(p, np.inf)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _solve(residual, x0, jac="2-point", bounds=(-np.inf, np.inf), max_iter=MAX_ITER, xtol=XTOL,
           what="fit"):
    traced = _Traced(residual)
    r0 = np.asarray(residual(np.asarray(x0, dtype=float)))
    result = least_squares(traced, x0, jac=jac, bounds=bounds, xtol=xtol, ftol=1e-15, gtol=1e-15,
                           max_nfev=max_iter, method="trf")
    if result.status <= 0:
        raise FitError(
            f"{what} did not converge within {max_iter} evaluations "
            f"(last residual norm {traced.trace[-1]:.6g})",
            traced.trace,
        )
    return result, float(np.linalg.norm(r0)), traced.trace


# --------------------------------------------------------------------------
# photon numbers
# --------------------------------------------------------------------------

def photons_per_pulse(power, wavelength: float, rep_rate: float):
    """Mean photon number per pulse for an average power at a given wavelength."""
    return np.asarray(power, dtype=float) / (rep_rate * h * c / wavelength)


def _default_beams():
    from .scan import reference_beams

    return reference_beams()


# --------------------------------------------------------------------------
# nonlinear strength
# --------------------------------------------------------------------------

def sfg_photons(n1, n2, gamma, order: int = 6):
    """Mode-3 photons from signal and idler coherent inputs, pump blocked."""
    alphas = (np.sqrt(np.asarray(n1, dtype=float)), np.sqrt(np.asarray(n2, dtype=float)), 0.0)
    return series_n3(alphas, gamma, order)


def fit_gamma(samples: Sequence[PowerSample], beams=None, weights=None, order: int = 6,
              max_iter: int = MAX_ITER, xtol: float = XTOL) -> FitResult:
    """Least-squares estimate of the effective nonlinear strength Gamma.

    Powers are turned into photons per pulse with each beam's own wavelength
    and repetition rate; the model is the series expectation of the mode-3
    photon number for signal and idler inputs. ``weights`` multiply the
    squared residuals (unweighted by default).
    """
    if len(samples) < 3:
        raise FitError("fit_gamma needs at least 3 samples")
    if any(s.p3 > 0 for s in samples):
        raise FitError("fit_gamma expects signal+idler samples with the pump blocked (p3 = 0)")
    beams = _default_beams() if beams is None else beams
    n1 = photons_per_pulse([s.p1 for s in samples], beams[0].wavelength, beams[0].rep_rate)
    n2 = photons_per_pulse([s.p2 for s in samples], beams[1].wavelength, beams[1].rep_rate)
    n3 = photons_per_pulse([s.pout for s in samples], beams[2].wavelength, beams[2].rep_rate)
    w = np.ones(len(samples)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != n3.shape or np.any(w < 0):
        raise FitError("weights must be non-negative, one per sample")
    sw = np.sqrt(w)

    if not np.any(n3 > 0):
        residuals = np.zeros(len(samples))
        return FitResult({"gamma": 0.0}, {"gamma": 0.0}, 0.0, 0.0, 0, True, residuals, (0.0,))

    # first order: n3 = Gamma^2 n1 n2
    prod = n1 * n2
    if not np.any(prod > 0):
        raise FitError("no sample has both signal and idler power")
    g0 = math.sqrt(max(np.sum(w * n3 * prod) / np.sum(w * prod * prod), 0.0))
    scale = float(np.max(n3))

    def residual(x):
        return sw * (sfg_photons(n1, n2, x[0] * g0, order) - n3) / scale

    def jac(x):
        alphas = (np.sqrt(n1), np.sqrt(n2), 0.0)
        return (sw * series_n3_derivative(alphas, x[0] * g0, order) * g0 / scale)[:, None]

    result, r0, trace = _solve(residual, [1.0], jac=jac, bounds=(0.0, np.inf), max_iter=max_iter,
                               xtol=xtol, what="fit_gamma")
    gamma = float(result.x[0] * g0)
    err = _stderr(result.jac, result.fun)[0] * g0
    return FitResult({"gamma": gamma}, {"gamma": float(err)}, float(np.linalg.norm(result.fun)), r0,
                     int(result.nfev), True, result.fun * scale, tuple(trace))


# --------------------------------------------------------------------------
# efficiencies and interaction width
# --------------------------------------------------------------------------

class _EtaProblem:
    """Batched classical model of the three two-beam z-scans."""

    def __init__(self, datasets, beams, crystal: CrystalModel, steps: int):
        self.crystal = crystal
        self.steps = steps
        fields0, z, out, which = [], [], [], []
        for k, label in enumerate(ETA_MASKS):
            open_ = np.array([ch in label for ch in "123"], dtype=float)
            for s in datasets[label]:
                if s.z is None:
                    raise FitError(f"dataset {label} has a sample without z")
                amps = [math.sqrt(_eq17_factor(b) * p) for b, p in zip(beams, s.powers)]
                fields0.append(np.array(amps) * open_)
                z.append(s.z)
                out.append(s.pout)
                which.append(k)
        self.fields0 = np.array(fields0, dtype=complex).T  # (3, M)
        self.z = np.array(z)
        self.measured = np.array(out)
        self.which = np.array(which)
        self.g = base_coupling(crystal, beams[0].omega)
        self.out_factor = _eq17_factor(beams[2])
        self.scales = np.ones(3)

    def predict(self, params: np.ndarray) -> np.ndarray:
        """Mode-3 power for each sample and each parameter row (eta1, eta2, eta3, delta)."""
        params = np.atleast_2d(params)
        p = len(params)
        eta, delta = params[:, :3], params[:, 3]
        env = np.exp(-2.0 * (self.z[None, :] - self.crystal.focus_z) ** 2 / delta[:, None] ** 2)
        g = self.g * eta.T[:, :, None] * env[None, :, :]  # (3, P, M)
        init = np.broadcast_to(self.fields0[:, None, :], g.shape)
        m = self.z.size
        final = integrate_batch(init.reshape(3, p * m), g.reshape(3, p * m), self.crystal.delta_k,
                                self.crystal.length, self.steps)
        return (np.abs(final[2]) ** 2 / self.out_factor).reshape(p, m)

    def residual_rows(self, params: np.ndarray) -> np.ndarray:
        return (self.predict(params) - self.measured) / self.scales[self.which]


def _flat(values: np.ndarray) -> bool:
    span = float(np.ptp(values)) if values.size else 0.0
    return span <= 1e-9 * max(float(np.max(np.abs(values))) if values.size else 0.0, 1e-300)


def _dip_width(z: np.ndarray, values: np.ndarray) -> float:
    """Interaction width implied by the spread of a dip or peak: Delta = sqrt(8) * std."""
    median = np.median(values)
    if np.max(values) - median < median - np.min(values):  # dip: weight by the deficit
        weight = np.max(values) - values
    else:
        weight = values - np.min(values)
    if weight.sum() == 0:
        return float(np.ptp(z)) / 4
    mean = np.sum(weight * z) / weight.sum()
    var = np.sum(weight * (z - mean) ** 2) / weight.sum()
    return math.sqrt(8.0 * var)


def fit_eta(datasets: Mapping[str, Sequence[PowerSample]], beams=None, crystal: CrystalModel | None = None,
            steps: int = 200, max_iter: int = MAX_ITER, xtol: float = XTOL) -> FitResult:
    """Fit (eta1, eta2, eta3) and a shared interaction width to three two-beam z-scans.

    ``datasets`` maps the configurations "13", "23" and "12" to samples with
    ``z`` set; the measured output is the mode-3 power. Each trial width gets
    its own least-squares fit of the efficiencies, a bounded 1-D search picks
    the width, and a final joint fit of all four supplies standard errors.
    """
    beams = _default_beams() if beams is None else beams
    crystal = CrystalModel() if crystal is None else crystal
    missing = [k for k in ETA_MASKS if k not in datasets or len(datasets[k]) == 0]
    if missing:
        raise FitError(f"fit_eta needs datasets for configurations 13, 23 and 12; missing {missing}")
    problem = _EtaProblem(datasets, beams, crystal, steps)

    flat = [label for k, label in enumerate(ETA_MASKS) if _flat(problem.measured[problem.which == k])]
    if len(flat) == 3:
        # nothing changes along Z: no nonlinearity to measure and no width to resolve
        zero = np.zeros(problem.measured.size)
        params = {"eta1": 0.0, "eta2": 0.0, "eta3": 0.0, "delta": crystal.interaction_width}
        errs = {"eta1": 0.0, "eta2": 0.0, "eta3": 0.0, "delta": math.inf}
        return FitResult(params, errs, 0.0, 0.0, 0, True, zero, (0.0,))
    if flat:
        raise FitError(f"dataset {flat[0]} is flat along Z; it carries no information on eta")

    for k in range(3):
        problem.scales[k] = float(np.ptp(problem.measured[problem.which == k]))

    # initial guesses: width from the dips, efficiencies from the dip depths
    widths = [_dip_width(problem.z[problem.which == k], problem.measured[problem.which == k]) for k in range(3)]
    delta0 = float(np.median(widths))
    eta_start = np.array(crystal.eta, dtype=float)
    eta_start = np.where(eta_start > 0, eta_start, 0.1)

    def inner(delta, start):
        def residual(eta):
            return problem.residual_rows(np.append(eta, delta))[0]

        def jac(eta):
            step = 1e-6 * np.maximum(np.abs(eta), 1e-3)
            rows = np.vstack([np.append(eta, delta)] + [np.append(eta + step * e, delta) for e in np.eye(3)])
            res = problem.residual_rows(rows)
            return ((res[1:] - res[0]) / step[:, None]).T

        return least_squares(residual, start, jac=jac, bounds=(0.0, np.inf), xtol=1e-8, max_nfev=50,
                             method="trf")

    memo = {}
    best = {"eta": eta_start}

    def outer(log_delta):
        delta = math.exp(log_delta)
        res = inner(delta, best["eta"])
        memo[log_delta] = res
        best["eta"] = res.x
        return float(res.fun @ res.fun)

    search = minimize_scalar(outer, bounds=(math.log(delta0 / 3), math.log(delta0 * 3)), method="bounded",
                             options={"xatol": 1e-4})
    log_best = min(memo, key=lambda k: float(memo[k].fun @ memo[k].fun))
    x0 = np.append(memo[log_best].x, math.exp(log_best))

    def residual4(x):
        return problem.residual_rows(x)[0]

    def jac4(x):
        step = 1e-6 * np.maximum(np.abs(x), np.array([1e-3, 1e-3, 1e-3, 1e-6]))
        rows = np.vstack([x] + [x + step * e for e in np.eye(4)])
        res = problem.residual_rows(rows)
        return ((res[1:] - res[0]) / step[:, None]).T

    r_init = float(np.linalg.norm(residual4(np.append(eta_start, delta0))))
    result, _, trace = _solve(residual4, x0, jac=jac4, bounds=([0, 0, 0, 1e-9], np.inf), max_iter=max_iter,
                              xtol=xtol, what="fit_eta")
    errs = _stderr(result.jac, result.fun)
    names = ("eta1", "eta2", "eta3", "delta")
    residuals = result.fun * problem.scales[problem.which]
    return FitResult(
        dict(zip(names, map(float, result.x))),
        dict(zip(names, map(float, errs))),
        float(np.linalg.norm(result.fun)),
        r_init,
        int(search.nfev + result.nfev),
        True,
        residuals,
        tuple(trace),
    )


# --------------------------------------------------------------------------
# intersection angle
# --------------------------------------------------------------------------

def theta_from_period(period: float, n: float, wavelengths) -> float:
    """Intersection angle whose phase model gives the fringe period ``period``."""
    lam1, lam2, lam3 = wavelengths
    if not period > 0 or not math.isfinite(period):
        raise FitError(f"fringe period must be finite and > 0, got {period}")
    inv_cos = (1.0 / (n * period) + 1.0 / lam3) / (1.0 / lam1 + 1.0 / lam2)
    if inv_cos <= 1.0:
        raise FitError("fringe period is not reachable by any intersection angle")
    theta = math.acos(1.0 / inv_cos)
    if theta < MIN_THETA:
        raise FitError(
            f"inferred angle {math.degrees(theta):.3g} deg is below 0.5 deg; "
            "the fringe period diverges as the angle goes to zero"
        )
    return theta


def _local_extrema(y: np.ndarray) -> np.ndarray:
    d = np.sign(np.diff(y))
    turns = np.nonzero(d[1:] * d[:-1] < 0)[0] + 1
    return turns


def _sinusoid_design(z, freq, degree):
    u = (z - z.mean()) / max(np.ptp(z), 1e-300)
    poly = np.vander(u, degree + 1)
    arg = 2.0 * math.pi * freq * z
    return np.hstack([poly, poly * np.cos(arg)[:, None], poly * np.sin(arg)[:, None]])


def _sinusoid_rss(z, y, freq, degree):
    a = _sinusoid_design(z, freq, degree)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    r = y - a @ coef
    return float(r @ r), r


def fit_theta(scan, n: float = 1.611, wavelengths=(800e-9, 800e-9, 400e-9), region_frac: float = 0.05,
              degree: int = 2) -> FitResult:
    """Intersection angle from the dominant fringe period of a kappa(Z) trace.

    ``scan`` is a sequence of scan records or a pair (z, kappa). The trace is
    restricted to where |kappa| exceeds ``region_frac`` of its peak, and the
    period is taken from a single-frequency fit with slowly varying
    (polynomial) amplitude and offset, started from the extrema spacing.
    """
    if isinstance(scan, tuple) and len(scan) == 2 and np.ndim(scan[0]) == 1:
        z, kappa = (np.asarray(a, dtype=float) for a in scan)
    else:
        z = np.array([r.z for r in scan], dtype=float)
        kappa = np.array([r.kappa for r in scan], dtype=float)
    order = np.argsort(z)
    z, kappa = z[order], kappa[order]
    peak = float(np.max(np.abs(kappa))) if kappa.size else 0.0
    if not peak > 0:
        raise FitError("kappa trace is identically zero; no fringes to fit")
    idx = np.nonzero(np.abs(kappa) >= region_frac * peak)[0]
    z, y = z[idx[0]:idx[-1] + 1], kappa[idx[0]:idx[-1] + 1]

    # fringes must show in the trace itself (a detrended smooth bump grows fake
    # extrema), and roundoff wiggles on a flat trace do not count
    ext = _local_extrema(y) if np.ptp(y) > 1e-9 * peak else np.zeros(0, dtype=int)
    if len(ext) < 2:
        raise FitError(f"found {len(ext)} extrema in the kappa trace; at least 2 are needed")
    f0 = 1.0 / (2.0 * float(np.median(np.diff(z[ext]))))

    # coarse scan of the single-frequency fit, then a bounded refinement
    step = float(np.median(np.diff(z)))
    nyquist = 0.5 / step
    freqs = np.linspace(0.5 * f0, min(2.0 * f0, 0.98 * nyquist), 800)
    rss = np.array([_sinusoid_rss(z, y, f, degree)[0] for f in freqs])
    k = int(np.argmin(rss))
    lo, hi = freqs[max(k - 1, 0)], freqs[min(k + 1, len(freqs) - 1)]
    refine = minimize_scalar(lambda f: _sinusoid_rss(z, y, f, degree)[0], bounds=(lo, hi), method="bounded",
                             options={"xatol": 1e-9 * f0})
    freq = float(refine.x)
    rss_best, residuals = _sinusoid_rss(z, y, freq, degree)
    rss_init = _sinusoid_rss(z, y, f0, degree)[0]
    if rss_best > rss_init:
        freq, rss_best = f0, rss_init
        residuals = _sinusoid_rss(z, y, f0, degree)[1]

    period = 1.0 / freq
    if period > np.ptp(z):
        raise FitError(f"fitted fringe period {period:.3g} m exceeds the {np.ptp(z):.3g} m fringe region")
    theta = theta_from_period(period, n, wavelengths)

    # linearized errors: curvature of the RSS in frequency, propagated to theta
    df = 1e-4 * freq
    curv = (_sinusoid_rss(z, y, freq + df, degree)[0] - 2 * rss_best + _sinusoid_rss(z, y, freq - df, degree)[0]) / df**2
    dof = max(len(z) - 3 * (degree + 1) - 1, 1)
    f_err = math.sqrt(2.0 * (rss_best / dof) / curv) if curv > 0 else math.inf
    dtheta_df = (theta_from_period(1 / (freq * (1 + 1e-6)), n, wavelengths) - theta) / (freq * 1e-6)
    theta_err = abs(dtheta_df) * f_err

    params = {"theta_deg": math.degrees(theta), "period_m": period}
    errs = {"theta_deg": math.degrees(theta_err), "period_m": f_err / freq**2}
    return FitResult(params, errs, math.sqrt(rss_best), math.sqrt(rss_init),
                     int(len(freqs) + refine.nfev), True, residuals, (math.sqrt(rss_init), math.sqrt(rss_best)))
