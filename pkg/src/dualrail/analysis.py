"""Postselection, curve fitting, and derived scalar metrics.

All fits use deterministic initial guesses (log-linear regression or
linear least squares), so repeated analysis of the same records is
bit-reproducible. Binomial proportions carry Wilson intervals since
postselected tails can be small.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit

from .records import ShotRecord

E = math.e


class AnalysisError(ValueError):
    """Bad analysis input (empty records, degenerate data)."""


class FitError(RuntimeError):
    """Fit failed to converge or the data are degenerate."""


POLICIES = ("none", "final_readout_only", "mid_checks_only", "both")

SUBSPACE_BITS = {(0, 1), (1, 0)}


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict[str, float]
    sigmas: dict[str, float]
    residual_rms: float
    n_points: int
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        for k, v in self.sigmas.items():
            if v < 0 or not math.isfinite(self.residual_rms):
                raise FitError(f"invalid uncertainty/residual for {k}")


def wilson_interval(k: int, n: int, z: float = 1.0) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (z=1: 1 sigma)."""
    if n == 0:
        raise AnalysisError("no trials")
    p = k / n
    den = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return center - half, center + half


@dataclass(frozen=True)
class PostselectionSummary:
    policy: str
    n_total: int
    n_survivors: int
    survival_probability: float
    interval: tuple[float, float]
    survivors: tuple[int, ...]  # indices into the input records


def shot_passes(rec: ShotRecord, policy: str) -> bool:
    if policy == "none":
        return True
    mid_ok = not rec.any_erasure_flag
    final_ok = tuple(rec.final_bits) in SUBSPACE_BITS
    if policy == "mid_checks_only":
        return mid_ok
    if policy == "final_readout_only":
        return final_ok
    if policy == "both":
        return mid_ok and final_ok
    raise AnalysisError(f"unknown policy {policy!r}")


def postselect(records: Sequence[ShotRecord], policy: str) -> PostselectionSummary:
    """Survivor set and survival probability under a postselection policy."""
    if policy not in POLICIES:
        raise AnalysisError(f"unknown policy {policy!r}")
    if not records:
        raise AnalysisError("no records to postselect")
    survivors = tuple(i for i, r in enumerate(records) if shot_passes(r, policy))
    k, n = len(survivors), len(records)
    return PostselectionSummary(policy, n, k, k / n, wilson_interval(k, n), survivors)


def _linearized_exp_guess(t: np.ndarray, y: np.ndarray, offset: float) -> tuple[float, float]:
    z = y - offset
    good = z > 1e-12
    if good.sum() < 2:
        raise FitError("data do not support an exponential guess")
    coeffs = np.polyfit(t[good], np.log(z[good]), 1)
    rate = -coeffs[0]
    amp = math.exp(coeffs[1])
    if rate <= 0:
        rate = 1.0 / max(t[-1], 1e-30)
    return amp, 1.0 / rate


def fit_exponential(t: Sequence[float], y: Sequence[float],
                    offset: str | float = "free",
                    sigma: Sequence[float] | None = None) -> FitResult:
    """Least-squares fit of y = A exp(-t/T) + c.

    `offset` is either the string "free" or a fixed numeric value.
    Initial guesses come from a log-linear regression, so the fit is
    deterministic. Uncertainties are the square roots of the covariance
    of the linearized problem at the optimum.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 3 or t.size != y.size or np.any(np.diff(t) <= 0):
        raise AnalysisError("need >= 3 points with increasing t")
    if float(np.ptp(y)) == 0.0:
        raise FitError("constant data cannot constrain a decay time")
    fixed = offset != "free"
    c0 = float(offset) if fixed else float(min(y.min(), 0.0))
    a0, tau0 = _linearized_exp_guess(t, y, c0)

    if fixed:
        def f(x, a, tau):
            return a * np.exp(-x / tau) + c0
        p0 = [a0, tau0]
        names = ["amplitude", "tau"]
    else:
        def f(x, a, tau, c):
            return a * np.exp(-x / tau) + c
        p0 = [a0, tau0, c0]
        names = ["amplitude", "tau", "offset"]
    try:
        popt, pcov = curve_fit(f, t, y, p0=p0, sigma=sigma, maxfev=10000)
    except RuntimeError as exc:
        raise FitError(f"exponential fit did not converge: {exc}") from exc
    resid = y - f(t, *popt)
    params = dict(zip(names, map(float, popt)))
    sigmas = dict(zip(names, np.sqrt(np.clip(np.diag(pcov), 0.0, None))))
    if fixed:
        params["offset"] = c0
        sigmas["offset"] = 0.0
    return FitResult("exp_decay" if fixed else "exp_decay_free_offset",
                     params, {k: float(v) for k, v in sigmas.items()},
                     float(np.sqrt(np.mean(resid ** 2))), int(t.size))


def fit_fringe(phase: Sequence[float], y: Sequence[float]) -> FitResult:
    """Fit y = mean + A cos(phi - phi0) by linear least squares.

    A is canonicalized non-negative; `coherence` (2A) is included for
    probability-valued fringes. A "flat" flag marks amplitude consistent
    with zero.
    """
    phi = np.asarray(phase, dtype=float)
    y = np.asarray(y, dtype=float)
    if phi.size < 4 or phi.size != y.size:
        raise AnalysisError("need >= 4 fringe points")
    if float(np.ptp(phi)) < math.pi:
        raise AnalysisError("fringe phases must span at least pi")
    design = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    c, a, b = map(float, coef)
    amp = math.hypot(a, b)
    phi0 = math.atan2(b, a)
    resid = y - design @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    dof = max(phi.size - 3, 1)
    noise_var = float(resid @ resid) / dof
    cov = noise_var * np.linalg.inv(design.T @ design)
    # sigma of amplitude: project (a,b) covariance on the radial direction
    if amp > 0:
        ua, ub = a / amp, b / amp
        s_amp = math.sqrt(max(cov[1, 1] * ua ** 2 + cov[2, 2] * ub ** 2
                              + 2 * cov[1, 2] * ua * ub, 0.0))
        s_phi = math.sqrt(max(cov[1, 1] * ub ** 2 + cov[2, 2] * ua ** 2
                              - 2 * cov[1, 2] * ua * ub, 0.0)) / amp
    else:
        s_amp = math.sqrt(max(cov[1, 1], cov[2, 2], 0.0))
        s_phi = math.pi
    flags = ("flat",) if amp <= 2.0 * s_amp else ()
    return FitResult(
        "sinusoid",
        {"mean": c, "amplitude": amp, "phase": phi0, "coherence": 2.0 * amp},
        {"mean": float(math.sqrt(max(cov[0, 0], 0.0))), "amplitude": s_amp,
         "phase": s_phi, "coherence": 2.0 * s_amp},
        rms, int(phi.size), flags)


@dataclass(frozen=True)
class RBAnalysis:
    erasure_per_clifford: float
    erasure_sigma: float
    residual_error_per_clifford: float
    residual_sigma: float
    erasure_per_x90: float
    residual_per_x90: float
    keep_fit: FitResult
    survival_fit: FitResult

    @property
    def noise_bias(self) -> float:
        return self.erasure_per_clifford / self.residual_error_per_clifford


def rb_analyze(records_by_depth: dict[int, Sequence[ShotRecord]],
               policy: str = "both") -> RBAnalysis:
    """Erasure and residual error per Clifford from RB records.

    The postselection probability versus depth is fit to A exp(-eps N);
    the postselected survival to 1/2 + A p^N, giving the residual error
    r = (1-p)/2. Per-X90 values are half the per-Clifford values.
    """
    depths = sorted(records_by_depth)
    if len(depths) < 3:
        raise AnalysisError("need records at >= 3 depths")
    keep, surv, keep_sigma, surv_sigma = [], [], [], []
    for d in depths:
        recs = list(records_by_depth[d])
        sel = postselect(recs, policy)
        keep.append(max(sel.survival_probability, 1e-12))
        lo, hi = sel.interval
        keep_sigma.append(max((hi - lo) / 2.0, 1e-6))
        if sel.n_survivors == 0:
            raise AnalysisError(f"no survivors at depth {d}")
        good = 0
        for i in sel.survivors:
            rec = recs[i]
            want = (1, 0) if rec.meta.get("target", "one_L") == "one_L" else (0, 1)
            good += tuple(rec.final_bits) == want
        surv.append(good / sel.n_survivors)
        lo, hi = wilson_interval(good, sel.n_survivors)
        surv_sigma.append(max((hi - lo) / 2.0, 1e-6))

    n = np.asarray(depths, dtype=float)
    keep_fit = fit_exponential(n, np.asarray(keep), offset=0.0,
                               sigma=np.asarray(keep_sigma))
    eps = 1.0 / keep_fit.params["tau"]
    eps_sigma = keep_fit.sigmas["tau"] / keep_fit.params["tau"] ** 2

    surv_fit = fit_exponential(n, np.asarray(surv), offset=0.5,
                               sigma=np.asarray(surv_sigma))
    p = math.exp(-1.0 / surv_fit.params["tau"])
    r = (1.0 - p) / 2.0
    r_sigma = 0.5 * p * surv_fit.sigmas["tau"] / surv_fit.params["tau"] ** 2

    return RBAnalysis(eps, float(eps_sigma), r, float(r_sigma),
                      eps / 2.0, r / 2.0, keep_fit, surv_fit)


def coherence_function(t: float, t1: float, p_equil: float, n_checks: int = 0) -> float:
    """Remaining coherence of subspace-enders under decay/reheating.

    C(t) = exp(-t/T1) / [(1-2p) exp(-t/T1) + 2p]; with N evenly spaced
    perfect checks the survivors obey C(t/N)^N.
    """
    if t < 0 or n_checks < 0:
        raise AnalysisError("t and n_checks must be non-negative")
    if not 0 <= p_equil < 0.5:
        raise AnalysisError("p_equil must lie in [0, 0.5)")

    def c(x: float) -> float:
        num = math.exp(-x / t1)
        return num / ((1.0 - 2.0 * p_equil) * num + 2.0 * p_equil)

    if n_checks <= 1:
        return c(t)
    return c(t / n_checks) ** n_checks


def dephasing_time_from_heating(t1: float, p_equil: float) -> float:
    """Time where C(t) = 1/e: T1 ln((e-1)/(2 p_equil)) to leading order."""
    if p_equil <= 0:
        return math.inf
    return t1 * math.log((E - 1.0) / (2.0 * p_equil))


def dephasing_bound_per_check(coherence_remaining: float, n_checks: int,
                              tau: float = 0.0, t2_echo: float = math.inf) -> tuple[float, bool]:
    """Per-check dephasing error bound [-ln C - tau/T2]/N.

    Returns (bound, clamped); the bound clamps at zero (with flag) when
    idling decay alone over-explains the coherence loss.
    """
    if not 0 < coherence_remaining <= 1:
        raise AnalysisError("coherence must lie in (0, 1]")
    if n_checks <= 0:
        raise AnalysisError("need at least one check")
    idle = 0.0 if math.isinf(t2_echo) else tau / t2_echo
    raw = (-math.log(coherence_remaining) - idle) / n_checks
    if raw < 0:
        return 0.0, True
    return raw, False


def erasure_bias(t2: float, t_eras: float) -> float:
    """Idling erasure noise bias T2 / T_eras."""
    if t2 <= 0 or t_eras <= 0:
        raise AnalysisError("times must be positive")
    return t2 / t_eras


def gate_bias(p_erasure: float, p_residual: float) -> float:
    """Gate erasure noise bias p_erasure / p_residual."""
    if p_erasure <= 0 or p_residual <= 0:
        raise AnalysisError("probabilities must be positive")
    return p_erasure / p_residual


def missed_erasure_probability(t_check: float, t_eras: float,
                               p_false_negative: float) -> float:
    """P(erasure during the check window and not flagged)."""
    if t_check <= 0 or t_eras <= 0:
        raise AnalysisError("times must be positive")
    return (t_check / t_eras) * p_false_negative


@dataclass(frozen=True)
class TelegraphTrack:
    levels: tuple[float, float]
    separation: float
    assignments: tuple[int, ...]
    dwell_estimates: tuple[float, float]
    single_level: bool


def telegraph_frequency_tracker(interval_fits: Sequence[tuple[float, float]]) -> TelegraphTrack:
    """Two-level clustering of a time series of fitted frequencies.

    Exact 1-D two-means: scan all split points of the sorted values.
    Dwell estimates derive from the assignment run lengths and interval
    spacing; a separation below 3x the within-cluster spread returns the
    single-level flag.
    """
    if len(interval_fits) < 10:
        raise AnalysisError("need at least 10 interval fits")
    times = np.array([t for t, _ in interval_fits], dtype=float)
    freqs = np.array([f for _, f in interval_fits], dtype=float)
    order = np.argsort(freqs)
    fs = freqs[order]
    n = fs.size
    best = None
    for k in range(1, n):
        lo, hi = fs[:k], fs[k:]
        cost = float(((lo - lo.mean()) ** 2).sum() + ((hi - hi.mean()) ** 2).sum())
        if best is None or cost < best[0]:
            best = (cost, k)
    _, k = best
    lo, hi = fs[:k], fs[k:]
    mu = (float(lo.mean()), float(hi.mean()))
    spread = math.sqrt(max((float(lo.var()) * lo.size + float(hi.var()) * hi.size) / n, 0.0))
    sep = mu[1] - mu[0]
    single = sep < 3.0 * spread
    mid = 0.5 * (mu[0] + mu[1])
    assign = tuple(int(f > mid) for f in freqs)

    dt = float(np.mean(np.diff(times))) if times.size > 1 else 1.0
    dwells = [[], []]
    run_level, run_len = assign[0], 1
    for a in assign[1:]:
        if a == run_level:
            run_len += 1
        else:
            dwells[run_level].append(run_len * dt)
            run_level, run_len = a, 1
    dwells[run_level].append(run_len * dt)
    dwell = tuple(float(np.mean(d)) if d else math.inf for d in dwells)
    return TelegraphTrack(mu, sep, assign, dwell, single)
