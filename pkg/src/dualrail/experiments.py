"""Experiment runners and record analyzers behind the CLI.

Each experiment type maps to a runner producing shot records, fit
summaries, and plot-ready tables named after the figure they mirror,
plus an analyzer that recomputes the fits from a record file without
re-executing any simulation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import analysis
from .analysis import (
    fit_exponential,
    fit_fringe,
    postselect,
    rb_analyze,
    telegraph_frequency_tracker,
    wilson_interval,
)
from .calibration import full_calibration
from .channel import ChannelBackend, ChannelNoise, lower_schedule, residual_pauli_prob_per_x90
from .cliffords import rb_generate
from .device import (
    DeviceParams,
    PHI0,
    avoided_crossing_sweep,
    coupling_at,
    dispersive_shifts_numeric,
    flux_for_frequency,
    flux_sensitivity,
    optimal_operating_offset,
    paper_device,
    resonant_point,
    transmon_frequency_vs_flux,
)
from .dynamics import erasure_time_constant
from .noise import (
    Johnson,
    LorentzianPhoton,
    NoiseTrace,
    OneOverF,
    Telegraph,
    one_over_f_amplitude_from_echo,
    photon_dephasing_rate,
    sample_colored_noise,
    sample_telegraph,
    t1_limit_from_spectrum,
    telegraph_switch_times,
)
from .protocols import (
    ErasureCheckModel,
    GateCalibration,
    ReadoutModel,
    TrajectoryBackend,
    analytic_calibration,
    build_cpmg,
    build_echo_with_arm_checks,
    build_initialization,
    build_ramsey,
    build_rb_schedule,
    check_pulse_response,
    run_shots_shared,
)
from .records import ShotRecord
from .tls import TlsParams, tls_dispersive_shifts

TWO_PI = 2.0 * math.pi

# Desk-scale resource caps (override with --force).
MAX_DEPTH = 1000
MAX_TOTAL_SHOTS = 5_000_000


class ExperimentError(ValueError):
    """Bad experiment parameters."""


@dataclass
class RunArtifacts:
    summary: list[dict] = field(default_factory=list)
    tables: dict[str, tuple[list[str], list[dict]]] = field(default_factory=dict)
    records: list[ShotRecord] = field(default_factory=list)
    record_meta: dict = field(default_factory=dict)

    def add_metric(self, metric: str, value: float, sigma: float | None = None) -> None:
        self.summary.append({"metric": metric, "value": value,
                             "sigma": float("nan") if sigma is None else sigma})


def _seed_for(root: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=root, spawn_key=tuple(int(k) for k in key))


def _seed_int(root: int, *key: int) -> int:
    return int(_seed_for(root, *key).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Noise assembly


def default_noise_settings() -> dict:
    """Paper-anchored noise magnitudes used by presets and the budget report."""
    return {
        "johnson": {"slope_hz_per_phi0": 7.8e9},
        "photon": {"resonator": "q1", "n_bar": 0.001},
        "one_over_f": {"t_phi_echo": 3.0e-6},
        "telegraph": {"amplitude_hz": 60e3, "switch_rate": 0.033},
    }


def spectra_from_config(noise_cfg: dict, device: DeviceParams) -> dict:
    """Instantiate the configured NoiseSpectrum variants (paper defaults)."""
    out = {}
    if "johnson" in noise_cfg:
        j = noise_cfg["johnson"] or {}
        slope = TWO_PI * j.get("slope_hz_per_phi0", 7.8e9) / PHI0
        out["johnson"] = Johnson(slope, device.mutual_inductance,
                                 device.line_temperature, device.line_impedance)
    if "photon" in noise_cfg:
        p = noise_cfg["photon"] or {}
        idx = {"q1": 0, "q2": 1, "q3": 2}[p.get("resonator", "q1")]
        ro = device.readout[idx]
        out["photon"] = LorentzianPhoton(ro.chi_ro, ro.kappa_ro, p.get("n_bar", 0.001))
    if "one_over_f" in noise_cfg:
        o = noise_cfg["one_over_f"] or {}
        if "amplitude" in o:
            amp = o["amplitude"]
        else:
            amp = one_over_f_amplitude_from_echo(o.get("t_phi_echo", 3.0e-6))
        out["one_over_f"] = OneOverF(amp)
    if "telegraph" in noise_cfg:
        t = noise_cfg["telegraph"] or {}
        out["telegraph"] = Telegraph(TWO_PI * t.get("amplitude_hz", 60e3),
                                     t.get("switch_rate", 0.033))
    return out


def dual_rail_gap_full(g0: float, omega0: float, omega1: float, omega2: float) -> float:
    g = coupling_at(g0, omega0, omega1, omega2)
    return math.hypot(2.0 * g, omega1 - omega2)


def _dual_rail_trace_from_transmon(values: np.ndarray, g0: float, omega0: float,
                                   qubit: int, at_optimum: bool) -> np.ndarray:
    """Map transmon frequency offsets to dual-rail frequency offsets through
    the exact gap with the sqrt(w1 w2) coupling dependence."""
    off = optimal_operating_offset(g0, omega0).delta_offset if at_optimum else 0.0
    w1p, w2p = omega0 - off, omega0
    base = dual_rail_gap_full(g0, omega0, w1p, w2p)
    w1 = w1p + (values if qubit == 0 else 0.0)
    w2 = w2p + (values if qubit == 1 else 0.0)
    g = g0 * np.sqrt(w1 * w2) / omega0
    return np.hypot(2.0 * g, w1 - w2) - base


def make_trace_factory(noise_cfg: dict, device: DeviceParams, duration: float,
                       root_seed: int) -> Callable[[int], NoiseTrace] | None:
    """Per-shot dual-rail dephasing trace factory from the noise toggles.

    Sources: direct telegraph noise on the dual-rail splitting, 1/f
    transmon frequency noise mapped through the gap function, and a
    static offset. Sources sum on a common grid.
    """
    sources = []
    g0 = device.g12
    omega0 = device.transmons[0].omega_idle
    if "telegraph" in noise_cfg:
        t = noise_cfg["telegraph"] or {}
        par = Telegraph(TWO_PI * t.get("amplitude_hz", 60e3), t.get("switch_rate", 0.033))
        sources.append(("telegraph", par))
    if "one_over_f" in noise_cfg and (noise_cfg["one_over_f"] or {}).get("dephasing", True):
        o = noise_cfg["one_over_f"] or {}
        amp = o.get("amplitude") or one_over_f_amplitude_from_echo(o.get("t_phi_echo", 3.0e-6))
        qubit = {"q1": 0, "q2": 1}[o.get("qubit", "q1")]
        at_opt = bool(o.get("at_optimum", True))
        sources.append(("one_over_f", (OneOverF(amp), qubit, at_opt)))
    if "static_offset_hz" in noise_cfg:
        sources.append(("static", TWO_PI * noise_cfg["static_offset_hz"]))
    if not sources:
        return None
    n_samples = int(noise_cfg.get("trace_samples", 512))
    dt = duration / n_samples

    def factory(seed: int) -> NoiseTrace:
        total = np.zeros(n_samples)
        for k, (kind, par) in enumerate(sources):
            sub = _seed_int(seed, k)
            if kind == "telegraph":
                total += sample_telegraph(par, duration, dt, sub).values
            elif kind == "one_over_f":
                spec, qubit, at_opt = par
                raw = sample_colored_noise(spec, duration, dt, seed=sub).values
                total += _dual_rail_trace_from_transmon(raw, g0, omega0, qubit, at_opt)
            else:
                total += par
        return NoiseTrace(total, dt, seed)

    return factory


def channel_noise_from_config(noise_cfg: dict, device: DeviceParams, duration: float,
                              root_seed: int) -> ChannelNoise:
    g0 = device.g12
    t1_eff = erasure_time_constant(device.transmons[0].t1, device.transmons[1].t1)
    t_eras = noise_cfg.get("erasure_lifetime", t1_eff)
    t_eras_0 = noise_cfg.get("erasure_lifetime_0l", t_eras)
    t_eras_1 = noise_cfg.get("erasure_lifetime_1l", t_eras)
    reheat = 0.0
    if noise_cfg.get("heating", {}) and noise_cfg.get("heating", {}).get("enabled", False):
        p_eq = noise_cfg["heating"].get("p_equil", device.transmons[0].p_equil)
        reheat = 2.0 * p_eq / t_eras
    bitflip = 0.0
    spectra = spectra_from_config(noise_cfg, device)
    for name in ("johnson", "photon", "one_over_f"):
        if name in spectra and (noise_cfg.get(name) or {}).get("bitflip", True):
            # longitudinal relaxation at the gap: T1_DR = 2/S(2g), i.e.
            # a per-direction flip rate of S(2g)/4
            bitflip += float(spectra[name].psd(2.0 * g0)) / 4.0
    factory = make_trace_factory(noise_cfg, device, duration, root_seed)
    residual = noise_cfg.get("residual_per_clifford", 0.0)
    return ChannelNoise(
        t_eras_0l=t_eras_0,
        t_eras_1l=t_eras_1,
        reheat_rate=reheat,
        bitflip_rate=bitflip,
        dephasing_trace_factory=factory,
        residual_pauli_per_x90=residual_pauli_prob_per_x90(residual) if residual else 0.0,
        leak_multi_rate=noise_cfg.get("leak_multi_rate", 0.0),
    )


def check_model_from_config(cfg: dict) -> ErasureCheckModel:
    return ErasureCheckModel(**(cfg.get("check_model") or {}))


def readout_model_from_config(cfg: dict) -> ReadoutModel:
    return ReadoutModel(**(cfg.get("readout_model") or {}))


def _calibration_for(device: DeviceParams, cfg: dict) -> GateCalibration:
    mode = (cfg.get("execution") or {}).get("calibration", "analytic")
    if mode == "full":
        _, calib = full_calibration(device, seed=cfg.get("seed", 0))
        return calib
    return analytic_calibration(device.g12)


def _bits_p1l(records: Sequence[ShotRecord], survivors: Sequence[int]) -> tuple[int, int]:
    good = sum(1 for i in survivors if tuple(records[i].final_bits) == (1, 0))
    return good, len(survivors)


# ---------------------------------------------------------------------------
# Runners


def run_budget_report(cfg: dict, device: DeviceParams) -> RunArtifacts:
    """Analytic coherence-budget numbers from the configured spectra."""
    art = RunArtifacts()
    noise_cfg = cfg.get("noise") or default_noise_settings()
    spectra = spectra_from_config(noise_cfg, device)
    g0 = device.g12
    omega0 = device.transmons[0].omega_idle
    gap = 2.0 * g0
    rows = []
    if "johnson" in spectra:
        t1 = t1_limit_from_spectrum(spectra["johnson"], gap)
        art.add_metric("t1_limit_johnson_s", t1)
        rows.append({"mechanism": "johnson_flux_noise", "limit_s": t1, "kind": "T1"})
    if "photon" in spectra:
        s = spectra["photon"]
        t1 = t1_limit_from_spectrum(s, gap)
        tphi = 1.0 / photon_dephasing_rate(s.chi, s.kappa, s.n_bar)
        art.add_metric("t1_limit_photon_s", t1)
        art.add_metric("t_phi_photon_transmon_s", tphi)
        rows.append({"mechanism": "photon_fluctuations", "limit_s": t1, "kind": "T1"})
        rows.append({"mechanism": "photon_transmon_dephasing", "limit_s": tphi, "kind": "Tphi"})
    if "one_over_f" in spectra:
        t1 = t1_limit_from_spectrum(spectra["one_over_f"], gap)
        art.add_metric("t1_limit_one_over_f_s", t1)
        rows.append({"mechanism": "one_over_f_flux_noise", "limit_s": t1, "kind": "T1"})
    off = optimal_operating_offset(g0, omega0)
    art.add_metric("sensitivity_resonant", g0 / omega0)
    art.add_metric("sensitivity_optimum_q2", off.sensitivity_q2)
    art.add_metric("optimal_offset_rad_s", off.delta_offset)
    art.tables["budget_limits"] = (["mechanism", "limit_s", "kind"], rows)
    return art


def run_spectroscopy(cfg: dict, device: DeviceParams) -> RunArtifacts:
    """Avoided-crossing sweep plus the conditional check-pulse response."""
    art = RunArtifacts()
    p = cfg.get("params") or {}
    f0 = device.transmons[0].omega_idle / TWO_PI
    lo = p.get("f_min_hz", f0 - 0.4e9)
    hi = p.get("f_max_hz", f0 + 0.4e9)
    n = int(p.get("n_points", 81))
    sweep = avoided_crossing_sweep(device, TWO_PI * np.linspace(lo, hi, n))
    rows = [{"f2_hz": r[0] / TWO_PI, "lower_hz": r[1] / TWO_PI, "upper_hz": r[2] / TWO_PI}
            for r in sweep]
    art.tables["fig1b_avoided_crossing"] = (["f2_hz", "lower_hz", "upper_hz"], rows)
    gaps = sweep[:, 2] - sweep[:, 1]
    art.add_metric("min_gap_hz", float(gaps.min()) / TWO_PI)

    shifts = dispersive_shifts_numeric(device, resonant_point(device))
    art.add_metric("chi0_hz", shifts.chi0 / TWO_PI)
    art.add_metric("chi1_hz", shifts.chi1 / TWO_PI)
    model = check_model_from_config(cfg)
    dets = TWO_PI * np.linspace(-4e6, 4e6, int(p.get("n_drive_points", 161)))
    rows = []
    for d in dets:
        rows.append({
            "detuning_hz": d / TWO_PI,
            "p_exc_00": check_pulse_response(0.0, model.pulse_duration, d),
            "p_exc_0l": check_pulse_response(shifts.chi0, model.pulse_duration, d),
            "p_exc_1l": check_pulse_response(shifts.chi1, model.pulse_duration, d),
        })
    art.tables["fig1e_check_spectroscopy"] = (
        ["detuning_hz", "p_exc_00", "p_exc_0l", "p_exc_1l"], rows)
    return art


def _run_fringe_sequences(cfg: dict, device: DeviceParams, build, totals,
                          meta_key: str) -> RunArtifacts:
    """Shared machinery: phase-stepped sequences at a grid of durations."""
    p = cfg.get("params") or {}
    seed = int(cfg["seed"])
    shots = int(p.get("shots", 200))
    n_phases = int(p.get("phase_steps", 9))
    phases = np.linspace(0.0, 2.0 * math.pi, n_phases, endpoint=False)
    noise_cfg = cfg.get("noise") or {}
    check_model = check_model_from_config(cfg)
    readout_model = readout_model_from_config(cfg)
    calib = _calibration_for(device, cfg)
    art = RunArtifacts()
    max_total = max(totals)
    sched_probe = build(calib, max_total, 0.0)
    noise = channel_noise_from_config(noise_cfg, device, sched_probe.total_duration, seed)
    backend = ChannelBackend(noise, check_model, readout_model)
    for i, total in enumerate(totals):
        for j, phase in enumerate(phases):
            sched = build(calib, total, float(phase))
            events = lower_schedule(sched)
            for s in range(shots):
                rec = backend.run_shot(
                    events, _seed_for(seed, i, j, s),
                    record_meta={meta_key: total, "phase": float(phase)})
                art.records.append(rec)
    return art


def run_cpmg(cfg: dict, device: DeviceParams, experiment: str = "cpmg") -> RunArtifacts:
    p = cfg.get("params") or {}
    n_pulses = 1 if experiment == "echo" else int(p.get("n_pulses", 64))
    totals = p.get("total_times") or [t * 1e-6 for t in (30, 60, 120, 200, 300)]
    n_checks = int(p.get("n_checks", 11))

    def build(calib, total, phase):
        tau = total / n_pulses
        return build_cpmg(calib, n_pulses, tau, n_checks, phase,
                          check_model=ErasureCheckModel())

    art = _run_fringe_sequences(cfg, device, build, totals, "t_total")
    art.record_meta = {"n_pulses": n_pulses, "n_checks": n_checks}
    _analyze_fringe_records(art, "t_total", policy=p.get("policy", "both"))
    return art


def _analyze_fringe_records(art: RunArtifacts, meta_key: str, policy: str = "both") -> None:
    records = art.records
    groups: dict[float, dict[float, list[ShotRecord]]] = {}
    for r in records:
        groups.setdefault(r.meta[meta_key], {}).setdefault(r.meta["phase"], []).append(r)
    rows = []
    for total in sorted(groups):
        phases, probs = [], []
        kept_total = 0
        n_total = 0
        for phase in sorted(groups[total]):
            recs = groups[total][phase]
            sel = postselect(recs, policy)
            kept_total += sel.n_survivors
            n_total += sel.n_total
            if sel.n_survivors == 0:
                continue
            good, n = _bits_p1l(recs, sel.survivors)
            phases.append(phase)
            probs.append(good / n)
        if len(phases) >= 4:
            fit = fit_fringe(np.asarray(phases), np.asarray(probs))
            coherence = fit.params["coherence"]
            coh_sigma = fit.sigmas["coherence"]
            phi0 = fit.params["phase"]
            phi_sigma = fit.sigmas["phase"]
        else:
            coherence = coh_sigma = phi0 = phi_sigma = float("nan")
        lo, hi = wilson_interval(kept_total, n_total)
        rows.append({meta_key: total, "coherence": coherence, "coherence_sigma": coh_sigma,
                     "fringe_phase": phi0, "fringe_phase_sigma": phi_sigma,
                     "keep_probability": kept_total / n_total,
                     "keep_sigma": (hi - lo) / 2.0})
    art.tables["fringe_vs_" + meta_key] = (
        [meta_key, "coherence", "coherence_sigma", "fringe_phase", "fringe_phase_sigma",
         "keep_probability", "keep_sigma"], rows)
    usable = [r for r in rows if math.isfinite(r["coherence"]) and r["coherence"] > 0]
    if len(usable) >= 3:
        t = np.array([r[meta_key] for r in usable])
        c = np.array([r["coherence"] for r in usable])
        try:
            fit = fit_exponential(t, c, offset=0.0)
            art.add_metric("t2_fit_s", fit.params["tau"], fit.sigmas["tau"])
        except Exception:
            pass
        k = np.array([r["keep_probability"] for r in usable])
        try:
            fit = fit_exponential(t, k, offset=0.0)
            art.add_metric("erasure_lifetime_fit_s", fit.params["tau"], fit.sigmas["tau"])
        except Exception:
            pass


def run_ramsey(cfg: dict, device: DeviceParams) -> RunArtifacts:
    """Ramsey fringes versus delay; optional second-scale interval tracking."""
    p = cfg.get("params") or {}
    seed = int(cfg["seed"])
    shots = int(p.get("shots", 200))
    delays = p.get("delays") or [k * 0.5e-6 for k in range(1, 17)]
    detuning = TWO_PI * p.get("detuning_hz", 0.0)
    n_intervals = int(p.get("track_intervals", 1))
    interval_s = p.get("interval_spacing_s", 2.0)
    noise_cfg = dict(cfg.get("noise") or {})
    calib = _calibration_for(device, cfg)
    check_model = check_model_from_config(cfg)
    readout_model = readout_model_from_config(cfg)

    # Slow telegraph noise is sampled on the wall clock: each tracking
    # interval sees a quasi-static frequency offset.
    wall_offsets = np.zeros(n_intervals)
    if n_intervals > 1 and "telegraph" in noise_cfg:
        t = noise_cfg.pop("telegraph") or {}
        par = Telegraph(TWO_PI * t.get("amplitude_hz", 60e3), t.get("switch_rate", 0.033))
        trace = sample_telegraph(par, n_intervals * interval_s, interval_s / 8.0,
                                 _seed_int(seed, 999))
        wall_offsets = np.array([trace.value_at(k * interval_s) for k in range(n_intervals)])

    art = RunArtifacts()
    max_delay = max(delays)
    probe = build_ramsey(calib, max_delay, detuning)
    base_noise = channel_noise_from_config(noise_cfg, device, probe.total_duration, seed)
    rows_intervals = []
    for k in range(n_intervals):
        off = float(wall_offsets[k])
        noise = base_noise
        if off:
            base_factory = base_noise.dephasing_trace_factory

            def factory(s, off=off, base=base_factory):
                if base is None:
                    return NoiseTrace(np.full(64, off), max(max_delay, 1e-7) / 32.0, s)
                tr = base(s)
                return NoiseTrace(tr.values + off, tr.dt, s)

            noise = ChannelNoise(base_noise.t_eras_0l, base_noise.t_eras_1l,
                                 base_noise.reheat_rate, base_noise.bitflip_rate,
                                 factory, base_noise.residual_pauli_per_x90,
                                 base_noise.leak_multi_rate)
        backend = ChannelBackend(noise, check_model, readout_model)
        for i, delay in enumerate(delays):
            sched = build_ramsey(calib, delay, detuning,
                                 n_checks=int(p.get("n_checks", 0)),
                                 check_model=check_model)
            events = lower_schedule(sched)
            for s in range(shots):
                rec = backend.run_shot(events, _seed_for(seed, k, i, s),
                                       record_meta={"delay": delay, "interval": k})
                art.records.append(rec)
        recs_k = [r for r in art.records if r.meta["interval"] == k]
        freq, amp = _fit_ramsey_frequency(recs_k, p.get("policy", "both"))
        rows_intervals.append({"interval": k, "wall_time_s": k * interval_s,
                               "fitted_freq_hz": freq / TWO_PI, "contrast": amp})
    art.tables["ramsey_interval_freqs"] = (
        ["interval", "wall_time_s", "fitted_freq_hz", "contrast"], rows_intervals)
    if n_intervals >= 10:
        track = telegraph_frequency_tracker(
            [(r["wall_time_s"], TWO_PI * r["fitted_freq_hz"]) for r in rows_intervals])
        art.add_metric("telegraph_separation_hz", track.separation / TWO_PI)
        art.add_metric("telegraph_single_level", float(track.single_level))
    else:
        art.add_metric("ramsey_freq_hz", rows_intervals[0]["fitted_freq_hz"])
    return art


def _fit_ramsey_frequency(records: Sequence[ShotRecord], policy: str) -> tuple[float, float]:
    """Fitted fringe angular frequency from P(1L) versus delay."""
    groups: dict[float, list[ShotRecord]] = {}
    for r in records:
        groups.setdefault(r.meta["delay"], []).append(r)
    delays, probs = [], []
    for d in sorted(groups):
        sel = postselect(groups[d], policy)
        if sel.n_survivors == 0:
            continue
        good, n = _bits_p1l(groups[d], sel.survivors)
        delays.append(d)
        probs.append(good / n)
    if len(delays) < 4:
        return float("nan"), float("nan")
    delays = np.asarray(delays)
    y = np.asarray(probs)
    # deterministic frequency guess from the FFT peak, then refine by
    # scanning a fine local grid of linear fringe fits
    dt = float(np.mean(np.diff(delays)))
    spec = np.abs(np.fft.rfft(y - y.mean()))
    freqs = TWO_PI * np.fft.rfftfreq(y.size, dt)
    k = int(np.argmax(spec[1:])) + 1 if spec.size > 1 else 0
    best = (None, None)
    for w in np.linspace(max(freqs[k] - freqs[1], 0.0), freqs[k] + freqs[1], 41):
        design = np.column_stack([np.ones_like(delays), np.cos(w * delays), np.sin(w * delays)])
        coef, res, *_ = np.linalg.lstsq(design, y, rcond=None)
        sse = float(res[0]) if res.size else float(np.sum((y - design @ coef) ** 2))
        if best[0] is None or sse < best[0]:
            best = (sse, (w, math.hypot(coef[1], coef[2])))
    w, amp = best[1]
    return float(w), float(2.0 * amp)


def run_t1_logical(cfg: dict, device: DeviceParams) -> RunArtifacts:
    """Dual-rail T1: P(1L) difference between |1L> and |0L> preparations."""
    p = cfg.get("params") or {}
    seed = int(cfg["seed"])
    shots = int(p.get("shots", 400))
    durations = p.get("durations") or [k * 50e-6 for k in range(1, 9)]
    n_checks = int(p.get("n_checks", 11))
    calib = _calibration_for(device, cfg)
    check_model = check_model_from_config(cfg)
    noise_cfg = cfg.get("noise") or {}
    art = RunArtifacts()
    max_total = max(durations)
    noise = channel_noise_from_config(noise_cfg, device, max_total * 1.2, seed)
    backend = ChannelBackend(noise, check_model, readout_model_from_config(cfg))
    for i, total in enumerate(durations):
        for j, target in enumerate(("one_L", "zero_L")):
            # T1 probe: plain idle between prep and readout, no echo pulses
            sched = _idle_schedule(calib, target, total, n_checks, check_model)
            events = lower_schedule(sched)
            for s in range(shots):
                rec = backend.run_shot(events, _seed_for(seed, i, j, s),
                                       record_meta={"duration": total, "init": target})
                art.records.append(rec)
    _analyze_t1_records(art, p.get("policy", "both"))
    return art


def _idle_schedule(calib: GateCalibration, target: str, total: float, n_checks: int,
                   check_model: ErasureCheckModel):
    from .protocols import append_initialization, evenly_spaced_checks, place_checks
    from .pulses import Schedule, ScheduleBuilder

    b = ScheduleBuilder()
    append_initialization(b, calib, target)
    evo_start = b.t
    b.idle(total)
    sched = b.build()
    if n_checks:
        desired = evenly_spaced_checks(evo_start, evo_start + total, n_checks)
        busy = [(s.t_start, s.t_end) for s in sched.segments]
        checks = place_checks(desired, busy, check_model.window, sched.total_duration)
        sched = Schedule(sched.segments, checks, sched.total_duration)
    return sched


def _analyze_t1_records(art: RunArtifacts, policy: str) -> None:
    groups: dict[float, dict[str, list[ShotRecord]]] = {}
    for r in art.records:
        groups.setdefault(r.meta["duration"], {}).setdefault(r.meta["init"], []).append(r)
    rows = []
    for total in sorted(groups):
        row = {"duration": total}
        for target, key in (("one_L", "p1l_init1"), ("zero_L", "p1l_init0")):
            recs = groups[total].get(target, [])
            sel = postselect(recs, policy)
            if sel.n_survivors == 0:
                row[key] = float("nan")
                continue
            good, n = _bits_p1l(recs, sel.survivors)
            row[key] = good / n
        row["difference"] = row["p1l_init1"] - row["p1l_init0"]
        rows.append(row)
    art.tables["fig2d_t1_logical"] = (
        ["duration", "p1l_init1", "p1l_init0", "difference"], rows)
    good = [r for r in rows if math.isfinite(r["difference"]) and r["difference"] > 0]
    if len(good) >= 3:
        t = np.array([r["duration"] for r in good])
        y = np.array([r["difference"] for r in good])
        try:
            fit = fit_exponential(t, y, offset=0.0)
            art.add_metric("t1_logical_fit_s", fit.params["tau"], fit.sigmas["tau"])
        except Exception:
            pass


def run_rb(cfg: dict, device: DeviceParams) -> RunArtifacts:
    p = cfg.get("params") or {}
    seed = int(cfg["seed"])
    depths = [int(d) for d in (p.get("depths") or [2, 32, 128, 400])]
    n_circuits = int(p.get("n_circuits", 50))
    n_shots = int(p.get("n_shots", 200))
    n_checks = int(p.get("n_checks", 11))
    idle_gap = float(p.get("idle_gap", 0.0))
    mode = (cfg.get("execution") or {}).get("mode", "channel")
    if max(depths) > MAX_DEPTH and not cfg.get("force", False):
        raise ExperimentError(f"depth {max(depths)} beyond the desk-scale cap {MAX_DEPTH}")
    total_shots = len(depths) * n_circuits * n_shots
    if total_shots > MAX_TOTAL_SHOTS and not cfg.get("force", False):
        raise ExperimentError(f"{total_shots} shots beyond the desk-scale cap")

    calib = _calibration_for(device, cfg)
    check_model = check_model_from_config(cfg)
    readout_model = readout_model_from_config(cfg)
    noise_cfg = cfg.get("noise") or {}
    art = RunArtifacts()

    if mode == "trajectory":
        t_eras = noise_cfg.get("erasure_lifetime",
                               erasure_time_constant(device.transmons[0].t1,
                                                     device.transmons[1].t1))
        backend = TrajectoryBackend(device, resonant_point(device), dim=2,
                                    check_model=check_model, readout_model=readout_model,
                                    t1_override=(t_eras, t_eras))
        for i, depth in enumerate(depths):
            for c in range(n_circuits):
                target = "one_L" if c % 2 == 0 else "zero_L"
                seq = rb_generate(depth, _seed_int(seed, i, c), target=target)
                sched = build_rb_schedule(calib, seq, n_checks, check_model, idle_gap)
                shot_seeds = [_seed_int(seed, i, c, s) for s in range(n_shots)]
                recs = run_shots_shared(backend, sched, shot_seeds)
                for rec in recs:
                    rec = ShotRecord(rec.check_outcomes, rec.final_bits,
                                     rec.true_final_label, rec.seed, rec.coherence_lost,
                                     {"depth": depth, "circuit": c, "target": target})
                    art.records.append(rec)
    else:
        probe = build_rb_schedule(calib, rb_generate(max(depths), 1), n_checks,
                                  check_model, idle_gap)
        noise = channel_noise_from_config(noise_cfg, device, probe.total_duration, seed)
        backend = ChannelBackend(noise, check_model, readout_model)
        for i, depth in enumerate(depths):
            for c in range(n_circuits):
                target = "one_L" if c % 2 == 0 else "zero_L"
                seq = rb_generate(depth, _seed_int(seed, i, c), target=target)
                sched = build_rb_schedule(calib, seq, n_checks, check_model, idle_gap)
                events = lower_schedule(sched)
                meta = {"depth": depth, "circuit": c, "target": target}
                for s in range(n_shots):
                    art.records.append(backend.run_shot(
                        events, _seed_for(seed, i, c, s), record_meta=meta))
    _analyze_rb_records(art, policies=("both", "mid_checks_only"))
    return art


def _analyze_rb_records(art: RunArtifacts, policies: Sequence[str]) -> None:
    by_depth: dict[int, list[ShotRecord]] = {}
    for r in art.records:
        by_depth.setdefault(int(r.meta["depth"]), []).append(r)
    rows = []
    for policy in policies:
        try:
            res = rb_analyze(by_depth, policy=policy)
        except analysis.AnalysisError:
            continue
        tag = "both" if policy == "both" else "mid"
        art.add_metric(f"erasure_per_clifford_{tag}", res.erasure_per_clifford,
                       res.erasure_sigma)
        art.add_metric(f"residual_per_clifford_{tag}", res.residual_error_per_clifford,
                       res.residual_sigma)
        art.add_metric(f"erasure_per_x90_{tag}", res.erasure_per_x90)
        art.add_metric(f"residual_per_x90_{tag}", res.residual_per_x90)
        art.add_metric(f"noise_bias_{tag}", res.noise_bias)
    for depth in sorted(by_depth):
        recs = by_depth[depth]
        sel = postselect(recs, "both")
        good, n = _bits_good_target(recs, sel.survivors)
        rows.append({"depth": depth, "keep_probability": sel.survival_probability,
                     "survival": good / n if n else float("nan")})
    art.tables["fig3b_rb"] = (["depth", "keep_probability", "survival"], rows)


def _bits_good_target(records: Sequence[ShotRecord], survivors: Sequence[int]) -> tuple[int, int]:
    good = 0
    for i in survivors:
        want = (1, 0) if records[i].meta.get("target", "one_L") == "one_L" else (0, 1)
        good += tuple(records[i].final_bits) == want
    return good, len(survivors)


def run_erasure_metrics(cfg: dict, device: DeviceParams) -> RunArtifacts:
    """False-positive / false-negative fixtures plus the derived products."""
    p = cfg.get("params") or {}
    seed = int(cfg["seed"])
    shots = int(p.get("shots", 100_000))
    calib = _calibration_for(device, cfg)
    check_model = check_model_from_config(cfg)
    readout_model = readout_model_from_config(cfg)
    noise_cfg = cfg.get("noise") or {}
    t_eras = noise_cfg.get("erasure_lifetime", 30e-6)
    art = RunArtifacts()

    # Fig-4a-style fixture: prep |1L>, one check right after the prep pulse,
    # immediate readout; idle exposure kept minimal.
    sched_fp = _idle_schedule(calib, "one_L", check_model.window, 1, check_model)
    noise = channel_noise_from_config({**noise_cfg, "erasure_lifetime": t_eras},
                                      device, sched_fp.total_duration, seed)
    backend = ChannelBackend(noise, check_model, readout_model)
    events = lower_schedule(sched_fp)
    flagged = kept = 0
    for s in range(shots):
        rec = backend.run_shot(events, _seed_for(seed, 0, s))
        if tuple(rec.final_bits) == (1, 0):
            kept += 1
            flagged += rec.any_erasure_flag
    fp = flagged / kept
    lo, hi = wilson_interval(flagged, kept)
    art.add_metric("false_positive_1l", fp, (hi - lo) / 2)

    # Fig-4b-style fixture: shot left in |00>, one check, postselect on
    # the final readout showing 00.
    from .pulses import Schedule
    sched_fn = Schedule((), (check_model.window,), check_model.window)
    events = lower_schedule(sched_fn)
    missed = kept = 0
    for s in range(shots):
        rec = backend.run_shot(events, _seed_for(seed, 1, s))
        if tuple(rec.final_bits) == (0, 0):
            kept += 1
            missed += not rec.any_erasure_flag
    fn = missed / kept
    lo, hi = wilson_interval(missed, kept)
    art.add_metric("false_negative", fn, (hi - lo) / 2)

    art.add_metric("check_window_fraction", check_model.window / t_eras)
    art.add_metric("missed_erasure_probability",
                   analysis.missed_erasure_probability(check_model.window, t_eras,
                                                       check_model.p_false_negative))
    art.tables["fig4_erasure_check_metrics"] = (
        ["metric", "value"],
        [{"metric": "false_positive_1l", "value": fp},
         {"metric": "false_negative", "value": fn},
         {"metric": "missed_erasure", "value": analysis.missed_erasure_probability(
             check_model.window, t_eras, check_model.p_false_negative)},
         {"metric": "check_window_fraction", "value": check_model.window / t_eras}])
    return art


def run_check_dephasing_sweep(cfg: dict, device: DeviceParams) -> RunArtifacts:
    """Fixed-time spin echo with a variable number of checks per arm."""
    p = cfg.get("params") or {}
    seed = int(cfg["seed"])
    total = p.get("total_time", 114e-6)
    counts = [int(c) for c in (p.get("check_counts") or [0, 1, 2, 4, 8, 16, 32, 64, 128])]
    arms = p.get("arms") or ["balanced"]
    shots = int(p.get("shots", 400))
    n_phases = int(p.get("phase_steps", 9))
    phases = np.linspace(0.0, 2.0 * math.pi, n_phases, endpoint=False)
    calib = _calibration_for(device, cfg)
    check_model = check_model_from_config(cfg)
    noise_cfg = cfg.get("noise") or {}
    art = RunArtifacts()
    noise = channel_noise_from_config(noise_cfg, device, total * 1.3, seed)
    backend = ChannelBackend(noise, check_model, readout_model_from_config(cfg))
    for a, arm in enumerate(arms):
        for i, m in enumerate(counts):
            n_first, n_second = {
                "balanced": (m // 2, m - m // 2),
                "first": (m, 0),
                "second": (0, m),
            }[arm]
            for j, phase in enumerate(phases):
                sched = build_echo_with_arm_checks(calib, total, n_first, n_second,
                                                   check_model, float(phase))
                events = lower_schedule(sched)
                for s in range(shots):
                    rec = backend.run_shot(
                        events, _seed_for(seed, a, i, j, s),
                        record_meta={"arm": arm, "n_checks": m, "phase": float(phase)})
                    art.records.append(rec)
    _analyze_check_sweep(art, p.get("policy", "both"))
    return art


def _analyze_check_sweep(art: RunArtifacts, policy: str) -> None:
    groups: dict[tuple, dict[float, list[ShotRecord]]] = {}
    for r in art.records:
        key = (r.meta["arm"], int(r.meta["n_checks"]))
        groups.setdefault(key, {}).setdefault(r.meta["phase"], []).append(r)
    rows = []
    for (arm, m) in sorted(groups, key=lambda k: (k[0], k[1])):
        phases, probs = [], []
        kept = tot = 0
        for phase in sorted(groups[(arm, m)]):
            recs = groups[(arm, m)][phase]
            sel = postselect(recs, policy)
            kept += sel.n_survivors
            tot += sel.n_total
            if sel.n_survivors:
                good, n = _bits_p1l(recs, sel.survivors)
                phases.append(phase)
                probs.append(good / n)
        if len(phases) >= 4:
            fit = fit_fringe(np.asarray(phases), np.asarray(probs))
            coh, phi = fit.params["coherence"], fit.params["phase"]
            coh_s, phi_s = fit.sigmas["coherence"], fit.sigmas["phase"]
        else:
            coh = phi = coh_s = phi_s = float("nan")
        rows.append({"arm": arm, "n_checks": m, "coherence": coh,
                     "coherence_sigma": coh_s, "fringe_phase": phi,
                     "fringe_phase_sigma": phi_s, "keep_probability": kept / tot})
    art.tables["fig4c_fig8_check_sweep"] = (
        ["arm", "n_checks", "coherence", "coherence_sigma", "fringe_phase",
         "fringe_phase_sigma", "keep_probability"], rows)
    for arm in {r["arm"] for r in rows}:
        sub = [r for r in rows if r["arm"] == arm and r["n_checks"] > 0
               and math.isfinite(r["fringe_phase"])]
        if len(sub) >= 3:
            m = np.array([r["n_checks"] for r in sub], dtype=float)
            phi = np.unwrap(np.array([r["fringe_phase"] for r in sub]))
            slope = float(np.polyfit(m, phi, 1)[0])
            art.add_metric(f"phase_slope_per_check_{arm}", slope)


def run_operating_point_sweep(cfg: dict, device: DeviceParams) -> RunArtifacts:
    """Coherence and erasure-lifetime estimates across the tunable band.

    Analytic sweep of the in-scope models: 1/f dephasing suppression
    from the gap function, flux-slope-dependent transmon coherence from
    the flux map, and per-logical-state erasure lifetimes from a fixed
    TLS interacting with the hybrid modes.
    """
    p = cfg.get("params") or {}
    f_points = p.get("f_points_hz") or list(np.linspace(4.75e9, 5.1e9, 15))
    noise_cfg = cfg.get("noise") or {}
    tls_cfg = noise_cfg.get("tls") or {}
    f_tls = tls_cfg.get("frequency_hz", 5.05e9)
    lam = TWO_PI * tls_cfg.get("coupling_hz", 0.4e6)
    t1_tls = tls_cfg.get("t1_tls", 0.5e-6)
    g0 = device.g12
    q1, q2 = device.transmons[0], device.transmons[1]
    t1_eff = erasure_time_constant(q1.t1, q2.t1)
    tphi_q1_sweet = p.get("t_phi_echo_q1_sweet", 100e-6)
    art = RunArtifacts()
    rows = []
    for f0 in f_points:
        w0 = TWO_PI * f0
        # Q1 1/f dephasing vs flux slope (sweet spot at its maximum)
        if f0 >= q1.omega_max / TWO_PI - 1e3:
            tphi_q1 = tphi_q1_sweet
        else:
            flux = flux_for_frequency(w0, q1.omega_max, q1.eta)
            slope = abs(flux_sensitivity(flux, q1.omega_max, q1.eta))
            slope_ref = abs(flux_sensitivity(flux_for_frequency(
                q1.omega_max - TWO_PI * 1e6, q1.omega_max, q1.eta), q1.omega_max, q1.eta))
            tphi_q1 = tphi_q1_sweet * slope_ref / max(slope, slope_ref * 1e-3)
        off = optimal_operating_offset(g0, w0)
        t2_dr = tphi_q1 / off.sensitivity_q2
        # TLS Purcell broadening of the hybrid modes at w0 +/- g
        gamma_tls = 1.0 / t1_tls
        lam_eff = lam / math.sqrt(2.0)
        rate = {}
        for sgn, name in ((1.0, "1l"), (-1.0, "0l")):
            det = (w0 + sgn * g0) - TWO_PI * f_tls
            rate[name] = 1.0 / t1_eff + lam_eff ** 2 * gamma_tls / (det ** 2 + gamma_tls ** 2 / 4.0)
        rows.append({
            "f0_hz": f0,
            "t2_dr_estimate_s": t2_dr,
            "t_phi_q1_s": tphi_q1,
            "t_phi_q2_s": q2.t2_star,
            "t_eras_0l_s": 1.0 / rate["0l"],
            "t_eras_1l_s": 1.0 / rate["1l"],
        })
    art.tables["fig5_fig11_operating_points"] = (
        ["f0_hz", "t2_dr_estimate_s", "t_phi_q1_s", "t_phi_q2_s",
         "t_eras_0l_s", "t_eras_1l_s"], rows)
    dips = min(rows, key=lambda r: r["t_eras_1l_s"])
    art.add_metric("tls_dip_f0_hz", dips["f0_hz"])
    art.add_metric("tls_dip_ratio", dips["t_eras_0l_s"] / dips["t_eras_1l_s"])
    return art


EXPERIMENTS: dict[str, Callable[[dict, DeviceParams], RunArtifacts]] = {
    "budget_report": run_budget_report,
    "spectroscopy": run_spectroscopy,
    "ramsey": run_ramsey,
    "echo": lambda cfg, dev: run_cpmg(cfg, dev, "echo"),
    "cpmg": run_cpmg,
    "t1_logical": run_t1_logical,
    "rb": run_rb,
    "erasure_metrics": run_erasure_metrics,
    "check_dephasing_sweep": run_check_dephasing_sweep,
    "operating_point_sweep": run_operating_point_sweep,
}


RECORD_ANALYZERS: dict[str, Callable[[RunArtifacts, dict], None]] = {}


def analyze_records(experiment: str, records: list[ShotRecord],
                    policy: str = "both") -> RunArtifacts:
    """Re-run the experiment's analysis on previously written records."""
    art = RunArtifacts()
    art.records = records
    if experiment in ("cpmg", "echo"):
        _analyze_fringe_records(art, "t_total", policy)
    elif experiment == "ramsey":
        freq, amp = _fit_ramsey_frequency(records, policy)
        art.add_metric("ramsey_freq_hz", freq / TWO_PI)
        art.add_metric("ramsey_contrast", amp)
    elif experiment == "t1_logical":
        _analyze_t1_records(art, policy)
    elif experiment == "rb":
        _analyze_rb_records(art, policies=(policy,) if policy != "both"
                            else ("both", "mid_checks_only"))
    elif experiment == "check_dephasing_sweep":
        _analyze_check_sweep(art, policy)
    else:
        raise ExperimentError(f"experiment {experiment!r} has no record analyzer")
    return art
