"""Frequency-noise spectra, coherence limits, and time-domain samplers.

All spectral densities are two-sided, in (rad/s)^2 * s, as functions of
angular frequency. Samplers are deterministic functions of their seed and
share no state, so concurrent sampling across seeds is safe.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.constants import hbar, k as k_B

LN2 = math.log(2.0)

# Default low-frequency cutoff for 1/f synthesis: below the slowest
# experiment timescale, so echo-based quantities are insensitive to it.
DEFAULT_OMEGA_MIN = 2.0 * math.pi * 0.1


class NoiseError(ValueError):
    """Domain violation in a spectrum or sampler."""


@dataclass(frozen=True)
class OneOverF:
    """S(w) = 2 pi A^2 / |w|; A in rad/s. Divergent at w = 0."""

    amplitude: float

    def psd(self, omega):
        w = np.abs(np.asarray(omega, dtype=float))
        if np.any(w == 0):
            raise NoiseError("1/f spectrum is divergent at omega = 0")
        out = 2.0 * math.pi * self.amplitude ** 2 / w
        return float(out) if np.isscalar(omega) else out


@dataclass(frozen=True)
class Johnson:
    """White transmon-frequency noise from thermal current fluctuations.

    S = 2 (dw/dPhi)^2 M^2 k_B T / Z in the classical limit
    hbar|w| << k_B T; evaluation outside that limit is flagged with a
    warning rather than an error so sweeps stay runnable.
    """

    slope: float               # dw_T/dPhi_e, rad/s per Wb
    mutual_inductance: float   # H
    temperature: float         # K
    impedance: float           # ohm

    def psd(self, omega):
        w = np.abs(np.asarray(omega, dtype=float))
        if np.any(hbar * w > 0.1 * k_B * self.temperature):
            warnings.warn("Johnson spectrum evaluated outside the classical limit "
                          "hbar|w| << k_B T", stacklevel=2)
        val = (2.0 * self.slope ** 2 * self.mutual_inductance ** 2
               * k_B * self.temperature / self.impedance)
        return val if np.isscalar(omega) else np.full_like(w, val)


@dataclass(frozen=True)
class LorentzianPhoton:
    """Thermal-photon frequency noise S(w) = 8 chi^2 kappa nbar / (w^2 + kappa^2)."""

    chi: float
    kappa: float
    n_bar: float

    def psd(self, omega):
        w = np.asarray(omega, dtype=float)
        out = 8.0 * self.chi ** 2 * self.kappa * self.n_bar / (w ** 2 + self.kappa ** 2)
        return float(out) if np.isscalar(omega) else out


@dataclass(frozen=True)
class Telegraph:
    """Symmetric random-telegraph frequency noise.

    `amplitude` is the separation between the two levels (the trace
    switches between +/- amplitude/2); `switch_rate` is the rate of each
    direction's exponential holding time. The corresponding two-sided
    Lorentzian PSD is amplitude^2 rate / (w^2 + 4 rate^2).
    """

    amplitude: float
    switch_rate: float

    def psd(self, omega):
        w = np.asarray(omega, dtype=float)
        out = self.amplitude ** 2 * self.switch_rate / (w ** 2 + 4.0 * self.switch_rate ** 2)
        return float(out) if np.isscalar(omega) else out


NoiseSpectrum = Union[OneOverF, Johnson, LorentzianPhoton, Telegraph]


def spectrum_evaluate(spectrum: NoiseSpectrum, omega):
    """Two-sided PSD of any spectrum variant at angular frequency omega."""
    return spectrum.psd(omega)


def one_over_f_amplitude_from_echo(t_phi_echo: float) -> float:
    """Invert T_phi_echo = [A sqrt(ln 2)]^-1 for the 1/f amplitude A."""
    if t_phi_echo <= 0:
        raise NoiseError("echo dephasing time must be positive")
    return 1.0 / (t_phi_echo * math.sqrt(LN2))


def echo_time_from_one_over_f(amplitude: float) -> float:
    if amplitude <= 0:
        raise NoiseError("amplitude must be positive")
    return 1.0 / (amplitude * math.sqrt(LN2))


def t1_limit_from_spectrum(spectrum: NoiseSpectrum, gap: float) -> float:
    """Dual-rail T1 limit 2 / S(gap) from noise at the dual-rail gap.

    Returns math.inf when the spectrum vanishes at the gap.
    """
    if gap <= 0:
        raise NoiseError("gap must be positive")
    s = float(spectrum.psd(gap))
    if s == 0.0:
        return math.inf
    return 2.0 / s


def photon_dephasing_rate(chi: float, kappa: float, n_bar: float) -> float:
    """Transmon dephasing rate from thermal photons in a coupled resonator.

    Gamma_phi = 4 chi^2 nbar / kappa * kappa^2 / (kappa^2 + 4 chi^2).
    """
    if chi <= 0 or kappa <= 0 or n_bar < 0:
        raise NoiseError("chi, kappa must be positive and n_bar non-negative")
    suppression = kappa ** 2 / (kappa ** 2 + 4.0 * chi ** 2)
    return 4.0 * chi ** 2 * n_bar / kappa * suppression


@dataclass(frozen=True)
class NoiseTrace:
    """Sampled frequency-offset record delta_omega(t), zero-order hold.

    values[i] holds on [i dt, (i+1) dt); the trace covers
    [0, len(values) dt).
    """

    values: np.ndarray
    dt: float
    seed: int

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise NoiseError("trace needs at least two samples")
        if not np.all(np.isfinite(v)):
            raise NoiseError("trace values must be finite")
        if self.dt <= 0:
            raise NoiseError("dt must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def duration(self) -> float:
        return self.values.size * self.dt

    def value_at(self, t: float) -> float:
        i = min(int(t / self.dt), self.values.size - 1)
        return float(self.values[max(i, 0)])

    def phase_integral(self, t_a: float, t_b: float) -> float:
        """Integral of delta_omega over [t_a, t_b] under the hold convention."""
        if t_b < t_a:
            raise NoiseError("require t_b >= t_a")
        cum = np.concatenate([[0.0], np.cumsum(self.values) * self.dt])

        def at(t):
            x = np.clip(t / self.dt, 0.0, self.values.size)
            i = int(x)
            if i >= self.values.size:
                return cum[-1]
            return cum[i] + (x - i) * self.dt * self.values[i]

        return at(t_b) - at(t_a)

    def save_txt(self, path) -> None:
        t = np.arange(self.values.size) * self.dt
        np.savetxt(Path(path), np.column_stack([t, self.values]),
                   header="t_s delta_omega_rad_per_s")


def sample_telegraph(params: Telegraph, duration: float, dt: float, seed: int) -> NoiseTrace:
    """Two-state +/- amplitude/2 process with exponential holding times.

    Holding times have mean 1/switch_rate in each level. The trace is a
    deterministic function of (params, duration, dt, seed).
    """
    if duration <= 0 or dt <= 0 or duration <= dt:
        raise NoiseError("require duration > dt > 0")
    if params.switch_rate > 0 and dt >= 0.1 / params.switch_rate:
        warnings.warn("telegraph sampling resolution dt >= 1/(10 switch_rate)",
                      stacklevel=2)
    rng = np.random.default_rng(seed)
    n = max(int(round(duration / dt)), 2)
    level = 0.5 * params.amplitude * (1.0 if rng.random() < 0.5 else -1.0)
    values = np.empty(n)
    if params.switch_rate <= 0:
        values.fill(level)
        return NoiseTrace(values, dt, seed)
    t = 0.0
    i = 0
    while i < n:
        hold = rng.exponential(1.0 / params.switch_rate)
        j = min(int(math.ceil((t + hold) / dt)), n)
        values[i:j] = level
        level = -level
        t += hold
        i = j
    return NoiseTrace(values, dt, seed)


def telegraph_switch_times(params: Telegraph, duration: float, seed: int) -> tuple[float, np.ndarray]:
    """Initial level and the exact switching instants of the seeded process.

    Uses the same draw sequence as `sample_telegraph`, so the switch
    times are consistent with the sampled trace for equal seeds.
    """
    rng = np.random.default_rng(seed)
    level = 0.5 * params.amplitude * (1.0 if rng.random() < 0.5 else -1.0)
    if params.switch_rate <= 0:
        return level, np.empty(0)
    times = []
    t = 0.0
    while t < duration:
        t += rng.exponential(1.0 / params.switch_rate)
        if t < duration:
            times.append(t)
    return level, np.asarray(times)


def sample_colored_noise(spectrum: NoiseSpectrum, duration: float, dt: float,
                         omega_min: float = DEFAULT_OMEGA_MIN, seed: int = 0) -> NoiseTrace:
    """Stationary Gaussian trace whose periodogram follows the spectrum.

    Spectral synthesis with uniformly random phases; each positive
    frequency bin carries RMS amplitude sqrt(S(w) dw / pi) so the total
    variance reproduces the band integral of the two-sided PSD. For 1/f
    spectra, bins below `omega_min` are zeroed (infrared cutoff); the
    high-frequency cutoff is the trace Nyquist frequency.
    """
    if isinstance(spectrum, Telegraph):
        raise NoiseError("telegraph noise is sampled with sample_telegraph")
    if duration <= 0 or dt <= 0 or duration <= dt:
        raise NoiseError("require duration > dt > 0")
    n = max(int(round(duration / dt)), 2)
    rng = np.random.default_rng(seed)
    n_bins = n // 2 + 1
    domega = 2.0 * math.pi / (n * dt)
    omegas = domega * np.arange(n_bins)
    s = np.zeros(n_bins)
    live = omegas > 0
    if isinstance(spectrum, OneOverF):
        if omega_min <= 0:
            raise NoiseError("1/f synthesis requires omega_min > 0")
        live &= omegas >= omega_min
    if np.any(live):
        s[live] = np.asarray(spectrum.psd(omegas[live]), dtype=float)
    amps = np.sqrt(2.0 * s * domega / math.pi)
    phases = rng.uniform(0.0, 2.0 * math.pi, n_bins)
    coeff = 0.5 * n * amps * np.exp(1j * phases)
    coeff[0] = 0.0
    if n % 2 == 0:
        coeff[-1] = 0.0  # drop the Nyquist bin rather than special-case its phase
    values = np.fft.irfft(coeff, n=n)
    return NoiseTrace(values, dt, seed)
