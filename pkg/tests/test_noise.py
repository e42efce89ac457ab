import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualrail import noise as nz
from dualrail.device import PHI0

TWO_PI = 2.0 * math.pi


def test_one_over_f_amplitude_from_echo():
    a = nz.one_over_f_amplitude_from_echo(3e-6)
    assert a == pytest.approx(1.0 / (3e-6 * math.sqrt(math.log(2))), rel=1e-12)
    assert a == pytest.approx(4.004e5, rel=1e-3)
    # round trip and linear scaling
    assert nz.echo_time_from_one_over_f(a) == pytest.approx(3e-6, rel=1e-12)
    assert nz.one_over_f_amplitude_from_echo(6e-6) == pytest.approx(a / 2, rel=1e-12)
    with pytest.raises(nz.NoiseError):
        nz.one_over_f_amplitude_from_echo(0.0)


def test_one_over_f_psd_scaling():
    s = nz.OneOverF(1e5)
    w = TWO_PI * 1e3
    assert s.psd(2 * w) / s.psd(w) == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(nz.NoiseError):
        s.psd(0.0)


def test_johnson_is_white():
    s = nz.Johnson(TWO_PI * 7.8e9 / PHI0, 1.28e-12, 4.0, 50.0)
    vals = s.psd(TWO_PI * np.array([1e6, 1e8, 5e8]))
    assert np.ptp(vals) == 0.0


def test_lorentzian_peak_value():
    chi, kappa, nb = TWO_PI * 3.73e6, TWO_PI * 9.3e6, 1e-3
    s = nz.LorentzianPhoton(chi, kappa, nb)
    assert s.psd(0.0) == pytest.approx(8 * chi ** 2 * nb / kappa, rel=1e-12)


def test_t1_limits_match_paper_numbers():
    gap = 2 * TWO_PI * 90e6
    a = nz.one_over_f_amplitude_from_echo(3e-6)
    t1f = nz.t1_limit_from_spectrum(nz.OneOverF(a), gap)
    # closed-form identity (2 ln2 / pi) g (T_phi_echo)^2, exact by construction
    g = TWO_PI * 90e6
    assert t1f == pytest.approx((2 * math.log(2) / math.pi) * g * (3e-6) ** 2, rel=1e-12)
    assert t1f == pytest.approx(2.2e-3, rel=0.03)

    tj = nz.t1_limit_from_spectrum(
        nz.Johnson(TWO_PI * 7.8e9 / PHI0, 1.28e-12, 4.0, 50.0), TWO_PI * 180e6)
    assert tj == pytest.approx(1e-3, rel=0.3)

    tp = nz.t1_limit_from_spectrum(
        nz.LorentzianPhoton(TWO_PI * 3.73e6, TWO_PI * 9.3e6, 1e-3), TWO_PI * 180e6)
    assert tp == pytest.approx(10e-3, rel=0.1)


def test_t1_limit_scalings():
    gap = TWO_PI * 180e6
    base = nz.t1_limit_from_spectrum(nz.LorentzianPhoton(1e6, 1e6, 1e-3), gap)
    half = nz.t1_limit_from_spectrum(nz.LorentzianPhoton(1e6, 1e6, 2e-3), gap)
    assert base / half == pytest.approx(2.0, rel=1e-12)
    jb = nz.t1_limit_from_spectrum(nz.Johnson(1e10, 1e-12, 4.0, 50.0), gap)
    jh = nz.t1_limit_from_spectrum(nz.Johnson(1e10, 1e-12, 8.0, 50.0), gap)
    assert jb / jh == pytest.approx(2.0, rel=1e-12)
    assert nz.t1_limit_from_spectrum(nz.LorentzianPhoton(1e6, 1e6, 0.0), gap) == math.inf


def test_photon_dephasing_rate():
    chi, kappa = TWO_PI * 3.73e6, TWO_PI * 9.3e6
    rate = nz.photon_dephasing_rate(chi, kappa, 1e-3)
    assert 1.0 / rate == pytest.approx(44e-6, rel=0.02)
    assert nz.photon_dephasing_rate(chi, kappa, 0.0) == 0.0
    # chi << kappa limit: suppression factor goes to 1
    small = nz.photon_dephasing_rate(1.0, 1e9, 1e-3)
    assert small == pytest.approx(4 * 1.0 ** 2 * 1e-3 / 1e9, rel=1e-6)


def test_telegraph_constant_when_frozen():
    tr = nz.sample_telegraph(nz.Telegraph(TWO_PI * 60e3, 0.0), 1e-3, 1e-6, seed=4)
    assert np.ptp(tr.values) == 0.0
    assert abs(abs(tr.values[0]) - 0.5 * TWO_PI * 60e3) < 1e-9


def test_telegraph_levels_and_determinism():
    par = nz.Telegraph(TWO_PI * 60e3, 2e3)
    tr1 = nz.sample_telegraph(par, 20e-3, 1e-6, seed=9)
    tr2 = nz.sample_telegraph(par, 20e-3, 1e-6, seed=9)
    assert np.array_equal(tr1.values, tr2.values)
    assert set(np.round(tr1.values / (0.5 * TWO_PI * 60e3)).astype(int)) <= {-1, 1}


def test_telegraph_mean_holding_time():
    # Monte Carlo statistic vs the parameter, ~1e4 switches
    par = nz.Telegraph(1.0, 1e4)
    level, times = nz.telegraph_switch_times(par, 1.2, seed=11)
    holds = np.diff(times)
    assert holds.size > 8000
    assert holds.mean() == pytest.approx(1e-4, rel=0.05)


def _periodogram(values, dt):
    n = values.size
    spec = np.fft.rfft(values)
    freqs = TWO_PI * np.fft.rfftfreq(n, dt)
    # two-sided PSD estimate from the one-sided rfft
    psd = (np.abs(spec) ** 2) * dt / n
    return freqs, psd


def test_telegraph_psd_matches_lorentzian():
    par = nz.Telegraph(TWO_PI * 60e3, 2e4)
    dt = 1e-6
    n_avg = 60
    acc = None
    for k in range(n_avg):
        tr = nz.sample_telegraph(par, 0.05, dt, seed=1000 + k)
        f, p = _periodogram(tr.values, dt)
        acc = p if acc is None else acc + p
    acc /= n_avg
    # compare in a decade around 2 x switch_rate
    w0 = 2 * par.switch_rate
    mask = (f > w0 / 3) & (f < w0 * 3)
    model = par.psd(f[mask])
    ratio = np.mean(acc[mask] / model)
    assert ratio == pytest.approx(1.0, abs=0.1)


def test_colored_noise_zero_spectrum():
    tr = nz.sample_colored_noise(nz.LorentzianPhoton(1e5, 1e5, 0.0), 1e-3, 1e-6, seed=3)
    assert np.max(np.abs(tr.values)) == 0.0


def test_colored_noise_white_variance_parseval():
    s = nz.Johnson(TWO_PI * 7.8e9 / PHI0, 1.28e-12, 4.0, 50.0)
    dt, duration = 1e-8, 1e-3
    n = round(duration / dt)
    acc = []
    for k in range(20):
        tr = nz.sample_colored_noise(s, duration, dt, seed=50 + k)
        acc.append(tr.values.var())
    var = np.mean(acc)
    domega = TWO_PI / (n * dt)
    wmax = TWO_PI / (2 * dt)
    # two-sided band integral, minus the dropped DC and Nyquist bins
    n_live = (n // 2 + 1) - 2
    expected = float(s.psd(1.0)) * domega * n_live / math.pi
    assert var == pytest.approx(expected, rel=0.05)


def test_colored_noise_one_over_f_slope():
    s = nz.OneOverF(4e5)
    dt, duration = 1e-6, 0.131072
    acc = None
    for k in range(12):
        tr = nz.sample_colored_noise(s, duration, dt, omega_min=TWO_PI * 20.0, seed=300 + k)
        f, p = _periodogram(tr.values, dt)
        acc = p if acc is None else acc + p
    acc /= 12
    mask = (f > TWO_PI * 100) & (f < TWO_PI * 10_000)
    slope = np.polyfit(np.log(f[mask]), np.log(acc[mask]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.1)


def test_colored_noise_determinism_and_trace_validation():
    s = nz.OneOverF(4e5)
    a = nz.sample_colored_noise(s, 1e-3, 1e-6, seed=7)
    b = nz.sample_colored_noise(s, 1e-3, 1e-6, seed=7)
    assert np.array_equal(a.values, b.values)
    with pytest.raises(nz.NoiseError):
        nz.NoiseTrace(np.array([1.0]), 1e-6, 0)
    with pytest.raises(nz.NoiseError):
        nz.sample_colored_noise(nz.Telegraph(1.0, 1.0), 1e-3, 1e-6, seed=0)


def test_phase_integral():
    tr = nz.NoiseTrace(np.array([1.0, 2.0, 3.0, 4.0]), 0.5, 0)
    assert tr.phase_integral(0.0, 2.0) == pytest.approx(0.5 * (1 + 2 + 3 + 4))
    assert tr.phase_integral(0.25, 0.75) == pytest.approx(0.25 * 1 + 0.25 * 2)


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-7, 1e-4), st.integers(0, 2 ** 31 - 1))
def test_telegraph_seed_determinism_property(dt_scale, seed):
    par = nz.Telegraph(1.0, 1e3)
    t1 = nz.sample_telegraph(par, 1e-2, 1e-5, seed)
    t2 = nz.sample_telegraph(par, 1e-2, 1e-5, seed)
    assert np.array_equal(t1.values, t2.values)
