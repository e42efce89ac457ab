import math

import numpy as np
import pytest

from dualrail import device as dv

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def dev():
    return dv.paper_device()


def test_device_roundtrip(dev):
    again = dv.DeviceParams.from_dict(dev.to_dict())
    for a, b in zip(again.transmons, dev.transmons):
        for f in ("omega_min", "omega_max", "omega_idle", "eta", "t1", "t2_star", "p_equil"):
            assert getattr(a, f) == pytest.approx(getattr(b, f), rel=1e-12)
    assert again.g12 == pytest.approx(dev.g12, rel=1e-12)
    for a, b in zip(again.readout, dev.readout):
        assert a.omega_ro == pytest.approx(b.omega_ro, rel=1e-12)
    assert again.mutual_inductance == dev.mutual_inductance


def test_invalid_device_params():
    with pytest.raises(dv.DeviceError):
        dv.TransmonParams(2.0, 1.0, 1.5, 1.0, 1e-6, 1e-6, 0.0)  # min > max
    with pytest.raises(dv.DeviceError):
        dv.TransmonParams(1.0, 2.0, 1.5, 1.0, 1e-6, 1e-6, 0.6)  # p_equil


def test_decoupled_oscillator_eigenvalue(dev):
    space = dv.transmon_space(3)
    point = dv.resonant_point(dev)
    bare = dv.DeviceParams(dev.transmons, 0.0, 0.0, 0.0, dev.readout,
                           dev.mutual_inductance, dev.line_impedance,
                           dev.line_temperature)
    h = dv.build_full_hamiltonian(bare, point, space).matrix
    evals = np.linalg.eigvalsh(h)
    # one excitation in mode 1 sits exactly at omega1
    assert np.min(np.abs(evals - point.omega1)) < 1e-3


def test_full_hamiltonian_gap_near_2g(dev):
    # hybrid-mode splitting close to 2 g12 (ancilla repulsion shifts it
    # by well under a percent)
    space = dv.transmon_space(3)
    point = dv.resonant_point(dev)
    h = dv.build_full_hamiltonian(dev, point, space).matrix
    evals = np.sort(np.linalg.eigvalsh(h))
    w0 = point.omega0
    singles = [e for e in evals if abs(e - w0) < 3 * dev.g12]
    assert len(singles) == 2
    gap = singles[1] - singles[0]
    assert gap == pytest.approx(2 * dev.g12, rel=1e-2)


def test_full_hamiltonian_matches_two_level_closed_form(dev):
    # eigensolver oracle vs closed form on the decoupled-ancilla block
    delta = TWO_PI * 50e6
    g = dev.g12
    space = dv.transmon_space(3)
    w0 = dev.transmons[0].omega_idle
    point = dv.OperatingPoint(w0 + delta / 2, w0 - delta / 2, w0)
    bare = dv.DeviceParams(dev.transmons, g, 0.0, 0.0, dev.readout,
                           dev.mutual_inductance, dev.line_impedance,
                           dev.line_temperature)
    h = dv.build_full_hamiltonian(bare, point, space).matrix
    evals = np.sort(np.linalg.eigvalsh(h))
    singles = [e for e in evals if abs(e - w0) < 5 * g]
    gap = max(singles) - min(singles)
    assert gap == pytest.approx(math.sqrt((2 * g) ** 2 + delta ** 2), rel=1e-9)


def test_gap_exact_values():
    g = TWO_PI * 90e6
    assert dv.dual_rail_gap_exact(g, 0.0) == pytest.approx(TWO_PI * 180e6, rel=1e-15)
    val = dv.dual_rail_gap_exact(g, TWO_PI * 18e6)
    # frozen from the closed form sqrt((2g)^2 + delta^2)
    assert val == pytest.approx(TWO_PI * 180.89775e6, rel=1e-7)
    assert dv.dual_rail_gap_exact(g, TWO_PI * 18e6) == dv.dual_rail_gap_exact(g, -TWO_PI * 18e6)


def test_gap_exact_matches_2x2_eigensolve():
    g = TWO_PI * 90e6
    delta = TWO_PI * 18e6
    h = np.array([[delta / 2, g], [g, -delta / 2]])
    ev = np.linalg.eigvalsh(h)
    assert dv.dual_rail_gap_exact(g, delta) == pytest.approx(ev[1] - ev[0], rel=1e-12)


def test_gap_expansion_basics():
    g0, w0 = TWO_PI * 90e6, TWO_PI * 5.1e9
    res = dv.dual_rail_gap_expansion(g0, w0, 0.0, 0.0)
    assert res.value == pytest.approx(2 * g0, rel=1e-15)
    assert res.valid
    # sensitivity dE/d(delta) at the resonant point is g0/w0 ~ 1/57
    eps = TWO_PI * 1e3
    up = dv.dual_rail_gap_expansion(g0, w0, eps, 0.0).value
    dn = dv.dual_rail_gap_expansion(g0, w0, -eps, 0.0).value
    sens = (up - dn) / (2 * eps)
    assert sens == pytest.approx(g0 / w0, rel=1e-6)
    assert g0 / w0 == pytest.approx(1 / 57, rel=0.02)
    assert not dv.dual_rail_gap_expansion(g0, w0, g0, 0.0).valid


def test_gap_expansion_against_exact_with_running_coupling():
    # exact oracle with the frequency-dependent coupling g ~ sqrt(w1 w2)
    g0, w0 = TWO_PI * 90e6, TWO_PI * 5.1e9
    for d1 in TWO_PI * np.linspace(-5e6, 5e6, 7):
        for d2 in TWO_PI * np.linspace(-5e6, 5e6, 7):
            g = dv.coupling_at(g0, w0, w0 + d1, w0 + d2)
            exact = math.hypot(2 * g, d1 - d2)
            approx = dv.dual_rail_gap_expansion(g0, w0, d1, d2).value
            assert abs(approx - exact) / exact < 1e-4


def test_expansion_error_scales_as_fourth_order():
    # halving delta shrinks the residual of the expansion by >= 8x
    g0, w0 = TWO_PI * 90e6, TWO_PI * 5.1e9

    def resid(d):
        g = dv.coupling_at(g0, w0, w0 + d, w0 - d)
        exact = math.hypot(2 * g, 2 * d)
        return abs(dv.dual_rail_gap_expansion(g0, w0, d, -d).value - exact)

    d = TWO_PI * 20e6
    assert resid(d) / resid(d / 2) >= 8.0


def test_optimal_offset_paper_values():
    g0, w0 = TWO_PI * 90e6, TWO_PI * 5.1e9
    res = dv.optimal_operating_offset(g0, w0)
    assert res.delta_offset == pytest.approx(TWO_PI * 3.18e6, rel=0.01)
    assert res.delta_offset == pytest.approx(TWO_PI * 3.2e6, rel=0.02)
    assert res.sensitivity_q2 == pytest.approx(1 / 28, rel=0.02)
    assert res.gap_at_optimum == pytest.approx(2 * g0 - g0 ** 3 / w0 ** 2, rel=1e-15)


def test_optimal_offset_matches_numeric_minimum():
    # 1-D golden-section oracle over the expansion
    g0, w0 = TWO_PI * 90e6, TWO_PI * 5.1e9
    delta2 = 0.0

    def f(d1):
        return dv.dual_rail_gap_expansion(g0, w0, d1, delta2).value

    lo, hi = -TWO_PI * 10e6, 0.0
    phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(200):
        if f(c) < f(d):
            b, d = d, c
            c = b - phi * (b - a)
        else:
            a, c = c, d
            d = a + phi * (b - a)
    minimum = 0.5 * (a + b)
    assert -minimum == pytest.approx(dv.optimal_operating_offset(g0, w0).delta_offset,
                                     rel=1e-6)


def test_expansion_gradient_zero_at_optimum():
    g0, w0 = TWO_PI * 90e6, TWO_PI * 5.1e9
    off = dv.optimal_operating_offset(g0, w0).delta_offset
    eps = 1e-3 * g0

    def f(d1):
        return dv.dual_rail_gap_expansion(g0, w0, d1, 0.0).value

    grad = (f(-off + eps) - f(-off - eps)) / (2 * eps)
    assert abs(grad) < 1e-9 * g0 / (2 * math.pi) * TWO_PI


def test_avoided_crossing_sweep(dev):
    w1 = dev.transmons[0].omega_idle
    sweep = dv.avoided_crossing_sweep(dev, w1 + TWO_PI * np.linspace(-300e6, 300e6, 241))
    gaps = sweep[:, 2] - sweep[:, 1]
    k = int(np.argmin(gaps))
    assert gaps[k] == pytest.approx(2 * dev.g12, rel=1e-4)
    assert sweep[k, 0] == pytest.approx(w1, abs=TWO_PI * 3e6)


def test_avoided_crossing_zero_coupling(dev):
    bare = dv.DeviceParams(dev.transmons, 0.0, 0.0, 0.0, dev.readout,
                           dev.mutual_inductance, dev.line_impedance,
                           dev.line_temperature)
    w1 = dev.transmons[0].omega_idle
    sweep = dv.avoided_crossing_sweep(bare, np.array([w1]))
    assert sweep[0, 2] - sweep[0, 1] == pytest.approx(0.0, abs=1e-6)


def test_avoided_crossing_far_detuned(dev):
    w1 = dev.transmons[0].omega_idle
    w2 = w1 + TWO_PI * 1e9
    sweep = dv.avoided_crossing_sweep(dev, np.array([w2]))
    # perturbative repulsion g^2/Delta ~ 2pi x 8.1 MHz
    assert abs(sweep[0, 1] - w1) < TWO_PI * 10e6
    assert abs(sweep[0, 2] - w2) < TWO_PI * 10e6
    shift = w2 - sweep[0, 1] - (w2 - w1)
    assert shift == pytest.approx(dev.g12 ** 2 / (TWO_PI * 1e9), rel=0.05)


def test_dispersive_shifts_numeric_paper_point(dev):
    shifts = dv.dispersive_shifts_numeric(dev, dv.resonant_point(dev))
    assert shifts.valid
    # measured ancilla shifts (magnitudes), truncation-limited agreement
    assert abs(shifts.chi0) == pytest.approx(TWO_PI * 1.514e6, rel=0.15)
    assert abs(shifts.chi1) == pytest.approx(TWO_PI * 1.610e6, rel=0.15)
    # perturbative scale 2 eta g23^2 / Delta^2, about 2pi x 1.5 MHz
    scale = dv.perturbative_chi_scale(dev)
    assert scale == pytest.approx(TWO_PI * 1.5e6, rel=0.10)


def test_dispersive_shifts_decoupled_ancilla(dev):
    bare = dv.DeviceParams(dev.transmons, dev.g12, 0.0, 0.0, dev.readout,
                           dev.mutual_inductance, dev.line_impedance,
                           dev.line_temperature)
    shifts = dv.dispersive_shifts_numeric(bare, dv.resonant_point(dev))
    eta = dev.transmons[2].eta
    assert abs(shifts.chi0) < 1e-6 * eta
    assert abs(shifts.chi1) < 1e-6 * eta


def test_dispersive_shifts_global_frequency_invariance(dev):
    base = dv.dispersive_shifts_numeric(dev, dv.resonant_point(dev))
    shift = TWO_PI * 37e6
    moved = dv.DeviceParams(
        tuple(dv.TransmonParams(t.omega_min + shift, t.omega_max + shift,
                                t.omega_idle + shift, t.eta, t.t1, t.t2_star,
                                t.p_equil) for t in dev.transmons),
        dev.g12, dev.g13, dev.g23, dev.readout,
        dev.mutual_inductance, dev.line_impedance, dev.line_temperature)
    w0 = moved.transmons[0].omega_idle
    res = dv.dispersive_shifts_numeric(moved, dv.OperatingPoint(w0, w0, w0))
    assert res.chi0 == pytest.approx(base.chi0, rel=1e-9)
    assert res.chi1 == pytest.approx(base.chi1, rel=1e-9)


def test_delta_chi_perturbative(dev):
    delta_ref = abs(dev.transmons[2].omega_idle - dev.transmons[1].omega_idle)
    # two-term dropout with g13 = 0 and delta = 0
    bare = dv.DeviceParams(dev.transmons, dev.g12, 0.0, dev.g23, dev.readout,
                           dev.mutual_inductance, dev.line_impedance,
                           dev.line_temperature)
    assert dv.delta_chi_perturbative(bare, 0.0) == pytest.approx(
        2 * dev.g12 / delta_ref, rel=1e-12)
    # frozen arithmetic with the full parameter set
    assert dv.delta_chi_perturbative(dev, 0.0) == pytest.approx(
        2 * 90.1 / 1360 + 2 * 8.4 / 81.7, rel=1e-3)
    # affine in delta with slope -1/g12
    d = TWO_PI * 1e6
    slope = (dv.delta_chi_perturbative(dev, d) - dv.delta_chi_perturbative(dev, 0)) / d
    assert slope == pytest.approx(-1 / dev.g12, rel=1e-9)


def test_eigenstate_assignment_is_permutation(dev):
    refs = np.eye(5)[:4]
    vectors = np.eye(5)
    assignment = dv.match_states(refs, vectors)
    assert sorted(set(assignment.tolist())) == sorted(assignment.tolist())


def test_flux_map_roundtrip(dev):
    q2 = dev.transmons[1]
    target = TWO_PI * 5.1e9
    flux = dv.flux_for_frequency(target, q2.omega_max, q2.eta)
    back = dv.transmon_frequency_vs_flux(flux, q2.omega_max, q2.eta)
    assert back == pytest.approx(target, rel=1e-12)
