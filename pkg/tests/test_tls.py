import math

import numpy as np
import pytest

from dualrail import dynamics as dy
from dualrail import hilbert as hl
from dualrail import tls
from dualrail.device import LevelCollisionError

TWO_PI = 2.0 * math.pi
G = TWO_PI * 90e6


def test_decoupled_tls_spectrum_is_direct_sum():
    space = tls.tls_space(3)
    params = tls.TlsParams(0.0, TWO_PI * 300e6)
    h = tls.build_tls_hamiltonian(G, params, space).matrix
    evals = np.sort(np.linalg.eigvalsh(h))
    # pair spectrum plus TLS offsets +-Delta/2
    pair = hl.ModeSpace((3, 3), ("transmon1", "transmon2"))
    a1 = hl.mode_operator(pair, 0, "lower").matrix
    a2 = hl.mode_operator(pair, 1, "lower").matrix
    hp = G * (a1.conj().T @ a2 + a2.conj().T @ a1)
    pv = np.linalg.eigvalsh(hp)
    expect = np.sort(np.concatenate([pv - 0.5 * params.detuning,
                                     pv + 0.5 * params.detuning]))
    assert np.max(np.abs(evals - expect)) < 1e-3


def test_basis_change_identity():
    space = tls.tls_space(3)
    params = tls.TlsParams(TWO_PI * 5e6, TWO_PI * 300e6)
    v = tls.eigenmode_basis_change(space).matrix
    assert np.max(np.abs(v @ v.conj().T - np.eye(space.dim))) < 1e-12
    # exact on the truncation-closed sectors (all the shift physics)
    assert tls.basis_change_deviation(G, params, space) < 1e-12
    # the beam splitter maps a1 to (a1+a2)/sqrt(2) on closed sectors
    keep = tls.closed_sector_indices(space)
    a1 = hl.mode_operator(space, 0, "lower").matrix
    a2 = hl.mode_operator(space, 1, "lower").matrix
    blk = np.ix_(keep, keep)
    m = (v @ a1 @ v.conj().T)[blk]
    assert np.max(np.abs(m - ((a1 + a2) / np.sqrt(2))[blk])) < 1e-12


def test_single_excitation_block_matches_3x3():
    lam, delta = TWO_PI * 5e6, TWO_PI * 300e6
    space = tls.tls_space(2)
    params = tls.TlsParams(lam, delta)
    h = tls.build_tls_hamiltonian(G, params, space).matrix
    evals = np.sort(np.linalg.eigvalsh(h))
    # closed 3x3 single-excitation block in the {100, 010, 00e} basis,
    # with the TLS zero-point offset -Delta/2 added back
    block = np.array([
        [0.0, G, lam],
        [G, 0.0, 0.0],
        [lam, 0.0, delta],
    ]) - 0.5 * delta * np.eye(3)
    bv = np.sort(np.linalg.eigvalsh(block))
    singles = evals[np.argsort(np.abs(evals - 0.0))][:8]
    for b in bv:
        assert np.min(np.abs(evals - b)) < 1e-3


def test_excitation_number_conserved():
    space = tls.tls_space(3)
    params = tls.TlsParams(TWO_PI * 5e6, TWO_PI * 300e6)
    h = tls.build_tls_hamiltonian(G, params, space).matrix
    n_tot = sum(hl.mode_operator(space, m, "number").matrix for m in range(2))
    sigma_z = hl.mode_operator(space, 2, "sigma_z").matrix
    n_tot = n_tot + 0.5 * (sigma_z + np.eye(space.dim))
    comm = h @ n_tot - n_tot @ h
    assert np.max(np.abs(comm)) < 1e-12 * np.max(np.abs(h))


def test_dispersive_shifts_decoupling_limit():
    delta = 100 * G
    shifts = tls.tls_dispersive_shifts(G, tls.TlsParams(TWO_PI * 5e6, delta))
    assert abs(shifts.chi_dr) < 1e-3 * (TWO_PI * 5e6) ** 2 / G


def test_dispersive_shifts_quadratic_in_lambda():
    delta = TWO_PI * 300e6
    s1 = tls.tls_dispersive_shifts(G, tls.TlsParams(TWO_PI * 2e6, delta))
    s2 = tls.tls_dispersive_shifts(G, tls.TlsParams(TWO_PI * 4e6, delta))
    assert s2.chi_dr / s1.chi_dr == pytest.approx(4.0, rel=0.01)


def test_dispersive_shifts_match_second_order_theory():
    # numeric chi_pm vs lambda^2/(Delta -+ g) (the bosonic enhancement
    # doubles the qubit-style lambda^2/2(Delta -+ g) shifts)
    lam, delta = TWO_PI * 2e6, TWO_PI * 400e6
    s = tls.tls_dispersive_shifts(G, tls.TlsParams(lam, delta))
    assert s.chi_plus == pytest.approx(lam ** 2 / (delta - G), rel=0.05)
    assert s.chi_minus == pytest.approx(lam ** 2 / (delta + G), rel=0.05)
    assert s.matched_form == "2*lambda^2*g/(Delta^2-g^2)"
    assert s.chi_dr == pytest.approx(2 * lam ** 2 * G / (delta ** 2 - G ** 2), rel=0.05)


def test_dispersive_shifts_even_under_detuning_flip():
    # the exact spectrum makes chi_dr even in Delta (both closed forms
    # depend on Delta^2); verified numerically to high precision
    lam, delta = TWO_PI * 3e6, TWO_PI * 350e6
    plus = tls.tls_dispersive_shifts(G, tls.TlsParams(lam, delta))
    minus = tls.tls_dispersive_shifts(G, tls.TlsParams(lam, -delta))
    assert minus.chi_dr == pytest.approx(plus.chi_dr, rel=1e-9)


def test_resonance_guard():
    with pytest.raises(LevelCollisionError):
        tls.tls_dispersive_shifts(G, tls.TlsParams(TWO_PI * 5e6, G + TWO_PI * 1e6))


def test_telegraph_effect_amplitude_and_freeze():
    params = tls.TlsParams(TWO_PI * 5e6, TWO_PI * 300e6, toggle_rate=0.0)
    tr = tls.tls_telegraph_effect(G, params, duration=1.0, seed=3)
    shifts = tls.tls_dispersive_shifts(G, params)
    assert np.ptp(tr.values) == 0.0
    assert abs(tr.values[0]) == pytest.approx(abs(shifts.chi_dr) / 2, rel=1e-12)
    toggling = tls.TlsParams(TWO_PI * 5e6, TWO_PI * 300e6, toggle_rate=50.0)
    tr2 = tls.tls_telegraph_effect(G, toggling, duration=1.0, seed=3)
    levels = np.unique(np.round(tr2.values, 6))
    assert levels.size == 2
    assert np.ptp(levels) == pytest.approx(abs(shifts.chi_dr), rel=1e-6)


def test_resonant_tls_asymmetric_leakage():
    # TLS resonant with the upper mode (Delta = +g) with a short
    # lifetime: |1L>-initialized shots leak out of the bosonic subspace
    # faster than |0L>-initialized ones by more than 2x
    lam = TWO_PI * 3e6
    t1_tls = 0.4e-6
    space = tls.tls_space(2)
    params = tls.TlsParams(lam, G, t1_tls=t1_tls)
    h = tls.build_tls_hamiltonian(G, params, space)
    channels = [dy.CollapseChannel(hl.mode_operator(space, 2, "sigma_minus"),
                                   1.0 / t1_tls, "tls_decay")]
    leak = {}
    duration = 6e-6
    n_traj = 150
    for which in ("zero_L", "one_L"):
        psi0 = hl.logical_state(space, 0, 1, which)
        lost = 0
        for k in range(n_traj):
            res = dy.trajectory_run(h, channels, psi0, duration=duration,
                                    seed=10_000 + k)
            lost += bool(res.jump_log)
        leak[which] = lost / n_traj
    assert leak["one_L"] > 2.0 * max(leak["zero_L"], 1.0 / n_traj)
