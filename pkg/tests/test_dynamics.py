import math

import numpy as np
import pytest

from dualrail import dynamics as dy
from dualrail import hilbert as hl
from dualrail.records import FLAG_ERASURE, FLAG_NO_ERASURE

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def qubit_space():
    return hl.ModeSpace((2,), ("transmon1",))


@pytest.fixture(scope="module")
def pair2():
    return hl.ModeSpace((2, 2), ("transmon1", "transmon2"))


def test_lindblad_exponential_decay(qubit_space):
    gamma = 1.0 / 30e-6
    ch = [dy.decay_channel(qubit_space, 0, 1.0 / gamma, "decay")]
    rho0 = hl.density_state(np.diag([0.0, 1.0]), qubit_space)
    ts = np.linspace(1e-9, 3.0 / gamma, 40)
    states = dy.lindblad_evolve(None, ch, rho0, ts)
    pops = np.array([s.data[1, 1].real for s in states])
    assert np.max(np.abs(pops - np.exp(-gamma * ts))) < 1e-6


def test_lindblad_rabi_oscillation(pair2):
    g = TWO_PI * 90e6
    a1 = hl.mode_operator(pair2, 0, "lower").matrix
    a2 = hl.mode_operator(pair2, 1, "lower").matrix
    h = g * (a1.conj().T @ a2 + a2.conj().T @ a1)
    psi0 = hl.basis_vector(pair2, (1, 0))
    rho0 = hl.density_state(np.outer(psi0, psi0.conj()), pair2)
    ts = np.linspace(1e-10, 20e-9, 37)
    states = dy.lindblad_evolve(h, [], rho0, ts, rtol=1e-10, atol=1e-12)
    p01 = hl.basis_vector(pair2, (0, 1))
    pops = np.array([float(np.real(p01 @ s.data @ p01.conj())) for s in states])
    assert np.max(np.abs(pops - np.sin(g * ts) ** 2)) < 1e-6


def test_lindblad_thermal_steady_state(qubit_space):
    kappa, n_bar = 1.0 / 1e-6, 0.002
    ch = dy.thermal_resonator_channels(qubit_space, 0, kappa, n_bar)
    rho0 = hl.density_state(np.diag([1.0, 0.0]), qubit_space)
    ts = np.array([5.0 / kappa])
    states = dy.lindblad_evolve(None, ch, rho0, ts)
    excited = states[0].data[1, 1].real
    assert excited == pytest.approx(n_bar / (1 + 2 * n_bar), abs=1e-4)


def test_lindblad_trace_and_positivity(pair2):
    g = TWO_PI * 90e6
    a1 = hl.mode_operator(pair2, 0, "lower").matrix
    a2 = hl.mode_operator(pair2, 1, "lower").matrix
    h = g * (a1.conj().T @ a2 + a2.conj().T @ a1)
    ch = [dy.decay_channel(pair2, 0, 20e-6, "d1"), dy.decay_channel(pair2, 1, 20e-6, "d2")]
    psi0 = hl.basis_vector(pair2, (0, 1))
    rho0 = hl.density_state(np.outer(psi0, psi0.conj()), pair2)
    ts = np.linspace(1e-9, 60e-6, 25)
    for s in dy.lindblad_evolve(h, ch, rho0, ts):
        assert abs(np.trace(s.data) - 1.0) < 1e-6
        assert np.min(np.linalg.eigvalsh(s.data)) > -1e-6


def test_lindblad_rejects_bad_input(qubit_space):
    with pytest.raises(ValueError):
        dy.lindblad_evolve(None, [], hl.basis_state(qubit_space, (0,)), [1e-6])


def test_trajectory_unitary_when_rates_zero(pair2):
    g = TWO_PI * 90e6
    a1 = hl.mode_operator(pair2, 0, "lower").matrix
    a2 = hl.mode_operator(pair2, 1, "lower").matrix
    h = g * (a1.conj().T @ a2 + a2.conj().T @ a1)
    psi0 = hl.basis_state(pair2, (1, 0))
    res = dy.trajectory_run(h, [], psi0, duration=50e-9, seed=3,
                            t_eval=np.linspace(0, 50e-9, 6))
    assert res.jump_log == []
    for s in res.states:
        assert abs(np.linalg.norm(s.data) - 1.0) < 1e-9


def test_trajectory_jump_time_distribution(qubit_space):
    gamma = 1.0 / 10e-6
    ch = [dy.decay_channel(qubit_space, 0, 1.0 / gamma, "decay")]
    psi0 = hl.basis_state(qubit_space, (1,))
    times = []
    for k in range(10_000):
        res = dy.trajectory_run(None, ch, psi0, duration=100e-6, seed=k)
        if res.jump_log:
            times.append(res.jump_log[0][0])
    times = np.asarray(times)
    assert times.size > 9990  # 10 T1: essentially every shot decays
    assert times.mean() == pytest.approx(1.0 / gamma, rel=0.05)


def test_trajectory_matches_lindblad(pair2):
    # dual-rail idle with decay and heating; 1000 trajectories vs the
    # master equation within 3 sigma at five checkpoints
    t1 = 30e-6
    p_eq = 0.01
    ch = [dy.decay_channel(pair2, 0, t1, "decay_q1"),
          dy.decay_channel(pair2, 1, t1, "decay_q2"),
          dy.heating_channel(pair2, 0, t1, p_eq, "heat_q1"),
          dy.heating_channel(pair2, 1, t1, p_eq, "heat_q2")]
    v01 = hl.basis_vector(pair2, (0, 1))
    v10 = hl.basis_vector(pair2, (1, 0))
    psi0 = hl.pure_state((v01 + v10) / np.sqrt(2), pair2)
    p00 = hl.LinearOperator(np.diag([1.0, 0, 0, 0]), pair2)
    ts = np.linspace(6e-6, 90e-6, 5)

    rho0 = hl.density_state(np.outer(psi0.data, psi0.data.conj()), pair2)
    exact = np.array([s.data[0, 0].real for s in dy.lindblad_evolve(None, ch, rho0, ts)])

    n_traj = 1000
    means, sems = dy.trajectory_ensemble(None, ch, psi0, ts, n_traj, seed=42,
                                         observables=[p00])
    sigma = np.sqrt(exact * (1 - exact) / n_traj)
    assert np.all(np.abs(means[0] - exact) < 3.0 * np.maximum(sigma, 1e-3))


def test_trajectory_ensemble_sqrt_n_convergence(qubit_space):
    # error shrinks ~2x per 4x trajectories, within a factor 1.5
    gamma = 1.0 / 10e-6
    ch = [dy.decay_channel(qubit_space, 0, 1.0 / gamma, "decay")]
    psi0 = hl.basis_state(qubit_space, (1,))
    pe = hl.LinearOperator(np.diag([0.0, 1.0]), qubit_space)
    ts = np.array([10e-6])
    exact = math.exp(-gamma * 10e-6)
    errs = []
    for n in (250, 1000, 4000):
        reps = []
        for r in range(6):
            means, _ = dy.trajectory_ensemble(None, ch, psi0, ts, n, seed=100 + 17 * r + n,
                                              observables=[pe])
            reps.append(abs(means[0][0] - exact))
        errs.append(np.mean(reps))
    assert errs[0] / errs[1] > 2.0 / 1.5
    assert errs[1] / errs[2] > 2.0 / 1.5


def test_trajectory_deterministic_per_seed(pair2):
    ch = [dy.decay_channel(pair2, 0, 20e-6, "d1")]
    psi0 = hl.basis_state(pair2, (1, 0))
    a = dy.trajectory_run(None, ch, psi0, duration=50e-6, seed=11)
    b = dy.trajectory_run(None, ch, psi0, duration=50e-6, seed=11)
    assert a.jump_log == b.jump_log
    assert np.array_equal(a.final_state.data, b.final_state.data)


def test_erasure_time_constant():
    assert dy.erasure_time_constant(30e-6, 30e-6) == pytest.approx(30e-6, rel=1e-12)
    assert dy.erasure_time_constant(36e-6, 14e-6) == pytest.approx(
        2.0 / (1 / 36e-6 + 1 / 14e-6), rel=1e-12)


def test_chain_no_reheating_when_cold():
    ens = dy.erasure_chain_ensemble(30e-6, 30e-6, 0.0, [90e-6], 20_000, seed=5)
    coh = ens.coherent()[:, 0]
    sub = ens.in_subspace[:, 0]
    assert np.array_equal(coh, sub)  # survivors never decayed


def test_chain_unconditioned_population_matches_formula():
    t1, p = 30e-6, 0.002
    ts = np.array([10e-6, 30e-6, 60e-6, 120e-6, 240e-6])
    n = 100_000
    ens = dy.erasure_chain_ensemble(t1, t1, p, ts, n, seed=21)
    pop = ens.in_subspace.mean(axis=0)
    model = (1 - 2 * p) * np.exp(-ts / t1) + 2 * p
    sigma = np.sqrt(model * (1 - model) / n)
    assert np.all(np.abs(pop - model) < 3.5 * sigma)


def test_chain_reheated_fraction_at_t_deph():
    # fraction of subspace-enders that decohered at T_deph ~ 6 T1 equals
    # 1 - 1/e within 2%
    t1, p = 30e-6, 0.002
    t_deph = t1 * math.log((math.e - 1) / (2 * p))
    assert t_deph == pytest.approx(6.06 * t1, rel=0.01)
    n = 1_000_000
    ens = dy.erasure_chain_ensemble(t1, t1, p, [t_deph], n, seed=2)
    sub = ens.in_subspace[:, 0]
    coh = ens.coherent()[:, 0]
    frac_reheated = 1.0 - coh.sum() / sub.sum()
    assert frac_reheated == pytest.approx(1 - 1 / math.e, rel=0.02)


def test_chain_single_shot_record():
    rec = dy.classical_erasure_chain(30e-6, 30e-6, 0.002, 300e-6, 11, seed=9)
    assert len(rec.check_outcomes) == 11
    assert rec.check_outcomes[-1].time == pytest.approx(300e-6)
    for c in rec.check_outcomes:
        assert c.flag in (FLAG_ERASURE, FLAG_NO_ERASURE)
    # label consistent with the last flag for perfect checks
    if rec.true_final_label == "leaked_00":
        assert rec.check_outcomes[-1].flag == FLAG_ERASURE
    a = dy.classical_erasure_chain(30e-6, 30e-6, 0.002, 300e-6, 11, seed=9)
    assert a == rec


def test_chain_checks_suppress_undetected_reheats():
    # with 11 evenly spaced perfect checks over 300 us, reheated shots
    # that pass all checks are < 1% of subspace-enders
    t1, p, total = 30e-6, 0.002, 300e-6
    check_ts = np.array([(k + 1) * total / 11 for k in range(11)])
    n = 200_000
    ens = dy.erasure_chain_ensemble(t1, t1, p, check_ts, n, seed=33)
    pass_all = ens.in_subspace.all(axis=1)
    coh_end = ens.coherent()[:, -1]
    frac_undetected = 1.0 - coh_end[pass_all].mean()
    assert frac_undetected < 0.01
