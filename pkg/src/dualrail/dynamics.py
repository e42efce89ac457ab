"""Time evolution engines.

Three complementary integrators share the collapse-channel description:

* `lindblad_evolve` — dense master-equation integration on a density
  matrix, adaptive explicit Runge-Kutta with dense output.
* `trajectory_run` — norm-jump Monte Carlo wavefunction unraveling with
  a per-shot jump log; deterministic for a fixed seed. Windows where the
  Hamiltonian is constant are propagated with matrix exponentials, so
  long idle stretches cost almost nothing.
* `classical_erasure_chain` — the two-state decay/reheating jump chain
  of the dual-rail pair, with an exact-law vectorized ensemble sampler.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .hilbert import LinearOperator, ModeSpace, QuantumState, mode_operator
from .noise import NoiseTrace
from .pulses import Schedule, drive_hamiltonian
from .records import (
    FLAG_ERASURE,
    FLAG_NO_ERASURE,
    CheckOutcome,
)

TRACE_TOL = 1e-6
SOLVER_RTOL = 1e-8
SOLVER_ATOL = 1e-10
JUMP_TIME_TOL = 1e-13


class IntegrationError(RuntimeError):
    """Integrator failed to meet its tolerance or step-size bounds."""


@dataclass(frozen=True)
class CollapseChannel:
    """Collapse operator with rate; the Lindblad operator is sqrt(rate)*op."""

    operator: LinearOperator
    rate: float
    label: str

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("collapse rate must be non-negative")


def decay_channel(space: ModeSpace, mode: int, t1: float, label: str) -> CollapseChannel:
    return CollapseChannel(mode_operator(space, mode, "lower"), 1.0 / t1, label)


def heating_channel(space: ModeSpace, mode: int, t1: float, p_equil: float,
                    label: str) -> CollapseChannel:
    """Thermal excitation at rate p_equil/T1; bosonic matrix elements make
    the |1> -> |2> rate twice the |0> -> |1> rate automatically."""
    return CollapseChannel(mode_operator(space, mode, "raise"), p_equil / t1, label)


def thermal_resonator_channels(space: ModeSpace, mode: int, kappa: float,
                               n_bar: float, tag: str = "resonator") -> list[CollapseChannel]:
    a = mode_operator(space, mode, "lower")
    return [
        CollapseChannel(a, kappa * (1.0 + n_bar), f"{tag}_down"),
        CollapseChannel(a.dagger(), kappa * n_bar, f"{tag}_up"),
    ]


def _collapse_matrices(channels: Sequence[CollapseChannel]):
    mats = []
    for ch in channels:
        if ch.rate == 0.0:
            continue
        l = math.sqrt(ch.rate) * ch.operator.matrix
        mats.append((l, l.conj().T @ l, ch.label))
    return mats


def _as_h_func(h_of_t, dim: int):
    """Normalize a Hamiltonian description to (static_matrix_or_None, callable)."""
    if h_of_t is None:
        z = np.zeros((dim, dim), dtype=complex)
        return z, (lambda t: z)
    if isinstance(h_of_t, LinearOperator):
        m = h_of_t.matrix
        return m, (lambda t: m)
    if callable(h_of_t):
        return None, h_of_t
    m = np.asarray(h_of_t, dtype=complex)
    return m, (lambda t: m)


def lindblad_evolve(h_of_t, channels: Sequence[CollapseChannel], rho0: QuantumState,
                    t_grid: Sequence[float], rtol: float = SOLVER_RTOL,
                    atol: float = SOLVER_ATOL, max_step: float = np.inf,
                    method: str = "DOP853") -> list[QuantumState]:
    """Integrate drho/dt = -i[H, rho] + sum_k D[sqrt(rate_k) op_k](rho).

    Returns the density matrix at each point of the strictly increasing
    `t_grid`. The trace is monitored and a deviation beyond 1e-6 raises;
    outputs are re-hermitized and trace-normalized before wrapping.
    """
    if not rho0.kind == "density":
        raise ValueError("lindblad_evolve requires a density-matrix initial state")
    ts = np.asarray(t_grid, dtype=float)
    if ts.ndim != 1 or ts.size < 1 or np.any(np.diff(ts) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    n = rho0.space.dim
    _, h_func = _as_h_func(h_of_t, n)
    lops = _collapse_matrices(channels)

    def rhs(t, y):
        rho = y.reshape(n, n)
        h = h_func(t)
        out = -1j * (h @ rho - rho @ h)
        for l, ldl, _ in lops:
            out += l @ rho @ l.conj().T - 0.5 * (ldl @ rho + rho @ ldl)
        return out.ravel()

    t0 = min(0.0, ts[0])
    sol = solve_ivp(rhs, (t0, ts[-1]), rho0.data.ravel().astype(complex),
                    t_eval=ts, rtol=rtol, atol=atol, method=method, max_step=max_step)
    if not sol.success:
        raise IntegrationError(f"master-equation integration failed: {sol.message}")
    states = []
    for k in range(ts.size):
        rho = sol.y[:, k].reshape(n, n)
        rho = 0.5 * (rho + rho.conj().T)
        tr = float(np.real(np.trace(rho)))
        if abs(tr - 1.0) > TRACE_TOL:
            raise IntegrationError(f"trace deviated by {tr - 1.0:.2e} at t={ts[k]:.3e}")
        states.append(QuantumState(rho / tr, rho0.space, "density",
                                   norm_tol=TRACE_TOL, eig_tol=TRACE_TOL))
    return states


@dataclass
class HamiltonianModel:
    """Static Hamiltonian plus optional drive term and classical noise traces.

    `drive` is active only inside `windows`; outside them (and with no
    traces) the total Hamiltonian is constant and propagation uses
    matrix exponentials.
    """

    static: np.ndarray
    drive: Callable[[float], np.ndarray] | None = None
    windows: tuple[tuple[float, float], ...] = ()
    trace_terms: tuple[tuple[np.ndarray, NoiseTrace], ...] = ()

    def h(self, t: float) -> np.ndarray:
        out = self.static
        if self.drive is not None and any(a <= t <= b for a, b in self.windows):
            out = out + self.drive(t)
        for op, trace in self.trace_terms:
            out = out + trace.value_at(t) * op
        return out

    def drive_active(self, t0: float, t1: float) -> bool:
        if self.drive is None:
            return False
        return any(a < t1 and b > t0 for a, b in self.windows)

    @property
    def has_traces(self) -> bool:
        return len(self.trace_terms) > 0

    def min_trace_dt(self) -> float:
        return min(tr.dt for _, tr in self.trace_terms)


def hamiltonian_model(space: ModeSpace, static, schedule: Schedule | None = None,
                      noise_traces: Mapping[int, NoiseTrace] | None = None) -> HamiltonianModel:
    """Assemble the engine Hamiltonian from a static part, schedule drives,
    and per-mode frequency-offset noise traces."""
    stat = static.matrix if isinstance(static, LinearOperator) else np.asarray(static, dtype=complex)
    drive = None
    windows: tuple[tuple[float, float], ...] = ()
    if schedule is not None and schedule.segments:
        drive = drive_hamiltonian(space, schedule)
        windows = tuple((s.t_start, s.t_end) for s in schedule.segments)
    terms = []
    if noise_traces:
        for mode, trace in sorted(noise_traces.items()):
            terms.append((mode_operator(space, mode, "number").matrix, trace))
    return HamiltonianModel(stat, drive, windows, tuple(terms))


@dataclass
class TrajectoryResult:
    final_state: QuantumState
    jump_log: list[tuple[float, str]]
    check_outcomes: tuple[CheckOutcome, ...]
    t_eval: np.ndarray
    states: list[QuantumState]
    seed: int


class _JumpSampler:
    """Norm-jump bookkeeping: piecewise no-jump evolution with renewals.

    Each piece starts from a normalized state and a fresh uniform draw;
    the memorylessness of the jump process makes this statistically
    exact while keeping piece boundaries (checks, drive edges) simple.
    """

    def __init__(self, lops, rng):
        self.lops = lops
        self.rng = rng

    def select_channel(self, psi):
        weights = np.array([np.linalg.norm(l @ psi) ** 2 for l, _, _ in self.lops])
        total = weights.sum()
        if total <= 0:
            raise IntegrationError("jump fired with zero total channel weight")
        k = int(self.rng.choice(len(self.lops), p=weights / total))
        l, _, label = self.lops[k]
        out = l @ psi
        return out / np.linalg.norm(out), label


def _static_heff_piece(psi, t0, t1, heff, sampler, jump_log):
    """Propagate over [t0, t1] with constant H_eff, sampling jumps exactly.

    The no-jump norm is monotone non-increasing, so jump times are found
    by bisection on the cached exponential propagator.
    """
    t = t0
    while True:
        r = sampler.rng.random()
        dt = t1 - t
        if dt <= 0:
            return psi
        u_full = expm(-1j * heff * dt)
        cand = u_full @ psi
        if np.linalg.norm(cand) ** 2 > r:
            return cand
        lo, hi = 0.0, dt
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            nm = np.linalg.norm(expm(-1j * heff * mid) @ psi) ** 2
            if nm > r:
                lo = mid
            else:
                hi = mid
            if hi - lo < max(JUMP_TIME_TOL, 1e-9 * dt):
                break
        tj = t + 0.5 * (lo + hi)
        psi_j = expm(-1j * heff * (tj - t)) @ psi
        psi, label = sampler.select_channel(psi_j)
        jump_log.append((tj, label))
        t = tj


def _ode_heff_piece(psi, t0, t1, model: HamiltonianModel, sum_ldl, sampler, jump_log,
                    rtol, atol, max_step):
    """Adaptive-step non-Hermitian propagation with jump events."""

    def rhs(t, y):
        h = model.h(t)
        return (-1j) * (h @ y) - 0.5 * (sum_ldl @ y)

    t = t0
    while t < t1 - JUMP_TIME_TOL:
        r = sampler.rng.random()

        def hit(tt, y):
            return float(np.real(np.vdot(y, y)) - r)

        hit.terminal = True
        hit.direction = -1
        sol = solve_ivp(rhs, (t, t1), psi, rtol=rtol, atol=atol, method="DOP853",
                        events=hit, max_step=max_step, dense_output=False)
        if not sol.success:
            raise IntegrationError(f"trajectory integration failed: {sol.message}")
        if sol.t_events[0].size:
            tj = float(sol.t_events[0][0])
            psi_j = sol.y_events[0][0]
            psi, label = sampler.select_channel(psi_j)
            jump_log.append((tj, label))
            t = tj
        else:
            psi = sol.y[:, -1]
            t = t1
    return psi


def trajectory_run(h_of_t, channels: Sequence[CollapseChannel], psi0: QuantumState, *,
                   schedule: Schedule | None = None, duration: float | None = None,
                   noise_traces: Mapping[int, NoiseTrace] | None = None,
                   seed: int = 0, check_action=None,
                   t_eval: Sequence[float] | None = None,
                   rtol: float = SOLVER_RTOL, atol: float = SOLVER_ATOL,
                   t_start: float = 0.0) -> TrajectoryResult:
    """One Monte Carlo wavefunction trajectory with norm-jump unraveling.

    Deterministic non-Hermitian evolution under H_eff = H - (i/2) sum
    L^dag L, with a jump whenever the squared norm crosses a seeded
    uniform draw. `check_action(state, rng, time) -> (flag, new_state)`
    is invoked at every schedule check time; classical noise traces add
    time-dependent frequency offsets to the Hamiltonian.
    """
    if not psi0.is_pure:
        raise ValueError("trajectory_run requires a pure initial state")
    space = psi0.space
    dim = space.dim
    if isinstance(h_of_t, HamiltonianModel):
        model = h_of_t
    elif callable(h_of_t) and not isinstance(h_of_t, LinearOperator):
        model = HamiltonianModel(np.zeros((dim, dim), complex), h_of_t,
                                 ((-np.inf, np.inf),), ())
    else:
        if h_of_t is None:
            static = np.zeros((dim, dim), dtype=complex)
        elif isinstance(h_of_t, LinearOperator):
            static = h_of_t.matrix
        else:
            static = np.asarray(h_of_t, dtype=complex)
        model = HamiltonianModel(static, None, (), ())
    if schedule is not None and noise_traces:
        for _, tr in sorted(noise_traces.items()):
            if tr.duration < schedule.total_duration - 1e-12:
                raise ValueError("noise trace shorter than the schedule duration")
    if noise_traces and not model.trace_terms:
        model = HamiltonianModel(model.static, model.drive, model.windows,
                                 tuple((mode_operator(space, m, "number").matrix, tr)
                                       for m, tr in sorted(noise_traces.items())))

    total = duration
    if total is None:
        total = schedule.total_duration if schedule is not None else (
            float(np.max(t_eval)) if t_eval is not None else None)
    if total is None:
        raise ValueError("either a schedule, duration, or t_eval must set the time span")

    check_times = tuple(schedule.check_times) if schedule is not None else ()
    if check_times and check_action is None:
        raise ValueError("schedule has check times but no check_action was given")
    eval_times = np.asarray(sorted(t_eval), dtype=float) if t_eval is not None else np.empty(0)

    breakpoints = sorted({t_start, t_start + total} | set(check_times) | set(eval_times.tolist()))
    if schedule is not None:
        for seg in schedule.segments:
            breakpoints.extend([seg.t_start, seg.t_end])
    breakpoints = sorted({b for b in breakpoints if t_start <= b <= t_start + total + 1e-15})

    rng = np.random.default_rng(seed)
    lops = _collapse_matrices(channels)
    sum_ldl = sum((ldl for _, ldl, _ in lops), np.zeros((dim, dim), complex))
    sampler = _JumpSampler(lops, rng)
    heff_static = model.static - 0.5j * sum_ldl

    psi = np.array(psi0.data, dtype=complex)
    jump_log: list[tuple[float, str]] = []
    outcomes: list[CheckOutcome] = []
    states: list[QuantumState] = []
    check_set = set(check_times)
    eval_set = set(eval_times.tolist())

    def snapshot(vec):
        v = vec / np.linalg.norm(vec)
        return QuantumState(v, space, "pure", norm_tol=TRACE_TOL)

    if t_start in eval_set:
        states.append(snapshot(psi))

    for a, b in zip(breakpoints, breakpoints[1:]):
        if b - a > JUMP_TIME_TOL:
            use_ode = model.drive_active(a, b) or model.has_traces
            if use_ode:
                max_step = model.min_trace_dt() if model.has_traces else np.inf
                psi = _ode_heff_piece(psi, a, b, model, sum_ldl, sampler, jump_log,
                                      rtol, atol, max_step)
            else:
                psi = _static_heff_piece(psi, a, b, heff_static, sampler, jump_log)
            psi = psi / np.linalg.norm(psi)
        if b in check_set:
            flag, new_psi = check_action(snapshot(psi), rng, b)
            outcomes.append(CheckOutcome(b, flag))
            psi = np.array(new_psi.data if isinstance(new_psi, QuantumState) else new_psi,
                           dtype=complex)
            psi = psi / np.linalg.norm(psi)
        if b in eval_set:
            states.append(snapshot(psi))

    final = snapshot(psi)
    return TrajectoryResult(final, jump_log, tuple(outcomes), eval_times, states, seed)


def trajectory_ensemble(h_of_t, channels, psi0, t_eval, n_traj: int, seed: int,
                        observables: Sequence[LinearOperator], **kwargs):
    """Trajectory-averaged expectation values on a fixed time grid.

    Returns (means, sems) with shape (n_obs, n_times). Trajectories use
    seeds spawned deterministically from `seed`; results are identical
    for any execution order.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    obs = [o.matrix for o in observables]
    acc = np.zeros((len(obs), t_eval.size))
    acc2 = np.zeros_like(acc)
    seeds = np.random.SeedSequence(seed).spawn(n_traj)
    for ss in seeds:
        child_seed = int(ss.generate_state(1)[0])
        res = trajectory_run(h_of_t, channels, psi0, t_eval=t_eval,
                             seed=child_seed, **kwargs)
        for i, m in enumerate(obs):
            vals = np.array([np.real(np.vdot(s.data, m @ s.data)) for s in res.states])
            acc[i] += vals
            acc2[i] += vals ** 2
    means = acc / n_traj
    var = np.maximum(acc2 / n_traj - means ** 2, 0.0)
    sems = np.sqrt(var / n_traj)
    return means, sems


# ---------------------------------------------------------------------------
# Classical decay/heating chain of the dual-rail pair.


def erasure_time_constant(t1_q1: float, t1_q2: float) -> float:
    """Effective erasure lifetime 2/(1/T1_Q1 + 1/T1_Q2) of the shared excitation."""
    if t1_q1 <= 0 or t1_q2 <= 0:
        raise ValueError("T1 values must be positive")
    return 2.0 / (1.0 / t1_q1 + 1.0 / t1_q2)


@dataclass
class ChainEnsemble:
    """Vectorized classical-chain sample: state flags at observation times."""

    times: np.ndarray
    in_subspace: np.ndarray    # (n_shots, n_times) bool
    ever_decayed: np.ndarray   # (n_shots, n_times) bool

    def coherent(self) -> np.ndarray:
        return self.in_subspace & ~self.ever_decayed


def erasure_chain_ensemble(t1_q1: float, t1_q2: float, p_equil: float,
                           times: Sequence[float], n_shots: int, seed: int) -> ChainEnsemble:
    """Sample the subspace <-> |00> jump chain at the given times.

    Decay happens at rate 1/T1_eff and reheating at 2 p_equil / T1_eff.
    Segment endpoints are sampled from the exact two-state Markov law,
    jointly with whether any decay occurred, so the ensemble is exact at
    the observation times regardless of their spacing.
    """
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size == 0 or np.any(ts < 0) or np.any(np.diff(ts) <= 0):
        raise ValueError("times must be positive and strictly increasing")
    if not 0 <= p_equil < 0.5:
        raise ValueError("p_equil must lie in [0, 0.5)")
    t1_eff = erasure_time_constant(t1_q1, t1_q2)
    beta = 1.0 / t1_eff
    heat = 2.0 * p_equil / t1_eff
    lam = beta + heat

    rng = np.random.default_rng(seed)
    in_sub = np.ones(n_shots, dtype=bool)
    ever = np.zeros(n_shots, dtype=bool)
    out_sub = np.empty((n_shots, ts.size), dtype=bool)
    out_ever = np.empty((n_shots, ts.size), dtype=bool)

    prev = 0.0
    for k, t in enumerate(ts):
        tau = t - prev
        prev = t
        p_nodecay = math.exp(-beta * tau)
        p_end00 = (beta / lam) * (1.0 - math.exp(-lam * tau))
        p_dec = 1.0 - p_nodecay
        p_end00_given_dec = p_end00 / p_dec if p_dec > 0 else 0.0
        p_reheat = (heat / lam) * (1.0 - math.exp(-lam * tau)) if heat > 0 else 0.0

        u = rng.random(n_shots)
        v = rng.random(n_shots)
        w = rng.random(n_shots)

        decayed_now = in_sub & (u >= p_nodecay)
        stayed = in_sub & (u < p_nodecay)
        dec_end00 = decayed_now & (v < p_end00_given_dec)
        dec_endsub = decayed_now & ~dec_end00
        reheated = (~in_sub) & (w < p_reheat)

        ever |= decayed_now
        in_sub = stayed | dec_endsub | reheated
        out_sub[:, k] = in_sub
        out_ever[:, k] = ever
    return ChainEnsemble(ts, out_sub, out_ever)


def classical_erasure_chain(t1_q1: float, t1_q2: float, p_equil: float,
                            schedule_duration: float, n_checks: int, seed: int):
    """Event-driven single shot of the classical chain with perfect checks.

    Checks are evenly spaced, ending at the schedule end; each flags
    erasure when the shot is in |00> at the check time. The final bits
    reflect an ideal pair readout of the classical end state.
    """
    from .records import LABEL_IN_SUBSPACE, LABEL_LEAKED_00, ShotRecord

    if schedule_duration <= 0:
        raise ValueError("schedule_duration must be positive")
    if n_checks < 0:
        raise ValueError("n_checks must be non-negative")
    t1_eff = erasure_time_constant(t1_q1, t1_q2)
    beta = 1.0 / t1_eff
    heat = 2.0 * p_equil / t1_eff
    rng = np.random.default_rng(seed)

    check_times = [schedule_duration * (k + 1) / n_checks for k in range(n_checks)]
    transitions = []  # times at which the state toggled
    t, in_sub = 0.0, True
    while True:
        rate = beta if in_sub else heat
        if rate == 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= schedule_duration:
            break
        transitions.append(t)
        in_sub = not in_sub

    def state_at(time: float) -> bool:
        return bisect_right(transitions, time) % 2 == 0

    ever_decayed = len(transitions) > 0
    outcomes = tuple(
        CheckOutcome(tc, FLAG_NO_ERASURE if state_at(tc) else FLAG_ERASURE)
        for tc in check_times
    )
    end_sub = state_at(schedule_duration)
    if end_sub:
        label = LABEL_IN_SUBSPACE
        if ever_decayed:
            bits = (1, 0) if rng.random() < 0.5 else (0, 1)
        else:
            bits = (1, 0)
    else:
        label = LABEL_LEAKED_00
        bits = (0, 0)
    return ShotRecord(
        check_outcomes=outcomes,
        final_bits=bits,
        true_final_label=label,
        seed=seed,
        coherence_lost=ever_decayed,
        meta={"t1_eff": t1_eff},
    )
