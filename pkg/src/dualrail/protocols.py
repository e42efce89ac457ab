"""Experiment assembly and execution.

Builds pulse schedules for initialization, gates, coherence sequences,
erasure checks, and randomized benchmarking, and executes them through
either backend:

* the trajectory backend — Monte Carlo wavefunction evolution of the
  transmon pair under the schedule's drive Hamiltonian, with erasure
  checks applied as measurement-like events on the quantum state;
* the channel backend — the same schedule lowered to ideal logical
  unitaries plus a classical erasure/reheating state machine, fast
  enough for full shot counts.

Both backends consume the same Schedule objects, so their statistics
can be compared shot-for-shot.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .cliffords import CLIFFORDS, RBSequence, rb_generate, rz, X90
from .device import DeviceParams, OperatingPoint, build_pair_hamiltonian, pair_space, resonant_point
from .dynamics import (
    CollapseChannel,
    HamiltonianModel,
    TRACE_TOL,
    decay_channel,
    erasure_time_constant,
    hamiltonian_model,
    heating_channel,
    trajectory_run,
)
from .hilbert import LinearOperator, ModeSpace, QuantumState, logical_projectors, logical_state
from .noise import NoiseTrace
from .pulses import PulseSegment, Schedule, ScheduleBuilder
from .records import (
    FLAG_ERASURE,
    FLAG_NO_ERASURE,
    LABEL_IN_SUBSPACE,
    LABEL_LEAKED_00,
    LABEL_LEAKED_MULTI,
    CheckOutcome,
    ShotRecord,
)

INIT_DURATION = 40e-9
X90_DURATION = 48e-9
X90_SIGMA = 12e-9


class ProtocolError(ValueError):
    """Bad experiment parameters or an uncalibrated gate request."""


# ---------------------------------------------------------------------------
# Models


@dataclass(frozen=True)
class ErasureCheckModel:
    """Error model of one ancilla-based erasure check.

    The check classifies |00> against the logical subspace at the end of
    its pulse+readout window. Backaction on surviving subspace states is
    a deterministic Z rotation plus optional extra dephasing; a positive
    detection can re-excite the pair out of |00> with the MIST
    probability.
    """

    pulse_duration: float = 540e-9
    readout_duration: float = 340e-9
    p_false_positive_pole: float = 0.0058
    p_false_positive_equator: float = 0.008
    p_false_negative: float = 0.0154
    deterministic_phase: float = 0.0142
    p_dephase: float = 0.0
    p_mist_reexcite: float = 2.93e-4

    def __post_init__(self):
        for name in ("p_false_positive_pole", "p_false_positive_equator",
                     "p_false_negative", "p_dephase", "p_mist_reexcite"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ProtocolError(f"{name}={v} outside [0, 1]")
        if self.pulse_duration <= 0 or self.readout_duration <= 0:
            raise ProtocolError("check durations must be positive")

    @property
    def window(self) -> float:
        return self.pulse_duration + self.readout_duration

    def false_positive_for(self, bloch_z: float) -> float:
        """Pole rate for states near |0L>/|1L>, equator rate otherwise."""
        return (self.p_false_positive_pole if abs(bloch_z) >= 0.5
                else self.p_false_positive_equator)


def ideal_check_model(window: float = 880e-9) -> ErasureCheckModel:
    return ErasureCheckModel(pulse_duration=window * 540.0 / 880.0,
                             readout_duration=window * 340.0 / 880.0,
                             p_false_positive_pole=0.0, p_false_positive_equator=0.0,
                             p_false_negative=0.0, deterministic_phase=0.0,
                             p_dephase=0.0, p_mist_reexcite=0.0)


@dataclass(frozen=True)
class ReadoutModel:
    """Per-transmon confusion of the final joint pair readout.

    Defaults are calibrated so a shot truly in the logical subspace is
    misread as (0,0) with probability ~10%, the observed final-readout
    background; the dominant error is decay during the 1 us readout.
    """

    p_read1_given0_q1: float = 0.01
    p_read0_given1_q1: float = 0.10
    p_read1_given0_q2: float = 0.01
    p_read0_given1_q2: float = 0.10
    duration: float = 1e-6

    def __post_init__(self):
        for name in ("p_read1_given0_q1", "p_read0_given1_q1",
                     "p_read1_given0_q2", "p_read0_given1_q2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ProtocolError(f"{name}={v} outside [0, 1]")

    def corrupt(self, bits: tuple[int, int], rng) -> tuple[int, int]:
        q1, q2 = bits
        if q1 == 0:
            q1 ^= rng.random() < self.p_read1_given0_q1
        else:
            q1 ^= rng.random() < self.p_read0_given1_q1
        if q2 == 0:
            q2 ^= rng.random() < self.p_read1_given0_q2
        else:
            q2 ^= rng.random() < self.p_read0_given1_q2
        return int(q1), int(q2)


def ideal_readout_model(duration: float = 1e-6) -> ReadoutModel:
    return ReadoutModel(0.0, 0.0, 0.0, 0.0, duration)


@dataclass(frozen=True)
class GateCalibration:
    """Calibrated control parameters consumed by the schedule builders."""

    g: float                       # dual-rail half-gap at the operating point
    init_amplitude: float          # XY drive strength for the 40 ns prep pulse
    x90_amplitude: float           # flux-modulation deviation amplitude
    z_correction: float = 0.0      # virtual-Z after every X90
    init_carrier_offset: float = 0.0  # Stark pull of the prep line, rad/s
    init_duration: float = INIT_DURATION
    init_sigma: float = 10e-9
    x90_duration: float = X90_DURATION
    x90_sigma: float = X90_SIGMA

    def __post_init__(self):
        if self.g <= 0:
            raise ProtocolError("calibration requires g > 0")
        if self.init_amplitude <= 0 or self.x90_amplitude <= 0:
            raise ProtocolError("gate amplitudes are uncalibrated")


def analytic_calibration(g: float) -> GateCalibration:
    """First-principles starting point: pi area for init, pi/2 for X90."""
    init_seg = PulseSegment("xy1", "gaussian", 0.0, INIT_DURATION, 1.0, g, sigma=10e-9)
    init_amp = math.pi * math.sqrt(2.0) / init_seg.envelope_area()
    seg = PulseSegment("flux2", "gaussian", 0.0, X90_DURATION, 1.0, 2.0 * g,
                       sigma=X90_SIGMA)
    x90_amp = math.pi / seg.envelope_area()
    return GateCalibration(g=g, init_amplitude=init_amp, x90_amplitude=x90_amp)


# ---------------------------------------------------------------------------
# Schedule builders


def initialization_segment(calib: GateCalibration, target: str = "one_L") -> PulseSegment:
    """Microwave prep pulse on Q1 at the hybrid-mode frequency w0 +/- g.

    Gaussian-shaped to keep the two-photon manifold dark; the calibrated
    carrier offset tracks the Stark pull of the driven line.
    """
    if target not in ("zero_L", "one_L"):
        raise ProtocolError("target must be zero_L or one_L")
    sign = 1.0 if target == "one_L" else -1.0
    carrier = sign * (calib.g + calib.init_carrier_offset)
    return PulseSegment("xy1", "gaussian", 0.0, calib.init_duration,
                        calib.init_amplitude, carrier, sigma=calib.init_sigma)


def x90_segment(calib: GateCalibration, phase: float = 0.0,
                amplitude: float | None = None) -> PulseSegment:
    amp = calib.x90_amplitude if amplitude is None else amplitude
    return PulseSegment("flux2", "gaussian", 0.0, calib.x90_duration, amp,
                        2.0 * calib.g, phase=phase, sigma=calib.x90_sigma)


def append_initialization(builder: ScheduleBuilder, calib: GateCalibration,
                          target: str = "one_L") -> ScheduleBuilder:
    return builder.append(initialization_segment(calib, target))


def append_x90(builder: ScheduleBuilder, calib: GateCalibration,
               phase: float = 0.0, correct: bool = True) -> ScheduleBuilder:
    """One gate pulse (frame phase applied), then the calibrated virtual Z."""
    builder.append(x90_segment(calib, phase), apply_frame=True)
    if correct and calib.z_correction:
        builder.virtual_z(calib.z_correction)
    return builder


def append_pi(builder: ScheduleBuilder, calib: GateCalibration,
              phase: float = 0.0) -> ScheduleBuilder:
    append_x90(builder, calib, phase)
    append_x90(builder, calib, phase)
    return builder


def append_clifford(builder: ScheduleBuilder, calib: GateCalibration, index: int) -> ScheduleBuilder:
    """Virtual-Z compiled Clifford: Z(a), X90, Z(b), X90, Z(c)."""
    a, b, c = CLIFFORDS[index].z_phases
    builder.virtual_z(a)
    append_x90(builder, calib)
    builder.virtual_z(b)
    append_x90(builder, calib)
    builder.virtual_z(c)
    return builder


def place_checks(desired: Sequence[float], busy: Sequence[tuple[float, float]],
                 window: float, total: float) -> tuple[float, ...]:
    """Resolve check/pulse collisions in evenly spaced check placement.

    A check whose pulse+readout window would overlap a gate segment (or
    an already shifted check) moves later to the first idle instant.
    When no idle instant exists before the schedule end (densely packed
    gate strings), the check stays at its desired time and runs in
    parallel with the gates, which is how dense circuits interleave
    checks on the ancilla.
    """
    placed: list[float] = []
    occupied = sorted(busy)
    for t_desired in sorted(desired):
        start = max(t_desired - window, 0.0)
        for _ in range(10_000):
            conflict_end = None
            for a, b in occupied:
                if a < start + window and b > start:
                    conflict_end = b
                    break
            if conflict_end is None:
                for p in placed:
                    if p - window < start + window and p > start:
                        conflict_end = p
                        break
            if conflict_end is None:
                break
            start = conflict_end
        t = start + window
        if t > total * (1.0 + 1e-12) + 1e-15:
            t = min(max(t_desired, 0.0), total)  # parallel placement
        while t in placed:
            t += 1e-12
        placed.append(t)
    return tuple(sorted(placed))


def evenly_spaced_checks(t_start: float, t_end: float, n_checks: int) -> list[float]:
    """Check completion times spaced by (t_end - t_start)/(n-1), ends included."""
    if n_checks <= 0:
        return []
    if n_checks == 1:
        return [t_end]
    step = (t_end - t_start) / (n_checks - 1)
    return [t_start + k * step for k in range(n_checks)]


def build_initialization(calib: GateCalibration, target: str = "one_L") -> Schedule:
    b = ScheduleBuilder()
    append_initialization(b, calib, target)
    return b.build()


def build_x90(calib: GateCalibration, phase: float = 0.0) -> Schedule:
    b = ScheduleBuilder()
    append_x90(b, calib, phase)
    return b.build()


def build_ramsey(calib: GateCalibration, delay: float, detuning: float = 0.0,
                 final_phase: float = 0.0, n_checks: int = 0,
                 check_model: ErasureCheckModel | None = None,
                 initialize: bool = True) -> Schedule:
    """pi/2 - delay - pi/2, with a software detuning applied as a final
    virtual Z of detuning*delay (plus any explicit final phase)."""
    if delay < 0:
        raise ProtocolError("delay must be non-negative")
    b = ScheduleBuilder()
    if initialize:
        append_initialization(b, calib)
    append_x90(b, calib)
    evo_start = b.t
    b.idle(delay)
    b.virtual_z(-(detuning * delay + final_phase))
    append_x90(b, calib)
    sched = b.build()
    if n_checks:
        model = check_model or ErasureCheckModel()
        desired = evenly_spaced_checks(evo_start, evo_start + delay, n_checks)
        busy = [(s.t_start, s.t_end) for s in sched.segments]
        checks = place_checks(desired, busy, model.window, sched.total_duration)
        sched = Schedule(sched.segments, checks, sched.total_duration)
    return sched


def build_cpmg(calib: GateCalibration, n_pulses: int, tau: float,
               n_checks: int = 0, final_phase: float = 0.0,
               check_model: ErasureCheckModel | None = None,
               initialize: bool = True,
               check_times: Sequence[float] | None = None) -> Schedule:
    """pi/2 - [tau/2 - pi - tau/2]^N - pi/2(final_phase), pi = two X90s.

    Total free evolution time is N tau; `n_checks` erasure checks are
    evenly spaced across it (both ends included), shifted off gate
    windows per `place_checks`. Explicit `check_times` (relative to the
    start of free evolution) override the even spacing.
    """
    if n_pulses < 1:
        raise ProtocolError("CPMG needs at least one pi pulse")
    if tau <= 0:
        raise ProtocolError("tau must be positive")
    b = ScheduleBuilder()
    if initialize:
        append_initialization(b, calib)
    append_x90(b, calib)
    evo_start = b.t
    for _ in range(n_pulses):
        b.idle(0.5 * tau)
        append_pi(b, calib)
        b.idle(0.5 * tau)
    b.virtual_z(-final_phase)
    append_x90(b, calib)
    sched = b.build()
    model = check_model or ErasureCheckModel()
    if check_times is not None:
        desired = [evo_start + t for t in check_times]
    else:
        desired = evenly_spaced_checks(evo_start, evo_start + n_pulses * tau, n_checks)
    if desired:
        busy = [(s.t_start, s.t_end) for s in sched.segments]
        checks = place_checks(desired, busy, model.window, sched.total_duration)
        sched = Schedule(sched.segments, checks, sched.total_duration)
    return sched


def build_echo_with_arm_checks(calib: GateCalibration, total_time: float,
                               n_first: int, n_second: int,
                               check_model: ErasureCheckModel,
                               final_phase: float = 0.0,
                               initialize: bool = True) -> Schedule:
    """Spin echo with a chosen number of checks in each arm (backaction probe)."""
    b = ScheduleBuilder()
    if initialize:
        append_initialization(b, calib)
    append_x90(b, calib)
    evo_start = b.t
    b.idle(0.5 * total_time)
    append_pi(b, calib)
    second_start = b.t
    b.idle(0.5 * total_time)
    b.virtual_z(-final_phase)
    append_x90(b, calib)
    sched = b.build()
    desired = []
    if n_first:
        desired += evenly_spaced_checks(evo_start + check_model.window,
                                        evo_start + 0.5 * total_time, n_first)
    if n_second:
        desired += evenly_spaced_checks(second_start + check_model.window,
                                        second_start + 0.5 * total_time, n_second)
    busy = [(s.t_start, s.t_end) for s in sched.segments]
    checks = place_checks(desired, busy, check_model.window, sched.total_duration)
    return Schedule(sched.segments, checks, sched.total_duration)


def build_rb_schedule(calib: GateCalibration, seq: RBSequence, n_checks: int = 0,
                      check_model: ErasureCheckModel | None = None,
                      idle_gap: float = 0.0) -> Schedule:
    """Initialization, the Clifford string plus recovery, and evenly spaced
    checks across the whole circuit regardless of depth."""
    b = ScheduleBuilder()
    append_initialization(b, calib)
    circuit_start = b.t
    for k, idx in enumerate(seq.all_indices):
        if k and idle_gap:
            b.idle(idle_gap)
        append_clifford(b, calib, idx)
    sched = b.build()
    if n_checks:
        model = check_model or ErasureCheckModel()
        desired = evenly_spaced_checks(circuit_start, sched.total_duration, n_checks)
        busy = [(s.t_start, s.t_end) for s in sched.segments]
        checks = place_checks(desired, busy, model.window, sched.total_duration)
        total = max(sched.total_duration, max(checks))
        sched = Schedule(sched.segments, checks, total)
    return sched


# ---------------------------------------------------------------------------
# Quantum-state check and readout (trajectory backend)


class LogicalFrame:
    """Cached dual-rail projectors and logical operators on a pair space."""

    def __init__(self, space: ModeSpace, q1: int = 0, q2: int = 1):
        self.space = space
        projs = logical_projectors(space, q1, q2)
        self.p00 = projs["P00"].matrix
        self.p0l = projs["P0L"].matrix
        self.p1l = projs["P1L"].matrix
        self.pleak = projs["Pleak"].matrix
        self.zl = self.p1l - self.p0l
        self.vec_00 = logical_state(space, q1, q2, "one_L").data * 0.0
        idx00 = 0
        self.vec_00 = np.zeros(space.dim, dtype=complex)
        self.vec_00[idx00] = 1.0
        self.vec_0l = logical_state(space, q1, q2, "zero_L").data
        self.vec_1l = logical_state(space, q1, q2, "one_L").data

    def probabilities(self, psi: np.ndarray) -> tuple[float, float, float, float]:
        def p(m):
            return float(np.real(np.vdot(psi, m @ psi)))
        return p(self.p00), p(self.p0l), p(self.p1l), p(self.pleak)

    def z_rotation(self, phi: float) -> np.ndarray:
        """exp(-i phi/2 (P1L - P0L)): logical Z(phi), identity elsewhere."""
        return (np.eye(self.space.dim, dtype=complex)
                + (np.exp(-0.5j * phi) - 1.0) * self.p1l
                + (np.exp(+0.5j * phi) - 1.0) * self.p0l)


def perform_erasure_check(state: QuantumState, model: ErasureCheckModel, rng,
                          frame: LogicalFrame) -> tuple[str, QuantumState]:
    """Apply one erasure check to a pure pair state.

    Projects onto |00> versus its complement (the physical measurement),
    then classifies with the model's false-positive/negative rates and
    applies the subspace backaction. Returns (flag, post-check state).
    """
    psi = np.asarray(state.data, dtype=complex)
    p00, p0l, p1l, pleak = frame.probabilities(psi)
    if rng.random() < p00:
        flag = FLAG_NO_ERASURE if rng.random() < model.p_false_negative else FLAG_ERASURE
        new = frame.vec_00.copy()
        if flag == FLAG_ERASURE and rng.random() < model.p_mist_reexcite:
            new = frame.vec_0l.copy() if rng.random() < 0.5 else frame.vec_1l.copy()
    else:
        comp = psi - frame.vec_00 * np.vdot(frame.vec_00, psi)
        comp /= np.linalg.norm(comp)
        sub = p0l + p1l
        z = (p1l - p0l) / sub if sub > 1e-12 else 1.0
        p_fp = model.false_positive_for(z)
        flag = FLAG_ERASURE if rng.random() < p_fp else FLAG_NO_ERASURE
        phase = model.deterministic_phase
        if model.p_dephase and rng.random() < model.p_dephase:
            phase += math.pi
        new = frame.z_rotation(phase) @ comp if phase else comp
    return flag, QuantumState(new / np.linalg.norm(new), state.space, "pure",
                              norm_tol=TRACE_TOL)


def final_readout(state: QuantumState, model: ReadoutModel, rng,
                  frame: LogicalFrame) -> tuple[tuple[int, int], str]:
    """Projective pair readout after adiabatic separation, plus confusion.

    |0L> maps to the pair bits (0,1), |1L> to (1,0), |00> to (0,0), and
    the two-photon manifold to (1,1). Returns (bits, true label).
    """
    psi = np.asarray(state.data, dtype=complex)
    p00, p0l, p1l, pleak = frame.probabilities(psi)
    probs = np.clip([p00, p0l, p1l, pleak], 0.0, None)
    probs = probs / probs.sum()
    k = int(rng.choice(4, p=probs))
    true_bits = [(0, 0), (0, 1), (1, 0), (1, 1)][k]
    label = (LABEL_LEAKED_00 if k == 0
             else LABEL_IN_SUBSPACE if k in (1, 2) else LABEL_LEAKED_MULTI)
    return model.corrupt(true_bits, rng), label


# ---------------------------------------------------------------------------
# Trajectory backend


@dataclass
class TrajectoryBackend:
    """Runs schedules as Monte Carlo wavefunction shots on the transmon pair.

    Simulated in the frame rotating at the parked frequency; dim-2
    transmons are enough when two-photon heating is disabled.
    """

    device: DeviceParams
    point: OperatingPoint
    dim: int = 2
    include_heating: bool = False
    check_model: ErasureCheckModel = field(default_factory=ErasureCheckModel)
    readout_model: ReadoutModel = field(default_factory=ReadoutModel)
    t1_override: tuple[float, float] | None = None

    def __post_init__(self):
        if self.include_heating and self.dim < 3:
            raise ProtocolError("two-photon heating requires dim >= 3 transmons")
        self.space = pair_space(self.dim)
        self.frame = LogicalFrame(self.space)
        self.h_static = build_pair_hamiltonian(
            self.device, self.point, self.space,
            frame_frequency=self.point.omega0).matrix
        t1s = self.t1_override or (self.device.transmons[0].t1, self.device.transmons[1].t1)
        self.channels = [
            decay_channel(self.space, 0, t1s[0], "decay_q1"),
            decay_channel(self.space, 1, t1s[1], "decay_q2"),
        ]
        if self.include_heating:
            self.channels += [
                heating_channel(self.space, 0, t1s[0], self.device.transmons[0].p_equil, "heat_q1"),
                heating_channel(self.space, 1, t1s[1], self.device.transmons[1].p_equil, "heat_q2"),
            ]

    def model_for(self, schedule: Schedule,
                  noise_traces: dict[int, NoiseTrace] | None = None) -> HamiltonianModel:
        return hamiltonian_model(self.space, self.h_static, schedule, noise_traces)

    def check_action(self, rng_model: ErasureCheckModel | None = None):
        model = rng_model or self.check_model
        frame = self.frame

        def action(state, rng, t):
            return perform_erasure_check(state, model, rng, frame)

        return action

    def run_shot(self, schedule: Schedule, seed: int,
                 noise_traces: dict[int, NoiseTrace] | None = None,
                 psi0: QuantumState | None = None) -> ShotRecord:
        start = psi0 or QuantumState(self.frame.vec_00, self.space, "pure")
        res = trajectory_run(self.model_for(schedule, noise_traces), self.channels,
                             start, schedule=schedule, seed=seed,
                             check_action=self.check_action())
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(7,)))
        bits, label = final_readout(res.final_state, self.readout_model, rng, self.frame)
        lost = any(lab.startswith("decay") for _, lab in res.jump_log) and label == LABEL_IN_SUBSPACE
        return ShotRecord(res.check_outcomes, bits, label, seed, coherence_lost=lost)

    def propagate_unitary(self, schedule: Schedule) -> np.ndarray:
        """Noiseless propagator of a schedule (drives on, channels off)."""
        model = self.model_for(schedule)
        dim = self.space.dim
        cols = []
        for k in range(dim):
            psi0 = np.zeros(dim, dtype=complex)
            psi0[k] = 1.0
            cols.append(_propagate_nojump(model, np.zeros((dim, dim), complex),
                                          schedule, psi0, None)[0])
        return np.column_stack(cols)


def _propagate_nojump(model: HamiltonianModel, sum_ldl: np.ndarray, schedule: Schedule,
                      psi0: np.ndarray, frame: LogicalFrame,
                      check_model: ErasureCheckModel,
                      rtol: float = 1e-10, atol: float = 1e-12):
    """Deterministic non-Hermitian pass through a schedule.

    At every check marker the |00> component is projected out (the
    surviving branch), so the running squared norm is the joint survival
    probability against both decay jumps and check classification. The
    deterministic check phase is applied to the surviving branch.

    Returns (final psi~, post-check norm^2 array, subspace z array).
    """
    heff = model.static - 0.5j * sum_ldl
    edges = sorted({0.0, schedule.total_duration}
                   | {s.t_start for s in schedule.segments}
                   | {s.t_end for s in schedule.segments}
                   | set(schedule.check_times))
    check_set = set(schedule.check_times)
    check_u = frame.z_rotation(check_model.deterministic_phase)
    psi = np.array(psi0, dtype=complex)
    norms, zs = [], []

    def rhs(t, y):
        h = model.h(t)
        return (-1j) * (h @ y) - 0.5 * (sum_ldl @ y)

    for a, b in zip(edges, edges[1:]):
        if b - a > 1e-15:
            if model.drive_active(a, b) or model.has_traces:
                max_step = model.min_trace_dt() if model.has_traces else np.inf
                sol = solve_ivp(rhs, (a, b), psi, rtol=rtol, atol=atol,
                                method="DOP853", max_step=max_step)
                if not sol.success:
                    raise RuntimeError(f"no-jump pass failed: {sol.message}")
                psi = sol.y[:, -1]
            else:
                psi = expm(-1j * heff * (b - a)) @ psi
        if b in check_set:
            psi = psi - frame.vec_00 * np.vdot(frame.vec_00, psi)
            norms.append(float(np.linalg.norm(psi) ** 2))
            p0l = float(np.real(np.vdot(psi, frame.p0l @ psi)))
            p1l = float(np.real(np.vdot(psi, frame.p1l @ psi)))
            sub = p0l + p1l
            zs.append((p1l - p0l) / sub if sub > 1e-15 else 1.0)
            psi = check_u @ psi
    return psi, np.array(norms), np.array(zs)


def run_shots_shared(backend: TrajectoryBackend, schedule: Schedule,
                     seeds: Sequence[int]) -> list[ShotRecord]:
    """Trajectory shots sharing one deterministic no-jump pass per schedule.

    Valid exactly when a decay jump is absorbing (dim-2 pair, heating
    off, no per-shot noise traces, no stochastic check dephasing): the
    post-jump state is |00>, which neither evolves nor jumps again. Each
    shot then only needs one uniform draw against the no-jump survival
    curve; rare MIST re-excitations fall back to generic continuation.
    """
    if backend.dim != 2 or backend.include_heating:
        raise ProtocolError("shared-shot fast path requires dim-2 pair, heating off")
    model = backend.check_model
    if model.p_dephase:
        raise ProtocolError("shared-shot fast path requires p_dephase = 0")
    frame = backend.frame
    hmodel = backend.model_for(schedule)
    dim = backend.space.dim
    sum_ldl = np.zeros((dim, dim), dtype=complex)
    for ch in backend.channels:
        if ch.rate:
            sum_ldl += ch.rate * (ch.operator.matrix.conj().T @ ch.operator.matrix)

    psi0 = frame.vec_00
    psi_end, norms, zs = _propagate_nojump(hmodel, sum_ldl, schedule, psi0, frame, model)
    norm_end = float(np.linalg.norm(psi_end) ** 2)
    survivor = QuantumState(psi_end / np.linalg.norm(psi_end), backend.space, "pure",
                            norm_tol=TRACE_TOL)
    check_times = schedule.check_times

    records = []
    for seed in seeds:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
        r = rng.random()
        alive = norms > r  # still in subspace at each check
        outcomes: list[CheckOutcome] = []
        reexcited_at = None
        for k, t in enumerate(check_times):
            if alive[k]:
                p_fp = model.false_positive_for(zs[k])
                flag = FLAG_ERASURE if rng.random() < p_fp else FLAG_NO_ERASURE
            else:
                flag = FLAG_NO_ERASURE if rng.random() < model.p_false_negative else FLAG_ERASURE
                if flag == FLAG_ERASURE and rng.random() < model.p_mist_reexcite:
                    reexcited_at = (k, t)
            outcomes.append(CheckOutcome(t, flag))
            if reexcited_at is not None:
                break
        if reexcited_at is not None:
            k0, t0 = reexcited_at
            restart = frame.vec_0l if rng.random() < 0.5 else frame.vec_1l
            res = trajectory_run(hmodel, backend.channels,
                                 QuantumState(restart, backend.space, "pure"),
                                 schedule=schedule, duration=schedule.total_duration - t0,
                                 t_start=t0, seed=int(rng.integers(1 << 63)),
                                 check_action=backend.check_action())
            outcomes = outcomes + [c for c in res.check_outcomes if c.time > t0]
            final = res.final_state
            ever_decayed = True
        elif r < norm_end:
            final = survivor
            ever_decayed = False
        else:
            final = QuantumState(frame.vec_00, backend.space, "pure")
            ever_decayed = True
        ro_rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(7,)))
        bits, label = final_readout(final, backend.readout_model, ro_rng, frame)
        records.append(ShotRecord(tuple(outcomes), bits, label, int(seed),
                                  coherence_lost=ever_decayed and label == LABEL_IN_SUBSPACE))
    return records


def check_pulse_response(chi: float, pulse_duration: float, detuning: float) -> float:
    """Ancilla excitation from the conditional check pulse (Rabi lineshape).

    The pulse is calibrated as a pi pulse on the |00>-conditioned ancilla
    line; `detuning` is the drive offset from that line and `chi` shifts
    the line when the dual-rail holds a logical state. Used to reproduce
    the check-spectroscopy picture from the numerically computed shifts.
    """
    omega = math.pi / pulse_duration
    delta = detuning - chi
    weff = math.hypot(omega, delta)
    return (omega / weff) ** 2 * math.sin(0.5 * weff * pulse_duration) ** 2
