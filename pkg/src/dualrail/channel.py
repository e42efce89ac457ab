"""Fast channel-mode execution of schedules.

Lowers a Schedule to ideal logical gates on the dual-rail qubit plus a
classical erasure state machine: decay to |00> at the erasure rate,
reheating into an incoherent subspace state, logical bit flips and
dephasing from configured noise, erasure-check classification errors
and backaction, and confused final readout. One shot is one pass of the
state machine; everything is deterministic per (root seed, circuit,
shot) triple.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cliffords import PAULI_X, PAULI_Y, PAULI_Z, X90, rz
from .noise import NoiseTrace
from .protocols import ErasureCheckModel, ProtocolError, ReadoutModel
from .pulses import Schedule
from .records import (
    FLAG_ERASURE,
    FLAG_NO_ERASURE,
    LABEL_IN_SUBSPACE,
    LABEL_LEAKED_00,
    LABEL_LEAKED_MULTI,
    CheckOutcome,
    ShotRecord,
)

# Logical basis order is (|0L>, |1L>).
KET_0L = np.array([1.0, 0.0], dtype=complex)
KET_1L = np.array([0.0, 1.0], dtype=complex)

_PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)

# Status codes of the classical layer.
_COH = 0      # coherent state in the logical subspace
_ERASED = 1   # |00>
_INCOH = 2    # reheated: classical mixture rail, no phase coherence
_MULTI = 3    # two-photon manifold


@dataclass(frozen=True)
class ChannelNoise:
    """Noise knobs of the channel backend.

    `t_eras_0l/1l` are per-logical-state erasure lifetimes (equal by
    default); `reheat_rate` the |00> -> subspace rate; `bitflip_rate`
    drives logical X errors (noise at the dual-rail gap, rate S(2g)/2
    per direction); `dephasing_trace_factory(seed)` yields a per-shot
    dual-rail frequency-offset trace; `residual_pauli_per_x90` injects a
    uniformly random Pauli after each gate pulse with that probability.
    """

    t_eras_0l: float = math.inf
    t_eras_1l: float = math.inf
    reheat_rate: float = 0.0
    bitflip_rate: float = 0.0
    dephasing_trace_factory: Callable[[int], NoiseTrace] | None = None
    residual_pauli_per_x90: float = 0.0
    leak_multi_rate: float = 0.0

    def erasure_rate(self, bloch_z: float) -> float:
        r0 = 0.0 if math.isinf(self.t_eras_0l) else 1.0 / self.t_eras_0l
        r1 = 0.0 if math.isinf(self.t_eras_1l) else 1.0 / self.t_eras_1l
        w1 = 0.5 * (1.0 + bloch_z)
        return (1.0 - w1) * r0 + w1 * r1


def residual_pauli_prob_per_x90(r_per_clifford: float) -> float:
    """Per-X90 uniform-Pauli probability injecting a given RB residual error.

    A uniform Pauli with total probability q scales the Bloch vector by
    s = 1 - 4q/3 per gate; two gates per Clifford give survival decay
    p = s^2 and residual error r = (1-p)/2.
    """
    if not 0.0 <= r_per_clifford < 0.5:
        raise ProtocolError("residual error per Clifford must lie in [0, 0.5)")
    s = math.sqrt(1.0 - 2.0 * r_per_clifford)
    return 0.75 * (1.0 - s)


def lower_schedule(schedule: Schedule) -> list[tuple]:
    """Compile a schedule into timed channel events.

    Events: ("window", dt), ("prep", target), ("gate", U), ("check",),
    in time order; every instant of [0, total_duration] is covered by
    exactly one window, with gates/preps taking effect at their segment
    end and checks at their marker time.
    """
    marks: list[tuple[float, int, tuple]] = []  # (time, order, event)
    for seg in schedule.segments:
        if seg.channel == "xy1":
            target = "one_L" if seg.carrier > 0 else "zero_L"
            marks.append((seg.t_end, 0, ("prep", target)))
        elif seg.channel == "flux2":
            # Drive phase phi rotates about the equatorial axis at azimuth
            # -phi in the (|0L>, |1L>) basis (interaction picture at 2g).
            u = rz(-seg.phase) @ X90 @ rz(seg.phase)
            marks.append((seg.t_end, 0, ("gate", u)))
        else:
            raise ProtocolError(f"channel backend cannot lower segments on {seg.channel}")
    for t in schedule.check_times:
        marks.append((t, 1, ("check",)))
    marks.sort(key=lambda m: (m[0], m[1]))
    events: list[tuple] = []
    t_cur = 0.0
    for t, _, ev in marks:
        if t > t_cur:
            events.append(("window", t - t_cur))
            t_cur = t
        events.append(ev)
    if schedule.total_duration > t_cur:
        events.append(("window", schedule.total_duration - t_cur))
    return events


@dataclass
class ChannelBackend:
    """Executes lowered schedules shot by shot."""

    noise: ChannelNoise = field(default_factory=ChannelNoise)
    check_model: ErasureCheckModel = field(default_factory=ErasureCheckModel)
    readout_model: ReadoutModel = field(default_factory=ReadoutModel)

    def run_shot(self, events: Sequence[tuple], seed, total_duration: float | None = None,
                 record_meta: dict | None = None) -> ShotRecord:
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
        rng = np.random.default_rng(seq)
        seed_id = int(seq.generate_state(1)[0]) if not isinstance(seed, (int, np.integer)) else int(seed)
        noise = self.noise
        trace = None
        if noise.dephasing_trace_factory is not None:
            trace = noise.dephasing_trace_factory(int(rng.integers(1 << 63)))

        # Shots physically begin in |00>; a prep event promotes them into
        # the logical subspace.
        status = _ERASED
        psi = KET_1L.copy()
        incoh_rail = 1
        ever_decayed = False
        t = 0.0
        outcomes: list[CheckOutcome] = []

        def bloch_z() -> float:
            if status == _COH:
                return float(abs(psi[1]) ** 2 - abs(psi[0]) ** 2)
            return 1.0 if incoh_rail else -1.0

        for ev in events:
            kind = ev[0]
            if kind == "window":
                dt = ev[1]
                t_new = t + dt
                if status in (_COH, _INCOH):
                    rate = noise.erasure_rate(bloch_z())
                    if noise.leak_multi_rate:
                        total_rate = rate + noise.leak_multi_rate
                        if total_rate > 0 and rng.random() < -math.expm1(-total_rate * dt):
                            ever_decayed = True
                            if rng.random() < noise.leak_multi_rate / total_rate:
                                status = _MULTI
                            else:
                                status = _ERASED
                    elif rate > 0 and rng.random() < -math.expm1(-rate * dt):
                        ever_decayed = True
                        status = _ERASED
                    if status == _COH:
                        if noise.bitflip_rate > 0:
                            p_flip = 0.5 * -math.expm1(-2.0 * noise.bitflip_rate * dt)
                            if rng.random() < p_flip:
                                psi = PAULI_X @ psi
                        if trace is not None:
                            phi = trace.phase_integral(t, t_new)
                            psi = rz(phi) @ psi
                elif status == _ERASED and noise.reheat_rate > 0:
                    if rng.random() < -math.expm1(-noise.reheat_rate * dt):
                        status = _INCOH
                        incoh_rail = int(rng.random() < 0.5)
                t = t_new
            elif kind == "prep":
                status = _COH
                psi = KET_1L.copy() if ev[1] == "one_L" else KET_0L.copy()
                ever_decayed = False
            elif kind == "gate":
                if status == _COH:
                    psi = ev[1] @ psi
                    if noise.residual_pauli_per_x90 and rng.random() < noise.residual_pauli_per_x90:
                        psi = _PAULIS[rng.integers(3)] @ psi
            elif kind == "check":
                model = self.check_model
                if status == _ERASED:
                    flag = (FLAG_NO_ERASURE if rng.random() < model.p_false_negative
                            else FLAG_ERASURE)
                    if flag == FLAG_ERASURE and rng.random() < model.p_mist_reexcite:
                        status = _INCOH
                        incoh_rail = int(rng.random() < 0.5)
                else:
                    p_fp = model.false_positive_for(bloch_z())
                    flag = FLAG_ERASURE if rng.random() < p_fp else FLAG_NO_ERASURE
                    if status == _COH:
                        phase = model.deterministic_phase
                        if model.p_dephase and rng.random() < model.p_dephase:
                            phase += math.pi
                        if phase:
                            psi = rz(phase) @ psi
                outcomes.append(CheckOutcome(t, flag))
            else:
                raise ProtocolError(f"unknown channel event {kind!r}")

        rng_ro = np.random.default_rng(seq.spawn(1)[0])
        if status == _COH:
            p1 = abs(psi[1]) ** 2
            bits_true = (1, 0) if rng_ro.random() < p1 else (0, 1)
            label = LABEL_IN_SUBSPACE
        elif status == _INCOH:
            bits_true = (1, 0) if incoh_rail else (0, 1)
            label = LABEL_IN_SUBSPACE
        elif status == _ERASED:
            bits_true = (0, 0)
            label = LABEL_LEAKED_00
        else:
            bits_true = (1, 1)
            label = LABEL_LEAKED_MULTI
        bits = self.readout_model.corrupt(bits_true, rng_ro)
        lost = ever_decayed and label == LABEL_IN_SUBSPACE
        return ShotRecord(tuple(outcomes), bits, label, seed_id,
                          coherence_lost=lost, meta=record_meta or {})

    def run_schedule(self, schedule: Schedule, n_shots: int, root_seed: int,
                     circuit_index: int = 0, record_meta: dict | None = None) -> list[ShotRecord]:
        events = lower_schedule(schedule)
        out = []
        for s in range(n_shots):
            seq = np.random.SeedSequence(entropy=root_seed, spawn_key=(circuit_index, s))
            out.append(self.run_shot(events, seq, record_meta=record_meta))
        return out
