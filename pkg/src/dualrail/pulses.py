"""Pulse segments, schedules, and their drive Hamiltonians.

A Schedule is the time-ordered list of control events defining one
experiment shot: XY drive and flux-modulation segments plus the marker
times of mid-circuit erasure checks. Drives are expressed in the frame
rotating at the parked transmon frequency; XY carriers are given as
detunings from that frame and flux modulation keeps its full cosine
(no rotating-wave approximation on the modulation).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .hilbert import ModeSpace, mode_operator

CHANNELS = ("xy1", "xy2", "xy3", "flux2")
ENVELOPES = ("square", "gaussian")

CHANNEL_MODE = {"xy1": 0, "xy2": 1, "xy3": 2, "flux2": 1}


class ScheduleError(ValueError):
    """Malformed pulse segment or schedule."""


@dataclass(frozen=True)
class PulseSegment:
    """One drive event on a control channel.

    For xy channels, `amplitude` is the drive strength (rad/s) and
    `carrier` the drive detuning from the rotating frame. For flux2,
    `amplitude` is the peak frequency deviation of Q2 and `carrier` the
    modulation frequency (the dual-rail gap for gates).
    """

    channel: str
    envelope: str
    t_start: float
    duration: float
    amplitude: float
    carrier: float
    phase: float = 0.0
    sigma: float | None = None

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ScheduleError(f"unknown channel {self.channel!r}")
        if self.envelope not in ENVELOPES:
            raise ScheduleError(f"unknown envelope {self.envelope!r}")
        if self.duration <= 0:
            raise ScheduleError("segment duration must be positive")
        if self.envelope == "gaussian":
            if self.sigma is None or self.sigma <= 0:
                raise ScheduleError("gaussian envelope requires sigma > 0")

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    def envelope_value(self, t: float) -> float:
        """Envelope at absolute time t (zero outside the segment window)."""
        if t < self.t_start or t > self.t_end:
            return 0.0
        if self.envelope == "square":
            return 1.0
        center = self.t_start + 0.5 * self.duration
        return math.exp(-0.5 * ((t - center) / self.sigma) ** 2)

    def envelope_area(self) -> float:
        """Integral of the envelope over the segment window."""
        if self.envelope == "square":
            return self.duration
        half = 0.5 * self.duration / self.sigma
        return self.sigma * math.sqrt(2.0 * math.pi) * math.erf(half / math.sqrt(2.0))


@dataclass(frozen=True)
class Schedule:
    """Time-ordered drive segments plus erasure-check marker times."""

    segments: tuple[PulseSegment, ...]
    check_times: tuple[float, ...]
    total_duration: float

    def __post_init__(self):
        segs = tuple(self.segments)
        for a, b in zip(segs, segs[1:]):
            if b.t_start < a.t_start:
                raise ScheduleError("segments must be sorted by t_start")
        for seg in segs:
            if seg.t_end > self.total_duration + 1e-15:
                raise ScheduleError("segment extends past total_duration")
        for t in self.check_times:
            if not 0.0 <= t <= self.total_duration:
                raise ScheduleError("check time outside [0, total_duration]")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "check_times", tuple(self.check_times))

    def digest(self) -> str:
        """Stable hash of the schedule content, for record-file headers."""
        payload = {
            "segments": [[s.channel, s.envelope, s.t_start, s.duration, s.amplitude,
                          s.carrier, s.phase, s.sigma] for s in self.segments],
            "checks": list(self.check_times),
            "total": self.total_duration,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


class ScheduleBuilder:
    """Appends segments in order while tracking time and the virtual-Z frame.

    Z rotations are applied virtually: they advance `frame_phase`, which
    offsets the drive phase of every subsequent flux-modulation segment.
    """

    def __init__(self):
        self.segments: list[PulseSegment] = []
        self.check_times: list[float] = []
        self.t = 0.0
        self.frame_phase = 0.0

    def idle(self, duration: float) -> "ScheduleBuilder":
        if duration < 0:
            raise ScheduleError("idle duration must be non-negative")
        self.t += duration
        return self

    def virtual_z(self, phase: float) -> "ScheduleBuilder":
        """Zero-duration frame update; composes additively mod 2 pi."""
        self.frame_phase = (self.frame_phase + phase) % (2.0 * math.pi)
        return self

    def append(self, segment: PulseSegment, apply_frame: bool = False) -> "ScheduleBuilder":
        seg = replace(segment, t_start=self.t)
        if apply_frame and seg.channel == "flux2":
            seg = replace(seg, phase=seg.phase + self.frame_phase)
        self.segments.append(seg)
        self.t = seg.t_end
        return self

    def mark_check(self, window: float = 0.0) -> "ScheduleBuilder":
        """Record an erasure check ending after `window` of schedule time."""
        self.t += window
        self.check_times.append(self.t)
        return self

    def build(self, total_duration: float | None = None) -> Schedule:
        total = self.t if total_duration is None else total_duration
        return Schedule(tuple(self.segments), tuple(self.check_times), total)


def drive_hamiltonian(space: ModeSpace, schedule: Schedule) -> Callable[[float], np.ndarray]:
    """Time-dependent drive term of a schedule on the given space.

    XY segments contribute (A/2) env(t) (a e^{+i(ct+phi)} + h.c.) in the
    rotating frame (carrier c is the detuning from the frame); flux2
    segments contribute A env(t) cos(ct + phi) n_2 with the full cosine.
    """
    dim = space.dim
    prepared = []
    for seg in schedule.segments:
        mode = CHANNEL_MODE[seg.channel]
        if seg.channel == "flux2":
            op = mode_operator(space, mode, "number").matrix
            prepared.append((seg, "flux", op, None))
        else:
            a = mode_operator(space, mode, "lower").matrix
            prepared.append((seg, "xy", a, a.conj().T))

    def h_drive(t: float) -> np.ndarray:
        h = np.zeros((dim, dim), dtype=complex)
        for seg, kind, op, op_dag in prepared:
            env = seg.envelope_value(t)
            if env == 0.0:
                continue
            if kind == "flux":
                h += (seg.amplitude * env * math.cos(seg.carrier * t + seg.phase)) * op
            else:
                half = 0.5 * seg.amplitude * env
                phase = seg.carrier * t + seg.phase
                h += half * (np.exp(1j * phase) * op + np.exp(-1j * phase) * op_dag)
        return h

    return h_drive


def segment_edges(schedule: Schedule) -> np.ndarray:
    """Sorted unique event times (segment starts/ends, checks, endpoints)."""
    ts = {0.0, schedule.total_duration}
    for seg in schedule.segments:
        ts.add(seg.t_start)
        ts.add(seg.t_end)
    ts.update(schedule.check_times)
    return np.array(sorted(ts))
