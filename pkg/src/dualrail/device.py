"""Device parameterization and dual-rail spectral analytics.

Holds the three-transmon device description, the full-system Hamiltonian,
closed forms for the dual-rail energy gap and its optimal operating
offset, and numeric dispersive shifts of the dual-rail pair on the
ancilla. All frequencies are angular (rad/s) internally; serialization
uses plain Hz (see `to_dict`/`from_dict`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.constants import physical_constants

from .hilbert import (
    LinearOperator,
    ModeSpace,
    logical_state,
    mode_operator,
)

TWO_PI = 2.0 * math.pi
PHI0 = physical_constants["mag. flux quantum"][0]  # Wb

# Validity thresholds for the perturbative expansions.
EXPANSION_DELTA_MAX_FRACTION = 1.0 / 3.0   # |delta| <= g0/3
EXPANSION_G_MAX_FRACTION = 0.1             # g0 <= omega0/10
DISPERSIVE_DETUNING_MIN_RATIO = 10.0       # |Delta| >= 10 g23
OVERLAP_THRESHOLD = 0.7


class DeviceError(ValueError):
    """Inconsistent device parameters or operating point."""


class LevelCollisionError(RuntimeError):
    """Eigenstate tracking failed: maximum overlap below threshold."""


@dataclass(frozen=True)
class TransmonParams:
    """Single tunable transmon: tuning range, anharmonicity, coherences."""

    omega_min: float
    omega_max: float
    omega_idle: float
    eta: float
    t1: float
    t2_star: float
    p_equil: float

    def __post_init__(self):
        if not self.omega_min <= self.omega_idle <= self.omega_max:
            raise DeviceError("require omega_min <= omega_idle <= omega_max")
        for name in ("omega_min", "omega_max", "omega_idle", "eta", "t1", "t2_star"):
            if getattr(self, name) <= 0:
                raise DeviceError(f"{name} must be strictly positive")
        if not 0.0 <= self.p_equil < 0.5:
            raise DeviceError("p_equil must lie in [0, 0.5)")


@dataclass(frozen=True)
class ResonatorParams:
    """Readout resonator attached to one transmon."""

    omega_ro: float
    chi_ro: float
    kappa_ro: float

    def __post_init__(self):
        for name in ("omega_ro", "chi_ro", "kappa_ro"):
            if getattr(self, name) <= 0:
                raise DeviceError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class DeviceParams:
    """Full device description: three transmons, couplings, flux line."""

    transmons: tuple[TransmonParams, TransmonParams, TransmonParams]
    g12: float
    g13: float
    g23: float
    readout: tuple[ResonatorParams, ResonatorParams, ResonatorParams]
    mutual_inductance: float   # H
    line_impedance: float      # ohm
    line_temperature: float    # K

    def __post_init__(self):
        if len(self.transmons) != 3 or len(self.readout) != 3:
            raise DeviceError("expect exactly three transmons and three readout resonators")
        for g in (self.g12, self.g13, self.g23):
            if g < 0:
                raise DeviceError("couplings must be non-negative")
        for name in ("mutual_inductance", "line_impedance", "line_temperature"):
            if getattr(self, name) <= 0:
                raise DeviceError(f"{name} must be strictly positive")

    def to_dict(self) -> dict:
        """Plain-Hz dictionary, suitable for the YAML config file."""
        def tr(t: TransmonParams) -> dict:
            return {
                "freq_min": t.omega_min / TWO_PI,
                "freq_max": t.omega_max / TWO_PI,
                "freq_idle": t.omega_idle / TWO_PI,
                "anharmonicity": t.eta / TWO_PI,
                "t1": t.t1,
                "t2_star": t.t2_star,
                "p_equil": t.p_equil,
            }

        def ro(r: ResonatorParams) -> dict:
            return {
                "freq_ro": r.omega_ro / TWO_PI,
                "chi_ro": r.chi_ro / TWO_PI,
                "kappa_ro": r.kappa_ro / TWO_PI,
            }

        return {
            "transmons": [tr(t) for t in self.transmons],
            "couplings": {"g12": self.g12 / TWO_PI, "g13": self.g13 / TWO_PI, "g23": self.g23 / TWO_PI},
            "readout": [ro(r) for r in self.readout],
            "flux_line": {
                "mutual_inductance_h": self.mutual_inductance,
                "impedance_ohm": self.line_impedance,
                "temperature_k": self.line_temperature,
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "DeviceParams":
        try:
            transmons = tuple(
                TransmonParams(
                    omega_min=TWO_PI * t["freq_min"],
                    omega_max=TWO_PI * t["freq_max"],
                    omega_idle=TWO_PI * t["freq_idle"],
                    eta=TWO_PI * t["anharmonicity"],
                    t1=t["t1"],
                    t2_star=t["t2_star"],
                    p_equil=t["p_equil"],
                )
                for t in d["transmons"]
            )
            readout = tuple(
                ResonatorParams(
                    omega_ro=TWO_PI * r["freq_ro"],
                    chi_ro=TWO_PI * r["chi_ro"],
                    kappa_ro=TWO_PI * r["kappa_ro"],
                )
                for r in d["readout"]
            )
            c = d["couplings"]
            fl = d["flux_line"]
            return DeviceParams(
                transmons=transmons,  # type: ignore[arg-type]
                g12=TWO_PI * c["g12"],
                g13=TWO_PI * c["g13"],
                g23=TWO_PI * c["g23"],
                readout=readout,  # type: ignore[arg-type]
                mutual_inductance=fl["mutual_inductance_h"],
                line_impedance=fl["impedance_ohm"],
                line_temperature=fl["temperature_k"],
            )
        except KeyError as exc:
            raise DeviceError(f"device description missing field {exc}") from exc


def paper_device() -> DeviceParams:
    """The measured device used throughout: the `paper-device` preset."""
    ghz = 1e9 * TWO_PI
    mhz = 1e6 * TWO_PI
    us = 1e-6
    return DeviceParams(
        transmons=(
            TransmonParams(3.1 * ghz, 5.1 * ghz, 5.1 * ghz, 193 * mhz, 36 * us, 31 * us, 0.002),
            TransmonParams(3.3 * ghz, 6.1 * ghz, 5.1 * ghz, 204 * mhz, 14 * us, 1.29 * us, 0.002),
            TransmonParams(2.5 * ghz, 3.95 * ghz, 3.74 * ghz, 196 * mhz, 38 * us, 4.4 * us, 0.002),
        ),
        g12=90.1 * mhz,
        g13=8.4 * mhz,
        g23=81.7 * mhz,
        readout=(
            ResonatorParams(7.749 * ghz, 3.73 * mhz, 9.3 * mhz),
            ResonatorParams(7.511 * ghz, 0.32 * mhz, 0.87 * mhz),
            ResonatorParams(7.341 * ghz, 2.53 * mhz, 6.7 * mhz),
        ),
        mutual_inductance=1.28e-12,
        line_impedance=50.0,
        line_temperature=4.0,
    )


@dataclass(frozen=True)
class OperatingPoint:
    """Parked dual-rail transmon frequencies and their reference frame.

    `omega0` is the reference operating frequency; detunings are
    delta_i = omega_i - omega0. Deviations (epsilon1, epsilon2) from the
    gap-insensitive optimum are measured with qubit 2 at the reference
    and qubit 1 parked 2 g0^2/omega0 below it.
    """

    omega1: float
    omega2: float
    omega0: float

    @property
    def delta(self) -> float:
        return self.omega1 - self.omega2

    @property
    def delta1(self) -> float:
        return self.omega1 - self.omega0

    @property
    def delta2(self) -> float:
        return self.omega2 - self.omega0

    def epsilons(self, g0: float) -> tuple[float, float]:
        offset = 2.0 * g0 * g0 / self.omega0
        return (self.delta1 + offset, self.delta2)


def resonant_point(device: DeviceParams, omega0: float | None = None) -> OperatingPoint:
    """Both dual-rail transmons parked on resonance at omega0 (idle by default)."""
    w0 = device.transmons[0].omega_idle if omega0 is None else omega0
    return OperatingPoint(omega1=w0, omega2=w0, omega0=w0)


@dataclass(frozen=True)
class DualRailFrame:
    """Reference coupling/frequency pair defining the dual-rail frame."""

    g0: float
    omega0: float

    def __post_init__(self):
        if self.g0 <= 0 or self.omega0 <= 0:
            raise DeviceError("g0 and omega0 must be positive")
        if dual_rail_gap_exact(self.g0, 0.0) <= 0:
            raise DeviceError("dual-rail gap must be positive")

    @property
    def gap_on_resonance(self) -> float:
        return 2.0 * self.g0


class ExpansionResult(NamedTuple):
    value: float
    valid: bool


class OperatingOffset(NamedTuple):
    delta_offset: float
    gap_at_optimum: float
    sensitivity_q2: float


class DispersiveShifts(NamedTuple):
    chi0: float
    chi1: float
    chi_bar: float
    delta_chi: float
    valid: bool


def transmon_space(dim: int = 3) -> ModeSpace:
    """Three-transmon space (Q1, Q2, ancilla), `dim` levels each."""
    return ModeSpace((dim, dim, dim), ("transmon1", "transmon2", "ancilla"))


def pair_space(dim: int = 3) -> ModeSpace:
    """Two-transmon dual-rail space without the ancilla."""
    return ModeSpace((dim, dim), ("transmon1", "transmon2"))


def build_full_hamiltonian(params: DeviceParams, point: OperatingPoint,
                           space: ModeSpace, frame_frequency: float = 0.0) -> LinearOperator:
    """Nonlinear-oscillator Hamiltonian of the coupled three-transmon system.

    H = sum_i (w_i n_i - eta_i/2 a_i^dag a_i^dag a_i a_i)
        + sum_{i<j} g_ij (a_i^dag a_j + h.c.)

    Transmons 1 and 2 take their frequencies from `point`; the ancilla
    sits at its idle frequency. A nonzero `frame_frequency` subtracts
    w_frame * n_total (rotating frame at that frequency).
    """
    if space.n_modes != 3:
        raise DeviceError("full Hamiltonian requires a three-transmon space")
    omegas = (point.omega1, point.omega2, params.transmons[2].omega_idle)
    etas = tuple(t.eta for t in params.transmons)
    couplings = {(0, 1): params.g12, (0, 2): params.g13, (1, 2): params.g23}
    h = np.zeros((space.dim, space.dim), dtype=complex)
    for i in range(3):
        n = mode_operator(space, i, "number").matrix
        h += (omegas[i] - frame_frequency) * n - 0.5 * etas[i] * (n @ n - n)
    for (i, j), g in couplings.items():
        ai = mode_operator(space, i, "lower").matrix
        aj = mode_operator(space, j, "lower").matrix
        h += g * (ai.conj().T @ aj + aj.conj().T @ ai)
    return LinearOperator(h, space).require_hermitian()


def build_pair_hamiltonian(params: DeviceParams, point: OperatingPoint,
                           space: ModeSpace, frame_frequency: float = 0.0) -> LinearOperator:
    """Two-transmon Hamiltonian of the dual-rail pair alone."""
    if space.n_modes != 2:
        raise DeviceError("pair Hamiltonian requires a two-transmon space")
    omegas = (point.omega1, point.omega2)
    etas = (params.transmons[0].eta, params.transmons[1].eta)
    h = np.zeros((space.dim, space.dim), dtype=complex)
    for i in range(2):
        n = mode_operator(space, i, "number").matrix
        h += (omegas[i] - frame_frequency) * n - 0.5 * etas[i] * (n @ n - n)
    a1 = mode_operator(space, 0, "lower").matrix
    a2 = mode_operator(space, 1, "lower").matrix
    h += params.g12 * (a1.conj().T @ a2 + a2.conj().T @ a1)
    return LinearOperator(h, space).require_hermitian()


def dual_rail_gap_exact(g: float, delta: float) -> float:
    """Exact dual-rail energy gap sqrt((2g)^2 + delta^2)."""
    if g <= 0:
        raise DeviceError("coupling g must be positive")
    return math.hypot(2.0 * g, delta)


def coupling_at(g0: float, omega0: float, omega1: float, omega2: float) -> float:
    """Frequency-dependent coupling g = g0 sqrt(w1 w2)/w0 of a fixed capacitance."""
    return g0 * math.sqrt(omega1 * omega2) / omega0


def dual_rail_gap_expansion(g0: float, omega0: float, delta1: float, delta2: float) -> ExpansionResult:
    """Second-order gap expansion around the reference operating frequency.

    E = 2 g0 + (g0/w0)(d1 + d2) + (d1 - d2)^2 / (4 g0), valid for
    |d_i| << g0 << w0; the flag records whether the inputs are inside the
    trust region (|d_i| <= g0/3 and g0 <= w0/10).
    """
    value = (2.0 * g0
             + (g0 / omega0) * (delta1 + delta2)
             + (delta1 - delta2) ** 2 / (4.0 * g0))
    valid = (max(abs(delta1), abs(delta2)) <= EXPANSION_DELTA_MAX_FRACTION * g0
             and g0 <= EXPANSION_G_MAX_FRACTION * omega0)
    return ExpansionResult(value, valid)


def optimal_operating_offset(g0: float, omega0: float) -> OperatingOffset:
    """Detuning offset that cancels first-order gap sensitivity on qubit 1.

    Qubit 1 parks below qubit 2 by 2 g0^2/w0; the gap at the optimum is
    2 g0 - g0^3/w0^2 and the residual linear sensitivity to qubit-2
    frequency noise is 2 g0/w0.
    """
    if not 0 < g0 < omega0:
        raise DeviceError("require 0 < g0 < omega0")
    return OperatingOffset(
        delta_offset=2.0 * g0 * g0 / omega0,
        gap_at_optimum=2.0 * g0 - g0 ** 3 / omega0 ** 2,
        sensitivity_q2=2.0 * g0 / omega0,
    )


def gap_expansion_at_optimum(g0: float, omega0: float, eps1: float, eps2: float) -> float:
    """Gap expansion in deviations from the optimal operating point."""
    return (2.0 * g0 - g0 ** 3 / omega0 ** 2
            + 2.0 * g0 * eps2 / omega0
            + (eps1 - eps2) ** 2 / (4.0 * g0))


def avoided_crossing_sweep(params: DeviceParams, omega2_values: Sequence[float],
                           omega1: float | None = None) -> np.ndarray:
    """Single-excitation eigenfrequencies of the two-transmon block.

    Returns an array with rows (omega2, e_lower, e_upper). The minimum
    gap over the sweep occurs at omega2 = omega1 and equals 2 g12.
    """
    w2 = np.asarray(omega2_values, dtype=float)
    if w2.size == 0:
        raise DeviceError("empty sweep")
    w1 = params.transmons[0].omega_idle if omega1 is None else omega1
    g = params.g12
    mean = 0.5 * (w1 + w2)
    half_gap = np.sqrt(g * g + 0.25 * (w1 - w2) ** 2)
    return np.column_stack([w2, mean - half_gap, mean + half_gap])


def perturbative_chi_scale(params: DeviceParams) -> float:
    """Leading-order ancilla dispersive shift 2 eta g23^2 / Delta^2."""
    delta = abs(params.transmons[2].omega_idle - params.transmons[1].omega_idle)
    if delta == 0:
        raise DeviceError("ancilla is resonant with the dual-rail pair")
    return 2.0 * params.transmons[2].eta * params.g23 ** 2 / delta ** 2


def delta_chi_perturbative(params: DeviceParams, delta: float) -> float:
    """First-order relative shift splitting dchi/chibar = 2 g12/Delta + 2 g13/g23 - delta/g12."""
    if params.g12 == 0 or params.g23 == 0:
        raise DeviceError("delta_chi_perturbative requires nonzero g12 and g23")
    big_delta = abs(params.transmons[2].omega_idle - params.transmons[1].omega_idle)
    return 2.0 * params.g12 / big_delta + 2.0 * params.g13 / params.g23 - delta / params.g12


def match_states(reference: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Greedy maximum-overlap assignment of reference states to eigenvectors.

    `reference` has shape (n_ref, dim); `vectors` is (dim, n_eig) as
    returned by eigh. Fails loudly below the overlap threshold; the
    returned index map is guaranteed injective.
    """
    overlaps = np.abs(reference.conj() @ vectors) ** 2  # (n_ref, n_eig)
    assignment = np.full(reference.shape[0], -1, dtype=int)
    taken: set[int] = set()
    order = np.argsort(-overlaps.max(axis=1))
    for i in order:
        for j in np.argsort(-overlaps[i]):
            if j not in taken:
                if overlaps[i, j] < OVERLAP_THRESHOLD ** 2:
                    raise LevelCollisionError(
                        f"state tracking overlap {math.sqrt(overlaps[i, j]):.3f} "
                        f"below threshold {OVERLAP_THRESHOLD}")
                assignment[i] = j
                taken.add(int(j))
                break
    return assignment


def dispersive_shifts_numeric(params: DeviceParams, point: OperatingPoint,
                              dim: int = 3) -> DispersiveShifts:
    """Ancilla dispersive shifts of the two logical states, from exact
    diagonalization of the full three-transmon Hamiltonian.

    chi_s = [E(s, anc=1) - E(s, anc=0)] - [E(00, anc=1) - E(00, anc=0)]
    for s in {0L, 1L}. Eigenstates are identified by maximum overlap with
    the ancilla-decoupled reference states; a collision raises.
    """
    space = transmon_space(dim)
    h = build_full_hamiltonian(params, point, space).matrix
    evals, evecs = np.linalg.eigh(h)

    # Reference: hybridized pair eigenmodes with the ancilla decoupled.
    pair = pair_space(dim)
    hpair = build_pair_hamiltonian(params, point, pair).matrix
    pv, pw = np.linalg.eigh(hpair)
    refs = []
    labels = []
    vac_pair = np.zeros(pair.dim)
    vac_pair[0] = 1.0
    single_idx = [i for i in range(pair.dim)
                  if abs(np.vdot(pw[:, i], vac_pair)) < 0.5 and _pair_excitation(pw[:, i], pair) == 1]
    single_idx.sort(key=lambda i: pv[i])
    if len(single_idx) != 2:
        raise LevelCollisionError("could not identify the two hybrid pair modes")
    pair_states = {"00": vac_pair, "0L": pw[:, single_idx[0]], "1L": pw[:, single_idx[1]]}
    for anc in (0, 1):
        anc_vec = np.zeros(dim)
        anc_vec[anc] = 1.0
        for name, pvec in pair_states.items():
            refs.append(np.kron(pvec, anc_vec))
            labels.append((name, anc))
    assignment = match_states(np.array(refs), evecs)
    energy = {lab: evals[assignment[i]] for i, lab in enumerate(labels)}

    bare_split = energy[("00", 1)] - energy[("00", 0)]
    chi0 = (energy[("0L", 1)] - energy[("0L", 0)]) - bare_split
    chi1 = (energy[("1L", 1)] - energy[("1L", 0)]) - bare_split
    detuning = abs(params.transmons[2].omega_idle - point.omega2)
    valid = detuning >= DISPERSIVE_DETUNING_MIN_RATIO * params.g23
    return DispersiveShifts(chi0=chi0, chi1=chi1, chi_bar=0.5 * (chi0 + chi1),
                            delta_chi=chi1 - chi0, valid=valid)


def _pair_excitation(vec: np.ndarray, space: ModeSpace) -> int:
    """Dominant total excitation number of a pair-space vector."""
    probs = np.abs(vec) ** 2
    totals = np.zeros(sum(space.dims))
    for idx in range(space.dim):
        n1, n2 = np.unravel_index(idx, space.dims)
        totals[n1 + n2] += probs[idx]
    return int(np.argmax(totals))


def transmon_frequency_vs_flux(flux: float, omega_max: float, eta: float,
                               phi0: float = PHI0) -> float:
    """Symmetric-junction transmon frequency versus external flux.

    w(Phi) = (w_max + eta) sqrt(|cos(pi Phi/Phi0)|) - eta. The map is
    pluggable: calibration routines accept any callable with this shape.
    """
    return (omega_max + eta) * math.sqrt(abs(math.cos(math.pi * flux / phi0))) - eta


def flux_for_frequency(omega: float, omega_max: float, eta: float,
                       phi0: float = PHI0) -> float:
    """Inverse of the symmetric flux map on the first branch (0 <= Phi < Phi0/2)."""
    if not -eta < omega <= omega_max:
        raise DeviceError("target frequency outside the tunable range")
    c = ((omega + eta) / (omega_max + eta)) ** 2
    return phi0 * math.acos(c) / math.pi


def flux_sensitivity(flux: float, omega_max: float, eta: float,
                     phi0: float = PHI0, dphi: float | None = None) -> float:
    """Numerical derivative dw/dPhi of the flux map (rad/s per Wb)."""
    h = (1e-6 * phi0) if dphi is None else dphi
    up = transmon_frequency_vs_flux(flux + h, omega_max, eta, phi0)
    dn = transmon_frequency_vs_flux(flux - h, omega_max, eta, phi0)
    return (up - dn) / (2.0 * h)
