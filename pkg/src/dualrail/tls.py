"""A two-level defect coupled to one transmon of the dual-rail pair.

Covers the rotating-frame Hamiltonian of the pair plus TLS, its form in
the hybridized dual-rail eigenmode basis, the TLS-state-conditioned
dispersive shifts of the two modes, and the telegraph frequency noise a
slowly flickering defect imprints on the dual-rail qubit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from .device import LevelCollisionError, match_states
from .hilbert import LinearOperator, ModeSpace, mode_operator
from .noise import NoiseTrace, Telegraph, sample_telegraph

RESONANCE_GUARD = 3.0  # require |Delta +/- g| >= guard * lambda/sqrt(2)


class TlsError(ValueError):
    """Bad TLS parameters or space shape."""


@dataclass(frozen=True)
class TlsParams:
    """Defect coupling strength, detuning, lifetime, and flicker rate."""

    coupling: float       # lambda, rad/s
    detuning: float       # Delta from the parked transmon frequency, rad/s
    t1_tls: float = math.inf
    toggle_rate: float = 0.0

    def __post_init__(self):
        if self.coupling < 0:
            raise TlsError("TLS coupling must be non-negative")
        if self.t1_tls <= 0:
            raise TlsError("TLS lifetime must be positive")
        if self.toggle_rate < 0:
            raise TlsError("toggle rate must be non-negative")


def tls_space(dim: int = 3) -> ModeSpace:
    """Two bosonic transmon modes plus one dimension-2 defect mode."""
    return ModeSpace((dim, dim, 2), ("transmon1", "transmon2", "tls"))


def _require_tls_space(space: ModeSpace) -> int:
    if (space.n_modes != 3 or space.labels[2] != "tls"
            or space.labels[0] != "transmon1" or space.labels[1] != "transmon2"):
        raise TlsError("expected a (transmon1, transmon2, tls) space")
    return space.index_of("tls")


def build_tls_hamiltonian(g: float, params: TlsParams, space: ModeSpace) -> LinearOperator:
    """Rotating-frame pair + defect Hamiltonian, bare-mode basis.

    H = g (a1^dag a2 + h.c.) + (Delta/2) sigma_z + lambda (a1^dag sigma- + h.c.)
    """
    _require_tls_space(space)
    a1 = mode_operator(space, 0, "lower").matrix
    a2 = mode_operator(space, 1, "lower").matrix
    sm = mode_operator(space, 2, "sigma_minus").matrix
    sz = mode_operator(space, 2, "sigma_z").matrix
    h = (g * (a1.conj().T @ a2 + a2.conj().T @ a1)
         + 0.5 * params.detuning * sz
         + params.coupling * (a1.conj().T @ sm + sm.conj().T @ a1))
    return LinearOperator(h, space).require_hermitian()


def build_tls_hamiltonian_eigenmodes(g: float, params: TlsParams, space: ModeSpace) -> LinearOperator:
    """Same Hamiltonian written directly in the d+/- = (a1 +/- a2)/sqrt(2) basis.

    H = g (d+^dag d+ - d-^dag d-) + (Delta/2) sigma_z
        + (lambda/sqrt2) ((d+^dag + d-^dag) sigma- + h.c.)
    with the mode-1 slot holding d+ and the mode-2 slot holding d-.
    """
    _require_tls_space(space)
    dp = mode_operator(space, 0, "lower").matrix
    dm = mode_operator(space, 1, "lower").matrix
    sm = mode_operator(space, 2, "sigma_minus").matrix
    sz = mode_operator(space, 2, "sigma_z").matrix
    lam = params.coupling / math.sqrt(2.0)
    h = (g * (dp.conj().T @ dp - dm.conj().T @ dm)
         + 0.5 * params.detuning * sz
         + lam * ((dp.conj().T + dm.conj().T) @ sm + sm.conj().T @ (dp + dm)))
    return LinearOperator(h, space).require_hermitian()


def eigenmode_basis_change(space: ModeSpace) -> LinearOperator:
    """Unitary V with V H_bare V^dag = H_eigenmodes (50:50 beam splitter).

    V maps a1 -> (a1 + a2)/sqrt(2) and a2 -> (a1 - a2)/sqrt(2) under
    conjugation, i.e. the mode-1 slot becomes d+ and mode-2 becomes d-.

    The generator conserves the total boson number, so V is exact on
    every closed sector n1 + n2 <= dim - 1; sectors above that are
    distorted by truncation (they would need occupations past the
    cutoff) and carry no dispersive-shift physics.
    """
    _require_tls_space(space)
    a1 = mode_operator(space, 0, "lower").matrix
    a2 = mode_operator(space, 1, "lower").matrix
    # pi/2 beam-splitter rotation followed by a sign flip of mode 2 to land
    # exactly on the (a1 +/- a2)/sqrt(2) convention.
    gen = (math.pi / 4.0) * (a1.conj().T @ a2 - a2.conj().T @ a1)
    n2 = mode_operator(space, 1, "number").matrix
    flip = expm(1j * math.pi * n2)
    return LinearOperator(flip @ expm(gen), space)


def closed_sector_indices(space: ModeSpace) -> np.ndarray:
    """Basis indices with total boson number <= dim - 1 (truncation-exact)."""
    _require_tls_space(space)
    cutoff = space.dims[0] - 1
    keep = []
    for idx in range(space.dim):
        occ = np.unravel_index(idx, space.dims)
        if occ[0] + occ[1] <= cutoff:
            keep.append(idx)
    return np.asarray(keep)


def basis_change_deviation(g: float, params: TlsParams, space: ModeSpace) -> float:
    """Max relative deviation |V H_bare V^dag - H_eigen| on closed sectors."""
    h_bare = build_tls_hamiltonian(g, params, space).matrix
    h_eig = build_tls_hamiltonian_eigenmodes(g, params, space).matrix
    v = eigenmode_basis_change(space).matrix
    keep = closed_sector_indices(space)
    block = np.ix_(keep, keep)
    dev = np.max(np.abs((v @ h_bare @ v.conj().T - h_eig)[block]))
    return float(dev / np.max(np.abs(h_eig)))


class TlsShifts(NamedTuple):
    chi_plus: float
    chi_minus: float
    chi_dr: float
    valid: bool
    matched_form: str


def tls_dispersive_shifts(g: float, params: TlsParams, dim: int = 3) -> TlsShifts:
    """TLS-state-conditioned dual-rail mode shifts from exact diagonalization.

    chi_pm is the change of the d_pm mode frequency when the defect is
    excited versus ground; chi_dr = chi_plus - chi_minus is the effective
    dispersive coupling to the dual-rail qubit. `matched_form` reports
    which closed form, lambda^2 g/(Delta^2-g^2) or twice it, is closer to
    the numeric value (they differ by the bosonic enhancement of the
    intermediate two-photon states).
    """
    if g <= 0:
        raise TlsError("g must be positive")
    lam_eff = params.coupling / math.sqrt(2.0)
    near = min(abs(params.detuning - g), abs(params.detuning + g))
    if params.coupling > 0 and near < RESONANCE_GUARD * lam_eff:
        raise LevelCollisionError(
            f"TLS within {RESONANCE_GUARD} lambda/sqrt(2) of a dual-rail mode")

    space = tls_space(dim)
    h = build_tls_hamiltonian(g, params, space).matrix
    evals, evecs = np.linalg.eigh(h)
    # Reference states: one excitation in d+/-, defect ground or excited.
    def ref(which: str, excited: int) -> np.ndarray:
        vac = np.zeros(space.dim)
        idx1 = np.ravel_multi_index((1, 0, excited), space.dims)
        idx2 = np.ravel_multi_index((0, 1, excited), space.dims)
        vac[idx1] = 1.0 / math.sqrt(2.0)
        vac[idx2] = (1.0 if which == "+" else -1.0) / math.sqrt(2.0)
        return vac

    def vac_ref(excited: int) -> np.ndarray:
        v = np.zeros(space.dim)
        v[np.ravel_multi_index((0, 0, excited), space.dims)] = 1.0
        return v

    refs = [vac_ref(0), vac_ref(1), ref("+", 0), ref("-", 0), ref("+", 1), ref("-", 1)]
    labels = ["00g", "00e", "+g", "-g", "+e", "-e"]
    assignment = match_states(np.array(refs), evecs)
    energy = dict(zip(labels, evals[assignment]))

    chi_plus = (energy["+e"] - energy["00e"]) - (energy["+g"] - energy["00g"])
    chi_minus = (energy["-e"] - energy["00e"]) - (energy["-g"] - energy["00g"])
    chi_dr = chi_plus - chi_minus
    valid = params.coupling == 0 or near >= 20.0 * lam_eff

    denom = params.detuning ** 2 - g ** 2
    if params.coupling == 0 or denom == 0:
        matched = "zero"
    else:
        single = params.coupling ** 2 * g / denom
        err1 = abs(chi_dr - single)
        err2 = abs(chi_dr - 2.0 * single)
        matched = "2*lambda^2*g/(Delta^2-g^2)" if err2 < err1 else "lambda^2*g/(Delta^2-g^2)"
    return TlsShifts(chi_plus, chi_minus, chi_dr, valid, matched)


def tls_telegraph_effect(g: float, params: TlsParams, duration: float,
                         seed: int, dt: float | None = None) -> NoiseTrace:
    """Dual-rail frequency trace from the defect flickering in and out.

    The two levels are separated by |chi_dr|, switching at `toggle_rate`;
    the trace plugs directly into the trajectory engine as a frequency
    offset on the dual-rail splitting.
    """
    if params.toggle_rate < 0:
        raise TlsError("toggle rate must be non-negative")
    shifts = tls_dispersive_shifts(g, params)
    amplitude = abs(shifts.chi_dr)
    if dt is None:
        dt = duration / 1024.0
    return sample_telegraph(Telegraph(amplitude, params.toggle_rate), duration, dt, seed)
