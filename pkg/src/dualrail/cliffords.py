"""The 24-element single-qubit Clifford group, compiled onto two X90 pulses.

Each element is stored with virtual-Z phases (a, b, c), all multiples of
pi/2, such that U = Z(c) X90 Z(b) X90 Z(a) up to global phase (gates
applied right to left). The table is built by enumeration and verified
against the group axioms at import time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SQ2 = 1.0 / math.sqrt(2.0)

X90 = np.array([[_SQ2, -1j * _SQ2], [-1j * _SQ2, _SQ2]])
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1j], [1j, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
HADAMARD = _SQ2 * np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex)
S_GATE = np.array([[1.0, 0.0], [0.0, 1j]])


def rz(phi: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * phi), 0.0], [0.0, np.exp(0.5j * phi)]])


def _canonical_key(u: np.ndarray) -> tuple:
    """Phase-invariant rounded key for a 2x2 unitary."""
    flat = u.ravel()
    k = int(np.argmax(np.abs(flat) > 1e-8))
    v = flat / (flat[k] / abs(flat[k]))
    return (k,) + tuple(np.round(v, 9).view(float))


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> bool:
    inner = np.trace(a.conj().T @ b) / 2.0
    return abs(abs(inner) - 1.0) <= tol


@dataclass(frozen=True)
class CliffordElement:
    index: int
    matrix: np.ndarray
    z_phases: tuple[float, float, float]  # (a, b, c): U = Z(c) X90 Z(b) X90 Z(a)

    def decomposition(self) -> list[tuple]:
        a, b, c = self.z_phases
        return [("virtual_z", a), ("x90",), ("virtual_z", b), ("x90",), ("virtual_z", c)]

    def compiled_matrix(self) -> np.ndarray:
        a, b, c = self.z_phases
        return rz(c) @ X90 @ rz(b) @ X90 @ rz(a)


def _enumerate_group() -> list[np.ndarray]:
    seen: dict[tuple, np.ndarray] = {}
    frontier = [np.eye(2, dtype=complex)]
    seen[_canonical_key(frontier[0])] = frontier[0]
    gens = [HADAMARD, S_GATE]
    while frontier:
        nxt = []
        for u in frontier:
            for g in gens:
                w = g @ u
                key = _canonical_key(w)
                if key not in seen:
                    seen[key] = w
                    nxt.append(w)
        frontier = nxt
    mats = list(seen.values())
    if len(mats) != 24:
        raise RuntimeError(f"Clifford enumeration found {len(mats)} elements, expected 24")
    return mats


def _build_table() -> list[CliffordElement]:
    mats = _enumerate_group()
    quarter = [0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi]
    decomposed: list[CliffordElement] = []
    keys = {}
    # Deterministic ordering: sort by canonical key.
    mats.sort(key=_canonical_key)
    for idx, u in enumerate(mats):
        found = None
        for a in quarter:
            for b in quarter:
                for c in quarter:
                    if equal_up_to_phase(rz(c) @ X90 @ rz(b) @ X90 @ rz(a), u, tol=1e-9):
                        found = (a, b, c)
                        break
                if found:
                    break
            if found:
                break
        if found is None:
            raise RuntimeError("Clifford element admits no two-X90 decomposition")
        el = CliffordElement(idx, u, found)
        if not equal_up_to_phase(el.compiled_matrix(), u):
            raise RuntimeError("decomposition failed verification")
        decomposed.append(el)
        keys[_canonical_key(u)] = idx
    # Group axioms: closure and inverses map back into the table.
    for el in decomposed:
        if keys.get(_canonical_key(el.matrix.conj().T)) is None:
            raise RuntimeError("group not closed under inversion")
    return decomposed


CLIFFORDS: list[CliffordElement] = _build_table()
_KEY_TO_INDEX = {_canonical_key(el.matrix): el.index for el in CLIFFORDS}


def clifford_index(u: np.ndarray) -> int:
    """Table index of a unitary that equals a Clifford up to global phase."""
    key = _canonical_key(u)
    if key in _KEY_TO_INDEX:
        return _KEY_TO_INDEX[key]
    for el in CLIFFORDS:  # tolerance fallback for matrices built numerically
        if equal_up_to_phase(el.matrix, u, tol=1e-9):
            return el.index
    raise KeyError("matrix is not a Clifford element")


@dataclass(frozen=True)
class RBSequence:
    """A randomized-benchmarking circuit: random Cliffords plus recovery."""

    depth: int
    indices: tuple[int, ...]
    recovery_index: int
    target: str  # "zero_L" | "one_L"
    seed: int

    @property
    def all_indices(self) -> tuple[int, ...]:
        return self.indices + (self.recovery_index,)

    def composite_matrix(self) -> np.ndarray:
        u = np.eye(2, dtype=complex)
        for idx in self.all_indices:
            u = CLIFFORDS[idx].matrix @ u
        return u


def rb_generate(depth: int, seed: int, target: str = "one_L") -> RBSequence:
    """Uniformly random Clifford sequence whose composite maps the prepared
    |1L> onto `target` (readout symmetrization alternates the target).
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if target not in ("zero_L", "one_L"):
        raise ValueError("target must be zero_L or one_L")
    rng = np.random.default_rng(seed)
    indices = tuple(int(i) for i in rng.integers(0, 24, size=depth))
    u = np.eye(2, dtype=complex)
    for idx in indices:
        u = CLIFFORDS[idx].matrix @ u
    want = np.eye(2, dtype=complex) if target == "one_L" else PAULI_X
    recovery = clifford_index(want @ u.conj().T)
    return RBSequence(depth, indices, recovery, target, seed)
