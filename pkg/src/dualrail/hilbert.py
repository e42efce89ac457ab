"""Truncated tensor-product Hilbert-space primitives.

Dense modes, operators, states, and projectors shared by all physics
modules. Every space in this package is small (a few tens of dimensions),
so operators are plain complex ndarrays and no sparsity machinery is used.
All types are immutable after construction and safe to share across
concurrent workers.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Mapping, Sequence

import numpy as np

# Construction/validation tolerances (module constants, see README).
HERMITICITY_TOL = 1e-12
STATE_NORM_TOL = 1e-9
STATE_EIG_TOL = 1e-9
PROJECTOR_COMPLETENESS_TOL = 1e-12

MODE_LABELS = ("transmon1", "transmon2", "ancilla", "resonator", "tls")

OPERATOR_KINDS = ("lower", "raise", "number", "sigma_minus", "sigma_z")


class HilbertError(ValueError):
    """Malformed space, operator, or state."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModeSpace:
    """An ordered list of truncated modes forming a tensor-product space.

    Parameters
    ----------
    dims : per-mode truncation dimension, each >= 2
    labels : per-mode role tag, one of ``MODE_LABELS``
    """

    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.dims) != len(self.labels):
            raise HilbertError("dims and labels must have equal length")
        if not self.dims:
            raise HilbertError("space needs at least one mode")
        for d, lab in zip(self.dims, self.labels):
            if d < 2:
                raise HilbertError(f"mode dimension {d} < 2")
            if lab not in MODE_LABELS:
                raise HilbertError(f"unknown mode label {lab!r}")
            if lab == "tls" and d != 2:
                raise HilbertError("tls modes must have dimension exactly 2")

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index_of(self, label: str) -> int:
        """Index of the first mode carrying `label`."""
        try:
            return self.labels.index(label)
        except ValueError:
            raise HilbertError(f"no mode labeled {label!r}") from None


@dataclass(frozen=True)
class LinearOperator:
    """Dense operator on a ModeSpace."""

    matrix: np.ndarray
    space: ModeSpace

    def __post_init__(self):
        m = _readonly(np.asarray(self.matrix))
        if m.shape != (self.space.dim, self.space.dim):
            raise HilbertError(
                f"matrix shape {m.shape} does not match space dimension {self.space.dim}"
            )
        object.__setattr__(self, "matrix", m)

    def require_hermitian(self, tol: float = HERMITICITY_TOL) -> "LinearOperator":
        dev = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if dev > tol:
            raise HilbertError(f"operator not Hermitian (max deviation {dev:.3e})")
        return self

    def is_hermitian(self, tol: float = HERMITICITY_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol)

    def dagger(self) -> "LinearOperator":
        return LinearOperator(self.matrix.conj().T, self.space)

    def __matmul__(self, other: "LinearOperator") -> "LinearOperator":
        _require_same_space(self.space, other.space)
        return LinearOperator(self.matrix @ other.matrix, self.space)

    def __add__(self, other: "LinearOperator") -> "LinearOperator":
        _require_same_space(self.space, other.space)
        return LinearOperator(self.matrix + other.matrix, self.space)

    def __sub__(self, other: "LinearOperator") -> "LinearOperator":
        _require_same_space(self.space, other.space)
        return LinearOperator(self.matrix - other.matrix, self.space)

    def __mul__(self, scalar: complex) -> "LinearOperator":
        return LinearOperator(self.matrix * scalar, self.space)

    __rmul__ = __mul__


@dataclass(frozen=True)
class QuantumState:
    """Pure amplitude vector or density matrix on a ModeSpace.

    Validation tolerances default to the strict construction values;
    integrator outputs relax them to the solver's contract (1e-6).
    """

    data: np.ndarray
    space: ModeSpace
    kind: str  # "pure" | "density"
    norm_tol: float = STATE_NORM_TOL
    eig_tol: float = STATE_EIG_TOL

    def __post_init__(self):
        a = _readonly(np.asarray(self.data))
        n = self.space.dim
        if self.kind == "pure":
            if a.shape != (n,):
                raise HilbertError(f"pure state shape {a.shape}, expected ({n},)")
            norm = np.linalg.norm(a)
            if abs(norm - 1.0) > self.norm_tol:
                raise HilbertError(f"pure state norm {norm} deviates from 1")
        elif self.kind == "density":
            if a.shape != (n, n):
                raise HilbertError(f"density matrix shape {a.shape}, expected ({n},{n})")
            tr = np.trace(a)
            if abs(tr - 1.0) > self.norm_tol:
                raise HilbertError(f"density trace {tr} deviates from 1")
            if np.max(np.abs(a - a.conj().T)) > self.norm_tol:
                raise HilbertError("density matrix not Hermitian")
            if np.min(np.linalg.eigvalsh(a)) < -self.eig_tol:
                raise HilbertError("density matrix not positive semidefinite")
        else:
            raise HilbertError(f"unknown state kind {self.kind!r}")
        object.__setattr__(self, "data", a)

    @property
    def is_pure(self) -> bool:
        return self.kind == "pure"

    def as_density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return np.array(self.data)


def pure_state(vec: np.ndarray, space: ModeSpace, normalize: bool = False) -> QuantumState:
    v = np.asarray(vec, dtype=complex)
    if normalize:
        v = v / np.linalg.norm(v)
    return QuantumState(v, space, "pure")


def density_state(mat: np.ndarray, space: ModeSpace) -> QuantumState:
    return QuantumState(np.asarray(mat, dtype=complex), space, "density")


def basis_state(space: ModeSpace, occupations: Sequence[int]) -> QuantumState:
    """Product Fock state |n_0 n_1 ...> on the full space."""
    return pure_state(basis_vector(space, occupations), space)


def basis_vector(space: ModeSpace, occupations: Sequence[int]) -> np.ndarray:
    occ = tuple(int(n) for n in occupations)
    if len(occ) != space.n_modes:
        raise HilbertError("occupation list length must equal number of modes")
    for n, d in zip(occ, space.dims):
        if not 0 <= n < d:
            raise HilbertError(f"occupation {n} outside mode dimension {d}")
    v = np.zeros(space.dim, dtype=complex)
    v[int(np.ravel_multi_index(occ, space.dims))] = 1.0
    return v


def _single_mode_matrix(kind: str, d: int) -> np.ndarray:
    n = np.arange(d)
    if kind == "lower":
        m = np.zeros((d, d), dtype=complex)
        m[n[:-1], n[1:]] = np.sqrt(n[1:])
        return m
    if kind == "raise":
        return _single_mode_matrix("lower", d).conj().T
    if kind == "number":
        return np.diag(n.astype(complex))
    if kind == "sigma_minus":
        if d != 2:
            raise HilbertError("sigma_minus requires a dimension-2 mode")
        return np.array([[0, 1], [0, 0]], dtype=complex)
    if kind == "sigma_z":
        if d != 2:
            raise HilbertError("sigma_z requires a dimension-2 mode")
        return np.array([[-1, 0], [0, 1]], dtype=complex)
    raise HilbertError(f"unknown operator kind {kind!r}")


def embed_mode_matrices(space: ModeSpace, factors: Mapping[int, np.ndarray]) -> np.ndarray:
    """Tensor the given per-mode matrices with identities on all other modes."""
    mats = []
    for i, d in enumerate(space.dims):
        if i in factors:
            f = np.asarray(factors[i], dtype=complex)
            if f.shape != (d, d):
                raise HilbertError(f"factor for mode {i} has shape {f.shape}, expected ({d},{d})")
            mats.append(f)
        else:
            mats.append(np.eye(d, dtype=complex))
    return reduce(np.kron, mats)


def mode_operator(space: ModeSpace, mode_index: int, kind: str) -> LinearOperator:
    """Single-mode operator embedded in the full space.

    `kind` is one of ``lower``, ``raise``, ``number``, ``sigma_minus``,
    ``sigma_z``; the sigma kinds are only defined on dimension-2 modes.
    The lowering operator carries matrix elements sqrt(n) on the first
    subdiagonal of its mode factor.
    """
    if not 0 <= mode_index < space.n_modes:
        raise HilbertError(f"mode index {mode_index} out of range")
    if kind not in OPERATOR_KINDS:
        raise HilbertError(f"unknown operator kind {kind!r}")
    d = space.dims[mode_index]
    if kind in ("sigma_minus", "sigma_z") and d != 2:
        raise HilbertError(f"{kind} requested on a dimension-{d} mode")
    return LinearOperator(embed_mode_matrices(space, {mode_index: _single_mode_matrix(kind, d)}), space)


def identity(space: ModeSpace) -> LinearOperator:
    return LinearOperator(np.eye(space.dim, dtype=complex), space)


def expectation(state: QuantumState, op: LinearOperator) -> complex:
    """<psi|O|psi> for pure states, Tr(rho O) for density matrices."""
    _require_same_space(state.space, op.space)
    if state.is_pure:
        return complex(np.vdot(state.data, op.matrix @ state.data))
    return complex(np.einsum("ij,ji->", state.data, op.matrix))


def _two_mode_transfer(space: ModeSpace, q1: int, q2: int,
                       ket: tuple[int, int], bra: tuple[int, int]) -> np.ndarray:
    """|ket><bra| acting on modes (q1, q2), identity elsewhere."""
    def unit(d, i, j):
        m = np.zeros((d, d), dtype=complex)
        m[i, j] = 1.0
        return m

    return embed_mode_matrices(space, {
        q1: unit(space.dims[q1], ket[0], bra[0]),
        q2: unit(space.dims[q2], ket[1], bra[1]),
    })


def logical_projectors(space: ModeSpace, q1: int, q2: int) -> dict[str, LinearOperator]:
    """Projectors onto the dual-rail sectors of the (q1, q2) transmon pair.

    Returns ``P00`` (both modes empty), ``P0L`` onto (|01> - |10>)/sqrt(2),
    ``P1L`` onto (|01> + |10>)/sqrt(2), and ``Pleak`` onto everything else
    (the two-photon manifold and above). The four sum to the identity.
    """
    for q in (q1, q2):
        if not 0 <= q < space.n_modes:
            raise HilbertError(f"mode index {q} out of range")
    if q1 == q2:
        raise HilbertError("q1 and q2 must differ")
    t = lambda k, b: _two_mode_transfer(space, q1, q2, k, b)
    p00 = t((0, 0), (0, 0))
    # '01' means zero photons in q1, one in q2.
    p0l = 0.5 * (t((0, 1), (0, 1)) - t((0, 1), (1, 0)) - t((1, 0), (0, 1)) + t((1, 0), (1, 0)))
    p1l = 0.5 * (t((0, 1), (0, 1)) + t((0, 1), (1, 0)) + t((1, 0), (0, 1)) + t((1, 0), (1, 0)))
    pleak = np.eye(space.dim, dtype=complex) - p00 - p0l - p1l
    return {
        "P00": LinearOperator(p00, space),
        "P0L": LinearOperator(p0l, space),
        "P1L": LinearOperator(p1l, space),
        "Pleak": LinearOperator(pleak, space),
    }


def logical_state(space: ModeSpace, q1: int, q2: int, which: str) -> QuantumState:
    """|0L> or |1L> of the (q1, q2) pair, vacuum in all other modes."""
    occ0 = [0] * space.n_modes
    occ01 = list(occ0)
    occ01[q2] = 1
    occ10 = list(occ0)
    occ10[q1] = 1
    v01 = basis_vector(space, occ01)
    v10 = basis_vector(space, occ10)
    if which == "zero_L":
        v = (v01 - v10) / np.sqrt(2.0)
    elif which == "one_L":
        v = (v01 + v10) / np.sqrt(2.0)
    else:
        raise HilbertError(f"unknown logical state {which!r}")
    return pure_state(v, space)


def _require_same_space(a: ModeSpace, b: ModeSpace) -> None:
    if a.dims != b.dims or a.labels != b.labels:
        raise HilbertError(f"space mismatch: {a} vs {b}")
