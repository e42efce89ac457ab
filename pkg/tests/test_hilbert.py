import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualrail import hilbert as hl


def test_qubit_lowering_matrix():
    sp = hl.ModeSpace((2,), ("transmon1",))
    assert np.allclose(hl.mode_operator(sp, 0, "lower").matrix, [[0, 1], [0, 0]])


def test_number_expectation_fock_counting():
    sp = hl.ModeSpace((3, 3), ("transmon1", "transmon2"))
    st_ = hl.basis_state(sp, (1, 0))
    n0 = hl.mode_operator(sp, 0, "number")
    assert hl.expectation(st_, n0) == pytest.approx(1.0, abs=1e-12)


def test_commutator_on_truncated_fock_block():
    # independent oracle: direct matrix computation of [a, a dg] on a
    # dim-3 mode, restricted to the {0, 1} block, equals the identity
    sp = hl.ModeSpace((3, 3), ("transmon1", "transmon2"))
    a = hl.mode_operator(sp, 0, "lower").matrix
    comm = a @ a.conj().T - a.conj().T @ a
    # restrict to states with mode-0 occupation in {0, 1}
    keep = [i for i in range(9) if np.unravel_index(i, (3, 3))[0] < 2]
    block = comm[np.ix_(keep, keep)]
    assert np.allclose(block, np.eye(len(keep)), atol=1e-12)


def test_expectation_vacuum_number_zero():
    sp = hl.ModeSpace((3,), ("transmon1",))
    assert hl.expectation(hl.basis_state(sp, (0,)), hl.mode_operator(sp, 0, "number")) == 0.0


def test_expectation_superposition_projector():
    sp = hl.ModeSpace((2, 2), ("transmon1", "transmon2"))
    v01 = hl.basis_vector(sp, (0, 1))
    v10 = hl.basis_vector(sp, (1, 0))
    psi = hl.pure_state((v01 + v10) / np.sqrt(2), sp)
    proj = hl.LinearOperator(np.outer(v01, v01.conj()), sp)
    assert hl.expectation(psi, proj) == pytest.approx(0.5, abs=1e-12)


def test_expectation_density_identity_trace():
    sp = hl.ModeSpace((3,), ("transmon1",))
    rng = np.random.default_rng(5)
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    st_ = hl.density_state(rho, sp)
    assert hl.expectation(st_, hl.identity(sp)) == pytest.approx(1.0, abs=1e-9)


def test_logical_projector_definitions():
    sp = hl.ModeSpace((3, 3), ("transmon1", "transmon2"))
    projs = hl.logical_projectors(sp, 0, 1)
    one_l = hl.logical_state(sp, 0, 1, "one_L")
    assert hl.expectation(one_l, projs["P1L"]) == pytest.approx(1.0, abs=1e-12)
    assert hl.expectation(one_l, projs["P0L"]) == pytest.approx(0.0, abs=1e-12)
    assert hl.expectation(one_l, projs["P00"]) == pytest.approx(0.0, abs=1e-12)
    # bare |01> splits evenly between the two logical states
    st01 = hl.basis_state(sp, (0, 1))
    assert hl.expectation(st01, projs["P0L"]) == pytest.approx(0.5, abs=1e-12)
    assert hl.expectation(st01, projs["P1L"]) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("dims", [(2, 2), (3, 3), (3, 3, 3), (2, 3, 2)])
def test_logical_projectors_complete(dims):
    labels = ("transmon1", "transmon2") + ("ancilla",) * (len(dims) - 2)
    sp = hl.ModeSpace(dims, labels)
    projs = hl.logical_projectors(sp, 0, 1)
    total = sum(p.matrix for p in projs.values())
    assert np.max(np.abs(total - np.eye(sp.dim))) < hl.PROJECTOR_COMPLETENESS_TOL


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(2, 4))
def test_mode_operators_commute_across_modes(d1, d2):
    sp = hl.ModeSpace((d1, d2), ("transmon1", "transmon2"))
    a0 = hl.mode_operator(sp, 0, "lower").matrix
    a1 = hl.mode_operator(sp, 1, "raise").matrix
    assert np.max(np.abs(a0 @ a1 - a1 @ a0)) == 0.0


def test_lower_then_raise_vacuum():
    sp = hl.ModeSpace((3,), ("transmon1",))
    a = hl.mode_operator(sp, 0, "lower").matrix
    vac = hl.basis_vector(sp, (0,))
    # a then a-dagger annihilates the vacuum entirely
    assert np.linalg.norm(a.conj().T @ (a @ vac)) == 0.0


def test_sigma_kinds_rejected_on_large_modes():
    sp = hl.ModeSpace((3,), ("transmon1",))
    with pytest.raises(hl.HilbertError):
        hl.mode_operator(sp, 0, "sigma_minus")


def test_tls_mode_must_be_dim2():
    with pytest.raises(hl.HilbertError):
        hl.ModeSpace((3,), ("tls",))


def test_state_validation():
    sp = hl.ModeSpace((2,), ("transmon1",))
    with pytest.raises(hl.HilbertError):
        hl.pure_state(np.array([1.0, 1.0]), sp)  # unnormalized
    with pytest.raises(hl.HilbertError):
        hl.density_state(np.array([[0.7, 0.0], [0.0, 0.7]]), sp)  # trace 1.4


def test_hermiticity_check():
    sp = hl.ModeSpace((2,), ("transmon1",))
    with pytest.raises(hl.HilbertError):
        hl.LinearOperator(np.array([[0, 1], [0, 0]]), sp).require_hermitian()
