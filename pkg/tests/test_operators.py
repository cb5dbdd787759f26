import numpy as np
import pytest
import scipy.sparse as sp

from tactsim.errors import BadFactor, DimensionMismatch
from tactsim.operators import (
    PhasedOperator,
    boson_ops,
    check_hermitian,
    collective_spin_ops,
    dicke_spin_matrices,
    embed_factor,
    identity,
    level_transition,
    number_diagonal,
    pair_spin_ops,
    single_atom_operator,
    top_fock_diagonal,
)
from tactsim.spaces import AtomLevels, Dicke, Fock, make_space


def comm(a, b):
    return (a @ b - b @ a).toarray()


@pytest.mark.parametrize("S", [0.5, 1.0, 1.5, 3.0])
def test_su2_commutators_dicke(S):
    sx, sy, sz = dicke_spin_matrices(S)
    assert np.allclose(comm(sx, sy), 1j * sz.toarray(), atol=1e-12)
    assert np.allclose(comm(sy, sz), 1j * sx.toarray(), atol=1e-12)
    assert np.allclose(comm(sz, sx), 1j * sy.toarray(), atol=1e-12)


@pytest.mark.parametrize("S", [0.5, 1.0, 2.5])
def test_casimir_dicke(S):
    sx, sy, sz = dicke_spin_matrices(S)
    c = (sx @ sx + sy @ sy + sz @ sz).toarray()
    assert np.allclose(c, S * (S + 1) * np.eye(c.shape[0]), atol=1e-12)


def test_sz_spectrum_dicke():
    _, _, sz = dicke_spin_matrices(1.5)
    assert np.allclose(sz.diagonal(), [1.5, 0.5, -0.5, -1.5])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_su2_commutators_atomlevels(n):
    space = make_space([AtomLevels(2, n)])
    sx, sy, sz = collective_spin_ops(space)
    assert np.allclose(comm(sx, sy), 1j * sz.toarray(), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_casimir_spectrum_atomlevels(n):
    # total-spin eigenvalues S(S+1) with the standard multiplicities of
    # n spin-1/2 constituents
    space = make_space([AtomLevels(2, n)])
    sx, sy, sz = collective_spin_ops(space)
    c = (sx @ sx + sy @ sy + sz @ sz).toarray()
    evals = np.sort(np.linalg.eigvalsh(c))
    expected = {2: [0.0] + [2.0] * 3, 3: [0.75] * 4 + [3.75] * 4,
                4: [0.0] * 2 + [2.0] * 9 + [6.0] * 5}[n]
    assert np.allclose(evals, sorted(expected), atol=1e-10)


def test_atomlevels_matches_dicke_in_symmetric_sector():
    # the stretched state lives in the S = n/2 sector; low moments agree
    n = 3
    space_a = make_space([AtomLevels(2, n)])
    space_d = make_space([Dicke(n / 2)])
    sxa, _, sza = collective_spin_ops(space_a)
    sxd, _, szd = collective_spin_ops(space_d)
    psi_a = space_a.basis_state((0,))
    psi_d = space_d.basis_state((0,))
    for opa, opd in ((sza, szd), (sxa @ sxa, sxd @ sxd)):
        va = np.vdot(psi_a, opa @ psi_a)
        vd = np.vdot(psi_d, opd @ psi_d)
        assert abs(va - vd) < 1e-12


def test_level_transition():
    t = level_transition(4, 0, 3).toarray()
    expected = np.zeros((4, 4))
    expected[0, 3] = 1.0
    assert np.array_equal(t, expected)


def test_boson_truncation_commutator():
    n_max = 5
    space = make_space([Fock(n_max)])
    a, adag = boson_ops(space, 0)
    c = (a @ adag - adag @ a).toarray()
    expected = np.eye(n_max + 1)
    expected[n_max, n_max] = -n_max  # truncation defect on the top level
    assert np.allclose(c, expected, atol=1e-12)


def test_number_and_top_fock_diagonals():
    space = make_space([Dicke(0.5), Fock(2)])
    nd = number_diagonal(space, 1)
    assert np.array_equal(nd, [0, 1, 2, 0, 1, 2])
    td = top_fock_diagonal(space, 1)
    assert np.array_equal(td, [0, 0, 1, 0, 0, 1])


def test_embedded_factors_commute():
    space = make_space([AtomLevels(2, 2), Fock(2)])
    sx, _, _ = collective_spin_ops(space, 0)
    a, _ = boson_ops(space, 1)
    assert np.max(np.abs(comm(sx, a))) < 1e-14


def test_embed_factor_identity():
    space = make_space([Fock(1), Fock(2)])
    one = embed_factor(space, 0, identity(2))
    assert np.allclose(one.toarray(), np.eye(6))


def test_single_atom_operator_placement():
    space = make_space([AtomLevels(2, 2)])
    op = single_atom_operator(space, 0, 1, level_transition(2, 0, 1))
    # acts on the second atom: |00><01| and |10><11|
    expected = np.zeros((4, 4))
    expected[0, 1] = 1.0
    expected[2, 3] = 1.0
    assert np.allclose(op.toarray(), expected)
    with pytest.raises(BadFactor):
        single_atom_operator(space, 0, 2, level_transition(2, 0, 1))


def test_pair_spin_ops():
    space = make_space([Dicke(1.0), Dicke(0.5)])
    pair = pair_spin_ops(space)
    lx = collective_spin_ops(space, 0)[0]
    rx = collective_spin_ops(space, 1)[0]
    assert np.allclose(pair.plus_x.toarray(), (lx + rx).toarray())
    assert np.allclose(pair.minus_x.toarray(), (lx - rx).toarray())


def test_check_hermitian():
    assert check_hermitian(sp.csr_matrix(np.array([[0, 1j], [-1j, 0]])))
    assert not check_hermitian(sp.csr_matrix(np.array([[0, 1j], [1j, 0]])))


def test_phased_operator_matrix():
    space = make_space([Fock(1)])
    o1 = sp.csr_matrix(np.array([[0, 1.0], [0, 0]]))
    o2 = sp.csr_matrix(np.array([[0, 0], [1.0, 0]]))
    H = PhasedOperator(space, [(2.0, 3.0, o1), (2.0, -3.0, o2)])
    for t in (0.0, 0.7, 2.1):
        expected = 2.0 * np.exp(3j * t) * o1.toarray() + 2.0 * np.exp(-3j * t) * o2.toarray()
        assert np.allclose(H.matrix(t).toarray(), expected, atol=1e-14)
        assert check_hermitian(H.matrix(t))


def test_phased_operator_overlapping_patterns():
    # two terms writing to the same entries must add, not overwrite
    space = make_space([Fock(1)])
    o = sp.csr_matrix(np.array([[0, 1.0], [0, 0]]))
    H = PhasedOperator(space, [(1.0, 1.0, o), (1.0, -1.0, o)])
    t = 0.4
    assert np.isclose(H.matrix(t).toarray()[0, 1], 2 * np.cos(t))


def test_phased_operator_apply_matches_matrix():
    space = make_space([Fock(3)])
    a, adag = boson_ops(space, 0)
    H = PhasedOperator(space, [(1.5, 2.0, a), (1.5, -2.0, adag)])
    rng = np.random.default_rng(7)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    t = 0.9
    assert np.allclose(H.apply(t, psi), H.matrix(t) @ psi)


def test_phased_operator_static_and_bounds():
    space = make_space([Fock(2)])
    a, adag = boson_ops(space, 0)
    hs = PhasedOperator.constant(space, (a + adag).tocsr())
    assert hs.is_static
    assert hs.max_phase_frequency == 0.0
    ht = PhasedOperator(space, [(1.0, 5.0, a), (1.0, -5.0, adag)])
    assert not ht.is_static
    assert ht.max_phase_frequency == 5.0
    # Gershgorin bound dominates the true norm at every time
    dense = ht.matrix(0.3).toarray()
    assert ht.spectral_bound() >= np.max(np.abs(np.linalg.eigvals(dense))) - 1e-12


def test_phased_operator_shape_mismatch():
    space = make_space([Fock(2)])
    wrong = sp.csr_matrix(np.eye(2))
    with pytest.raises(DimensionMismatch):
        PhasedOperator(space, [(1.0, 0.0, wrong)])
