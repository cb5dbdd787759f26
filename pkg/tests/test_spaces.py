import numpy as np
import pytest

from tactsim.errors import BadFactor, DimensionOverflow
from tactsim.spaces import AtomLevels, Dicke, Fock, make_space


def test_factor_dimensions():
    assert AtomLevels(4, 3).dimension == 64
    assert Fock(5).dimension == 6
    assert Dicke(2.5).dimension == 6
    assert Dicke(0).dimension == 1


def test_space_dimension_is_product():
    space = make_space([AtomLevels(4, 2), Fock(3)])
    assert space.factor_dims == (16, 4)
    assert space.dimension == 64


def test_index_round_trip():
    space = make_space([AtomLevels(2, 3), Fock(2), Dicke(1.0)])
    for flat in range(space.dimension):
        assert space.index(space.multi_index(flat)) == flat


def test_index_row_major_order():
    space = make_space([Fock(2), Fock(4)])
    # last factor varies fastest
    assert space.index((0, 0)) == 0
    assert space.index((0, 1)) == 1
    assert space.index((1, 0)) == 5


def test_basis_state():
    space = make_space([Dicke(1.0)])
    psi = space.basis_state((2,))
    assert psi[2] == 1.0 and np.count_nonzero(psi) == 1


def test_dimension_cap():
    with pytest.raises(DimensionOverflow):
        make_space([AtomLevels(4, 12)])
    make_space([AtomLevels(4, 12)], cap=4**12)


def test_bad_factors():
    with pytest.raises(BadFactor):
        Dicke(0.4)
    with pytest.raises(BadFactor):
        Dicke(-1.0)
    with pytest.raises(BadFactor):
        Fock(-1)
    with pytest.raises(BadFactor):
        AtomLevels(0, 3)


def test_index_out_of_range():
    space = make_space([Fock(2)])
    with pytest.raises(BadFactor):
        space.index((3,))
    with pytest.raises(BadFactor):
        space.multi_index(3)
