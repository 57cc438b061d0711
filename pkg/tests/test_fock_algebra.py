from functools import reduce

import numpy as np
import pytest

from piston_engine.functions.fock_algebra import (
    ModeOperator,
    SpaceMismatchError,
    TruncatedSpace,
    add,
    adjoint,
    annihilation,
    basis_vector,
    commutator,
    compose,
    creation,
    identity,
    number,
    scale,
)


def _lowering(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), k=1)


def test_truncated_space_dims():
    space = TruncatedSpace(dims=(4, 4, 21))
    assert space.total_dim == 336
    assert space.n_modes == 3
    assert space.mode_index("c") == 2
    with pytest.raises(ValueError):
        TruncatedSpace(dims=(2, 0, 3))
    with pytest.raises(ValueError):
        space.mode_index(3)


def test_annihilation_single_mode():
    space = TruncatedSpace(dims=(3,))
    a = annihilation(space, 0).to_dense()
    expected = np.zeros((3, 3))
    expected[0, 1] = 1.0
    expected[1, 2] = np.sqrt(2)
    np.testing.assert_allclose(a, expected)
    assert not np.any(a @ basis_vector(space, [0]))


def test_annihilation_two_modes_kronecker_order():
    space = TruncatedSpace(dims=(2, 2))
    a = annihilation(space, 0)
    assert a.matrix.nnz == 2
    np.testing.assert_allclose(a.to_dense(), np.kron(_lowering(2), np.eye(2)))
    np.testing.assert_allclose(annihilation(space, 1).to_dense(), np.kron(np.eye(2), _lowering(2)))


def test_mode_index_out_of_range():
    with pytest.raises(ValueError):
        annihilation(TruncatedSpace(dims=(2, 2)), 2)


def test_adjoint():
    space = TruncatedSpace(dims=(4,))
    a = annihilation(space, 0)
    np.testing.assert_allclose(adjoint(a).to_dense(), creation(space, 0).to_dense())
    assert (adjoint(adjoint(a)).matrix != a.matrix).nnz == 0
    n = number(space, 0)
    assert n.is_hermitian()
    i_identity = scale(identity(space), 1j)
    np.testing.assert_allclose(adjoint(i_identity).to_dense(), -1j * np.eye(4))


def test_truncated_commutator():
    d = 5
    space = TruncatedSpace(dims=(d,))
    a = annihilation(space, 0)
    expected = np.eye(d)
    expected[d - 1, d - 1] = 1 - d
    np.testing.assert_allclose(commutator(a, a.dag()).to_dense(), expected, atol=1e-14)


def test_number_operator_diagonal():
    space = TruncatedSpace(dims=(2, 3, 4))
    for mode, dim in enumerate(space.dims):
        n = number(space, mode).to_dense()
        factors = [np.diag(np.arange(d)) if k == mode else np.eye(d) for k, d in enumerate(space.dims)]
        local = reduce(np.kron, factors)
        np.testing.assert_allclose(n, local)
        np.testing.assert_allclose(np.unique(n.diagonal()), np.arange(dim))


def test_number_operators_commute():
    space = TruncatedSpace(dims=(2, 3, 4))
    n_a, n_c = number(space, "a"), number(space, "c")
    assert commutator(n_a, n_c).matrix.count_nonzero() == 0


def test_field_operator_is_hermitian():
    space = TruncatedSpace(dims=(3, 3, 2))
    field = add(annihilation(space, "a"), annihilation(space, "b"))
    assert compose(field.dag(), field).is_hermitian()


def test_space_mismatch():
    a = annihilation(TruncatedSpace(dims=(2, 2)), 0)
    b = annihilation(TruncatedSpace(dims=(2, 3)), 0)
    with pytest.raises(SpaceMismatchError):
        a + b
    with pytest.raises(SpaceMismatchError):
        compose(a, b)


def test_operators_are_immutable_and_deterministic():
    space = TruncatedSpace(dims=(3, 2, 4))
    a = annihilation(space, "c")
    with pytest.raises(AttributeError):
        a.matrix = None
    again = annihilation(space, "c")
    np.testing.assert_array_equal(a.matrix.indices, again.matrix.indices)
    np.testing.assert_array_equal(a.matrix.data, again.matrix.data)
    assert isinstance(a * 2.0, ModeOperator)


def test_basis_vector_last_mode_fastest():
    space = TruncatedSpace(dims=(2, 3))
    assert np.argmax(basis_vector(space, [0, 1])) == 1
    assert np.argmax(basis_vector(space, [1, 0])) == 3
