"""
Bosonic operators on truncated Fock spaces.

Modes are ordered (a, b, c) with the last mode varying fastest in the Kronecker
product. All matrices are stored in CSR form.
"""
import typing as t
import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, field_validator

MODE_NAMES = ("a", "b", "c")
DENSE_FALLBACK_DIM = 64


class SpaceMismatchError(ValueError):
    pass


class TruncatedSpace(BaseModel):
    model_config = ConfigDict(frozen=True)

    dims: tuple[int, ...]

    @field_validator("dims")
    @classmethod
    def _check_dims(cls, dims: tuple[int, ...]) -> tuple[int, ...]:
        if len(dims) == 0:
            raise ValueError("A truncated space needs at least one mode")
        if any(d < 1 for d in dims):
            raise ValueError(f"Every truncation dimension must be >= 1, got {dims}")
        return dims

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def mode_index(self, mode: t.Union[int, str]) -> int:
        index = MODE_NAMES.index(mode) if isinstance(mode, str) else mode
        if not 0 <= index < self.n_modes:
            raise ValueError(f"Mode {mode} out of range for a {self.n_modes}-mode space")
        return index


class ModeOperator:
    """Immutable sparse operator tagged with the space it acts on."""

    __slots__ = ("space", "matrix")

    def __init__(self, space: TruncatedSpace, matrix: sp.spmatrix):
        matrix = sp.csr_matrix(matrix, dtype=complex)
        if matrix.shape != (space.total_dim, space.total_dim):
            raise SpaceMismatchError(
                f"Matrix of shape {matrix.shape} does not act on a space of dimension {space.total_dim}"
            )
        matrix.sort_indices()
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", matrix)

    def __setattr__(self, name: str, value: t.Any) -> None:
        raise AttributeError("ModeOperator is immutable")

    def _check_space(self, other: "ModeOperator") -> None:
        if self.space != other.space:
            raise SpaceMismatchError(
                f"Cannot combine operators on spaces {self.space.dims} and {other.space.dims}"
            )

    def dag(self) -> "ModeOperator":
        return ModeOperator(self.space, self.matrix.conj().transpose())

    def __add__(self, other: "ModeOperator") -> "ModeOperator":
        self._check_space(other)
        return ModeOperator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "ModeOperator") -> "ModeOperator":
        self._check_space(other)
        return ModeOperator(self.space, self.matrix - other.matrix)

    def __neg__(self) -> "ModeOperator":
        return ModeOperator(self.space, -self.matrix)

    def __matmul__(self, other: "ModeOperator") -> "ModeOperator":
        self._check_space(other)
        return ModeOperator(self.space, self.matrix @ other.matrix)

    def __mul__(self, scalar: complex) -> "ModeOperator":
        if isinstance(scalar, ModeOperator):
            raise TypeError("Use `@` to compose two operators")
        return ModeOperator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def is_hermitian(self, atol: float = 0.0) -> bool:
        diff = self.matrix - self.matrix.conj().transpose()
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= atol

    def to_dense(self) -> np.ndarray:
        if self.space.total_dim > DENSE_FALLBACK_DIM:
            raise ValueError(f"Dense form is limited to total dimension {DENSE_FALLBACK_DIM}, got {self.space.total_dim}")
        return self.matrix.toarray()

    def __repr__(self) -> str:
        return f"ModeOperator(dims={self.space.dims}, nnz={self.matrix.nnz})"


def _embed(space: TruncatedSpace, mode_index: int, local: sp.spmatrix) -> sp.csr_matrix:
    factors = [
        local if k == mode_index else sp.identity(d, dtype=complex, format="csr")
        for k, d in enumerate(space.dims)
    ]
    out = factors[0]
    for factor in factors[1:]:
        out = sp.kron(out, factor, format="csr")
    return sp.csr_matrix(out)


def _lowering(dim: int) -> sp.csr_matrix:
    if dim == 1:
        return sp.csr_matrix((1, 1), dtype=complex)
    return sp.diags(np.sqrt(np.arange(1, dim, dtype=float)), offsets=1, shape=(dim, dim), format="csr", dtype=complex)


def annihilation(space: TruncatedSpace, mode_index: t.Union[int, str]) -> ModeOperator:
    index = space.mode_index(mode_index)
    return ModeOperator(space, _embed(space, index, _lowering(space.dims[index])))


def creation(space: TruncatedSpace, mode_index: t.Union[int, str]) -> ModeOperator:
    return adjoint(annihilation(space, mode_index))


def number(space: TruncatedSpace, mode_index: t.Union[int, str]) -> ModeOperator:
    index = space.mode_index(mode_index)
    local = sp.diags(np.arange(space.dims[index], dtype=float), format="csr", dtype=complex)
    return ModeOperator(space, _embed(space, index, local))


def identity(space: TruncatedSpace) -> ModeOperator:
    return ModeOperator(space, sp.identity(space.total_dim, dtype=complex, format="csr"))


def adjoint(op: ModeOperator) -> ModeOperator:
    return op.dag()


def compose(*ops: ModeOperator) -> ModeOperator:
    out = ops[0]
    for op in ops[1:]:
        out = out @ op
    return out


def add(*ops: ModeOperator) -> ModeOperator:
    out = ops[0]
    for op in ops[1:]:
        out = out + op
    return out


def scale(op: ModeOperator, factor: complex) -> ModeOperator:
    return op * factor


def commutator(x: ModeOperator, y: ModeOperator) -> ModeOperator:
    return x @ y - y @ x


def basis_vector(space: TruncatedSpace, occupations: t.Sequence[int]) -> np.ndarray:
    """Fock basis vector |n_a, n_b, n_c> in the fixed mode ordering."""
    if len(occupations) != space.n_modes:
        raise SpaceMismatchError(f"Expected {space.n_modes} occupations, got {len(occupations)}")
    vector = np.zeros(space.total_dim, dtype=complex)
    vector[np.ravel_multi_index(tuple(occupations), space.dims)] = 1.0
    return vector
