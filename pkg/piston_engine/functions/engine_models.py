"""
Hamiltonians and Liouvillians of the single cavity and cascade engines.

Density matrices are vectorized by column stacking, vec(rho)[i + n*j] = rho[i, j],
so that vec(A rho B) = (B^T kron A) vec(rho). Left multiplication is I kron A and
right multiplication is B^T kron I. The quantum models are built in the laboratory
frame, without rotating wave approximation.
"""
import math
import typing as t
import numpy as np
import scipy.sparse as sp

from piston_engine.functions.fock_algebra import (
    ModeOperator,
    SpaceMismatchError,
    TruncatedSpace,
    annihilation,
    number,
)
from piston_engine.models.EngineConfig import EngineConfig, EngineVariant


class WrongVariantError(ValueError):
    pass


class Superoperator:
    """Immutable sparse generator acting on column-stacked density matrices."""

    __slots__ = ("space", "matrix")

    def __init__(self, space: TruncatedSpace, matrix: sp.spmatrix):
        n = space.total_dim
        matrix = sp.csr_matrix(matrix, dtype=complex)
        if matrix.shape != (n * n, n * n):
            raise SpaceMismatchError(f"Superoperator of shape {matrix.shape} does not act on dimension {n}")
        matrix.sort_indices()
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", matrix)

    def __setattr__(self, name: str, value: t.Any) -> None:
        raise AttributeError("Superoperator is immutable")

    def _check_space(self, other: "Superoperator") -> None:
        if self.space != other.space:
            raise SpaceMismatchError(
                f"Cannot combine superoperators on spaces {self.space.dims} and {other.space.dims}"
            )

    def __add__(self, other: "Superoperator") -> "Superoperator":
        self._check_space(other)
        return Superoperator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        self._check_space(other)
        return Superoperator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "Superoperator":
        return Superoperator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def apply(self, rho: np.ndarray) -> np.ndarray:
        n = self.space.total_dim
        out = self.matrix @ np.asarray(rho, dtype=complex).reshape(n * n, order="F")
        return out.reshape((n, n), order="F")

    def __repr__(self) -> str:
        return f"Superoperator(dims={self.space.dims}, nnz={self.matrix.nnz})"


def vectorize(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unvectorize(vec: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(vec, dtype=complex).reshape((n, n), order="F")


def trace_functional(space: TruncatedSpace) -> np.ndarray:
    """Row vector w with w @ vec(rho) = Tr rho."""
    n = space.total_dim
    w = np.zeros(n * n, dtype=complex)
    w[np.arange(n) * (n + 1)] = 1.0
    return w


def _identity(n: int) -> sp.csr_matrix:
    return sp.identity(n, dtype=complex, format="csr")


def spre(op: ModeOperator) -> Superoperator:
    n = op.space.total_dim
    return Superoperator(op.space, sp.kron(_identity(n), op.matrix, format="csr"))


def spost(op: ModeOperator) -> Superoperator:
    n = op.space.total_dim
    return Superoperator(op.space, sp.kron(op.matrix.transpose(), _identity(n), format="csr"))


def sprepost(left: ModeOperator, right: ModeOperator) -> Superoperator:
    """rho -> left rho right."""
    if left.space != right.space:
        raise SpaceMismatchError(f"Cannot combine operators on spaces {left.space.dims} and {right.space.dims}")
    return Superoperator(left.space, sp.kron(right.matrix.transpose(), left.matrix, format="csr"))


def commutator_superop(hamiltonian: ModeOperator) -> Superoperator:
    """rho -> -i [H, rho]."""
    return (spre(hamiltonian) - spost(hamiltonian)) * (-1j)


def double_commutator_superop(x: ModeOperator, y: ModeOperator) -> Superoperator:
    """rho -> [[x, rho], y]."""
    return sprepost(x, y) - spost(x @ y) - spre(y @ x) + sprepost(y, x)


def lindblad_dissipator(op: ModeOperator) -> Superoperator:
    """D_x(rho) = x rho x^dag - 1/2 {x^dag x, rho}."""
    op_dag = op.dag()
    op_dag_op = op_dag @ op
    return sprepost(op, op_dag) - spre(op_dag_op) * 0.5 - spost(op_dag_op) * 0.5


def thermal_dissipator(op: ModeOperator, rate: float, occupation: float) -> Superoperator:
    """rate (N+1) D_x + rate N D_{x^dag}."""
    return lindblad_dissipator(op) * (rate * (occupation + 1)) + lindblad_dissipator(op.dag()) * (rate * occupation)


def engine_space(config: EngineConfig) -> TruncatedSpace:
    return TruncatedSpace(dims=config.dims)


def optical_excitations(space: TruncatedSpace) -> np.ndarray:
    """
    Photon number of every basis state, summed over all modes but the last (mechanical) one.
    Both engine Liouvillians map rho[i, j] only onto entries with the same n[i] - n[j].
    """
    total = np.zeros(space.total_dim)
    for mode in range(space.n_modes - 1):
        total += number(space, mode).matrix.diagonal().real
    return np.rint(total).astype(np.int64)


def _require_variant(config: EngineConfig, variant: EngineVariant) -> None:
    if config.variant != variant:
        raise WrongVariantError(f"Expected a {variant.value} configuration, got {config.variant.value}")


def _free_hamiltonian(space: TruncatedSpace, config: EngineConfig) -> ModeOperator:
    return (
        number(space, "a") * config.omega_a
        + number(space, "b") * config.omega_b
        + number(space, "c") * config.omega_c
    )


def hamiltonian_single(config: EngineConfig) -> ModeOperator:
    """H = w_a a^dag a + w_b b^dag b + w_c c^dag c - g (a+b)^dag (a+b) (c+c^dag)."""
    _require_variant(config, EngineVariant.SINGLE_CAVITY)
    space = engine_space(config)
    a, b, c = (annihilation(space, mode) for mode in "abc")
    field = a + b
    position = c + c.dag()
    return _free_hamiltonian(space, config) - (field.dag() @ field @ position) * config.g


def hamiltonian_cascade(config: EngineConfig) -> ModeOperator:
    """H = H_1 + H_2 with H_1 = w_b b^dag b and H_2 = w_a a^dag a + w_c c^dag c - g a^dag a (c+c^dag)."""
    _require_variant(config, EngineVariant.CASCADE)
    space = engine_space(config)
    a, c = annihilation(space, "a"), annihilation(space, "c")
    return _free_hamiltonian(space, config) - (a.dag() @ a @ (c + c.dag())) * config.g


def liouvillian_single(config: EngineConfig) -> Superoperator:
    _require_variant(config, EngineVariant.SINGLE_CAVITY)
    space = engine_space(config)
    a, b, c = (annihilation(space, mode) for mode in "abc")
    return (
        commutator_superop(hamiltonian_single(config))
        + thermal_dissipator(a, config.kappa_a, config.N_a)
        + thermal_dissipator(b, config.kappa_b, config.N_b)
        + thermal_dissipator(c, config.total_mechanical_damping, config.N_c)
    )


def cascade_feeding(a: ModeOperator, b: ModeOperator, gamma_1: float, gamma_2: float) -> Superoperator:
    """gamma_1 D_b + gamma_2 D_a - sqrt(gamma_1 gamma_2) ([a^dag, b rho] + [rho b^dag, a])."""
    a_dag, b_dag = a.dag(), b.dag()
    cross = (
        spre(a_dag @ b)
        - sprepost(b, a_dag)
        + spost(b_dag @ a)
        - sprepost(a, b_dag)
    )
    return lindblad_dissipator(b) * gamma_1 + lindblad_dissipator(a) * gamma_2 - cross * math.sqrt(gamma_1 * gamma_2)


def cascade_noise(a: ModeOperator, b: ModeOperator, gamma_1: float, gamma_2: float, occupation: float) -> Superoperator:
    """N_b/2 [[J, rho], J^dag] + N_b/2 [[J^dag, rho], J] with J = sqrt(gamma_1) b + sqrt(gamma_2) a."""
    collective = b * math.sqrt(gamma_1) + a * math.sqrt(gamma_2)
    collective_dag = collective.dag()
    return (
        double_commutator_superop(collective, collective_dag)
        + double_commutator_superop(collective_dag, collective)
    ) * (occupation / 2)


def liouvillian_cascade(config: EngineConfig) -> Superoperator:
    _require_variant(config, EngineVariant.CASCADE)
    space = engine_space(config)
    a, b, c = (annihilation(space, mode) for mode in "abc")
    gamma_1, gamma_2 = config.feeding_rates
    return (
        commutator_superop(hamiltonian_cascade(config))
        + thermal_dissipator(a, config.kappa_a, config.N_a)
        + thermal_dissipator(c, config.total_mechanical_damping, config.N_c)
        + cascade_feeding(a, b, gamma_1, gamma_2)
        + cascade_noise(a, b, gamma_1, gamma_2, config.N_b)
    )


def build_hamiltonian(config: EngineConfig) -> ModeOperator:
    if config.variant == EngineVariant.SINGLE_CAVITY:
        return hamiltonian_single(config)
    return hamiltonian_cascade(config)


def build_liouvillian(config: EngineConfig) -> Superoperator:
    if config.variant == EngineVariant.SINGLE_CAVITY:
        return liouvillian_single(config)
    return liouvillian_cascade(config)


def occupation_to_temperature(occupation: float, omega: float) -> float:
    """k_B T = hbar omega / ln(1 + 1/N), zero temperature for an empty bath."""
    if occupation < 0:
        raise ValueError(f"Bath occupation must be >= 0, got {occupation}")
    if occupation == 0:
        return 0.0
    return omega / math.log1p(1.0 / occupation)


def temperature_to_occupation(temperature: float, omega: float) -> float:
    """Bose-Einstein occupation N = 1 / (exp(hbar omega / k_B T) - 1)."""
    if temperature < 0:
        raise ValueError(f"Temperature must be >= 0, got {temperature}")
    if temperature == 0:
        return 0.0
    return 1.0 / math.expm1(omega / temperature)
