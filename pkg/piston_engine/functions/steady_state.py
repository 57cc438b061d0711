"""
Exact stationary states of a Liouvillian: L(rho) = 0 with Tr rho = 1.

The engine Liouvillians conserve the photon-number difference between ket and bra, and the
steady state lives in the block where that difference is zero. Solvers work on this block
and embed the result back, which shrinks the (4, 4, 21) system from 112896 to 19404 unknowns.
"""
import json
import logging
import time
import typing as t
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs, lgmres, spilu, splu
from scipy.sparse.linalg import norm as sparse_norm
from tenacity import RetryError, retry, retry_if_exception_type, stop_after_attempt

from piston_engine.functions.engine_models import (
    Superoperator,
    optical_excitations,
    trace_functional,
    unvectorize,
)
from piston_engine.functions.fock_algebra import SpaceMismatchError, TruncatedSpace

RESIDUAL_TOL = 1e-9
DEGENERACY_TOL = 1e-12
DIRECT_MAX_UNKNOWNS = 25_000
EIGEN_ATTEMPTS = 5
ILU_DROP_TOL = 1e-4
ILU_FILL_FACTOR = 20
ITERATIVE_TOL = 1e-12
ITERATIVE_MAXITER = 1000


class SolverError(RuntimeError):
    pass


class MultipleSteadyStatesError(SolverError):
    pass


class NonConvergenceError(SolverError):
    pass


class SolverMethod(str, Enum):
    DIRECT = "direct"
    EIGEN = "eigen"
    ITERATIVE = "iterative"


class DensityMatrix:
    """Hermitian, unit-trace state on a truncated space (dense storage)."""

    __slots__ = ("space", "matrix")

    def __init__(self, space: TruncatedSpace, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (space.total_dim, space.total_dim):
            raise SpaceMismatchError(f"Density matrix of shape {matrix.shape} on a space of dimension {space.total_dim}")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", matrix)

    def __setattr__(self, name: str, value: t.Any) -> None:
        raise AttributeError("DensityMatrix is immutable")

    @staticmethod
    def from_unnormalized(space: TruncatedSpace, matrix: np.ndarray) -> "DensityMatrix":
        """Symmetrize and normalize to unit trace."""
        matrix = np.asarray(matrix, dtype=complex)
        matrix = 0.5 * (matrix + matrix.conj().T)
        trace = np.trace(matrix).real
        if trace == 0 or not np.isfinite(trace):
            raise SolverError(f"Cannot normalize a state with trace {trace}")
        return DensityMatrix(space, matrix / trace)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def fidelity_with_pure(self, vector: np.ndarray) -> float:
        return float(np.real(np.vdot(vector, self.matrix @ vector)))

    def to_dict(self) -> dict[str, t.Any]:
        return {
            "dims": list(self.space.dims),
            "real": self.matrix.real.tolist(),
            "imag": self.matrix.imag.tolist(),
        }

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @staticmethod
    def load(path: str) -> "DensityMatrix":
        with open(path, "r") as f:
            data = json.load(f)
        space = TruncatedSpace(dims=tuple(data["dims"]))
        return DensityMatrix(space, np.asarray(data["real"]) + 1j * np.asarray(data["imag"]))

    def __reduce__(self) -> tuple[t.Any, ...]:
        return DensityMatrix, (self.space, self.matrix)

    def __repr__(self) -> str:
        return f"DensityMatrix(dims={self.space.dims})"


def residual(liouvillian: Superoperator, rho: t.Union[DensityMatrix, np.ndarray]) -> float:
    """Trace norm of L(rho)."""
    matrix = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return float(np.linalg.norm(liouvillian.apply(matrix), ord="nuc"))


def _block_mask(space: TruncatedSpace) -> np.ndarray:
    charge = optical_excitations(space)
    # vec index i + n*j holds rho[i, j]
    return (charge[:, None] == charge[None, :]).reshape(-1, order="F")


def block_unknowns(space: TruncatedSpace) -> int:
    """Size of the zero photon-number-difference block, sum over n of (states with n photons)^2."""
    return int(np.sum(np.bincount(optical_excitations(space)) ** 2))


def symmetry_block(liouvillian: Superoperator) -> t.Optional[np.ndarray]:
    """
    Sorted vectorized indices of the zero photon-number-difference block, or None when the block
    is the whole space or when the Liouvillian leaks out of it.
    """
    in_block = _block_mask(liouvillian.space)
    if in_block.all():
        return None
    coo = liouvillian.matrix.tocoo()
    leaking = (coo.data != 0) & in_block[coo.col] & ~in_block[coo.row]
    if leaking.any():
        logging.warning(
            f"Liouvillian on dims {liouvillian.space.dims} does not conserve the photon number difference, "
            "solving on the full space"
        )
        return None
    return np.flatnonzero(in_block)


def default_method(space: TruncatedSpace) -> SolverMethod:
    return SolverMethod.DIRECT if block_unknowns(space) <= DIRECT_MAX_UNKNOWNS else SolverMethod.ITERATIVE


def _trace_weight(matrix: sp.spmatrix) -> float:
    return float(np.mean(np.abs(matrix.data))) if matrix.nnz else 1.0


def _trace_constrained(matrix: sp.csr_matrix, trace_row: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Replace the first row of L by the weighted trace functional; the right-hand side is w e_0."""
    size = matrix.shape[0]
    weight = _trace_weight(matrix)
    keep = np.ones(size)
    keep[0] = 0.0
    columns = np.flatnonzero(trace_row)
    system = sp.diags(keep) @ matrix + sp.csr_matrix(
        (weight * trace_row[columns], (np.zeros_like(columns), columns)), shape=(size, size)
    )
    rhs = np.zeros(size, dtype=complex)
    rhs[0] = weight
    return sp.csr_matrix(system), rhs


def _solve_direct(matrix: sp.csr_matrix, trace_row: np.ndarray) -> np.ndarray:
    system, rhs = _trace_constrained(matrix, trace_row)
    try:
        lu = splu(sp.csc_matrix(system), permc_spec="COLAMD")
    except RuntimeError as e:
        raise MultipleSteadyStatesError(f"Trace-constrained Liouvillian is singular: {e}") from e

    pivots = np.abs(lu.U.diagonal())
    if pivots.min() <= DEGENERACY_TOL * pivots.max():
        raise MultipleSteadyStatesError(
            f"Smallest LU pivot {pivots.min():.3e} vs largest {pivots.max():.3e}: the steady state is not unique"
        )
    return lu.solve(rhs)


def _solve_iterative(matrix: sp.csr_matrix, trace_row: np.ndarray) -> np.ndarray:
    """LGMRES on the trace-constrained system, reverse Cuthill-McKee ordered, with an incomplete LU preconditioner."""
    system, rhs = _trace_constrained(matrix, trace_row)
    perm = reverse_cuthill_mckee(system, symmetric_mode=False)
    system = sp.csc_matrix(system[perm][:, perm])
    try:
        ilu = spilu(
            system,
            permc_spec="NATURAL",
            drop_tol=ILU_DROP_TOL,
            fill_factor=ILU_FILL_FACTOR,
            diag_pivot_thresh=0.1,
            options=dict(ILU_MILU="smilu_2"),
        )
    except RuntimeError as e:
        raise NonConvergenceError(f"Incomplete LU preconditioner failed: {e}") from e
    preconditioner = LinearOperator(system.shape, matvec=ilu.solve, dtype=complex)

    solution, info = lgmres(system, rhs[perm], M=preconditioner, rtol=ITERATIVE_TOL, atol=0.0, maxiter=ITERATIVE_MAXITER)
    if info > 0:
        raise NonConvergenceError(f"LGMRES did not reach tolerance {ITERATIVE_TOL:.0e} in {info} iterations")
    if info < 0:
        raise SolverError(f"LGMRES failed with code {info}")
    x = np.empty_like(solution)
    x[perm] = solution
    return x


def _solve_eigen(matrix: sp.csr_matrix, seed: int, check_uniqueness: bool) -> np.ndarray:
    """Null eigenvector by shift-invert ARPACK, restarted from fresh seeded vectors on non-convergence."""
    size = matrix.shape[0]
    matrix = sp.csc_matrix(matrix)
    rng = np.random.default_rng(seed)
    k = 2 if check_uniqueness and size > 3 else 1

    @retry(
        retry=retry_if_exception_type(ArpackNoConvergence),
        stop=stop_after_attempt(EIGEN_ATTEMPTS),
    )
    def _null_eigenpairs() -> tuple[np.ndarray, np.ndarray]:
        v0 = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        return eigs(matrix, k=k, sigma=1e-15, which="LM", v0=v0, tol=0, maxiter=10_000)

    try:
        eigenvalues, eigenvectors = _null_eigenpairs()
    except RetryError as e:
        raise NonConvergenceError(f"ARPACK did not converge after {EIGEN_ATTEMPTS} restarts") from e

    order = np.argsort(np.abs(eigenvalues))
    if k == 2:
        scale = float(sparse_norm(matrix, 1))
        if abs(eigenvalues[order[1]]) <= DEGENERACY_TOL * scale:
            raise MultipleSteadyStatesError(
                f"Second eigenvalue {eigenvalues[order[1]]:.3e} is zero within tolerance: the steady state is not unique"
            )
    return eigenvectors[:, order[0]]


def solve_steady_state(
    liouvillian: Superoperator,
    method: t.Optional[t.Union[SolverMethod, str]] = None,
    residual_tol: float = RESIDUAL_TOL,
    seed: int = 0,
    check_uniqueness: bool = True,
    use_symmetry: bool = True,
) -> DensityMatrix:
    """
    Unique trace-one solution of L(rho) = 0. `seed` fixes the ARPACK start vectors of the eigen
    method. With `use_symmetry` the solve is restricted to the zero photon-number-difference
    block; uniqueness is then checked inside that block only.
    """
    space = liouvillian.space
    n = space.total_dim
    method = default_method(space) if method is None else SolverMethod(method)

    start = time.time()
    block = symmetry_block(liouvillian) if use_symmetry else None
    if block is None:
        matrix, trace_row = liouvillian.matrix, trace_functional(space)
    else:
        matrix = liouvillian.matrix[block][:, block]
        trace_row = trace_functional(space)[block]

    if method == SolverMethod.DIRECT:
        solution = _solve_direct(matrix, trace_row)
    elif method == SolverMethod.EIGEN:
        solution = _solve_eigen(matrix, seed=seed, check_uniqueness=check_uniqueness)
    elif method == SolverMethod.ITERATIVE:
        solution = _solve_iterative(matrix, trace_row)
    else:
        raise ValueError(f"Unknown solver method: {method}")

    if block is None:
        vector = solution
    else:
        vector = np.zeros(n * n, dtype=complex)
        vector[block] = solution
    rho = DensityMatrix.from_unnormalized(space, unvectorize(vector, n))

    res = residual(liouvillian, rho)
    norm = float(np.linalg.norm(rho.matrix, ord="nuc"))
    unknowns = matrix.shape[0]
    logging.info(
        f"Steady state on dims {space.dims} via {method.value} ({unknowns} unknowns) "
        f"in {time.time() - start:.2f}s, residual {res:.2e}"
    )
    if res > residual_tol * norm:
        raise NonConvergenceError(f"Steady-state residual {res:.3e} exceeds {residual_tol:.1e}")
    return rho
