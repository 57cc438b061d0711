"""
Figures of merit of a solved engine state: g2, dissipated power, power under load,
free energy difference and von Neumann entropy of the mechanical mode.
"""
import logging
import math
import typing as t
from functools import cached_property

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar

from piston_engine.functions.cache import engine_steady_state
from piston_engine.functions.engine_models import build_liouvillian, occupation_to_temperature
from piston_engine.functions.steady_state import DensityMatrix, SolverMethod, residual
from piston_engine.models.EngineConfig import EngineConfig
from piston_engine.models.FigureOfMerit import FigureOfMerit

MECHANICAL_MODE = 2
CLAMP_THRESHOLD = 1e-12
CLAMPED_MASS_WARNING = 1e-8
POWER_ROUTE_TOL = 1e-10
DEFAULT_LOAD_POINTS = 30


class UndefinedObservableError(ValueError):
    pass


class ConsistencyError(RuntimeError):
    pass


class MechanicalMarginal:
    """Reduced density matrix of a single mode with cached spectral data."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=complex)
        self.matrix = 0.5 * (matrix + matrix.conj().T)
        self.dim = self.matrix.shape[0]

    @cached_property
    def raw_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.clip(self.raw_eigenvalues, 0.0, None)

    @cached_property
    def clamped_mass(self) -> float:
        return float(-self.raw_eigenvalues[self.raw_eigenvalues < 0].sum())

    @cached_property
    def populations(self) -> np.ndarray:
        return np.clip(self.matrix.diagonal().real, 0.0, None)

    @property
    def mean_number(self) -> float:
        return float(np.dot(np.arange(self.dim), self.matrix.diagonal().real))

    def __repr__(self) -> str:
        return f"MechanicalMarginal(dim={self.dim}, mean_number={self.mean_number:.4f})"


def partial_trace(rho: DensityMatrix, keep: int) -> MechanicalMarginal:
    dims = rho.space.dims
    if not 0 <= keep < len(dims):
        raise ValueError(f"Mode {keep} out of range for dims {dims}")
    n_modes = len(dims)
    tensor = rho.matrix.reshape(dims + dims)
    # Contract every ket index with its bra index except for the kept mode.
    ket = list(range(n_modes))
    bra = [n_modes + k if k == keep else k for k in range(n_modes)]
    return MechanicalMarginal(np.einsum(tensor, ket + bra, [keep, n_modes + keep]))


def mechanical_marginal(rho: DensityMatrix) -> MechanicalMarginal:
    return partial_trace(rho, MECHANICAL_MODE)


def gibbs_marginal(dim: int, occupation: float) -> MechanicalMarginal:
    """Geometric number distribution with mean `occupation`, truncated to `dim` levels and renormalized."""
    if occupation == 0:
        populations = np.zeros(dim)
        populations[0] = 1.0
    else:
        ratio = occupation / (occupation + 1)
        populations = ratio ** np.arange(dim)
        populations /= populations.sum()
    return MechanicalMarginal(np.diag(populations))


def number_distribution(marginal: MechanicalMarginal) -> np.ndarray:
    return marginal.populations / marginal.populations.sum()


def g2(marginal: MechanicalMarginal) -> float:
    """<c^dag c^dag c c> / <c^dag c>^2, both diagonal in the Fock basis."""
    n = np.arange(marginal.dim)
    populations = marginal.matrix.diagonal().real
    mean = float(np.dot(n, populations))
    if mean <= CLAMP_THRESHOLD:
        raise UndefinedObservableError("g2 is undefined for a state with no quanta")
    return float(np.dot(n * (n - 1), populations)) / mean**2


def von_neumann_entropy(marginal: MechanicalMarginal) -> float:
    if marginal.clamped_mass > CLAMPED_MASS_WARNING:
        logging.warning(f"Clamped {marginal.clamped_mass:.2e} of negative eigenvalue mass from a mode marginal")
    eigenvalues = marginal.eigenvalues[marginal.eigenvalues > CLAMP_THRESHOLD]
    return float(-np.sum(eigenvalues * np.log(eigenvalues)))


def relative_entropy(marginal: MechanicalMarginal, reference: MechanicalMarginal) -> float:
    """S(rho || sigma) = Tr[rho log rho] - Tr[rho log sigma] in nats; reference must be full rank."""
    ref_values, ref_vectors = np.linalg.eigh(reference.matrix)
    if ref_values.min() <= 0:
        raise UndefinedObservableError("Relative entropy needs a full-rank reference state")
    log_reference = (ref_vectors * np.log(ref_values)) @ ref_vectors.conj().T
    cross = float(np.real(np.trace(marginal.matrix @ log_reference)))
    return -von_neumann_entropy(marginal) - cross


def free_energy_difference(config: EngineConfig, marginal: MechanicalMarginal) -> float:
    """
    F(rho_c) - F(rho_G) for the local Hamiltonian hbar w_c c^dag c at the mechanical bath temperature.
    At N_c = 0 it is the mean energy.
    """
    energy = config.omega_c * marginal.mean_number
    if config.N_c == 0:
        return energy
    temperature = occupation_to_temperature(config.N_c, config.omega_c)
    free_energy = energy - temperature * von_neumann_entropy(marginal)
    gibbs_free_energy = temperature * math.log(-math.expm1(-config.omega_c / temperature))
    return free_energy - gibbs_free_energy


def _dissipated_power_trace(config: EngineConfig, marginal: MechanicalMarginal, rate: float) -> float:
    """
    -Tr{hbar w_c n [rate (N_c+1) D_c(rho) + rate N_c D_c^dag(rho)]}, evaluated with the marginal embedded
    one level higher so that the creation operator does not clip the top Fock level.
    """
    dim = marginal.dim + 1
    rho = np.zeros((dim, dim), dtype=complex)
    rho[:-1, :-1] = marginal.matrix
    lowering = np.diag(np.sqrt(np.arange(1, dim)), k=1)
    n = np.diag(np.arange(dim, dtype=float))

    def dissipator(x: np.ndarray) -> np.ndarray:
        x_dag = x.conj().T
        return x @ rho @ x_dag - 0.5 * (x_dag @ x @ rho + rho @ x_dag @ x)

    generator = rate * (config.N_c + 1) * dissipator(lowering) + rate * config.N_c * dissipator(lowering.conj().T)
    return -config.omega_c * float(np.real(np.trace(n @ generator)))


def dissipated_power(config: EngineConfig, rho: DensityMatrix) -> float:
    """P = hbar w_c kappa_c (<c^dag c> - N_c), cross-checked against the dissipator trace."""
    marginal = mechanical_marginal(rho)
    closed_form = config.omega_c * config.kappa_c * (marginal.mean_number - config.N_c)
    trace_route = _dissipated_power_trace(config, marginal, config.kappa_c)
    if abs(trace_route - closed_form) > POWER_ROUTE_TOL:
        raise ConsistencyError(
            f"Dissipated power routes disagree: trace {trace_route:.15e} vs closed form {closed_form:.15e}"
        )
    return closed_form


def _solve_loaded(config: EngineConfig, kappa_L: float, method: t.Optional[SolverMethod], seed: int = 0) -> MechanicalMarginal:
    return mechanical_marginal(engine_steady_state(config.with_updates(kappa_L=kappa_L), method, seed))


def power_under_load(
    config: EngineConfig, kappa_L: float, method: t.Optional[SolverMethod] = None, seed: int = 0
) -> float:
    """P_L = hbar w_c kappa_L (<c^dag c> - N_c) on the steady state with total friction kappa_c + kappa_L."""
    if kappa_L < 0:
        raise ValueError(f"Load damping must be >= 0, got {kappa_L}")
    marginal = _solve_loaded(config, kappa_L, method, seed)
    return config.omega_c * kappa_L * (marginal.mean_number - config.N_c)


def default_load_grid(config: EngineConfig, n_points: int = DEFAULT_LOAD_POINTS) -> np.ndarray:
    return config.kappa_c * np.logspace(-2, 3, n_points)


def load_curve(
    config: EngineConfig,
    grid: t.Optional[t.Sequence[float]] = None,
    method: t.Optional[SolverMethod] = None,
    map_fn: t.Callable[..., list] = lambda items, func: [func(item) for item in items],
    seed: int = 0,
) -> pd.DataFrame:
    """P_L, g2 and mean phonon number along a grid of load rates."""
    grid = default_load_grid(config) if grid is None else np.asarray(grid, dtype=float)

    def _point(kappa_L: float) -> dict[str, float]:
        marginal = _solve_loaded(config, float(kappa_L), method, seed)
        try:
            coherence = g2(marginal)
        except UndefinedObservableError:
            coherence = float("nan")
        return {
            "kappa_L": float(kappa_L),
            "P_L": config.omega_c * float(kappa_L) * (marginal.mean_number - config.N_c),
            "g2": coherence,
            "mean_phonons": marginal.mean_number,
        }

    return pd.DataFrame(map_fn(list(grid), _point))


def optimal_load(
    config: EngineConfig,
    grid: t.Optional[t.Sequence[float]] = None,
    method: t.Optional[SolverMethod] = None,
    curve: t.Optional[pd.DataFrame] = None,
    seed: int = 0,
) -> tuple[float, float]:
    """
    argmax and max of P_L over a log grid, refined by a golden-section search between the
    neighbours of the grid maximum.
    """
    if curve is None:
        grid = default_load_grid(config) if grid is None else np.asarray(grid, dtype=float)
        if len(grid) == 0:
            raise ValueError("The load grid is empty")
        curve = load_curve(config, grid, method=method, seed=seed)
    kappas = curve["kappa_L"].to_numpy()
    powers = curve["P_L"].to_numpy()
    best = int(np.argmax(powers))
    best_kappa, best_power = float(kappas[best]), float(powers[best])

    if best == 0 or best == len(kappas) - 1:
        logging.warning(
            f"Maximum power under load found on the grid boundary (kappa_L={best_kappa:.3e}); the grid is too narrow"
        )
        return best_kappa, best_power
    if not (powers[best] > powers[best - 1] and powers[best] > powers[best + 1]):
        return best_kappa, best_power

    bracket = (math.log(kappas[best - 1]), math.log(best_kappa), math.log(kappas[best + 1]))
    refined = minimize_scalar(
        lambda log_kappa: -power_under_load(config, math.exp(log_kappa), method=method, seed=seed),
        bracket=bracket,
        method="golden",
        options={"xtol": 1e-3},
    )
    refined_power = -float(refined.fun)
    if refined_power > best_power:
        return math.exp(float(refined.x)), refined_power
    return best_kappa, best_power


def figures_of_merit(config: EngineConfig, rho: DensityMatrix, residual_norm: t.Optional[float] = None) -> FigureOfMerit:
    marginal = mechanical_marginal(rho)
    try:
        coherence: t.Optional[float] = g2(marginal)
    except UndefinedObservableError:
        coherence = None
    if residual_norm is None:
        residual_norm = residual(build_liouvillian(config), rho)
    return FigureOfMerit(
        g2=coherence,
        P=dissipated_power(config, rho),
        P_L=config.omega_c * config.kappa_L * (marginal.mean_number - config.N_c),
        deltaF=free_energy_difference(config, marginal),
        entropy=von_neumann_entropy(marginal),
        mean_phonons=marginal.mean_number,
        residual=residual_norm,
    )
