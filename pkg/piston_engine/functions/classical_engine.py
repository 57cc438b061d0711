"""
Classical single cavity engine: complex amplitudes alpha, beta, gamma written as real quadratures,
alpha = (X_a + i Y_a) / sqrt(2) and so on, integrated with Euler-Maruyama from the origin.

State layout is (X_a, Y_a, X_b, Y_b, X_c, Y_c). Each quadrature of mode nu receives a Gaussian
increment of variance kappa_nu N_nu dt per step, so with g = 0 every quadrature relaxes to
variance N_nu.
"""
import logging
import math
import time
import typing as t

import numpy as np
import pandas as pd
from numba import njit
from pydantic import BaseModel, ConfigDict
from scipy.spatial import cKDTree
from scipy.special import digamma

from piston_engine.functions.parallelism import par_map
from piston_engine.models.ClassicalConfig import ClassicalConfig
from piston_engine.models.FigureOfMerit import FigureOfMerit

COORDINATES = ("X_a", "Y_a", "X_b", "Y_b", "X_c", "Y_c")
NOISE_CHUNK = 1 << 16
MAX_ABORTED_FRACTION = 0.01
DEFAULT_BIN_STEP = 0.25
DEFAULT_RESAMPLES = 200
DEFAULT_NEIGHBORS = 4
MIN_RESAMPLED_POINTS = 4
ENTROPY_ESTIMATORS = ("knn", "histogram")
SQRT2 = math.sqrt(2.0)


class IntegrationBlowupError(RuntimeError):
    def __init__(self, step_index: int, message: t.Optional[str] = None):
        self.step_index = step_index
        super().__init__(message or f"Non-finite state after step {step_index}")


class EnsembleFailedError(RuntimeError):
    pass


@njit(nogil=True)
def _advance(state, params, noise, first_step, tail_start, thin, tail):  # type: ignore[no-untyped-def]
    """
    Integrate len(noise) steps in place. Steps are counted from 1; the state after step s is
    stored in `tail` when s > tail_start and (s - tail_start - 1) is a multiple of thin.
    Returns the number of the first step that produced a non-finite state, or -1.
    """
    delta, omega_c, g, kappa_a, kappa_b, kappa_c, dt = (
        params[0], params[1], params[2], params[3], params[4], params[5], params[6]
    )
    xa, ya, xb, yb, xc, yc = state[0], state[1], state[2], state[3], state[4], state[5]
    for i in range(noise.shape[0]):
        sx = xa + xb
        sy = ya + yb
        coupling = g * SQRT2 * xc
        dxa = delta * ya - coupling * sy - 0.5 * kappa_a * xa
        dya = -delta * xa + coupling * sx - 0.5 * kappa_a * ya
        dxb = -coupling * sy - 0.5 * kappa_b * xb
        dyb = coupling * sx - 0.5 * kappa_b * yb
        dxc = omega_c * yc - 0.5 * kappa_c * xc
        dyc = -omega_c * xc + g / SQRT2 * (sx * sx + sy * sy) - 0.5 * kappa_c * yc
        xa += dxa * dt + noise[i, 0]
        ya += dya * dt + noise[i, 1]
        xb += dxb * dt + noise[i, 2]
        yb += dyb * dt + noise[i, 3]
        xc += dxc * dt + noise[i, 4]
        yc += dyc * dt + noise[i, 5]

        step_number = first_step + i + 1
        if not (
            math.isfinite(xa) and math.isfinite(ya) and math.isfinite(xb)
            and math.isfinite(yb) and math.isfinite(xc) and math.isfinite(yc)
        ):
            return step_number
        offset = step_number - tail_start - 1
        if offset >= 0 and offset % thin == 0:
            row = offset // thin
            tail[row, 0] = xa
            tail[row, 1] = ya
            tail[row, 2] = xb
            tail[row, 3] = yb
            tail[row, 4] = xc
            tail[row, 5] = yc
    state[0], state[1], state[2], state[3], state[4], state[5] = xa, ya, xb, yb, xc, yc
    return -1


def _parameters(config: ClassicalConfig) -> np.ndarray:
    return np.array([
        config.detuning,
        config.omega_c,
        config.g,
        config.kappa_a,
        config.kappa_b,
        config.total_mechanical_damping,
        config.dt,
    ])


def noise_scales(config: ClassicalConfig) -> np.ndarray:
    """Standard deviation sqrt(kappa N dt) of every quadrature increment. The load bath shares N_c."""
    rates = np.array([
        config.kappa_a * config.N_a,
        config.kappa_b * config.N_b,
        config.total_mechanical_damping * config.N_c,
    ])
    return np.repeat(np.sqrt(rates * config.dt), 2)


def step(state: t.Sequence[float], config: ClassicalConfig, noise: t.Sequence[float], step_index: int = 0) -> np.ndarray:
    """One Euler-Maruyama update with explicitly given increments."""
    new_state = np.array(state, dtype=float)
    increments = np.asarray(noise, dtype=float).reshape(1, 6)
    if new_state.shape != (6,):
        raise ValueError(f"A classical state has 6 coordinates, got shape {new_state.shape}")
    no_tail = np.iinfo(np.int64).max
    if _advance(new_state, _parameters(config), increments, 0, no_tail, 1, np.empty((0, 6))) >= 0:
        raise IntegrationBlowupError(step_index)
    return new_state


def tail_length(config: ClassicalConfig) -> int:
    return (config.tail_steps + config.thin - 1) // config.thin


class Trajectory(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    seed: int
    final: np.ndarray
    tail: t.Optional[np.ndarray] = None


def run_trajectory(config: ClassicalConfig, seed: int) -> Trajectory:
    """Integrate a single trajectory from the origin; the noise stream is fully determined by `seed`."""
    rng = np.random.default_rng(seed)
    params = _parameters(config)
    scales = noise_scales(config)
    state = np.zeros(6)
    tail = np.empty((tail_length(config), 6))
    tail_start = config.n_steps - config.tail_steps

    for first_step in range(0, config.n_steps, NOISE_CHUNK):
        n = min(NOISE_CHUNK, config.n_steps - first_step)
        noise = rng.standard_normal((n, 6)) * scales
        blown_up = _advance(state, params, noise, first_step, tail_start, config.thin, tail)
        if blown_up >= 0:
            raise IntegrationBlowupError(blown_up)
    return Trajectory(seed=seed, final=state, tail=tail if config.tail_steps else None)


def trajectory_seeds(master_seed: int, n_traj: int) -> np.ndarray:
    return np.random.SeedSequence(master_seed).generate_state(n_traj).astype(np.int64)


class ClassicalEnsemble(BaseModel):
    """Final points (and optional thinned tails) of the trajectories that completed."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: ClassicalConfig
    seeds: np.ndarray
    completed: np.ndarray
    final_points: np.ndarray
    tails: t.Optional[np.ndarray] = None
    # trajectory index -> step number of the blowup
    aborted: dict[int, int] = {}
    elapsed: float = 0.0

    @property
    def n_completed(self) -> int:
        return len(self.completed)

    def gamma_points(self) -> np.ndarray:
        return self.final_points[:, 4:6]

    def gamma_tail_points(self) -> np.ndarray:
        if self.tails is None:
            raise ValueError("The ensemble was run without trajectory tails (tail_steps = 0)")
        return self.tails[:, :, 4:6].reshape(-1, 2)

    def metadata(self) -> dict[str, t.Any]:
        return {
            "config": self.config.model_dump(mode="json"),
            "n_completed": self.n_completed,
            "aborted": {str(k): v for k, v in self.aborted.items()},
            "elapsed_seconds": round(self.elapsed, 3),
        }

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.final_points, columns=list(COORDINATES))
        df.insert(0, "seed", self.seeds[self.completed])
        df.insert(0, "trajectory", self.completed)
        return df

    def tails_frame(self) -> pd.DataFrame:
        if self.tails is None:
            raise ValueError("The ensemble was run without trajectory tails (tail_steps = 0)")
        n_traj, n_records, _ = self.tails.shape
        steps = self.config.n_steps - self.config.tail_steps + 1 + self.config.thin * np.arange(n_records)
        df = pd.DataFrame(self.tails.reshape(-1, 6), columns=list(COORDINATES))
        df.insert(0, "step", np.tile(steps, n_traj))
        df.insert(0, "trajectory", np.repeat(self.completed, n_records))
        return df


def run_ensemble(config: ClassicalConfig, workers: t.Optional[int] = None) -> ClassicalEnsemble:
    """
    Integrate config.n_traj independent trajectories from the all-zero initial condition.
    Trajectory k draws its noise from the k-th seed of SeedSequence(config.seed), so the
    ensemble is identical for any number of workers.
    """
    seeds = trajectory_seeds(config.seed, config.n_traj)
    start = time.time()

    def _run(index: int) -> t.Union[Trajectory, IntegrationBlowupError]:
        try:
            return run_trajectory(config, int(seeds[index]))
        except IntegrationBlowupError as e:
            logging.warning(f"Trajectory {index} (seed {seeds[index]}) blew up at step {e.step_index}")
            return e

    results = par_map(list(range(config.n_traj)), _run, workers=workers)
    aborted = {i: r.step_index for i, r in enumerate(results) if isinstance(r, IntegrationBlowupError)}
    if len(aborted) > MAX_ABORTED_FRACTION * config.n_traj:
        raise EnsembleFailedError(
            f"{len(aborted)} of {config.n_traj} trajectories blew up, more than {MAX_ABORTED_FRACTION:.0%}"
        )

    finished = [(i, r) for i, r in enumerate(results) if isinstance(r, Trajectory)]
    completed = np.array([i for i, _ in finished], dtype=int)
    final_points = np.array([r.final for _, r in finished]).reshape(-1, 6)
    tails = np.array([r.tail for _, r in finished]) if config.tail_steps else None
    elapsed = time.time() - start
    logging.info(
        f"Classical ensemble of {config.n_traj} x {config.n_steps} steps in {elapsed:.1f}s, {len(aborted)} aborted"
    )
    return ClassicalEnsemble(
        config=config,
        seeds=seeds,
        completed=completed,
        final_points=final_points,
        tails=tails,
        aborted=aborted,
        elapsed=elapsed,
    )


def reference_ensemble(ensemble: ClassicalEnsemble, workers: t.Optional[int] = None) -> ClassicalEnsemble:
    """
    Same seeds, step and length with the optomechanical coupling switched off. The decoupled
    mechanical mode does not depend on the optical baths, so those are emptied.
    """
    return run_ensemble(ensemble.config.with_updates(g=0.0, N_a=0.0, N_b=0.0), workers=workers)


def classical_temperature(config: ClassicalConfig) -> float:
    """k_B T of the mechanical bath, from equipartition <|gamma|^2> = N_c."""
    return config.omega_c * config.N_c


def histogram(points: np.ndarray, bin_step: float = DEFAULT_BIN_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Occupied cells of the square lattice of step `bin_step` through the origin, and their counts."""
    if bin_step <= 0:
        raise ValueError(f"Histogram step must be positive, got {bin_step}")
    cells = np.floor(np.asarray(points) / bin_step).astype(np.int64)
    return np.unique(cells, axis=0, return_counts=True)


def histogram_entropy(points: np.ndarray, bin_step: float = DEFAULT_BIN_STEP) -> float:
    """Shannon entropy in nats of the binned distribution; empty cells do not contribute."""
    _, counts = histogram(points, bin_step)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def histogram_dict(points: np.ndarray, bin_step: float = DEFAULT_BIN_STEP) -> dict[str, t.Any]:
    cells, counts = histogram(points, bin_step)
    return {"bin_step": bin_step, "cells": cells.tolist(), "counts": counts.tolist()}


def knn_entropy(points: np.ndarray, neighbors: int = DEFAULT_NEIGHBORS) -> float:
    """
    Kozachenko-Leonenko differential entropy in nats of planar samples,
    psi(N) - psi(k) + log(pi) + 2 <log r_k> with r_k the distance to the k-th nearest neighbour.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n < 2:
        raise ValueError(f"Nearest-neighbour entropy needs at least two samples, got {n}")
    k = min(neighbors, n - 1)
    distances, _ = cKDTree(points).query(points, k=k + 1)
    # column 0 is the sample itself
    radius = np.maximum(distances[:, k], np.finfo(float).tiny)
    return float(digamma(n) - digamma(k) + math.log(math.pi) + 2.0 * np.mean(np.log(radius)))


def lattice_entropy(points: np.ndarray, bin_step: float = DEFAULT_BIN_STEP, estimator: str = "knn") -> float:
    """
    Shannon entropy in nats of the samples binned on the lattice of step `bin_step`.
    "histogram" counts occupied cells. "knn" takes the fine-lattice limit h - 2 log(bin_step) of
    the nearest-neighbour differential entropy h, which stays unbiased when most cells hold a
    single sample.
    """
    if estimator == "histogram":
        return histogram_entropy(points, bin_step)
    if estimator != "knn":
        raise ValueError(f"Unknown entropy estimator '{estimator}', expected one of {ENTROPY_ESTIMATORS}")
    if bin_step <= 0:
        raise ValueError(f"Histogram step must be positive, got {bin_step}")
    points = np.asarray(points, dtype=float)
    if len(np.unique(points, axis=0)) < 2:
        # one distinct sample fills one cell
        return 0.0
    return knn_entropy(points) - 2.0 * math.log(bin_step)


class _Moments(t.NamedTuple):
    mean_phonons: float
    g2: float
    deltaF: float
    entropy: float


def _moments(
    points: np.ndarray,
    reference: np.ndarray,
    omega_c: float,
    temperature: float,
    bin_step: float,
    estimator: str,
) -> _Moments:
    phonons = 0.5 * np.sum(points**2, axis=1)
    mean = float(phonons.mean())
    g2 = float(np.mean(phonons**2)) / mean**2 if mean > 0 else float("nan")
    entropy = lattice_entropy(points, bin_step, estimator)
    free_energy = omega_c * mean - temperature * entropy
    reference_phonons = 0.5 * np.sum(reference**2, axis=1)
    reference_free_energy = omega_c * float(reference_phonons.mean())
    if temperature > 0:
        reference_free_energy -= temperature * lattice_entropy(reference, bin_step, estimator)
    return _Moments(mean, g2, free_energy - reference_free_energy, entropy)


def classical_figures(
    ensemble: ClassicalEnsemble,
    config: t.Optional[ClassicalConfig] = None,
    reference: t.Optional[ClassicalEnsemble] = None,
    bin_step: float = DEFAULT_BIN_STEP,
    statistics: str = "final",
    n_resamples: int = DEFAULT_RESAMPLES,
    estimator: str = "knn",
    workers: t.Optional[int] = None,
) -> FigureOfMerit:
    """
    Moment estimates on the mode-c samples: mean phonons <|gamma|^2>, g2 = <|gamma|^4> / <|gamma|^2>^2,
    P = w_c kappa_c (<|gamma|^2> - N_c), and F = E - k_B T H against a g = 0 reference binned on the
    same lattice. With statistics="time_average" the samples are the recorded tails instead of the
    final points.

    Errors are the spread of the estimates over random half-ensembles drawn without replacement,
    seeded from the ensemble seed. For statistics of n independent samples this spread equals the
    standard error of the full ensemble.
    """
    config = ensemble.config if config is None else config
    if ensemble.n_completed == 0:
        raise ValueError("Cannot compute figures of merit of an empty ensemble")
    if estimator not in ENTROPY_ESTIMATORS:
        raise ValueError(f"Unknown entropy estimator '{estimator}', expected one of {ENTROPY_ESTIMATORS}")
    if reference is None:
        reference = reference_ensemble(ensemble, workers=workers)

    if statistics == "final":
        points, reference_points = ensemble.gamma_points(), reference.gamma_points()
    elif statistics == "time_average":
        points, reference_points = ensemble.gamma_tail_points(), reference.gamma_tail_points()
    else:
        raise ValueError(f"Unknown statistics '{statistics}', expected 'final' or 'time_average'")

    temperature = classical_temperature(config)
    estimate = _moments(points, reference_points, config.omega_c, temperature, bin_step, estimator)

    spread = np.full(4, np.nan)
    if n_resamples > 1 and min(len(points), len(reference_points)) >= MIN_RESAMPLED_POINTS:
        rng = np.random.default_rng(config.seed)
        samples = []
        for _ in range(n_resamples):
            half = rng.permutation(len(points))[: len(points) // 2]
            reference_half = rng.permutation(len(reference_points))[: len(reference_points) // 2]
            samples.append(
                _moments(points[half], reference_points[reference_half], config.omega_c, temperature, bin_step, estimator)
            )
        spread = np.nanstd(np.array(samples), axis=0, ddof=1)

    excess = estimate.mean_phonons - config.N_c
    return FigureOfMerit(
        g2=None if math.isnan(estimate.g2) else estimate.g2,
        P=config.omega_c * config.kappa_c * excess,
        P_L=config.omega_c * config.kappa_L * excess,
        deltaF=estimate.deltaF,
        entropy=estimate.entropy,
        mean_phonons=estimate.mean_phonons,
        mean_phonons_err=float(spread[0]),
        g2_err=float(spread[1]),
        P_err=config.omega_c * config.kappa_c * float(spread[0]),
        deltaF_err=float(spread[2]),
    )
