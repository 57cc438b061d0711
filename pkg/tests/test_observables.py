import math

import numpy as np
import pytest
from scipy.stats import poisson

from piston_engine.functions.engine_models import build_liouvillian, occupation_to_temperature
from piston_engine.functions.fock_algebra import TruncatedSpace
from piston_engine.functions.observables import (
    MechanicalMarginal,
    UndefinedObservableError,
    default_load_grid,
    dissipated_power,
    figures_of_merit,
    free_energy_difference,
    g2,
    gibbs_marginal,
    load_curve,
    mechanical_marginal,
    number_distribution,
    optimal_load,
    partial_trace,
    power_under_load,
    relative_entropy,
    von_neumann_entropy,
)
from piston_engine.functions.steady_state import DensityMatrix, solve_steady_state
from piston_engine.models.EngineConfig import EngineConfig


def _mechanical_state(populations: np.ndarray) -> DensityMatrix:
    """A state living on mode c only, with dims (1, 1, len(populations))."""
    return DensityMatrix(TruncatedSpace(dims=(1, 1, len(populations))), np.diag(populations))


def _poissonian(mean: float, dim: int) -> MechanicalMarginal:
    p = poisson.pmf(np.arange(dim), mean)
    return MechanicalMarginal(np.diag(p / p.sum()))


@pytest.fixture(scope="module")
def lasing_state() -> tuple[EngineConfig, DensityMatrix]:
    config = EngineConfig.single_cavity(dims=(3, 3, 12), g=0.1, kappa_c=0.02, N_b=0.5)
    return config, solve_steady_state(build_liouvillian(config))


def test_partial_trace_of_product_state():
    rng = np.random.default_rng(1)
    factors = []
    for d in (2, 2, 3):
        m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        rho = m @ m.conj().T
        factors.append(rho / np.trace(rho))
    state = DensityMatrix(TruncatedSpace(dims=(2, 2, 3)), np.kron(np.kron(factors[0], factors[1]), factors[2]))
    for mode in range(3):
        np.testing.assert_allclose(partial_trace(state, mode).matrix, factors[mode], atol=1e-14)


def test_partial_trace_of_entangled_state():
    bell = np.zeros(4)
    bell[[0, 3]] = 1 / np.sqrt(2)
    state = DensityMatrix(TruncatedSpace(dims=(2, 2)), np.outer(bell, bell))
    np.testing.assert_allclose(partial_trace(state, 0).matrix, np.eye(2) / 2, atol=1e-15)


def test_partial_trace_loop_oracle():
    rng = np.random.default_rng(2)
    dims = (2, 2, 3)
    m = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    tensor = rho.reshape(dims + dims)
    expected = np.zeros((3, 3), dtype=complex)
    for i in range(3):
        for j in range(3):
            for a in range(2):
                for b in range(2):
                    expected[i, j] += tensor[a, b, i, a, b, j]
    np.testing.assert_allclose(mechanical_marginal(DensityMatrix(TruncatedSpace(dims=dims), rho)).matrix, expected)
    with pytest.raises(ValueError):
        partial_trace(DensityMatrix(TruncatedSpace(dims=dims), rho), 3)


def test_g2_reference_states():
    assert g2(gibbs_marginal(80, 0.5)) == pytest.approx(2.0, abs=1e-10)
    assert g2(_poissonian(2.0, 60)) == pytest.approx(1.0, abs=1e-10)
    fock = np.zeros(5)
    fock[2] = 1.0
    assert g2(MechanicalMarginal(np.diag(fock))) == pytest.approx(0.5)
    with pytest.raises(UndefinedObservableError):
        g2(gibbs_marginal(10, 0.0))


def test_number_distribution_normalized(lasing_state):
    _, rho = lasing_state
    p = number_distribution(mechanical_marginal(rho))
    assert p.min() >= 0
    assert p.sum() == pytest.approx(1.0, abs=1e-10)


def test_von_neumann_entropy():
    assert von_neumann_entropy(gibbs_marginal(5, 0.0)) == 0.0
    assert von_neumann_entropy(MechanicalMarginal(np.eye(7) / 7)) == pytest.approx(math.log(7))
    assert von_neumann_entropy(gibbs_marginal(80, 1.0)) == pytest.approx(2 * math.log(2), abs=1e-10)


def test_clamped_mass_reported():
    marginal = MechanicalMarginal(np.diag([1.0 + 1e-13, -1e-13]))
    assert marginal.clamped_mass == pytest.approx(1e-13)
    assert von_neumann_entropy(marginal) == pytest.approx(0.0, abs=1e-11)


def test_free_energy_difference_examples():
    config = EngineConfig.single_cavity(N_c=0.33)
    assert free_energy_difference(config, gibbs_marginal(40, 0.33)) == pytest.approx(0.0, abs=1e-10)

    populations = np.array([0.4, 0.4, 0.2])
    cold = EngineConfig.single_cavity(N_c=0.0)
    assert free_energy_difference(cold, MechanicalMarginal(np.diag(populations))) == pytest.approx(0.8, abs=1e-12)


def test_free_energy_difference_is_scaled_relative_entropy():
    config = EngineConfig.single_cavity(N_c=0.5)
    marginal = _poissonian(1.0, 60)
    temperature = occupation_to_temperature(0.5, config.omega_c)
    expected = temperature * relative_entropy(marginal, gibbs_marginal(60, 0.5))
    assert free_energy_difference(config, marginal) == pytest.approx(expected, abs=1e-10)
    assert free_energy_difference(config, marginal) > 0


def test_relative_entropy_needs_full_rank_reference():
    with pytest.raises(UndefinedObservableError):
        relative_entropy(gibbs_marginal(5, 0.3), gibbs_marginal(5, 0.0))


def test_dissipated_power_examples():
    config = EngineConfig.single_cavity(dims=(1, 1, 2), kappa_c=0.005, N_c=0.0)
    assert dissipated_power(config, _mechanical_state(np.array([0.5, 0.5]))) == pytest.approx(0.0025, abs=1e-15)

    warm = EngineConfig.single_cavity(dims=(1, 1, 40), N_c=0.33)
    gibbs = gibbs_marginal(40, 0.33).matrix.diagonal().real
    assert dissipated_power(warm, _mechanical_state(gibbs)) == pytest.approx(0.0, abs=1e-12)


def test_two_route_power_identity_on_solved_states():
    for n_b in (0.0, 0.2, 0.5):
        for config in (
            EngineConfig.single_cavity(dims=(3, 3, 10), N_b=n_b, N_c=0.1),
            EngineConfig.cascade(dims=(3, 3, 10), N_b=n_b),
        ):
            rho = solve_steady_state(build_liouvillian(config))
            # raises ConsistencyError when the routes disagree by more than 1e-10
            p = dissipated_power(config, rho)
            assert p >= -config.kappa_c * config.N_c * config.omega_c - 1e-12


def test_power_under_load_limits():
    config = EngineConfig.single_cavity(dims=(3, 3, 10), g=0.1, kappa_c=0.02, N_b=0.5)
    assert power_under_load(config, 0.0) == 0.0
    assert power_under_load(config, 0.05) > 0
    with pytest.raises(ValueError):
        power_under_load(config, -1.0)


def test_optimal_load_dominates_grid():
    config = EngineConfig.single_cavity(dims=(3, 3, 10), g=0.1, kappa_c=0.02, N_b=0.5)
    grid = config.kappa_c * np.logspace(-1, 2.5, 8)
    curve = load_curve(config, grid)
    assert list(curve.columns) == ["kappa_L", "P_L", "g2", "mean_phonons"]
    kappa_star, power_star = optimal_load(config, curve=curve)
    assert power_star >= curve["P_L"].max()
    assert grid[0] <= kappa_star <= grid[-1]


def test_optimal_load_without_coupling():
    config = EngineConfig.single_cavity(dims=(2, 2, 4), g=0.0, N_b=0.5)
    kappa_star, power_star = optimal_load(config, grid=default_load_grid(config, 5))
    assert power_star == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        optimal_load(config, grid=[])


def test_phase_rotation_invariance(lasing_state):
    config, rho = lasing_state
    dims = rho.space.dims
    phases = np.exp(-1j * 0.7 * np.tile(np.arange(dims[2]), dims[0] * dims[1]))
    rotated = DensityMatrix(rho.space, phases[:, None] * rho.matrix * phases.conj()[None, :])
    before = figures_of_merit(config, rho, residual_norm=0.0)
    after = figures_of_merit(config, rotated, residual_norm=0.0)
    assert after.g2 == pytest.approx(before.g2, abs=1e-12)
    assert after.P == pytest.approx(before.P, abs=1e-14)
    assert after.deltaF == pytest.approx(before.deltaF, abs=1e-12)


def test_common_optical_frequency_shift_is_invisible():
    base = EngineConfig.single_cavity(dims=(3, 3, 8), g=0.1, kappa_c=0.02, N_b=0.4)
    shifted = base.with_updates(omega_a=3.0, omega_b=4.0)
    results = [mechanical_marginal(solve_steady_state(build_liouvillian(c))) for c in (base, shifted)]
    np.testing.assert_allclose(number_distribution(results[0]), number_distribution(results[1]), atol=1e-8)


def test_figures_of_merit_vacuum():
    config = EngineConfig.single_cavity(dims=(2, 2, 3), g=0.0)
    rho = solve_steady_state(build_liouvillian(config))
    figures = figures_of_merit(config, rho)
    assert figures.g2 is None
    assert figures.mean_phonons == pytest.approx(0.0, abs=1e-12)
    assert figures.residual <= 1e-9


@pytest.mark.slow
def test_lasing_transition_at_desk_scale():
    config = EngineConfig.single_cavity()
    marginals = {
        n_b: mechanical_marginal(solve_steady_state(build_liouvillian(config.with_updates(N_b=n_b))))
        for n_b in (0.1, 0.5)
    }
    # exact values at (4, 4, 21): g2 = 1.518 at N_b = 0.1 and 1.138 at N_b = 0.5
    assert g2(marginals[0.1]) >= 1.45
    assert g2(marginals[0.5]) <= 1.2
    assert int(np.argmax(number_distribution(marginals[0.1]))) == 0
    p = number_distribution(marginals[0.5])
    assert int(np.argmax(p)) >= 3
    assert p[0] < 0.05
    for marginal in marginals.values():
        assert free_energy_difference(config, marginal) >= 0


@pytest.mark.slow
def test_load_curve_at_desk_scale():
    config = EngineConfig.single_cavity(N_b=0.5)
    curve = load_curve(config)
    powers = curve["P_L"].to_numpy()
    assert power_under_load(config, 0.0) == 0.0
    best = int(np.argmax(powers))
    assert 0 < best < len(powers) - 1
    assert np.all(np.diff(powers[best:]) < 0)
    kappa_star, _ = optimal_load(config, curve=curve)
    assert kappa_star > 10 * config.kappa_c
