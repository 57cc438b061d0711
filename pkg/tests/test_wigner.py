import numpy as np
import pytest
from scipy.special import eval_laguerre, gammaln

from piston_engine.functions.observables import MechanicalMarginal, gibbs_marginal
from piston_engine.functions.wigner import default_grid, wigner, wigner_integral


def _fock(n: int, dim: int) -> MechanicalMarginal:
    populations = np.zeros(dim)
    populations[n] = 1.0
    return MechanicalMarginal(np.diag(populations))


def _coherent(beta: complex, dim: int) -> np.ndarray:
    n = np.arange(dim)
    amplitudes = np.exp(-abs(beta) ** 2 / 2 + n * np.log(abs(beta)) - 0.5 * gammaln(n + 1) + 1j * n * np.angle(beta))
    return np.outer(amplitudes, amplitudes.conj())


def test_vacuum_and_single_phonon_at_origin():
    origin = np.array([0.0])
    assert wigner(_fock(0, 5), origin)[0, 0] == pytest.approx(1 / np.pi, abs=1e-12)
    assert wigner(_fock(1, 5), origin)[0, 0] == pytest.approx(-1 / np.pi, abs=1e-12)


@pytest.mark.parametrize("n", [0, 1, 2, 5])
def test_fock_states_match_laguerre(n):
    xvec = np.linspace(-3, 3, 13)
    values = wigner(_fock(n, 8), xvec)
    x, p = np.meshgrid(xvec, xvec)
    r2 = x**2 + p**2
    expected = (-1) ** n / np.pi * np.exp(-r2) * eval_laguerre(n, 2 * r2)
    np.testing.assert_allclose(values, expected, atol=1e-10)


def test_thermal_state_is_radial_gaussian():
    occupation = 0.3
    xvec = np.linspace(-4, 4, 17)
    values = wigner(gibbs_marginal(40, occupation), xvec)
    x, p = np.meshgrid(xvec, xvec)
    width = 2 * occupation + 1
    expected = np.exp(-(x**2 + p**2) / width) / (np.pi * width)
    np.testing.assert_allclose(values, expected, atol=1e-10)
    np.testing.assert_allclose(values, values.T, atol=1e-12)


def test_coherent_state_is_displaced():
    beta = 1.2 * np.exp(0.4j)
    xvec = np.linspace(-4, 4, 21)
    values = wigner(_coherent(beta, 30), xvec)
    x, p = np.meshgrid(xvec, xvec)
    x0, p0 = np.sqrt(2) * beta.real, np.sqrt(2) * beta.imag
    expected = np.exp(-((x - x0) ** 2) - (p - p0) ** 2) / np.pi
    np.testing.assert_allclose(values, expected, atol=1e-9)


def test_rows_index_momentum():
    xvec = np.linspace(-2, 2, 5)
    pvec = np.linspace(-1, 1, 3)
    assert wigner(_fock(0, 3), xvec, pvec).shape == (3, 5)


def test_default_grid_integrates_to_one():
    xvec = default_grid()
    values = wigner(gibbs_marginal(21, 0.5), xvec)
    assert np.isrealobj(values)
    assert 0.98 <= wigner_integral(values, xvec) <= 1.0 + 1e-9


def test_non_finite_grid_rejected():
    with pytest.raises(ValueError):
        wigner(_fock(0, 3), np.array([0.0, np.nan]))
