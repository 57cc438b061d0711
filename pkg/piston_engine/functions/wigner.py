"""
Wigner function of a single-mode state by the displaced parity formula

    W(x, p) = (1/pi) Tr[rho D(alpha) Pi D(-alpha)],   alpha = (x + i p) / sqrt(2),

normalized so that the integral over dx dp is one (vacuum: W(0, 0) = 1/pi).

D(alpha) = R(theta) exp(r (c^dag - c)) R(theta)^dag with R(theta) = exp(i theta c^dag c), so the
parity block only depends on |alpha| up to the phase factor exp(i theta (m - n)). The generator
c^dag - c is diagonalized once on a padded Fock space large enough to hold every displaced
basis state of the grid.
"""
import typing as t
import numpy as np

from piston_engine.functions.observables import MechanicalMarginal

DEFAULT_EXTENT = 6.0
DEFAULT_RESOLUTION = 121
RADIUS_CHUNK = 256
POINT_CHUNK = 2048
PAD_MARGIN = 6.0


def default_grid(extent: float = DEFAULT_EXTENT, resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    return np.linspace(-extent, extent, resolution)


def _padded_dimension(dim: int, max_radius: float) -> int:
    return int(np.ceil((max_radius + np.sqrt(dim) + PAD_MARGIN) ** 2)) + dim


def _parity_blocks(dim: int, radii: np.ndarray) -> np.ndarray:
    """<m| exp(r K) Pi exp(-r K) |n> for m, n < dim and every radius r, with K = c^dag - c."""
    padded = _padded_dimension(dim, float(radii.max(initial=0.0)))
    lowering = np.diag(np.sqrt(np.arange(1, padded, dtype=float)), k=1)
    # i (c^dag - c) is real symmetric up to the factor i, so diagonalize the Hermitian form.
    generator = 1j * (lowering.T - lowering)
    eigenvalues, eigenvectors = np.linalg.eigh(generator)
    parity = (-1.0) ** np.arange(padded)
    parity_in_eigenbasis = eigenvectors.conj().T @ (parity[:, None] * eigenvectors)
    top_rows = eigenvectors[:dim]

    blocks = np.empty((len(radii), dim, dim), dtype=complex)
    for start in range(0, len(radii), RADIUS_CHUNK):
        chunk = radii[start:start + RADIUS_CHUNK]
        # exp(r K) = V exp(-i r lambda) V^dag
        phases = np.exp(-1j * chunk[:, None] * eigenvalues[None, :])
        rows = top_rows[None, :, :] * phases[:, None, :]
        blocks[start:start + RADIUS_CHUNK] = rows @ parity_in_eigenbasis @ rows.conj().transpose(0, 2, 1)
    return blocks


def wigner(
    marginal: t.Union[MechanicalMarginal, np.ndarray],
    xvec: t.Optional[np.ndarray] = None,
    pvec: t.Optional[np.ndarray] = None,
) -> np.ndarray:
    """Real matrix W[p_index, x_index] on the Cartesian grid xvec by pvec."""
    rho = marginal.matrix if isinstance(marginal, MechanicalMarginal) else np.asarray(marginal, dtype=complex)
    xvec = default_grid() if xvec is None else np.asarray(xvec, dtype=float)
    pvec = xvec if pvec is None else np.asarray(pvec, dtype=float)
    if not (np.all(np.isfinite(xvec)) and np.all(np.isfinite(pvec))):
        raise ValueError("Wigner grid must be finite")

    dim = rho.shape[0]
    x, p = np.meshgrid(xvec, pvec)
    alpha = (x + 1j * p) / np.sqrt(2)
    radius = np.abs(alpha).ravel()
    theta = np.angle(alpha).ravel()

    unique_radii, inverse = np.unique(np.round(radius, 12), return_inverse=True)
    blocks = _parity_blocks(dim, unique_radii)

    # W = (1/pi) sum_{m,n} rho_{nm} exp(i theta (m - n)) G_{mn}(r)
    weighted_blocks = blocks * rho.T[None, :, :]
    offsets = np.subtract.outer(np.arange(dim), np.arange(dim))
    values = np.empty(radius.shape, dtype=float)
    for start in range(0, len(radius), POINT_CHUNK):
        stop = start + POINT_CHUNK
        rotation = np.exp(1j * theta[start:stop, None, None] * offsets[None, :, :])
        values[start:stop] = np.einsum("kmn,kmn->k", weighted_blocks[inverse[start:stop]], rotation).real
    return (values / np.pi).reshape(x.shape)


def wigner_integral(values: np.ndarray, xvec: np.ndarray, pvec: t.Optional[np.ndarray] = None) -> float:
    """Riemann sum over the dx dp measure."""
    pvec = xvec if pvec is None else pvec
    return float(values.sum() * (xvec[1] - xvec[0]) * (pvec[1] - pvec[0]))
