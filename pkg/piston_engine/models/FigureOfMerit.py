import typing as t
from pydantic import BaseModel


class FigureOfMerit(BaseModel):
    """Energies in hbar w_c, powers in hbar w_c per unit time, entropy in nats."""
    g2: t.Optional[float]
    P: float
    P_L: float
    deltaF: float
    entropy: float
    mean_phonons: float
    residual: t.Optional[float] = None

    # Statistical errors, only set by the classical engine.
    g2_err: t.Optional[float] = None
    P_err: t.Optional[float] = None
    deltaF_err: t.Optional[float] = None
    mean_phonons_err: t.Optional[float] = None
