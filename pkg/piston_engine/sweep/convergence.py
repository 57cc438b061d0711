import math
import typing as t

import pandas as pd

from piston_engine.functions.cache import engine_steady_state
from piston_engine.functions.observables import figures_of_merit
from piston_engine.functions.steady_state import SolverMethod
from piston_engine.models.EngineConfig import EngineConfig

OBSERVABLES = ["g2", "P", "P_L", "deltaF", "entropy", "mean_phonons"]


def enlarged_dims(dims: tuple[int, int, int]) -> tuple[int, int, int]:
    """Roughly a quarter more levels per mode, at least one: (4, 4, 21) -> (5, 5, 26)."""
    return tuple(d + max(1, round(d / 4)) for d in dims)  # type: ignore[return-value]


def _relative_delta(base: t.Optional[float], enlarged: t.Optional[float]) -> float:
    if base is None or enlarged is None:
        return float("nan")
    if base == enlarged:
        return 0.0
    return abs(enlarged - base) / max(abs(base), abs(enlarged))


def convergence_check(
    config: EngineConfig,
    dims: t.Optional[tuple[int, int, int]] = None,
    method: t.Optional[SolverMethod] = None,
    seed: int = 0,
) -> pd.DataFrame:
    """Figures of merit at config.dims and at enlarged dims, with their relative change."""
    dims = enlarged_dims(config.dims) if dims is None else dims
    larger = config.with_updates(dims=dims)
    base_figures = figures_of_merit(config, engine_steady_state(config, method, seed)).model_dump()
    larger_figures = figures_of_merit(larger, engine_steady_state(larger, method, seed)).model_dump()
    rows = []
    for name in OBSERVABLES:
        base, enlarged = base_figures[name], larger_figures[name]
        rows.append({
            "observable": name,
            "base": math.nan if base is None else base,
            "enlarged": math.nan if enlarged is None else enlarged,
            "relative_delta": _relative_delta(base, enlarged),
        })
    return pd.DataFrame(rows)
