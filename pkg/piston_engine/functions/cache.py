import os
import typing as t
from typing import TypeVar, Callable, Any, cast
from joblib import Memory
from functools import cache
from dotenv import load_dotenv

from piston_engine.functions.engine_models import build_liouvillian
from piston_engine.functions.steady_state import DensityMatrix, SolverMethod, solve_steady_state
from piston_engine.models.EngineConfig import EngineConfig

load_dotenv()

MEMORY = Memory("./.cachedir", verbose=0)
ENABLE_CACHE = os.getenv("ENABLE_CACHE", "0") == "1"

T = TypeVar("T", bound=Callable[..., Any])


def persistent_inmemory_cache(func: T) -> T:
    """
    Wraps a function with both file cache (for persistent cache) and in-memory cache (for speed).
    Arguments must be hashable, e.g. frozen pydantic models and enums.
    """
    return cast(T, cache(MEMORY.cache(func)) if ENABLE_CACHE else func)


@persistent_inmemory_cache
def engine_steady_state(config: EngineConfig, method: t.Optional[SolverMethod] = None, seed: int = 0) -> DensityMatrix:
    return solve_steady_state(build_liouvillian(config), method=method, seed=seed)
