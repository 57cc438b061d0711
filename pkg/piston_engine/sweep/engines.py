import threading
import typing as t

from piston_engine.functions.cache import engine_steady_state
from piston_engine.functions.classical_engine import (
    ClassicalEnsemble,
    classical_figures,
    run_ensemble,
)
from piston_engine.functions.observables import figures_of_merit
from piston_engine.functions.steady_state import SolverMethod
from piston_engine.models.ClassicalConfig import ClassicalConfig
from piston_engine.models.EngineConfig import EngineConfig
from piston_engine.models.FigureOfMerit import FigureOfMerit
from piston_engine.models.SweepSpec import RunSettings


class AbstractEngine:
    def __init__(self, engine_name: str, max_workers: t.Optional[int] = None):
        self.engine_name = engine_name
        # Limit the number of sweep points of this engine that run in parallel threads
        self.max_workers = max_workers

    def point_config(self, parameter: str, value: float) -> t.Any:
        raise NotImplementedError

    def figures(self, parameter: str, value: float) -> FigureOfMerit:
        raise NotImplementedError


class QuantumEngine(AbstractEngine):
    def __init__(
        self,
        engine_name: str,
        config: EngineConfig,
        method: t.Optional[SolverMethod] = None,
        max_workers: t.Optional[int] = None,
        seed: int = 0,
    ):
        super().__init__(engine_name=engine_name, max_workers=max_workers)
        self.config = config
        self.method = method
        self.seed = seed

    def point_config(self, parameter: str, value: float) -> EngineConfig:
        return self.config.with_updates(**{parameter: value})

    def figures(self, parameter: str, value: float) -> FigureOfMerit:
        config = self.point_config(parameter, value)
        return figures_of_merit(config, engine_steady_state(config, self.method, self.seed))


class SingleCavityEngine(QuantumEngine):
    def __init__(self, settings: RunSettings, max_workers: t.Optional[int] = None):
        super().__init__(
            "single_cavity", settings.single_cavity, method=settings.method, max_workers=max_workers, seed=settings.seed
        )


class CascadeEngine(QuantumEngine):
    def __init__(self, settings: RunSettings, max_workers: t.Optional[int] = None):
        super().__init__(
            "cascade", settings.cascade, method=settings.method, max_workers=max_workers, seed=settings.seed
        )


class ClassicalEngine(AbstractEngine):
    """
    Ensembles share the g = 0 reference between sweep points with the same mechanical bath,
    since the mechanical mode does not see the optical noise when it is decoupled.
    """

    def __init__(self, settings: RunSettings, max_workers: t.Optional[int] = None, trajectory_workers: t.Optional[int] = None):
        super().__init__(engine_name="classical", max_workers=max_workers)
        self.config = settings.classical
        self.trajectory_workers = trajectory_workers
        self._references: dict[ClassicalConfig, ClassicalEnsemble] = {}
        self._lock = threading.Lock()

    def point_config(self, parameter: str, value: float) -> ClassicalConfig:
        return self.config.with_updates(**{parameter: value})

    def reference(self, config: ClassicalConfig) -> ClassicalEnsemble:
        key = config.with_updates(g=0.0, N_a=0.0, N_b=0.0)
        with self._lock:
            cached = self._references.get(key)
        if cached is None:
            cached = run_ensemble(key, workers=self.trajectory_workers)
            with self._lock:
                self._references.setdefault(key, cached)
        return cached

    def figures(self, parameter: str, value: float) -> FigureOfMerit:
        config = self.point_config(parameter, value)
        ensemble = run_ensemble(config, workers=self.trajectory_workers)
        return classical_figures(ensemble, reference=self.reference(config))


ENGINES: dict[str, t.Type[AbstractEngine]] = {
    "single_cavity": SingleCavityEngine,
    "cascade": CascadeEngine,
    "classical": ClassicalEngine,
}


def build_engines(names: t.Sequence[str], settings: RunSettings) -> list[AbstractEngine]:
    return [ENGINES[name](settings) for name in names]  # type: ignore[call-arg]
