import math
import typing as t
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from piston_engine.functions.steady_state import SolverMethod
from piston_engine.models.ClassicalConfig import ClassicalConfig, SimulationProfile
from piston_engine.models.EngineConfig import EngineConfig

ENGINE_NAMES = ("single_cavity", "cascade", "classical")


class RunSettings(BaseModel):
    """Fully resolved configuration of one CLI run: one base config per engine plus solver options."""
    model_config = ConfigDict(frozen=True)

    single_cavity: EngineConfig = EngineConfig.single_cavity()
    cascade: EngineConfig = EngineConfig.cascade()
    classical: ClassicalConfig = ClassicalConfig.from_profile(SimulationProfile.DESK)
    method: t.Optional[SolverMethod] = None
    seed: int = 0

    def base_config(self, engine: str) -> t.Union[EngineConfig, ClassicalConfig]:
        if engine not in ENGINE_NAMES:
            raise ValueError(f"Unknown engine '{engine}', expected one of {ENGINE_NAMES}")
        return getattr(self, engine)


class SweepSpec(BaseModel):
    engines: list[str] = list(ENGINE_NAMES)
    parameter: str
    values: list[float]
    settings: RunSettings = RunSettings()
    output: t.Optional[str] = None
    workers: t.Optional[int] = Field(None, ge=1)

    @field_validator("engines")
    @classmethod
    def _check_engines(cls, engines: list[str]) -> list[str]:
        if not engines:
            raise ValueError("At least one engine must be selected")
        unknown = [e for e in engines if e not in ENGINE_NAMES]
        if unknown:
            raise ValueError(f"Unknown engines {unknown}, expected a subset of {ENGINE_NAMES}")
        return engines

    @field_validator("values")
    @classmethod
    def _check_values(cls, values: list[float]) -> list[float]:
        if not values:
            raise ValueError("The sweep value list is empty")
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"Sweep values must be finite, got {values}")
        return values

    @model_validator(mode="after")
    def _check_parameter(self) -> "SweepSpec":
        for engine in self.engines:
            fields = type(self.settings.base_config(engine)).model_fields
            if self.parameter not in fields or self.parameter in ("variant", "dims", "enforce_resonance"):
                raise ValueError(f"'{self.parameter}' is not a sweepable parameter of the {engine} engine")
        return self
