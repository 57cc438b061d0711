from enum import Enum
import typing as t
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_DIMS = (4, 4, 21)
RESONANCE_ATOL = 1e-12


class EngineVariant(str, Enum):
    SINGLE_CAVITY = "single_cavity"
    CASCADE = "cascade"


class EngineConfig(BaseModel):
    """
    Physical parameters of one quantum engine, in units hbar = k_B = omega_c = 1.
    Defaults are the reference single cavity engine.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    variant: EngineVariant = EngineVariant.SINGLE_CAVITY
    omega_a: float = 1.0
    omega_b: float = 2.0
    omega_c: float = Field(1.0, gt=0)
    g: float = 0.06
    kappa_a: float = Field(0.2, ge=0)
    kappa_b: float = Field(0.2, ge=0)
    kappa_c: float = Field(0.005, ge=0)
    N_a: float = Field(0.0, ge=0)
    N_b: float = Field(0.0, ge=0)
    N_c: float = Field(0.0, ge=0)
    # Cascade feeding rates, None means kappa_a.
    gamma_1: t.Optional[float] = Field(None, ge=0)
    gamma_2: t.Optional[float] = Field(None, ge=0)
    kappa_L: float = Field(0.0, ge=0)
    enforce_resonance: bool = True
    dims: tuple[int, int, int] = DEFAULT_DIMS

    @field_validator("dims")
    @classmethod
    def _check_dims(cls, dims: tuple[int, int, int]) -> tuple[int, int, int]:
        if any(d < 1 for d in dims):
            raise ValueError(f"Every truncation dimension must be >= 1, got {dims}")
        return dims

    @model_validator(mode="after")
    def _check_resonance(self) -> "EngineConfig":
        if (
            self.variant == EngineVariant.SINGLE_CAVITY
            and self.enforce_resonance
            and abs(self.omega_b - self.omega_a - self.omega_c) > RESONANCE_ATOL
        ):
            raise ValueError(
                f"Resonance condition omega_b - omega_a = omega_c violated "
                f"({self.omega_b} - {self.omega_a} != {self.omega_c}); set enforce_resonance=false to override"
            )
        return self

    @property
    def feeding_rates(self) -> tuple[float, float]:
        gamma_1 = self.kappa_a if self.gamma_1 is None else self.gamma_1
        gamma_2 = self.kappa_a if self.gamma_2 is None else self.gamma_2
        return gamma_1, gamma_2

    @property
    def total_mechanical_damping(self) -> float:
        return self.kappa_c + self.kappa_L

    def with_updates(self, **updates: t.Any) -> "EngineConfig":
        """Copy with validated updates (model_copy alone would skip validation)."""
        return EngineConfig.model_validate({**self.model_dump(), **updates})

    @staticmethod
    def single_cavity(**updates: t.Any) -> "EngineConfig":
        return EngineConfig(variant=EngineVariant.SINGLE_CAVITY, **updates)

    @staticmethod
    def cascade(**updates: t.Any) -> "EngineConfig":
        params: dict[str, t.Any] = {
            "variant": EngineVariant.CASCADE,
            "kappa_a": 0.15,
            "kappa_c": 0.003,
            "g": 0.1,
        }
        params.update(updates)
        return EngineConfig(**params)
