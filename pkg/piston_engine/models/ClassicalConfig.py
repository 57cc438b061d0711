from enum import Enum
import typing as t
from pydantic import BaseModel, ConfigDict, Field, model_validator

from piston_engine.models.EngineConfig import EngineConfig


class SimulationProfile(str, Enum):
    DESK = "desk"
    FULL = "full"


PROFILES: dict[SimulationProfile, dict[str, t.Any]] = {
    SimulationProfile.DESK: {"n_traj": 500, "n_steps": 1_000_000, "burn_in_fraction": 0.5},
    SimulationProfile.FULL: {"n_traj": 10_000, "n_steps": 10_000_000, "burn_in_fraction": 0.5},
}


class ClassicalConfig(BaseModel):
    """
    Classical Langevin version of the single cavity engine, written in the frame rotating
    at omega_b, where Delta = omega_a - omega_b = -omega_c.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    Delta: t.Optional[float] = None
    omega_c: float = Field(1.0, gt=0)
    g: float = 0.06
    kappa_a: float = Field(0.2, ge=0)
    kappa_b: float = Field(0.2, ge=0)
    kappa_c: float = Field(0.005, ge=0)
    N_a: float = Field(0.0, ge=0)
    N_b: float = Field(0.0, ge=0)
    N_c: float = Field(0.0, ge=0)
    kappa_L: float = Field(0.0, ge=0)
    dt: float = Field(1e-3, gt=0)
    n_steps: int = Field(1_000_000, ge=1)
    n_traj: int = Field(500, ge=1)
    seed: int = Field(0, ge=0)
    burn_in_fraction: float = Field(0.5, ge=0, lt=1)
    # Recorded tail per trajectory: the last `tail_steps` steps, every `thin`-th step.
    tail_steps: int = Field(0, ge=0)
    thin: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_integration(self) -> "ClassicalConfig":
        if self.dt > 1e-2 / self.omega_c:
            raise ValueError(f"dt = {self.dt} exceeds the stability guard 1e-2 / omega_c")
        if self.tail_steps > (1 - self.burn_in_fraction) * self.n_steps:
            raise ValueError(
                f"tail_steps = {self.tail_steps} reaches into the burn-in window "
                f"({self.burn_in_fraction} of {self.n_steps} steps)"
            )
        return self

    @property
    def detuning(self) -> float:
        return -self.omega_c if self.Delta is None else self.Delta

    @property
    def total_mechanical_damping(self) -> float:
        return self.kappa_c + self.kappa_L

    def with_updates(self, **updates: t.Any) -> "ClassicalConfig":
        return ClassicalConfig.model_validate({**self.model_dump(), **updates})

    @staticmethod
    def from_profile(profile: t.Union[SimulationProfile, str], **updates: t.Any) -> "ClassicalConfig":
        return ClassicalConfig(**{**PROFILES[SimulationProfile(profile)], **updates})

    @staticmethod
    def from_engine(config: EngineConfig, **updates: t.Any) -> "ClassicalConfig":
        """Classical counterpart of a single cavity quantum configuration."""
        shared = {
            "Delta": config.omega_a - config.omega_b,
            "omega_c": config.omega_c,
            "g": config.g,
            "kappa_a": config.kappa_a,
            "kappa_b": config.kappa_b,
            "kappa_c": config.kappa_c,
            "N_a": config.N_a,
            "N_b": config.N_b,
            "N_c": config.N_c,
            "kappa_L": config.kappa_L,
        }
        return ClassicalConfig(**{**shared, **updates})
