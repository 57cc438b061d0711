import json
import os
import typing as t

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from piston_engine.functions.steady_state import SolverMethod
from piston_engine.models.ClassicalConfig import ClassicalConfig, SimulationProfile
from piston_engine.models.EngineConfig import EngineConfig
from piston_engine.models.SweepSpec import RunSettings

RUN_KEYS = {"dims", "seed", "method", "profile"}
QUANTUM_KEYS = set(EngineConfig.model_fields) - {"variant", "dims"}
CLASSICAL_KEYS = set(ClassicalConfig.model_fields) - {"seed"}


def should_not_happen(message: str, E: t.Type[Exception] = RuntimeError) -> t.NoReturn:
    raise E(message)


def load_config_file(path: str) -> dict[str, str]:
    """KEY=value lines, '#' comments allowed."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found: {path}")
    return {k: v for k, v in dotenv_values(path).items() if v is not None}


def parse_overrides(pairs: t.Sequence[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"Expected key=value, got '{pair}'")
        overrides[key.strip()] = value.strip()
    return overrides


def parse_dims(text: str) -> tuple[int, int, int]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 3:
        raise ValueError(f"dims needs three comma separated integers, got '{text}'")
    return int(parts[0]), int(parts[1]), int(parts[2])


def resolve_settings(values: t.Mapping[str, str]) -> RunSettings:
    """
    Merge config file and flag values into one RunSettings. Keys are the field names of
    EngineConfig and ClassicalConfig; a key shared by both applies to every engine.
    """
    unknown = sorted(set(values) - RUN_KEYS - QUANTUM_KEYS - CLASSICAL_KEYS)
    if unknown:
        raise ValueError(f"Unknown configuration keys: {unknown}")

    quantum: dict[str, t.Any] = {k: v for k, v in values.items() if k in QUANTUM_KEYS}
    classical: dict[str, t.Any] = {k: v for k, v in values.items() if k in CLASSICAL_KEYS}
    if "dims" in values:
        quantum["dims"] = parse_dims(values["dims"])
    seed = int(values.get("seed", 0))
    profile = SimulationProfile(values.get("profile", SimulationProfile.DESK.value))

    return RunSettings(
        single_cavity=EngineConfig.single_cavity(**quantum),
        cascade=EngineConfig.cascade(**quantum),
        classical=ClassicalConfig.from_profile(profile, seed=seed, **classical),
        method=SolverMethod(values["method"]) if values.get("method") else None,
        seed=seed,
    )


def _to_jsonable(obj: t.Any) -> t.Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def write_csv(df: pd.DataFrame, path: str, metadata: dict[str, t.Any]) -> str:
    """CSV preceded by a single '#'-prefixed JSON metadata line."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        f.write("# " + json.dumps(metadata, default=_to_jsonable) + "\n")
        df.to_csv(f, index=False)
    return path


def read_csv(path: str) -> tuple[pd.DataFrame, dict[str, t.Any]]:
    with open(path, "r") as f:
        header = f.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path} has no metadata header line")
        metadata = json.loads(header[1:])
        df = pd.read_csv(f)
    return df, metadata


def write_json(obj: t.Any, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, default=_to_jsonable)
    return path
