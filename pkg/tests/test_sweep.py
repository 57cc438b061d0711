import math
import tempfile

import pytest
from pydantic import ValidationError

import piston_engine.sweep.sweep as sw
from piston_engine.functions.steady_state import SolverError, SolverMethod
from piston_engine.models.ClassicalConfig import ClassicalConfig
from piston_engine.models.EngineConfig import EngineConfig
from piston_engine.models.FigureOfMerit import FigureOfMerit
from piston_engine.models.SweepSpec import RunSettings, SweepSpec
from piston_engine.sweep.convergence import convergence_check, enlarged_dims
from piston_engine.sweep.engines import AbstractEngine, build_engines
from piston_engine.sweep.figures import N_C_GRID, figure_command
from piston_engine.sweep.utils import (
    load_config_file,
    parse_dims,
    parse_overrides,
    read_csv,
    resolve_settings,
)

SMALL_SETTINGS = RunSettings(
    single_cavity=EngineConfig.single_cavity(dims=(2, 2, 3)),
    cascade=EngineConfig.cascade(dims=(2, 2, 3)),
)


@pytest.fixture
def dummy_engine():
    class DummyEngine(AbstractEngine):
        def __init__(self):
            super().__init__(engine_name="dummy")

        def point_config(self, parameter: str, value: float) -> EngineConfig:
            return EngineConfig.single_cavity(**{parameter: value})

        def figures(self, parameter: str, value: float) -> FigureOfMerit:
            return FigureOfMerit(
                g2=1.0 + value, P=value, P_L=0.0, deltaF=value / 2, entropy=0.1, mean_phonons=value, residual=0.0
            )

    return DummyEngine()


@pytest.fixture
def dummy_engine_failing():
    class DummyEngineFailing(AbstractEngine):
        def __init__(self):
            super().__init__(engine_name="dummy_failing", max_workers=1)

        def point_config(self, parameter: str, value: float) -> EngineConfig:
            return EngineConfig.single_cavity(**{parameter: value})

        def figures(self, parameter: str, value: float) -> FigureOfMerit:
            if value == 0.2:
                raise SolverError("no unique steady state")
            return FigureOfMerit(g2=None, P=0.0, P_L=0.0, deltaF=0.0, entropy=0.0, mean_phonons=0.0)

    return DummyEngineFailing()


def test_sweep_run(dummy_engine, dummy_engine_failing):
    spec = SweepSpec(parameter="N_b", values=[0.1, 0.2, 0.3])
    sweeper = sw.Sweeper(spec, engines=[dummy_engine, dummy_engine_failing])
    df = sweeper.run_engines()

    assert df["engine"].tolist() == ["dummy"] * 3 + ["dummy_failing"] * 3
    assert df["N_b"].tolist() == [0.1, 0.2, 0.3] * 2
    assert df["error"].isna().tolist() == [True, True, True, True, False, True]
    assert "SolverError" in df["error"].iloc[4]
    assert df["g2"].iloc[:3].tolist() == pytest.approx([1.1, 1.2, 1.3])
    assert math.isnan(df["g2"].iloc[3])

    summary = sweeper.compute_summary()
    assert summary["Failed"].tolist() == [0, 1]
    assert summary["N_b at max P"].iloc[0] == 0.3
    report = sweeper.generate_markdown_report()
    assert report.startswith("# Sweep over N_b")


def test_sweep_save_and_read(dummy_engine):
    with tempfile.TemporaryDirectory() as tmpdir:
        spec = SweepSpec(parameter="kappa_L", values=[0.01, 0.02], output=f"{tmpdir}/sweep.csv", workers=2)
        sweeper = sw.Sweeper(spec, engines=[dummy_engine])
        sweeper.run_engines()
        path = sweeper.save()

        df, metadata = read_csv(path)
        assert metadata["parameter"] == "kappa_L"
        assert metadata["values"] == [0.01, 0.02]
        assert metadata["settings"]["single_cavity"]["dims"] == [4, 4, 21]
        assert list(df.columns) == sweeper.columns
        assert df["P"].tolist() == [0.01, 0.02]


def test_sweep_spec_validation():
    with pytest.raises(ValidationError):
        SweepSpec(parameter="N_b", values=[])
    with pytest.raises(ValidationError):
        SweepSpec(parameter="N_b", values=[float("nan")])
    with pytest.raises(ValidationError):
        SweepSpec(parameter="N_b", values=[0.1], engines=["diesel"])
    with pytest.raises(ValidationError):
        SweepSpec(parameter="dims", values=[1.0])
    # gamma_1 only exists for the quantum engines
    with pytest.raises(ValidationError):
        SweepSpec(parameter="gamma_1", values=[0.1])
    SweepSpec(parameter="gamma_1", values=[0.1], engines=["cascade"])


def test_quantum_sweep_end_to_end():
    spec = SweepSpec(engines=["single_cavity", "cascade"], parameter="N_b", values=[0.0, 0.3], settings=SMALL_SETTINGS)
    df = sw.run_sweep(spec)
    assert df["error"].isna().all()
    assert (df["residual"] <= 1e-9).all()
    # vacuum has no defined g2
    assert df["g2"].isna().tolist() == [True, False, True, False]
    assert (df.loc[df["N_b"] == 0.3, "mean_phonons"] > 0).all()


def test_resolve_settings():
    settings = resolve_settings({"N_b": "0.3", "dims": "2,2,3", "seed": "4", "n_traj": "10", "method": "eigen"})
    assert settings.single_cavity.N_b == 0.3
    assert settings.cascade.N_b == 0.3
    assert settings.classical.N_b == 0.3
    assert settings.single_cavity.dims == (2, 2, 3)
    assert (settings.classical.seed, settings.classical.n_traj) == (4, 10)
    assert settings.method.value == "eigen"
    assert resolve_settings({"profile": "full"}).classical.n_steps == 10_000_000
    with pytest.raises(ValueError):
        resolve_settings({"temperature": "1"})
    with pytest.raises(ValidationError):
        resolve_settings({"N_b": "-0.1"})


def test_config_file_and_overrides():
    with tempfile.TemporaryDirectory() as tmpdir:
        path = f"{tmpdir}/engine.env"
        with open(path, "w") as f:
            f.write("# desk run\nN_b=0.4\ndims=3,3,10\n")
        assert load_config_file(path) == {"N_b": "0.4", "dims": "3,3,10"}
        with pytest.raises(FileNotFoundError):
            load_config_file(f"{tmpdir}/missing.env")
    assert parse_overrides(["g = 0.1", "N_c=0"]) == {"g": "0.1", "N_c": "0"}
    with pytest.raises(ValueError):
        parse_overrides(["g"])
    assert parse_dims("4, 4, 21") == (4, 4, 21)
    with pytest.raises(ValueError):
        parse_dims("4,4")


def test_convergence_check():
    assert enlarged_dims((4, 4, 21)) == (5, 5, 26)
    config = EngineConfig.single_cavity(dims=(2, 2, 3), g=0.1, N_b=0.5)
    same = convergence_check(config, dims=(2, 2, 3))
    assert same["observable"].tolist() == ["g2", "P", "P_L", "deltaF", "entropy", "mean_phonons"]
    assert (same["relative_delta"].fillna(0.0) == 0.0).all()
    larger = convergence_check(config, dims=(2, 2, 5))
    assert (larger["relative_delta"].dropna() >= 0).all()


def test_figure_command_writes_sweep_file():
    settings = SMALL_SETTINGS.model_copy(update={"classical": ClassicalConfig(n_traj=3, n_steps=100)})
    with tempfile.TemporaryDirectory() as tmpdir:
        files = figure_command("fig3c", settings=settings, output_dir=tmpdir, workers=1)
        assert files == [f"{tmpdir}/fig3c.csv"]
        df, metadata = read_csv(files[0])
        assert metadata["parameter"] == "N_c"
        assert sorted(set(df["engine"])) == ["cascade", "classical", "single_cavity"]
        assert len(df) == 3 * len(N_C_GRID)
        assert (df["N_b"] == 0.33).all()
    with pytest.raises(ValueError):
        figure_command("fig9", settings=settings)


def test_quantum_engines_use_run_seed():
    settings = SMALL_SETTINGS.model_copy(update={"seed": 7, "method": SolverMethod.EIGEN})
    engines = build_engines(["single_cavity", "cascade"], settings)
    assert [engine.seed for engine in engines] == [7, 7]
    first, second = (engines[1].figures("N_b", 0.3) for _ in range(2))
    assert first == second
    assert first.residual <= 1e-9
