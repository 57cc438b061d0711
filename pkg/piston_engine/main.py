import logging
import os
import time
import typing as t

import click
import numpy as np
import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError

from piston_engine.functions.cache import engine_steady_state
from piston_engine.functions.classical_engine import (
    EnsembleFailedError,
    IntegrationBlowupError,
    classical_figures,
    run_ensemble,
)
from piston_engine.functions.observables import ConsistencyError, default_load_grid, figures_of_merit
from piston_engine.functions.steady_state import SolverError, SolverMethod
from piston_engine.models.ClassicalConfig import SimulationProfile
from piston_engine.models.SweepSpec import ENGINE_NAMES, RunSettings, SweepSpec
from piston_engine.sweep.convergence import convergence_check
from piston_engine.sweep.figures import FIGURE_IDS, N_B_GRID, N_C_GRID, figure_command
from piston_engine.sweep.sweep import Sweeper
from piston_engine.sweep.utils import (
    load_config_file,
    parse_dims,
    parse_overrides,
    resolve_settings,
    write_csv,
    write_json,
)

load_dotenv()

EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_IO = 3


class ExitCodeGroup(click.Group):
    """Maps failures to the documented exit codes instead of a traceback."""

    def invoke(self, ctx: click.Context) -> t.Any:
        try:
            return super().invoke(ctx)
        except click.exceptions.Exit:
            raise
        except click.UsageError as e:
            e.show()
            ctx.exit(EXIT_VALIDATION)
        except OSError as e:
            click.echo(f"I/O error: {e}", err=True)
            ctx.exit(EXIT_IO)
        except (SolverError, ConsistencyError, EnsembleFailedError, IntegrationBlowupError) as e:
            click.echo(f"Solver failure: {e}", err=True)
            ctx.exit(EXIT_SOLVER)
        except (ValidationError, ValueError) as e:
            click.echo(f"Invalid configuration: {e}", err=True)
            ctx.exit(EXIT_VALIDATION)


def settings_options(func: t.Callable[..., t.Any]) -> t.Callable[..., t.Any]:
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="KEY=value config file, keys are the config field names."),
        click.option("--set", "overrides", multiple=True, help="key=value override, wins over the config file."),
        click.option("--dims", default=None, help="Fock truncation of modes a,b,c, e.g. 4,4,21."),
        click.option("--method", type=click.Choice([m.value for m in SolverMethod]), default=None),
        click.option("--seed", type=int, default=None),
        click.option("--profile", type=click.Choice([p.value for p in SimulationProfile]), default=None,
                     help="Classical ensemble size: desk (500 x 1e6 steps) or full (1e4 x 1e7 steps)."),
        click.option("--workers", type=click.IntRange(min=1), default=None),
        click.option("--output-dir", default="outputs", show_default=True),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_settings(
    config_path: t.Optional[str],
    overrides: t.Sequence[str],
    dims: t.Optional[str],
    method: t.Optional[str],
    seed: t.Optional[int],
    profile: t.Optional[str],
) -> RunSettings:
    """Defaults < config file < flags."""
    values = load_config_file(config_path) if config_path else {}
    values.update(parse_overrides(overrides))
    flags = {"dims": dims, "method": method, "seed": None if seed is None else str(seed), "profile": profile}
    values.update({k: v for k, v in flags.items() if v is not None})
    return resolve_settings(values)


def parse_values(text: t.Optional[str], parameter: str, settings: RunSettings) -> list[float]:
    if text:
        return [float(v) for v in text.split(",") if v.strip()]
    defaults = {
        "N_b": N_B_GRID,
        "N_c": N_C_GRID,
        "kappa_L": list(default_load_grid(settings.single_cavity)),
    }
    if parameter not in defaults:
        raise click.UsageError(f"--values is required when sweeping {parameter}")
    return [float(v) for v in defaults[parameter]]


@click.group(cls=ExitCodeGroup)
@click.option("--verbose", "-v", is_flag=True, help="Log solver diagnostics.")
def cli(verbose: bool) -> None:
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@cli.command()
@click.option("--engine", "engines", multiple=True, type=click.Choice(ENGINE_NAMES), help="Defaults to all engines.")
@click.option("--parameter", default="N_b", show_default=True)
@click.option("--values", "values_text", default=None, help="Comma separated sweep values.")
@settings_options
def sweep(
    engines: tuple[str, ...],
    parameter: str,
    values_text: t.Optional[str],
    config_path: t.Optional[str],
    overrides: tuple[str, ...],
    dims: t.Optional[str],
    method: t.Optional[str],
    seed: t.Optional[int],
    profile: t.Optional[str],
    workers: t.Optional[int],
    output_dir: str,
) -> None:
    settings = build_settings(config_path, overrides, dims, method, seed, profile)
    spec = SweepSpec(
        engines=list(engines) or list(ENGINE_NAMES),
        parameter=parameter,
        values=parse_values(values_text, parameter, settings),
        settings=settings,
        output=os.path.join(output_dir, f"sweep_{parameter}.csv"),
        workers=workers,
    )
    sweeper = Sweeper(spec)
    sweeper.run_engines()
    path = sweeper.save()
    print(sweeper.generate_markdown_report())
    print(f"\nWrote {path}")


@cli.command()
@click.argument("figure_id", type=click.Choice(FIGURE_IDS))
@settings_options
def figure(
    figure_id: str,
    config_path: t.Optional[str],
    overrides: tuple[str, ...],
    dims: t.Optional[str],
    method: t.Optional[str],
    seed: t.Optional[int],
    profile: t.Optional[str],
    workers: t.Optional[int],
    output_dir: str,
) -> None:
    settings = build_settings(config_path, overrides, dims, method, seed, profile)
    start = time.time()
    files = figure_command(figure_id, settings=settings, output_dir=output_dir, workers=workers)
    for path in files:
        print(f"Wrote {path}")
    print(f"\nTime elapsed: {time.time() - start:.1f}s")


@cli.command()
@click.option("--engine", type=click.Choice(["single_cavity", "cascade"]), default="single_cavity", show_default=True)
@click.option("--to-dims", default=None, help="Enlarged truncation, defaults to about a quarter more levels.")
@settings_options
def convergence(
    engine: str,
    to_dims: t.Optional[str],
    config_path: t.Optional[str],
    overrides: tuple[str, ...],
    dims: t.Optional[str],
    method: t.Optional[str],
    seed: t.Optional[int],
    profile: t.Optional[str],
    workers: t.Optional[int],
    output_dir: str,
) -> None:
    settings = build_settings(config_path, overrides, dims, method, seed, profile)
    config = settings.base_config(engine)
    enlarged = parse_dims(to_dims) if to_dims else None
    report = convergence_check(config, dims=enlarged, method=settings.method, seed=settings.seed)
    path = write_csv(report, os.path.join(output_dir, f"convergence_{engine}.csv"),
                     {"engine": engine, "settings": settings.model_dump(mode="json")})
    print(report.to_markdown(index=False))
    print(f"\nWrote {path}")


@cli.command()
@click.option("--engine", type=click.Choice(ENGINE_NAMES), default="single_cavity", show_default=True)
@settings_options
def solve(
    engine: str,
    config_path: t.Optional[str],
    overrides: tuple[str, ...],
    dims: t.Optional[str],
    method: t.Optional[str],
    seed: t.Optional[int],
    profile: t.Optional[str],
    workers: t.Optional[int],
    output_dir: str,
) -> None:
    """Figures of merit of a single configuration; writes the state (or ensemble) next to them."""
    settings = build_settings(config_path, overrides, dims, method, seed, profile)
    os.makedirs(output_dir, exist_ok=True)
    metadata = {"engine": engine, "settings": settings.model_dump(mode="json")}
    if engine == "classical":
        ensemble = run_ensemble(settings.classical, workers=workers)
        figures = classical_figures(ensemble, workers=workers)
        write_csv(ensemble.to_frame(), os.path.join(output_dir, "classical_final_points.csv"), ensemble.metadata())
    else:
        config = settings.base_config(engine)
        rho = engine_steady_state(config, settings.method, settings.seed)
        figures = figures_of_merit(config, rho)
        rho.save(os.path.join(output_dir, f"{engine}_state.json"))
    write_json({"metadata": metadata, "figures": figures.model_dump()}, os.path.join(output_dir, f"{engine}_figures.json"))
    table = pd.DataFrame([{k: (np.nan if v is None else v) for k, v in figures.model_dump().items()}])
    print(table.to_markdown(index=False))


def main() -> None:
    cli(prog_name="piston-engine")


if __name__ == "__main__":
    main()
