"""
Data files behind every figure of the engine comparison, at desk scale by default.
Every file carries the resolved settings in its metadata.
"""
import logging
import os
import typing as t

import numpy as np
import pandas as pd

from piston_engine.functions.cache import engine_steady_state
from piston_engine.functions.classical_engine import histogram_dict, run_ensemble
from piston_engine.functions.observables import (
    default_load_grid,
    load_curve,
    mechanical_marginal,
    number_distribution,
    optimal_load,
)
from piston_engine.functions.parallelism import par_map
from piston_engine.functions.wigner import default_grid, wigner
from piston_engine.models.SweepSpec import ENGINE_NAMES, RunSettings, SweepSpec
from piston_engine.sweep.sweep import Sweeper
from piston_engine.sweep.utils import should_not_happen, write_csv, write_json

FIGURE_IDS = ("fig2", "fig3a", "fig3b", "fig3c", "fig3d", "fig3e", "fig3f", "fig4a", "fig4b", "fig5")
DISTRIBUTION_N_B = (0.17, 0.33, 0.5)
N_B_GRID = list(np.linspace(0.0, 0.5, 26))
N_C_GRID = list(np.linspace(0.0, 0.5, 11))
N_C_SWEEP_N_B = 0.33
LOAD_SWEEP_N_B = 0.5
TRAJECTORY_N_B = 0.5
TRAJECTORY_COUNT = 5
TRAJECTORY_TAIL = 20_000


def _metadata(figure_id: str, settings: RunSettings, **extra: t.Any) -> dict[str, t.Any]:
    return {"figure": figure_id, "settings": settings.model_dump(mode="json"), **extra}


def _sweep(figure_id: str, settings: RunSettings, output_dir: str, parameter: str, values: list[float],
           workers: t.Optional[int], **fixed: float) -> list[str]:
    if fixed:
        settings = RunSettings(
            single_cavity=settings.single_cavity.with_updates(**fixed),
            cascade=settings.cascade.with_updates(**fixed),
            classical=settings.classical.with_updates(**fixed),
            method=settings.method,
            seed=settings.seed,
        )
    spec = SweepSpec(
        engines=list(ENGINE_NAMES),
        parameter=parameter,
        values=[float(v) for v in values],
        settings=settings,
        output=os.path.join(output_dir, f"{figure_id}.csv"),
        workers=workers,
    )
    sweeper = Sweeper(spec)
    sweeper.run_engines()
    return [sweeper.save()]


def _distributions(settings: RunSettings, output_dir: str, workers: t.Optional[int]) -> list[str]:
    """Mode-c p(n) and Wigner grids of both quantum engines, phase-space histograms of the classical one."""
    xvec = default_grid()
    jobs = [(engine, n_b) for engine in ("single_cavity", "cascade") for n_b in DISTRIBUTION_N_B]

    def _quantum(job: tuple[str, float]) -> tuple[pd.DataFrame, dict[str, t.Any]]:
        engine, n_b = job
        config = settings.base_config(engine).with_updates(N_b=n_b)
        marginal = mechanical_marginal(engine_steady_state(config, settings.method, settings.seed))
        p = number_distribution(marginal)
        df = pd.DataFrame({"engine": engine, "N_b": n_b, "n": np.arange(len(p)), "p": p})
        grid = {"engine": engine, "N_b": n_b, "x": xvec, "p": xvec, "W": wigner(marginal, xvec)}
        return df, grid

    results = par_map(jobs, _quantum, workers=workers)
    files = [
        write_csv(pd.concat([df for df, _ in results], ignore_index=True),
                  os.path.join(output_dir, "fig2_distributions.csv"), _metadata("fig2", settings)),
        write_json({"metadata": _metadata("fig2", settings), "wigner": [grid for _, grid in results]},
                   os.path.join(output_dir, "fig2_wigner.json")),
    ]

    histograms = []
    for n_b in DISTRIBUTION_N_B:
        ensemble = run_ensemble(settings.classical.with_updates(N_b=n_b))
        histograms.append({"engine": "classical", "N_b": n_b, **histogram_dict(ensemble.gamma_points())})
    files.append(write_json({"metadata": _metadata("fig2", settings), "histograms": histograms},
                            os.path.join(output_dir, "fig2_classical_histograms.json")))
    return files


def _load_curves(figure_id: str, settings: RunSettings, output_dir: str, workers: t.Optional[int]) -> list[str]:
    """P_L and g2 along kappa_L for every engine, plus the refined optimum of the quantum engines."""
    files = _sweep(figure_id, settings, output_dir, "kappa_L", list(default_load_grid(settings.single_cavity)),
                   workers, N_b=LOAD_SWEEP_N_B)
    optima = []
    for engine in ("single_cavity", "cascade"):
        config = settings.base_config(engine).with_updates(N_b=LOAD_SWEEP_N_B)
        curve = load_curve(
            config, method=settings.method, seed=settings.seed,
            map_fn=lambda items, func: par_map(items, func, workers=workers),
        )
        kappa_star, power_star = optimal_load(config, method=settings.method, curve=curve, seed=settings.seed)
        optima.append({"engine": engine, "kappa_L_star": kappa_star, "P_L_star": power_star})
        logging.info(f"{engine}: optimal load kappa_L = {kappa_star:.4e}, P_L = {power_star:.4e}")
    files.append(write_json({"metadata": _metadata(figure_id, settings), "optima": optima},
                            os.path.join(output_dir, f"{figure_id}_optima.json")))
    return files


def _trajectories(settings: RunSettings, output_dir: str) -> list[str]:
    config = settings.classical.with_updates(
        N_a=0.0, N_b=TRAJECTORY_N_B, N_c=0.0, n_traj=TRAJECTORY_COUNT, tail_steps=TRAJECTORY_TAIL, thin=1
    )
    ensemble = run_ensemble(config)
    return [
        write_csv(ensemble.tails_frame(), os.path.join(output_dir, "fig5_trajectories.csv"), ensemble.metadata()),
        write_csv(ensemble.to_frame(), os.path.join(output_dir, "fig5_final_points.csv"), ensemble.metadata()),
    ]


def figure_command(
    figure_id: str,
    settings: t.Optional[RunSettings] = None,
    output_dir: str = "outputs",
    workers: t.Optional[int] = None,
) -> list[str]:
    """Write the data files of one figure and return their paths."""
    if figure_id not in FIGURE_IDS:
        raise ValueError(f"Unknown figure '{figure_id}', expected one of {FIGURE_IDS}")
    settings = RunSettings() if settings is None else settings
    os.makedirs(output_dir, exist_ok=True)

    if figure_id == "fig2":
        return _distributions(settings, output_dir, workers)
    elif figure_id in ("fig3a", "fig3b", "fig4a"):
        return _sweep(figure_id, settings, output_dir, "N_b", N_B_GRID, workers)
    elif figure_id in ("fig3c", "fig3d", "fig4b"):
        return _sweep(figure_id, settings, output_dir, "N_c", N_C_GRID, workers, N_b=N_C_SWEEP_N_B)
    elif figure_id in ("fig3e", "fig3f"):
        return _load_curves(figure_id, settings, output_dir, workers)
    elif figure_id == "fig5":
        return _trajectories(settings, output_dir)
    else:
        should_not_happen(f"Figure id {figure_id} passed validation but has no handler")
