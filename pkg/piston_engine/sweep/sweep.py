import logging
import os
import time
import typing as t

import pandas as pd
from pydantic import ValidationError

from piston_engine.functions.classical_engine import EnsembleFailedError
from piston_engine.functions.observables import ConsistencyError
from piston_engine.functions.parallelism import par_map
from piston_engine.functions.steady_state import SolverError
from piston_engine.models.FigureOfMerit import FigureOfMerit
from piston_engine.models.SweepSpec import SweepSpec
from piston_engine.sweep.engines import AbstractEngine, build_engines
from piston_engine.sweep.utils import write_csv

INDEX_COLUMNS = ["engine", "N_b", "N_c", "kappa_L"]
FIGURE_COLUMNS = ["g2", "P", "P_L", "deltaF", "mean_phonons", "entropy", "residual"]
ERROR_COLUMNS = ["g2_err", "P_err", "deltaF_err", "mean_phonons_err"]
# Failures of a single point that are recorded in its row instead of aborting the sweep
POINT_FAILURES = (SolverError, ConsistencyError, EnsembleFailedError, ValidationError, ValueError)


class Sweeper:
    def __init__(self, spec: SweepSpec, engines: t.Optional[list[AbstractEngine]] = None):
        self.spec = spec
        self.registered_engines = build_engines(spec.engines, spec.settings) if engines is None else engines
        self.rows: list[dict[str, t.Any]] = []
        self.elapsed: dict[str, float] = {}

    @property
    def columns(self) -> list[str]:
        extra = [] if self.spec.parameter in INDEX_COLUMNS else [self.spec.parameter]
        return INDEX_COLUMNS + extra + FIGURE_COLUMNS + ERROR_COLUMNS + ["error"]

    def _run_point(self, engine: AbstractEngine, value: float) -> dict[str, t.Any]:
        row: dict[str, t.Any] = {"engine": engine.engine_name}
        try:
            config = engine.point_config(self.spec.parameter, value)
            row.update({k: getattr(config, k) for k in INDEX_COLUMNS[1:]})
            row[self.spec.parameter] = value
            figures: FigureOfMerit = engine.figures(self.spec.parameter, value)
            row.update(figures.model_dump())
            row["error"] = None
        except POINT_FAILURES as e:
            logging.error(f"{engine.engine_name} failed at {self.spec.parameter}={value}: {e}")
            row[self.spec.parameter] = value
            row["error"] = f"{type(e).__name__}: {e}"
        return row

    def run_engines(self) -> pd.DataFrame:
        """One row per engine and sweep value, engine-major in the requested order."""
        self.rows = []
        for engine in self.registered_engines:
            start = time.time()
            workers = self.spec.workers or engine.max_workers or os.cpu_count() or 1
            self.rows.extend(
                par_map(self.spec.values, lambda value: self._run_point(engine, value), workers=workers)
            )
            self.elapsed[engine.engine_name] = time.time() - start
            print(f"{engine.engine_name}: {len(self.spec.values)} points in {self.elapsed[engine.engine_name]:.1f}s")
        return self.to_frame()

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.rows).reindex(columns=self.columns)
        # g2 of an empty mode comes back as None
        numeric = FIGURE_COLUMNS + ERROR_COLUMNS
        df[numeric] = df[numeric].astype(float)
        return df

    def metadata(self) -> dict[str, t.Any]:
        return {
            "parameter": self.spec.parameter,
            "values": self.spec.values,
            "engines": self.spec.engines,
            "settings": self.spec.settings.model_dump(mode="json"),
        }

    def save(self, path: t.Optional[str] = None) -> str:
        path = path or self.spec.output
        if path is None:
            raise ValueError("No output path given for the sweep")
        return write_csv(self.to_frame(), path, self.metadata())

    def compute_summary(self) -> pd.DataFrame:
        df = self.to_frame()
        summary = []
        for engine in self.registered_engines:
            rows = df[df["engine"] == engine.engine_name]
            ok = rows[rows["error"].isna()]
            best = ok.loc[ok["P"].idxmax()] if len(ok) else None
            summary.append({
                "Engine": engine.engine_name,
                "Points": len(rows),
                "Failed": int(rows["error"].notna().sum()),
                "Min g2": ok["g2"].min() if len(ok) else None,
                f"{self.spec.parameter} at max P": best[self.spec.parameter] if best is not None else None,
                "Max P": ok["P"].max() if len(ok) else None,
                "Max deltaF": ok["deltaF"].max() if len(ok) else None,
                "Time (s)": round(self.elapsed.get(engine.engine_name, float("nan")), 2),
            })
        return pd.DataFrame(summary)

    def generate_markdown_report(self) -> str:
        md = f"# Sweep over {self.spec.parameter}\n\n"
        md += "## Summary\n\n"
        md += self.compute_summary().to_markdown(index=False)
        md += "\n\n"
        md += "## Points\n\n"
        md += self.to_frame()[INDEX_COLUMNS + FIGURE_COLUMNS[:-1] + ["error"]].to_markdown(index=False)
        return md


def run_sweep(spec: SweepSpec) -> pd.DataFrame:
    sweeper = Sweeper(spec)
    df = sweeper.run_engines()
    if spec.output:
        sweeper.save()
    return df
