from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

import ingest
import preprocess
import sd_engine
import shade_report
import synth_validate
from clearsky_corpus import ClearSkyCorpus, ClearSkyParams
from matrix_io import save_heatmap_image, write_document, write_table
from preprocess import PrepSettings
from sd_engine import SdParams
from synth_validate import Obstruction, SystemGeometry

# Shade-severity groups by true yearly loss fraction (percent)
LOW_SHADE_LIMIT = 3.0
HIGH_SHADE_LIMIT = 15.0


@dataclass
class AnalysisResult:
    prepared: preprocess.PreparedData
    problem: sd_engine.SdProblem
    decomposition: sd_engine.Decomposition
    report: shade_report.ShadeReport
    invariants: Dict[str, float] = field(default_factory=dict)


@dataclass
class SyntheticCase:
    geometry: SystemGeometry
    obstruction: Obstruction
    truth: synth_validate.GroundTruth
    result: AnalysisResult

    @property
    def rmse(self) -> float:
        return self.result.report.rmse

    @property
    def re(self) -> float:
        return self.result.report.re


class ShadeLossAnalyzer:
    """
    Runs the whole pipeline on one power series: preparation, decomposition
    and shade report.
    """

    def __init__(self, corpus: ClearSkyCorpus, sd_params: SdParams = SdParams(),
                 settings: PrepSettings = PrepSettings(), verbose: bool = True):
        self.corpus = corpus
        self.sd_params = sd_params
        self.settings = settings
        self.verbose = verbose

    def _say(self, message: str):
        if self.verbose:
            print(message)

    # --- Pipeline stages ---
    def prepare(self, series: ingest.RawSeries) -> preprocess.PreparedData:
        """Turn a raw series into the bin-averaged transformed signal."""
        prepared = preprocess.prepare_signal(series, self.settings)
        known = int(prepared.signal.known_rows.sum())
        self._say(f"Days in record: {prepared.matrix.n_days} "
                  f"(usable {int(prepared.matrix.usable.sum())}, clear {int(prepared.clear.sum())})")
        self._say(f"Known declination bins: {known} of {self.settings.n_bins}")
        self._say(f"Normalization scale: {prepared.signal.scale:.3f} kW")
        return prepared

    def decompose(self, prepared: preprocess.PreparedData
                  ) -> Tuple[sd_engine.SdProblem, sd_engine.Decomposition]:
        problem = sd_engine.build_problem(prepared.signal, self.corpus, self.sd_params)
        bar = tqdm(total=self.sd_params.max_iter, desc="Decomposing", disable=not self.verbose)

        def tick(iteration: int, objective: float):
            bar.update(1)
            if iteration % 100 == 0:
                bar.set_postfix(objective=f"{objective:.4g}")

        try:
            dec = sd_engine.solve(problem, progress=tick)
        finally:
            bar.close()
        status = "converged" if dec.converged else "NOT converged"
        self._say(f"Solver {status} after {dec.iterations} iterations "
                  f"(objective {dec.objective:.6g})")
        return problem, dec

    def report(self, prepared: preprocess.PreparedData, dec: sd_engine.Decomposition,
               reference: Optional[shade_report.ShadeReference] = None,
               total_energy: Optional[float] = None) -> shade_report.ShadeReport:
        report = shade_report.build_report(dec, prepared.signal, reference, total_energy)
        self._say(f"Estimated yearly shade loss: {report.yearly_loss:.1f} kWh "
                  f"({report.loss_fraction:.2f}% of {report.yearly_energy:.0f} kWh)")
        if report.rmse is not None:
            self._say(f"RMSE vs reference: {report.rmse:.3f} kWh   RE: {report.re:+.2f}%")
        return report

    def analyze_series(self, series: ingest.RawSeries,
                       reference: Optional[shade_report.ShadeReference] = None,
                       total_energy: Optional[float] = None) -> AnalysisResult:
        self._say("\n1. Preparing data...")
        prepared = self.prepare(series)
        self._say("\n2. Decomposing transformed signal...")
        problem, dec = self.decompose(prepared)
        self._say("\n3. Computing shade losses...")
        report = self.report(prepared, dec, reference, total_energy)
        return AnalysisResult(prepared=prepared, problem=problem, decomposition=dec,
                              report=report, invariants=sd_engine.check_invariants(problem, dec))

    # --- Output ---
    def save_analysis(self, result: AnalysisResult, out_dir: Path,
                      reference: Optional[shade_report.ShadeReference] = None) -> Dict[str, Path]:
        """Write every analysis product into out_dir."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        prepared, dec = result.prepared, result.decomposition
        h = prepared.signal.params_hash

        paths: Dict[str, Path] = {}
        for key, path in preprocess.save_signal(prepared.signal, out_dir).items():
            paths[f"transformed_{key}"] = path
        for key, path in sd_engine.save_decomposition(dec, result.problem, out_dir).items():
            paths[f"decomposition_{key}"] = path
        for key, path in shade_report.save_report(result.report, out_dir, reference).items():
            paths[f"report_{key}"] = path
        for key, path in shade_report.save_heatmaps(prepared.signal, dec, out_dir).items():
            paths[f"heatmap_{key}"] = path
        paths["day_matrix_png"] = save_heatmap_image(out_dir / "day_matrix.png",
                                                     prepared.matrix.values)
        days = shade_report.representative_days(prepared.geometry, prepared.clear)
        table = shade_report.component_day_table(dec, prepared.signal, prepared.geometry,
                                                 prepared.matrix, days)
        paths["components"] = write_table(out_dir / "component_days.csv", table, h)

        self._say(f"\nResults saved to: {out_dir}")
        return paths


# --- Synthetic studies ---

def shade_level(loss_fraction: float) -> str:
    if loss_fraction < LOW_SHADE_LIMIT:
        return "L"
    if loss_fraction < HIGH_SHADE_LIMIT:
        return "M"
    return "H"


def synthesize(geometry: SystemGeometry, obstruction: Obstruction = Obstruction(),
               years: int = 2, interval: int = 300, cloud_prob: float = 0.35, seed: int = 42,
               clear_params: ClearSkyParams = ClearSkyParams()
               ) -> Tuple[ingest.RawSeries, synth_validate.GroundTruth]:
    """Simulated, shaded and clouded series plus its ground truth."""
    series = synth_validate.simulate_system(geometry, years, interval, clear_params)
    shaded, injection = synth_validate.inject_shade(series, geometry, obstruction, clear_params)
    weathered, clear = synth_validate.inject_weather(shaded, cloud_prob, seed)
    return weathered, synth_validate.build_ground_truth(injection, clear)


def run_synthetic_case(geometry: SystemGeometry, obstruction: Obstruction,
                       corpus: ClearSkyCorpus, sd_params: SdParams = SdParams(),
                       years: int = 2, interval: int = 300, cloud_prob: float = 0.35,
                       seed: int = 42, verbose: bool = False) -> SyntheticCase:
    """Simulate one system, analyze it and compare against its ground truth."""
    series, truth = synthesize(geometry, obstruction, years, interval, cloud_prob, seed)
    analyzer = ShadeLossAnalyzer(corpus, sd_params, verbose=verbose)
    result = analyzer.analyze_series(series, truth.as_reference())
    return SyntheticCase(geometry, obstruction, truth, result)


def _case_row(case: SyntheticCase) -> Dict:
    report = case.result.report
    return {
        "latitude": case.geometry.latitude,
        "tilt": case.geometry.tilt,
        "azimuth": case.geometry.azimuth,
        "true_loss_kwh": case.truth.yearly_loss_ref,
        "true_loss_pct": case.truth.loss_fraction,
        "est_loss_kwh": report.yearly_loss,
        "est_loss_pct": report.loss_fraction,
        "rmse_kwh": report.rmse,
        "re_pct": report.re,
        "converged": case.result.decomposition.converged,
        "shade_level": shade_level(case.truth.loss_fraction),
    }


def azimuth_sweep(corpus: ClearSkyCorpus,
                  azimuths: Sequence[float] = (90.0, 135.0, 180.0, 225.0, 270.0),
                  obstruction: Obstruction = Obstruction.southern(36.0, 0.5),
                  base: SystemGeometry = SystemGeometry(), sd_params: SdParams = SdParams(),
                  years: int = 2, interval: int = 300, cloud_prob: float = 0.35,
                  seed: int = 42) -> pd.DataFrame:
    """RE and RMSE of otherwise identical systems facing different azimuths."""
    rows = []
    for az in tqdm(azimuths, desc="Azimuth sweep"):
        geometry = SystemGeometry(base.latitude, base.longitude, base.tilt, az, base.capacity)
        case = run_synthetic_case(geometry, obstruction, corpus, sd_params, years, interval,
                                  cloud_prob, seed)
        rows.append(_case_row(case))
    return pd.DataFrame(rows)


DEFAULT_FLEET: List[Tuple[SystemGeometry, Obstruction]] = [
    (SystemGeometry(azimuth=az, tilt=tilt), obstruction)
    for az, tilt in ((180.0, 20.0), (160.0, 15.0), (200.0, 25.0))
    for obstruction in (Obstruction(), Obstruction.southern(40.0, 1.0),
                        Obstruction.tree_line(45.0, 1.0))
]


def fleet_study(corpus: ClearSkyCorpus,
                cases: Sequence[Tuple[SystemGeometry, Obstruction]] = DEFAULT_FLEET,
                sd_params: SdParams = SdParams(), years: int = 2, interval: int = 300,
                cloud_prob: float = 0.35, seed: int = 42) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Analyze a synthetic fleet. Returns per-system metrics and a summary with
    mean and standard deviation of RMSE and RE per shade level.
    """
    rows = []
    for i, (geometry, obstruction) in enumerate(tqdm(cases, desc="Fleet study")):
        case = run_synthetic_case(geometry, obstruction, corpus, sd_params, years, interval,
                                  cloud_prob, seed + i)
        rows.append(_case_row(case))
    systems = pd.DataFrame(rows)
    return systems, summarize_fleet(systems)


def summarize_fleet(systems: pd.DataFrame) -> pd.DataFrame:
    summary = (systems.groupby("shade_level")
               .agg(systems=("re_pct", "size"),
                    rmse_mean=("rmse_kwh", "mean"), rmse_std=("rmse_kwh", "std"),
                    re_mean=("re_pct", "mean"), re_std=("re_pct", "std"),
                    est_loss_mean_kwh=("est_loss_kwh", "mean"))
               .reindex(["L", "M", "H"])
               .dropna(subset=["systems"])
               .rename_axis("shade_level")
               .reset_index())
    return summary


def print_fleet_summary(summary: pd.DataFrame):
    print("\nSD errors by shade level")
    print("-" * 60)
    for _, row in summary.iterrows():
        print(f"{row['shade_level']}: {int(row['systems'])} systems  "
              f"RMSE {row['rmse_mean']:.2f} +/- {np.nan_to_num(row['rmse_std']):.2f} kWh  "
              f"RE {row['re_mean']:+.2f} +/- {np.nan_to_num(row['re_std']):.2f}%")


def save_study(systems: pd.DataFrame, summary: Optional[pd.DataFrame], out_dir: Path,
               stem: str, params_hash: str = "") -> Dict[str, Path]:
    out_dir = Path(out_dir)
    paths = {"systems": write_table(out_dir / f"{stem}_systems.csv", systems, params_hash)}
    if summary is not None:
        paths["summary"] = write_table(out_dir / f"{stem}_summary.csv", summary, params_hash)
        paths["json"] = write_document(out_dir / f"{stem}_summary.json",
                                       {"params_hash": params_hash,
                                        "groups": summary.to_dict(orient="records")})
    return paths
