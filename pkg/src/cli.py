"""
Command-line entry point.

    corpus    build the clear-sky corpus artifact
    analyze   estimate shade losses of a measured power series
    synth     simulate a shaded system and its ground truth
    validate  compare a shade report with a ground truth (or run an azimuth sweep)
    fleet     analyze a built-in synthetic fleet and summarize errors by shade level

Options come from built-in defaults, then an optional JSON config file
(--config), then command-line flags. Exit codes: 0 success, 1 input or usage
error, 2 finished with warnings (solver did not converge).
"""

import argparse
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence


import clearsky_corpus as cc
import ingest
import main as pipeline
import shade_report
import synth_validate
from errors import ArgumentError, ConfigError, ShadeAnalysisError
from matrix_io import fingerprint, read_document, write_document
from preprocess import PrepSettings
from sd_engine import SdParams

logger = logging.getLogger(__name__)

_SD_DEFAULTS = SdParams()

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARNINGS = 2


@dataclass
class RunConfig:
    """Every option any command accepts, with its default."""
    # paths
    input: Optional[str] = None
    out: str = "results"
    corpus: str = "corpus/clearsky_corpus.txt"
    truth: Optional[str] = None
    report: Optional[str] = None
    # decomposition
    lambda2a: float = _SD_DEFAULTS.lambda_2a
    lambda2b: float = _SD_DEFAULTS.lambda_2b
    lambda3: float = _SD_DEFAULTS.lambda_3
    weight_mode: str = _SD_DEFAULTS.weight_mode
    norm_mode: str = _SD_DEFAULTS.norm_mode
    abs_tol: float = _SD_DEFAULTS.abs_tol
    rel_tol: float = _SD_DEFAULTS.rel_tol
    max_iter: int = _SD_DEFAULTS.max_iter
    rho: float = _SD_DEFAULTS.rho
    # corpus
    k: int = 6
    lat_grid: List[float] = field(default_factory=lambda: list(cc.DEFAULT_LATITUDES))
    tilt_grid: List[float] = field(default_factory=lambda: list(cc.DEFAULT_TILTS))
    azimuth_grid: List[float] = field(default_factory=lambda: list(cc.DEFAULT_AZIMUTHS))
    aod700: float = 0.10
    precipitable_water: float = 1.0
    pressure: float = 101325.0
    albedo: float = 0.2
    # synthetic system
    latitude: float = 34.0
    longitude: float = -118.0
    tilt: float = 20.0
    azimuth: float = 180.0
    capacity: float = 5.0
    years: int = 2
    interval: int = 300
    cloud_prob: float = 0.35
    seed: int = 42
    obstruction: List[List[float]] = field(default_factory=list)
    # validation
    sweep: bool = False
    sweep_azimuths: List[float] = field(default_factory=lambda: [90.0, 135.0, 180.0, 225.0, 270.0])
    # data
    min_days: int = ingest.MIN_DAYS
    verbose: bool = False

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def sd_params(self) -> SdParams:
        return SdParams(lambda_2a=self.lambda2a, lambda_2b=self.lambda2b, lambda_3=self.lambda3,
                        weight_mode=self.weight_mode, norm_mode=self.norm_mode,
                        abs_tol=self.abs_tol, rel_tol=self.rel_tol, max_iter=self.max_iter,
                        rho=self.rho)

    def clearsky_params(self) -> cc.ClearSkyParams:
        return cc.ClearSkyParams(aod700=self.aod700, precipitable_water=self.precipitable_water,
                                 pressure=self.pressure, albedo=self.albedo)

    def geometry(self) -> synth_validate.SystemGeometry:
        return synth_validate.SystemGeometry(self.latitude, self.longitude, self.tilt,
                                             self.azimuth, self.capacity)

    def obstruction_model(self) -> synth_validate.Obstruction:
        try:
            segments = tuple(synth_validate.ObstructionSegment(*seg) for seg in self.obstruction)
        except TypeError:
            raise ConfigError("obstruction entries are [azimuth_lo, azimuth_hi, "
                              "elevation_threshold, beam_block_fraction]")
        return synth_validate.Obstruction(segments)


def load_config(path: Optional[str]) -> Dict:
    """Read a JSON config file; unknown keys are rejected."""
    if path is None:
        return {}
    try:
        values = read_document(Path(path))
    except ValueError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(values, dict):
        raise ConfigError(f"Config file {path} must hold a key-value object")
    unknown = sorted(set(values) - set(RunConfig.keys()))
    if unknown:
        raise ConfigError(f"Unknown config keys in {path}: {', '.join(unknown)}")
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then config file, then flags that were given."""
    values = load_config(getattr(args, "config", None))
    for key in RunConfig.keys():
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            values[key] = flag
    return RunConfig(**values)


# --- Commands ---

def cmd_corpus(cfg: RunConfig) -> int:
    print("=" * 60)
    print("CLEAR-SKY CORPUS")
    print("=" * 60)
    if cfg.k < 1:
        raise ArgumentError(f"k must be at least 1, got {cfg.k}")
    corpus = cc.build_default_corpus(cfg.k, cfg.clearsky_params(), cfg.lat_grid,
                                     cfg.tilt_grid, cfg.azimuth_grid)
    path = cc.save_corpus(corpus, Path(cfg.corpus))
    print(f"Profiles (N_c): {corpus.n_profiles}")
    print(f"Effective k: {corpus.k} (requested {corpus.requested_k})")
    print("Eigenvalues: " + ", ".join(f"{v:.4g}" for v in corpus.lam))
    print(f"Explained variance: {100 * corpus.explained_variance():.2f}%")
    print(f"Fingerprint: {cc.corpus_fingerprint(path)}")
    print(f"\nCorpus saved to: {path}")
    return EXIT_OK


def _load_corpus(cfg: RunConfig) -> cc.ClearSkyCorpus:
    path = Path(cfg.corpus)
    if not path.exists():
        raise FileNotFoundError(f"Corpus file not found: {path} (run the corpus command first)")
    return cc.load_corpus(path)


def cmd_analyze(cfg: RunConfig) -> int:
    print("=" * 60)
    print("SHADE LOSS ANALYSIS")
    print("=" * 60)
    if cfg.input is None:
        raise ArgumentError("analyze needs --input")
    corpus = _load_corpus(cfg)
    series = ingest.load_series(cfg.input, cfg.min_days)
    reference = shade_report.load_reference(Path(cfg.truth)) if cfg.truth else None

    analyzer = pipeline.ShadeLossAnalyzer(corpus, cfg.sd_params(),
                                          PrepSettings(min_days=cfg.min_days))
    result = analyzer.analyze_series(series, reference)
    analyzer.save_analysis(result, Path(cfg.out), reference)

    worst = max(result.invariants.values())
    print(f"Largest invariant violation: {worst:.3g}")
    if not result.decomposition.converged:
        print("WARNING: solver did not converge; results may be inaccurate")
        return EXIT_WARNINGS
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    print("=" * 60)
    print("SYNTHETIC SYSTEM")
    print("=" * 60)
    geometry = cfg.geometry()
    obstruction = cfg.obstruction_model()
    series, truth = pipeline.synthesize(geometry, obstruction, cfg.years, cfg.interval,
                                        cfg.cloud_prob, cfg.seed, cfg.clearsky_params())
    settings = {key: value for key, value in asdict(cfg).items()
                if key in {"latitude", "longitude", "tilt", "azimuth", "capacity", "years",
                           "interval", "cloud_prob", "seed", "obstruction", "aod700",
                           "precipitable_water", "pressure", "albedo"}}
    h = fingerprint(settings)
    out = Path(cfg.out)
    series_path = ingest.write_series(out / "series.csv", series)
    synth_validate.save_ground_truth(truth, out, h)
    write_document(out / "synth_config.json", {"params_hash": h, **settings})

    print(f"Samples: {len(series)} at {series.interval} s")
    print(f"Clear days: {int(truth.clear_day_labels.sum())} of {len(truth.clear_day_labels)}")
    print(f"True yearly shade loss: {truth.yearly_loss_ref:.1f} kWh ({truth.loss_fraction:.2f}%)")
    print(f"\nSeries saved to: {series_path}")
    return EXIT_OK


def _study_hash(cfg: RunConfig) -> str:
    """Hash of the settings that shape a synthetic study, plus the corpus bytes."""
    settings = {key: value for key, value in asdict(cfg).items()
                if key not in {"input", "out", "truth", "report", "verbose"}}
    settings["corpus_sha256"] = cc.corpus_fingerprint(Path(cfg.corpus))
    return fingerprint(settings)


def cmd_validate(cfg: RunConfig) -> int:
    print("=" * 60)
    print("VALIDATION")
    print("=" * 60)
    out = Path(cfg.out)
    if cfg.sweep:
        corpus = _load_corpus(cfg)
        options = {"obstruction": cfg.obstruction_model()} if cfg.obstruction else {}
        table = pipeline.azimuth_sweep(corpus, cfg.sweep_azimuths, base=cfg.geometry(),
                                       sd_params=cfg.sd_params(), years=cfg.years,
                                       interval=cfg.interval, cloud_prob=cfg.cloud_prob,
                                       seed=cfg.seed, **options)
        paths = pipeline.save_study(table, None, out, "azimuth_sweep", _study_hash(cfg))
        for _, row in table.iterrows():
            print(f"Azimuth {row['azimuth']:5.0f}: RE {row['re_pct']:+.2f}%  "
                  f"RMSE {row['rmse_kwh']:.3f} kWh")
        print(f"\nSweep saved to: {paths['systems']}")
        return EXIT_OK

    if cfg.report is None or cfg.truth is None:
        raise ArgumentError("validate needs --report and --truth (or --sweep)")
    estimate = shade_report.load_reference(Path(cfg.report))
    reference = shade_report.load_reference(Path(cfg.truth))
    # RE is normalized by the ground truth's energy whichever file is which
    total = reference.yearly_energy
    rmse, re = shade_report.metrics(estimate, reference, total_energy=total)
    h = fingerprint({"report": str(cfg.report), "truth": str(cfg.truth)},
                    estimate.per_bin_loss, reference.per_bin_loss)
    write_document(out / "metrics.json", {
        "params_hash": h,
        "rmse_kwh": rmse,
        "re_pct": re,
        "estimate_yearly_loss_kwh": estimate.yearly_loss,
        "reference_yearly_loss_kwh": reference.yearly_loss,
        "total_energy_kwh": total,
    })
    print(f"RMSE: {rmse:.3f} kWh")
    print(f"RE:   {re:+.2f}%")
    print(f"\nMetrics saved to: {out / 'metrics.json'}")
    return EXIT_OK


def cmd_fleet(cfg: RunConfig) -> int:
    print("=" * 60)
    print("SYNTHETIC FLEET STUDY")
    print("=" * 60)
    corpus = _load_corpus(cfg)
    systems, summary = pipeline.fleet_study(corpus, sd_params=cfg.sd_params(),
                                            years=cfg.years, interval=cfg.interval,
                                            cloud_prob=cfg.cloud_prob, seed=cfg.seed)
    paths = pipeline.save_study(systems, summary, Path(cfg.out), "fleet", _study_hash(cfg))
    pipeline.print_fleet_summary(summary)
    print(f"\nFleet results saved to: {paths['systems']}")
    return EXIT_OK


COMMANDS = {
    "corpus": cmd_corpus,
    "analyze": cmd_analyze,
    "synth": cmd_synth,
    "validate": cmd_validate,
    "fleet": cmd_fleet,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Estimate PV shade losses from power data")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON file with option values")
    parser.add_argument("--input", help="power series (timestamp, kW)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--corpus", help="corpus artifact path")
    parser.add_argument("--truth", help="ground-truth document for comparison")
    parser.add_argument("--report", help="shade report document to validate")
    parser.add_argument("--lambda2a", type=float)
    parser.add_argument("--lambda2b", type=float)
    parser.add_argument("--lambda3", type=float)
    parser.add_argument("--weight-mode", dest="weight_mode",
                        choices=["eigenvalue-inverse", "eigenvalue-inverse-sqrt"])
    parser.add_argument("--norm-mode", dest="norm_mode", choices=["unsquared", "squared"])
    parser.add_argument("--max-iter", dest="max_iter", type=int)
    parser.add_argument("--abs-tol", dest="abs_tol", type=float)
    parser.add_argument("--rel-tol", dest="rel_tol", type=float)
    parser.add_argument("--rho", type=float, help="initial ADMM penalty")
    parser.add_argument("--k", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--latitude", type=float)
    parser.add_argument("--longitude", type=float)
    parser.add_argument("--tilt", type=float)
    parser.add_argument("--azimuth", type=float)
    parser.add_argument("--capacity", type=float)
    parser.add_argument("--years", type=int)
    parser.add_argument("--interval", type=int)
    parser.add_argument("--cloud-prob", dest="cloud_prob", type=float)
    parser.add_argument("--min-days", dest="min_days", type=int)
    parser.add_argument("--obstruction", nargs=4, type=float, action="append",
                        metavar=("AZ_LO", "AZ_HI", "ELEV", "FRACTION"))
    parser.add_argument("--sweep", action="store_true", help="run the azimuth sweep")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    try:
        cfg = resolve_config(args)
        logging.basicConfig(level=logging.INFO if cfg.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        logger.debug("Resolved config: %s", asdict(cfg))
        return COMMANDS[args.command](cfg)
    except (ShadeAnalysisError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
