"""Command-line surface: config layering, exit codes and command outputs."""

import json

import pandas as pd
import pytest

import cli
from errors import ConfigError


def _write_config(tmp_path, values):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(values))
    return str(path)


# ── Configuration ────────────────────────────────────────────────────────────

def test_flags_override_config_file(tmp_path):
    config = _write_config(tmp_path, {"tilt": 25.0, "azimuth": 200.0})
    args = cli.build_parser().parse_args(["synth", "--config", config, "--tilt", "30"])
    cfg = cli.resolve_config(args)
    assert cfg.tilt == 30.0
    assert cfg.azimuth == 200.0
    assert cfg.latitude == 34.0


def test_zero_valued_flag_is_kept():
    cfg = cli.resolve_config(cli.build_parser().parse_args(["corpus", "--k", "0"]))
    assert cfg.k == 0


def test_unknown_config_key(tmp_path, capsys):
    config = _write_config(tmp_path, {"lambda_three": 2.0})
    assert cli.main(["synth", "--config", config]) == cli.EXIT_ERROR
    assert "lambda_three" in capsys.readouterr().err


def test_config_must_be_json_object(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("not json")
    assert cli.main(["synth", "--config", str(bad)]) == cli.EXIT_ERROR
    with pytest.raises(ConfigError):
        cli.load_config(_write_config(tmp_path, [1, 2, 3]))


def test_malformed_obstruction():
    with pytest.raises(ConfigError):
        cli.RunConfig(obstruction=[[150.0, 210.0]]).obstruction_model()
    obs = cli.RunConfig(obstruction=[[150.0, 210.0, 40.0, 1.0]]).obstruction_model()
    assert obs.segments[0].elevation_threshold == 40.0


def test_parameter_mapping():
    cfg = cli.RunConfig(lambda3=2.5, norm_mode="squared", max_iter=10)
    params = cfg.sd_params()
    assert params.lambda_3 == 2.5
    assert params.norm_mode == "squared"
    assert params.max_iter == 10


def test_solver_flags_reach_the_engine():
    args = cli.build_parser().parse_args(["analyze", "--abs-tol", "1e-5", "--rel-tol", "1e-4",
                                          "--rho", "3"])
    params = cli.resolve_config(args).sd_params()
    assert params.abs_tol == 1e-5
    assert params.rel_tol == 1e-4
    assert params.rho == 3.0
    assert cli.RunConfig().sd_params() == cli.SdParams()


# ── Exit codes ───────────────────────────────────────────────────────────────

def test_usage_errors():
    assert cli.main(["nonsense"]) == cli.EXIT_ERROR
    assert cli.main(["--help"]) == cli.EXIT_OK


def test_corpus_rejects_zero_k(tmp_path):
    assert cli.main(["corpus", "--k", "0", "--corpus", str(tmp_path / "c.txt")]) == cli.EXIT_ERROR
    assert not (tmp_path / "c.txt").exists()


def test_analyze_needs_input(tmp_path):
    assert cli.main(["analyze", "--corpus", str(tmp_path / "c.txt")]) == cli.EXIT_ERROR


def test_missing_corpus_named_in_error(tmp_path, capsys):
    series = tmp_path / "series.csv"
    series.write_text("timestamp,power_kw\n")
    missing = tmp_path / "nowhere" / "corpus.txt"
    code = cli.main(["analyze", "--input", str(series), "--corpus", str(missing)])
    assert code == cli.EXIT_ERROR
    assert str(missing) in capsys.readouterr().err


def test_validate_needs_inputs(tmp_path):
    assert cli.main(["validate", "--out", str(tmp_path)]) == cli.EXIT_ERROR


# ── Commands ─────────────────────────────────────────────────────────────────

@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = cli.main(["synth", "--out", str(out), "--interval", "3600", "--seed", "3",
                     "--obstruction", "150", "210", "40", "1"])
    assert code == cli.EXIT_OK
    return out


def test_synth_outputs(synth_dir):
    for name in ("series.csv", "ground_truth.json", "ground_truth_by_bin.csv",
                 "synth_config.json"):
        assert (synth_dir / name).exists(), name
    truth = json.loads((synth_dir / "ground_truth.json").read_text())
    assert truth["yearly_loss_kwh"] > 0
    assert len(truth["per_bin_loss_kwh"]) == 47
    config = json.loads((synth_dir / "synth_config.json").read_text())
    assert config["params_hash"] == truth["params_hash"]
    assert config["obstruction"] == [[150.0, 210.0, 40.0, 1.0]]


def test_synth_is_deterministic(synth_dir, tmp_path):
    code = cli.main(["synth", "--out", str(tmp_path), "--interval", "3600", "--seed", "3",
                     "--obstruction", "150", "210", "40", "1"])
    assert code == cli.EXIT_OK
    assert (tmp_path / "series.csv").read_bytes() == (synth_dir / "series.csv").read_bytes()
    assert ((tmp_path / "ground_truth.json").read_bytes()
            == (synth_dir / "ground_truth.json").read_bytes())


def test_synth_without_obstruction_has_zero_truth(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path), "--interval", "3600"]) == cli.EXIT_OK
    truth = json.loads((tmp_path / "ground_truth.json").read_text())
    assert truth["yearly_loss_kwh"] == 0.0
    assert not any(truth["per_bin_loss_kwh"])


def test_validate_reference_against_itself(synth_dir, tmp_path):
    truth = str(synth_dir / "ground_truth.json")
    code = cli.main(["validate", "--report", truth, "--truth", truth, "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["rmse_kwh"] == 0.0
    assert metrics["re_pct"] == 0.0


def test_corpus_command(tmp_path, capsys):
    config = _write_config(tmp_path, {"lat_grid": [34.0], "tilt_grid": [10.0, 20.0, 30.0],
                                      "azimuth_grid": [150.0, 180.0]})
    path = tmp_path / "corpus.txt"
    code = cli.main(["corpus", "--config", config, "--k", "4", "--corpus", str(path)])
    assert code == cli.EXIT_OK
    assert path.exists()
    out = capsys.readouterr().out
    assert "Profiles (N_c): 282" in out
    assert "Fingerprint:" in out


@pytest.mark.slow
def test_analyze_synthetic_series(tmp_path):
    synth_dir = tmp_path / "synth"
    assert cli.main(["synth", "--out", str(synth_dir), "--interval", "900",
                     "--obstruction", "150", "210", "40", "1"]) == cli.EXIT_OK
    config = _write_config(tmp_path, {"lat_grid": [34.0], "tilt_grid": [10.0, 20.0, 30.0],
                                      "azimuth_grid": [150.0, 180.0, 210.0]})
    corpus = str(tmp_path / "corpus.txt")
    assert cli.main(["corpus", "--config", config, "--corpus", corpus]) == cli.EXIT_OK

    out = tmp_path / "analysis"
    code = cli.main(["analyze", "--input", str(synth_dir / "series.csv"), "--corpus", corpus,
                     "--truth", str(synth_dir / "ground_truth.json"), "--out", str(out)])
    assert code in (cli.EXIT_OK, cli.EXIT_WARNINGS)
    report = json.loads((out / "shade_report.json").read_text())
    assert report["loss_fraction_pct"] > 0
    assert report["rmse_kwh"] is not None
    for name in ("transformed_y.csv", "decomposition_x3.csv", "heatmap_x3.png",
                 "component_days.csv", "day_matrix.png"):
        assert (out / name).exists(), name


@pytest.mark.slow
def test_validate_sweep_uses_configured_obstruction(tmp_path):
    config = _write_config(tmp_path, {"lat_grid": [34.0], "tilt_grid": [10.0, 20.0, 30.0],
                                      "azimuth_grid": [150.0, 180.0, 210.0],
                                      "sweep_azimuths": [180.0]})
    corpus = str(tmp_path / "corpus.txt")
    assert cli.main(["corpus", "--config", config, "--corpus", corpus]) == cli.EXIT_OK

    out = tmp_path / "sweep"
    # a sliver of northern horizon never blocks the sun at 34N
    code = cli.main(["validate", "--sweep", "--config", config, "--corpus", corpus,
                     "--interval", "900", "--out", str(out),
                     "--obstruction", "0", "10", "1", "1"])
    assert code == cli.EXIT_OK
    first = (out / "azimuth_sweep_systems.csv").read_text().splitlines()[0]
    assert first.startswith("# params_hash: ")
    assert len(first.split(":", 1)[1].strip()) == 64
    table = pd.read_csv(out / "azimuth_sweep_systems.csv", comment="#")
    assert list(table["azimuth"]) == [180.0]
    assert (table["true_loss_kwh"] == 0.0).all()
