import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from crcseg import io as cio
from crcseg.cli import EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main, parse_alphas


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--height", "16", "--width", "16", "--n", "60", "--seed", "5", "--out", str(out), "--quiet"]) == 0
    return out / "manifest.json"


@pytest.fixture(scope="module")
def clean_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("clean")
    args = ["synth", "--height", "12", "--width", "12", "--n", "40", "--noise-std", "0",
            "--fg-mean", "0.9", "--bg-mean", "0.1", "--out", str(out), "--quiet"]
    assert main(args) == 0
    return out / "manifest.json"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_synth_writes_manifest(dataset, capsys):
    doc = json.loads(dataset.read_text())
    assert doc["version"] == 1 and len(doc["samples"]) == 60
    assert len(cio.load_manifest(dataset)) == 60


def test_synth_prints_manifest_path(tmp_path, capsys):
    assert main(["synth", "--n", "2", "--height", "4", "--width", "4", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == str(tmp_path / "manifest.json")


def test_synth_rerun_is_identical(tmp_path):
    flags = ["synth", "--n", "5", "--height", "8", "--width", "8", "--seed", "3", "--quiet"]
    main(flags + ["--out", str(tmp_path / "a")])
    main(flags + ["--out", str(tmp_path / "b")])
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 11
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_invalid_config(tmp_path, capsys):
    code = main(["synth", "--fg-mean", "0.1", "--bg-mean", "0.9", "--n", "2", "--out", str(tmp_path)])
    assert code == EXIT_USAGE
    assert "fg_mean" in capsys.readouterr().err


def test_calibrate_clean_data(clean_dataset, tmp_path):
    code = main(["calibrate", "--manifest", str(clean_dataset), "--alpha", "0.25", "--loss", "fdr",
                 "--out", str(tmp_path), "--quiet"])
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "calibration.json").read_text())
    assert doc["feasible"] is True
    assert doc["certified_bound"] <= 0.25
    assert doc["n_cal"] == 40


def test_calibrate_infeasible_exit_code(tmp_path):
    main(["synth", "--n", "1", "--height", "4", "--width", "4", "--out", str(tmp_path), "--quiet"])
    code = main(["calibrate", "--manifest", str(tmp_path / "manifest.json"), "--alpha", "0.25",
                 "--out", str(tmp_path), "--quiet"])
    assert code == EXIT_INFEASIBLE
    doc = json.loads((tmp_path / "calibration.json").read_text())
    assert doc["feasible"] is False and doc["certified_bound"] is None and doc["lambda_hat"] == 1.0


def test_calibrate_bad_alpha_fails_before_io(tmp_path):
    code = main(["calibrate", "--manifest", str(tmp_path / "missing.json"), "--alpha", "1.5", "--out", str(tmp_path / "o")])
    assert code == EXIT_USAGE
    assert not (tmp_path / "o").exists()


def test_calibrate_bound_below_alpha_is_usage_error(dataset, tmp_path):
    code = main(["calibrate", "--manifest", str(dataset), "--loss", "fnr", "--bound-b", "0.2",
                 "--alpha", "0.25", "--out", str(tmp_path)])
    assert code == EXIT_USAGE
    assert not (tmp_path / "calibration.json").exists()


def test_missing_manifest_is_io_error(tmp_path):
    code = main(["calibrate", "--manifest", str(tmp_path / "nope.json"), "--alpha", "0.3", "--out", str(tmp_path)])
    assert code == EXIT_IO


def test_bad_manifest_is_validation_error(tmp_path):
    (tmp_path / "m.json").write_text('{"version": 1, "samples": 3}')
    code = main(["calibrate", "--manifest", str(tmp_path / "m.json"), "--alpha", "0.3", "--out", str(tmp_path)])
    assert code == EXIT_VALIDATION


def test_experiment_defaults(dataset, tmp_path):
    assert main(["experiment", "--manifest", str(dataset), "--out", str(tmp_path), "--quiet", "--no-plot"]) == 0
    rows = read_csv(tmp_path / "fnr_sweep_trials.csv")
    assert len(rows) == 90
    assert list(rows[0]) == list(cio.REPORT_COLUMNS)
    assert cio.read_json_report(tmp_path / "fnr_sweep_trials.json") == cio.read_csv_report(tmp_path / "fnr_sweep_trials.csv")
    plot = read_csv(tmp_path / "fnr_sweep_plot_data.csv")
    assert list(plot[0]) == ["alpha", "mean_loss", "std_loss", "companion_mean", "companion_std"]
    assert [float(r["alpha"]) for r in plot] == pytest.approx([0.1 * k for k in range(1, 10)])
    summary = read_csv(tmp_path / "fnr_sweep_summary.csv")
    assert all(r["n_trials"] == "10" for r in summary)
    meta = json.loads((tmp_path / "fnr_sweep.meta.json").read_text())
    assert meta["schema_version"] == 1 and meta["seed"] == 0
    assert not (tmp_path / "fnr_sweep.png").exists()


def test_experiment_single_trial_has_zero_std(dataset, tmp_path):
    assert main(["experiment", "--manifest", str(dataset), "--trials", "1", "--loss", "fdr",
                 "--out", str(tmp_path), "--quiet", "--no-plot"]) == 0
    for r in read_csv(tmp_path / "fdr_sweep_plot_data.csv"):
        assert float(r["std_loss"]) == 0 and float(r["companion_std"]) == 0


def test_experiment_too_few_test_samples(tmp_path):
    main(["synth", "--n", "100", "--height", "4", "--width", "4", "--out", str(tmp_path), "--quiet"])
    code = main(["experiment", "--manifest", str(tmp_path / "manifest.json"), "--cal-fraction", "0.999",
                 "--out", str(tmp_path), "--quiet"])
    assert code == EXIT_VALIDATION


def test_experiment_renders_figure(dataset, tmp_path):
    assert main(["experiment", "--manifest", str(dataset), "--trials", "2", "--alphas", "0.2,0.25,0.5",
                 "--out", str(tmp_path), "--quiet"]) == 0
    png = tmp_path / "fnr_sweep.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_ratio_ablation_defaults(dataset, tmp_path):
    assert main(["ratio-ablation", "--manifest", str(dataset), "--out", str(tmp_path), "--quiet"]) == 0
    rows = cio.read_csv_report(tmp_path / "fnr_ratio_trials.csv")
    assert [r["ratio"] for r in rows] == pytest.approx([0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1])
    assert all(r["alpha"] == 0.25 for r in rows)
    assert (tmp_path / "fnr_ratio.png").exists()
    plot = read_csv(tmp_path / "fnr_ratio_plot_data.csv")
    assert plot[0]["cal_test"] == "9:1" and plot[-1]["cal_test"] == "1:9"


def test_ratio_ablation_records_infeasible_row(tmp_path):
    main(["synth", "--n", "10", "--height", "8", "--width", "8", "--out", str(tmp_path), "--quiet"])
    code = main(["ratio-ablation", "--manifest", str(tmp_path / "manifest.json"), "--out", str(tmp_path),
                 "--quiet", "--no-plot"])
    assert code == EXIT_OK
    rows = cio.read_csv_report(tmp_path / "fnr_ratio_trials.csv")
    last = rows[-1]
    assert last["n_cal"] == 1 and last["feasible"] is False


def test_curves(tmp_path):
    main(["synth", "--n", "2", "--height", "6", "--width", "6", "--out", str(tmp_path), "--quiet"])
    assert main(["curves", "--manifest", str(tmp_path / "manifest.json"), "--out", str(tmp_path), "--quiet"]) == 0
    rows = read_csv(tmp_path / "fnr_curves.csv")
    assert len(rows) == 202 + 101
    by_id = {}
    for r in rows:
        by_id.setdefault(r["sample_id"], []).append((float(r["lambda"]), float(r["loss"])))
    assert set(by_id) == {"s00000", "s00001", "__mean__"}
    for sid in ("s00000", "s00001"):
        pts = sorted(by_id[sid])
        losses = [l for _, l in pts]
        assert all(a >= b for a, b in zip(losses, losses[1:]))  # non-increasing in lambda
    mean = np.array([l for _, l in by_id["__mean__"]])
    expected = (np.array([l for _, l in by_id["s00000"]]) + np.array([l for _, l in by_id["s00001"]])) / 2
    assert np.allclose(mean, expected, rtol=0, atol=1e-15)
    assert (tmp_path / "fnr_curves.png").exists()


def test_grid_points_flag(tmp_path):
    main(["synth", "--n", "2", "--height", "4", "--width", "4", "--out", str(tmp_path), "--quiet"])
    main(["curves", "--manifest", str(tmp_path / "manifest.json"), "--grid-points", "11", "--loss", "fdr",
          "--out", str(tmp_path), "--quiet", "--no-plot"])
    assert len(read_csv(tmp_path / "fdr_curves.csv")) == 3 * 11


def test_convert_pgm(tmp_path):
    (tmp_path / "in.pgm").write_bytes(b"P5\n2 1\n255\n\x00\x80")
    assert main(["convert-pgm", str(tmp_path / "in.pgm"), "out.msk", "--out", str(tmp_path), "--quiet"]) == 0
    assert cio.read_mask(tmp_path / "out.msk").values.tolist() == [[0, 1]]


def test_quiet_suppresses_stdout(dataset, tmp_path, capsys):
    main(["calibrate", "--manifest", str(dataset), "--alpha", "0.5", "--out", str(tmp_path), "--quiet"])
    assert capsys.readouterr().out == ""
    main(["calibrate", "--manifest", str(dataset), "--alpha", "0.5", "--out", str(tmp_path)])
    assert "calibration.json" in capsys.readouterr().out


def test_parse_alphas():
    assert parse_alphas("0.1:0.9:0.1") == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    assert parse_alphas("0.25") == [0.25]
    assert parse_alphas("0.1,0.5") == [0.1, 0.5]
    assert parse_alphas("0.2:0.2:0.1") == [0.2]


def test_no_subcommand_is_usage_error():
    assert main([]) == EXIT_USAGE


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "crcseg", "synth", "--n", "1", "--height", "2", "--width", "2",
                          "--out", str(tmp_path), "--quiet"], capture_output=True)
    assert res.returncode == 0 and res.stdout == b""
    assert (tmp_path / "manifest.json").exists()
