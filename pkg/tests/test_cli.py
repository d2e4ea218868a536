import json

import numpy as np
import pytest

from bandsub.cli import main
from bandsub.dct import idct2d
from bandsub.tensor_io import load_tensor, save_tensor


@pytest.fixture
def source_file(tmp_path):
    z0 = np.random.default_rng(7).standard_normal((2, 12, 16))
    path = tmp_path / "source.fbst"
    save_tensor(z0, path)
    return path, z0


def run_args(source, outdir, *extra):
    return ["run", "--input", str(source), "--outdir", str(outdir),
            "--steps", "8", "--seed", "3", *extra]


def test_run_writes_output_and_manifest(source_file, tmp_path, capsys):
    source, z0 = source_file
    outdir = tmp_path / "out"
    assert main(run_args(source, outdir)) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["task"] == "translate"
    assert summary["denoiser_calls"] == 24  # 8 + 2*8

    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["schema"] == "bandsub-manifest-v1"
    assert manifest["config"]["steps"] == 8
    assert manifest["config"]["seed"] == 3
    assert manifest["denoiser_calls"] == {"null_text": 16, "target_text": 8, "total": 24}
    assert len(manifest["trace"]) == 8
    out = load_tensor(outdir / "output.fbst")
    assert out.shape == z0.shape


def test_default_run_counts(source_file, tmp_path, capsys):
    source, _ = source_file
    assert main(["run", "--input", str(source), "--outdir", str(tmp_path / "o"),
                 "--variant", "inversion", "--mode", "low", "--pt-lp", "60",
                 "--steps", "50", "--lambda", "0.5", "--omega", "7.5",
                 "--denoiser", "analytic"]) == 0
    assert json.loads(capsys.readouterr().out)["denoiser_calls"] == 150


def test_missing_input_exits_2(tmp_path, capsys):
    outdir = tmp_path / "out"
    assert main(run_args(tmp_path / "absent.fbst", outdir)) == 2
    assert not outdir.exists()  # no partial output


def test_seed_repeat_byte_identical(source_file, tmp_path):
    source, _ = source_file
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(run_args(source, a, "--seed", "7")) == 0
    assert main(run_args(source, b, "--seed", "7")) == 0
    assert (a / "output.fbst").read_bytes() == (b / "output.fbst").read_bytes()


def test_manifest_reproduces_run(source_file, tmp_path):
    source, _ = source_file
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(run_args(source, a, "--pt-lp", "42.5", "--omega", "3.0")) == 0
    assert main(["run", "--input", str(source), "--outdir", str(b),
                 "--config", str(a / "manifest.json")]) == 0
    assert (a / "output.fbst").read_bytes() == (b / "output.fbst").read_bytes()


def test_flags_override_config_file(source_file, tmp_path):
    source, _ = source_file
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"steps": 8, "seed": 1}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--input", str(source), "--outdir", str(a),
                 "--config", str(cfg_path), "--seed", "2"]) == 0
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 2 and manifest["config"]["steps"] == 8
    # and the override matters
    assert main(["run", "--input", str(source), "--outdir", str(b),
                 "--config", str(cfg_path)]) == 0
    assert (a / "output.fbst").read_bytes() != (b / "output.fbst").read_bytes()


def test_unknown_config_key_exits_1(source_file, tmp_path):
    source, _ = source_file
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"stepz": 8}))
    assert main(["run", "--input", str(source), "--outdir", str(tmp_path / "o"),
                 "--config", str(cfg_path)]) == 1


def test_bad_flag_exits_1(source_file, tmp_path):
    source, _ = source_file
    assert main(run_args(source, tmp_path / "o", "--variant", "warp")) == 1


def test_localized_run(source_file, tmp_path, capsys):
    source, z0 = source_file
    mask = np.zeros((1, 48, 64))
    mask[:, :, :32] = 1.0
    mask_path = tmp_path / "mask.fbst"
    save_tensor(mask, mask_path)
    outdir = tmp_path / "out"
    assert main(run_args(source, outdir, "--mask-input", str(mask_path))) == 0
    assert json.loads(capsys.readouterr().out)["task"] == "localized"
    out = load_tensor(outdir / "output.fbst")
    assert np.array_equal(out[:, :, 8:], z0[:, :, 8:])


def test_style_run(source_file, tmp_path, capsys):
    source, _ = source_file
    outdir = tmp_path / "out"
    assert main(run_args(source, outdir, "--shuffle", "--shuffle-seed", "4")) == 0
    assert json.loads(capsys.readouterr().out)["task"] == "style"
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["transform_params"]["crop_h"] >= 12


def test_mask_and_shuffle_conflict(source_file, tmp_path):
    source, _ = source_file
    mask_path = tmp_path / "mask.fbst"
    save_tensor(np.ones((1, 48, 64)), mask_path)
    assert main(run_args(source, tmp_path / "o", "--mask-input", str(mask_path),
                         "--shuffle")) == 1


def test_bridge_unreachable_exits_3(source_file, tmp_path):
    source, _ = source_file
    assert main(run_args(source, tmp_path / "o", "--denoiser", "bridge",
                         "--bridge-addr", "127.0.0.1:1")) == 3


# --- sweep -------------------------------------------------------------------------

def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "threshold,low_band_corr,high_band_corr"
    return [tuple(float(x) for x in line.split(",")) for line in lines[1:]]


def test_sweep_low_threshold_monotone(source_file, tmp_path):
    source, _ = source_file
    outdir = tmp_path / "sweep"
    assert main(["sweep", "--input", str(source), "--outdir", str(outdir),
                 "--sweep-param", "pt-lp", "--sweep-values", "10,30,60,90",
                 "--steps", "10", "--seed", "5"]) == 0
    rows = read_csv(outdir / "sweep.csv")
    assert [r[0] for r in rows] == [10.0, 30.0, 60.0, 90.0]
    low = [r[1] for r in rows]
    assert all(b >= a - 1e-9 for a, b in zip(low, low[1:]))
    for value in (10, 30, 60, 90):
        assert (outdir / f"run_{value}" / "output.fbst").exists()


def test_sweep_single_value(source_file, tmp_path):
    source, _ = source_file
    outdir = tmp_path / "sweep"
    assert main(["sweep", "--input", str(source), "--outdir", str(outdir),
                 "--sweep-param", "pt-hp", "--sweep-values", "5",
                 "--steps", "8"]) == 0
    assert len(read_csv(outdir / "sweep.csv")) == 1


def test_sweep_empty_values_exits_1(source_file, tmp_path):
    source, _ = source_file
    assert main(["sweep", "--input", str(source), "--outdir", str(tmp_path / "s"),
                 "--sweep-param", "pt-lp", "--sweep-values", ","]) == 1


def test_sweep_parallel_matches_serial(source_file, tmp_path):
    source, _ = source_file
    serial, parallel = tmp_path / "s1", tmp_path / "s2"
    args = ["--sweep-param", "pt-lp", "--sweep-values", "20,80", "--steps", "8"]
    assert main(["sweep", "--input", str(source), "--outdir", str(serial), *args]) == 0
    assert main(["sweep", "--input", str(source), "--outdir", str(parallel),
                 "--jobs", "2", *args]) == 0
    assert (serial / "sweep.csv").read_text() == (parallel / "sweep.csv").read_text()


# --- band report --------------------------------------------------------------------

def test_band_report_constant_tensor(tmp_path, capsys):
    path = tmp_path / "c.fbst"
    save_tensor(np.full((1, 8, 8), 3.0), path)
    assert main(["band-report", "--input", str(path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["low"] == pytest.approx(1.0, abs=1e-12)


def test_band_report_partition_sums_to_one(tmp_path, capsys):
    path = tmp_path / "n.fbst"
    save_tensor(np.random.default_rng(0).standard_normal((1, 64, 64)), path)
    assert main(["band-report", "--input", str(path), "--kind", "absolute",
                 "--th-lp", "4", "--th-mp1", "4", "--th-mp2", "9", "--th-hp", "9"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["low"] + report["mid"] + report["high"] == pytest.approx(1.0, abs=1e-10)


def test_band_report_top_frequency_cosine(tmp_path, capsys):
    S = np.zeros((1, 16, 16))
    S[0, 15, 15] = 1.0
    path = tmp_path / "hf.fbst"
    save_tensor(idct2d(S), path)
    assert main(["band-report", "--input", str(path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["high"] == pytest.approx(1.0, abs=1e-12)
    assert report["low"] == pytest.approx(0.0, abs=1e-12)
