import os
import subprocess

import numpy as np
import pytest

import stereodistill as sd


def test_presets_and_profile():
    names = sd.preset_names()
    assert len(names) == 36
    small = sd.profile("BB21-ED1-N8", 64, 128)
    big = sd.profile("BB21-ED3-N32", 64, 128)
    assert small["params"] < big["params"]
    assert small["macs"] < big["macs"]
    assert sum(p for p, _ in big["modules"].values()) == big["params"]
    with pytest.raises(sd.ConfigError):
        sd.profile("BB99-ED1-N8")


def test_metrics_match_numpy():
    rng = np.random.default_rng(0)
    gt = rng.uniform(0, 40, (6, 7)).astype(np.float32)
    pred = rng.uniform(0, 40, (6, 7)).astype(np.float32)
    mask = rng.uniform(size=(6, 7)) > 0.3
    m = sd.metrics(pred, gt, mask)
    err = np.abs(pred - gt)[mask].astype(np.float64)
    assert m["n_valid"] == mask.sum()
    assert m["epe"] == pytest.approx(err.mean(), rel=1e-6)
    assert m["px3"] == pytest.approx(100 * (err > 3).mean())
    d1 = (err > 3) & (err > 0.05 * gt[mask])
    assert m["d1"] == pytest.approx(100 * d1.mean())


def test_synthetic_pair_and_pfm(tmp_path):
    left, right, disp, valid = sd.synth_sample(3, 32, 64, 12, 2)
    assert left.shape == (3, 32, 64)
    ys, xs = np.nonzero(valid)
    d = disp[ys, xs].astype(int)
    np.testing.assert_array_equal(left[:, ys, xs], right[:, ys, xs - d])
    path = str(tmp_path / "d.pfm")
    sd.write_pfm(path, disp)
    np.testing.assert_array_equal(sd.read_pfm(path), disp)


def test_network_predict_and_checkpoint(tmp_path):
    net = sd.StereoNet("BB14-ED1-N8", seed=1)
    assert net.name == "BB14-ED1-N8"
    rng = np.random.default_rng(1)
    left = rng.standard_normal((1, 3, 32, 64), dtype=np.float32)
    right = rng.standard_normal((1, 3, 32, 64), dtype=np.float32)
    out = net.predict(left, right)
    assert out.shape == (1, 32, 64)
    assert np.isfinite(out).all()
    path = str(tmp_path / "n.sdck")
    net.save(path)
    np.testing.assert_array_equal(sd.StereoNet.load(path).predict(left, right), out)
    with pytest.raises(sd.ShapeError):
        net.predict(left[:, :, :30], right[:, :, :30])


def test_cli_through_bindings(tmp_path):
    code, _, _ = sd.run_cli(["gen-data", "--out", str(tmp_path / "d"), "--count", "2", "--height", "32",
                             "--width", "64", "--max-disp", "12"])
    assert code == 0
    assert (tmp_path / "d" / "manifest.json").exists()
    code, _, err = sd.run_cli(["train", "--epochs", "0", "--out", str(tmp_path / "r")])
    assert code == 2
    assert err


def test_cli_binary_exit_codes(tmp_path):
    exe = os.environ.get("STEREODISTILL_CLI")
    if not exe:
        pytest.skip("CLI binary location not provided")
    r = subprocess.run([exe, "profile", "--preset", "BB21-ED1-N8", "--height", "64", "--width", "128"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert "BB21-ED1-N8" in r.stdout
    r = subprocess.run([exe, "evaluate", "--checkpoint", str(tmp_path / "none.sdck"), "--dataset",
                        str(tmp_path), "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 4
