import json
import math
import os
import subprocess

import pytest

import somno


def test_severity_and_quantize():
    assert somno.severity_of(26.0) == "moderate"
    assert somno.severity_of(30.01) == "severe"
    assert list(somno.quantize([1.23456e-4, -1.23456e-4], 4e-5)) == pytest.approx([1.2e-4, -1.2e-4], rel=1e-12)
    with pytest.raises(somno.InputError):
        somno.severity_of(-1.0)


def test_statistics():
    icc, p = somno.icc([1, 2, 3, 4], [1, 2, 3, 4])
    assert icc == 1.0 and p < 1e-10
    m = somno.binary_metrics([18, 20, 10, 5], [20, 10, 16, 5], 15)
    assert m["sensitivity"] == 0.5 and m["ppv"] == 0.5
    ba = somno.bland_altman([12, 18, 33], [10, 20, 30])
    assert ba["bias"] == pytest.approx(-1.0)
    assert ba["sd"] == pytest.approx(math.sqrt(7.0))
    r, _ = somno.pearson([1, 2, 3, 5], [2, 4, 6, 10])
    assert r == pytest.approx(1.0)
    match = somno.event_match([("obstructive_apnea", 130.0, 140.0)], [("central_apnea", 100.0, 120.0)])
    assert match["ppv"] == 1.0 and match["sensitivity"] == 1.0
    with pytest.raises(somno.ComputeError):
        somno.min_threshold_for_ppv([20, 5, 30, 2], [10, 10, 4, 12], 15, 1.0)
    lo, hi = somno.bootstrap_mean_ci([3.0] * 10, 500, 1)
    assert lo == hi == 3.0


def test_audio_power():
    tone = [math.sin(2 * math.pi * 200 * i / 8000) for i in range(8000)]
    assert all(abs(v + 3.0103) < 0.01 for v in somno.audio_power(tone))


def test_generate_and_detect():
    rec = somno.generate_recording({"duration_h": "1.5", "target_ahi": "25", "seed": "4", "noise_g": "0.001"})
    assert len(rec["events"]) > 0
    events, hypnogram = somno.detect(rec["x"], rec["y"], rec["z"], rec["audio_power"])
    assert len(events) > 0
    assert somno.compute_ahi(events, hypnogram) > 5.0
    with pytest.raises(somno.ComputeError):
        somno.generate_recording({"duration_h": "1", "target_ahi": "90"})


def test_cli_round_trip(tmp_path):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text("patients = 5\nduration_h = 3\nsampler = uniform\nahi_lo = 2\nahi_hi = 50\n")
    code, _, log = somno.run_cli(["synth", "--out", str(tmp_path / "c"), "--seed", "3", "--config", str(cfg)])
    assert code == 0, log
    ecfg = tmp_path / "eval.cfg"
    ecfg.write_text("n_resamples = 500\n")
    args = ["eval", str(tmp_path / "c" / "cohort.json"), "--seed", "1", "--out", str(tmp_path / "r"), "--config", str(ecfg)]
    code, _, log = somno.run_cli(args)
    assert code == 0, log
    text = (tmp_path / "r" / "eval_report.json").read_text()
    assert "schema_version" in json.loads(text)
    assert "AHI ≥ 15" in somno.render_report(text)


def test_executable_exit_codes(tmp_path):
    exe = os.environ.get("SOMNO_BIN")
    if not exe:
        pytest.skip("SOMNO_BIN not set")
    (tmp_path / "empty.json").write_text("[]")
    done = subprocess.run([exe, "eval", str(tmp_path / "empty.json"), "--seed", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert done.returncode == 2
    assert "empty cohort" in done.stderr
    assert subprocess.run([exe, "bogus"], capture_output=True).returncode == 1
