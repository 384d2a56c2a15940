import configparser
import hashlib

import pytest

from i3sb import cli

FAST = """
[dataset]
train_count = 3
test_count = 2
size = 16
[predictor]
iters = 120
hidden = 8, 8
[sampler]
N = 4, 6
[verify]
trials = 50
M = 20000
e2e_M = 10000
"""


def _write(tmp_path, extra="", name="exp.ini"):
    cp = configparser.ConfigParser()
    cp.read_string(FAST)
    cp.read_string(extra)
    path = tmp_path / name
    with open(path, "w") as fh:
        cp.write(fh)
    return path


def _digests(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def results(tmp_path, monkeypatch):
    root = tmp_path / "res"
    monkeypatch.setenv("BRIDGE_RESULTS_DIR", str(root))
    return root


def test_full_pipeline(tmp_path, results):
    cfg = str(_write(tmp_path, "[sampler]\nrecord_trajectory = true\n"))
    assert cli.main(["gen-data", "--config", cfg]) == 0
    manifest = (results / "data" / "test" / "manifest.tsv").read_bytes()
    assert cli.main(["gen-data", "--config", cfg]) == 0
    assert (results / "data" / "test" / "manifest.tsv").read_bytes() == manifest
    assert cli.main(["train", "--config", cfg]) == 0
    assert (results / "model" / "loss.csv").read_text().startswith("iteration,loss\n100,")
    assert cli.main(["sample", "--config", cfg, "--jobs", "2"]) == 0
    first = _digests(results / "samples")
    assert cli.main(["sample", "--config", cfg]) == 0
    assert _digests(results / "samples") == first
    assert "I3SB_N6/00001.pgm" in first and "I2SB_N4/trajectories/00000/manifest.tsv" in first
    assert cli.main(["eval", "--config", cfg]) == 0
    rows = (results / "eval" / "metrics.csv").read_text().splitlines()
    assert rows[0] == "image_id,method,N,ssim,haralick_distance,rmse"
    assert sum(r.split(",")[1] == "QD" for r in rows) == 2 + 2
    assert any(r.startswith("mean,I3SB,6,") for r in rows) and any(r.startswith("std,I2SB,4,") for r in rows)


def test_cheat_oracle_sampling_recovers_clean(tmp_path, results):
    from i3sb.degrade import load_dataset
    from i3sb.tensor_io import read_tensor
    import numpy as np

    cfg = str(_write(tmp_path, "[predictor]\nkind = cheat\n"))
    assert cli.main(["gen-data", "--config", cfg]) == 0
    assert cli.main(["sample", "--config", cfg]) == 0
    for ident, clean, _ in load_dataset(results / "data" / "test"):
        out = read_tensor(results / "samples" / "I3SB_N6" / f"{ident}.bin")
        np.testing.assert_allclose(out.data, clean.data, atol=1e-5)
    assert cli.main(["eval", "--config", cfg]) == 0
    for row in (results / "eval" / "metrics.csv").read_text().splitlines()[1:]:
        fields = row.split(",")
        if fields[0] == "00000" and fields[1] == "I2SB":
            assert float(fields[3]) == pytest.approx(1.0, abs=1e-6)
            assert float(fields[4]) == pytest.approx(0.0, abs=1e-6)


def test_gen_data_conflict_and_force(tmp_path, results, capsys):
    cfg = str(_write(tmp_path))
    assert cli.main(["gen-data", "--config", cfg]) == 0
    other = str(_write(tmp_path, "[dataset]\nseed = 99\n", "other.ini"))
    assert cli.main(["gen-data", "--config", other]) == 2
    assert "--force" in capsys.readouterr().err
    assert cli.main(["gen-data", "--config", other, "--force"]) == 0


def test_config_errors(tmp_path, results, capsys):
    assert cli.main(["gen-data", "--config", str(_write(tmp_path, "[dataset]\nsize = 18\n"))]) == 2
    assert "[dataset] size" in capsys.readouterr().err
    assert cli.main(["gen-data", "--config", str(tmp_path / "missing.ini")]) == 2
    cfg = str(_write(tmp_path, "[schedule]\nN = 5\n"))
    assert cli.main(["gen-data", "--config", cfg]) == 0
    assert cli.main(["sample", "--config", cfg]) == 2
    assert "does not match" in capsys.readouterr().err


def test_train_resume_unsupported_and_seed_matters(tmp_path, results, capsys):
    cfg = str(_write(tmp_path))
    assert cli.main(["train", "--config", cfg]) == 2
    assert "gen-data" in capsys.readouterr().err
    assert cli.main(["gen-data", "--config", cfg]) == 0
    assert cli.main(["train", "--config", cfg, "--resume"]) == 2
    assert "--resume" in capsys.readouterr().err
    assert cli.main(["train", "--config", cfg]) == 0
    w0 = (results / "model" / "layer0_w.bin").read_bytes()
    assert cli.main(["train", "--config", str(_write(tmp_path, "[predictor]\nseed = 1\n", "seed1.ini"))]) == 0
    assert (results / "model" / "layer0_w.bin").read_bytes() != w0


def test_eval_missing_outputs(tmp_path, results, capsys):
    cfg = str(_write(tmp_path, "[predictor]\nkind = cheat\n"))
    assert cli.main(["gen-data", "--config", cfg]) == 0
    assert cli.main(["eval", "--config", cfg]) == 2
    assert "00000" in capsys.readouterr().err
    assert cli.main(["sample", "--config", cfg]) == 0
    (results / "samples" / "I2SB_N4" / "00099.bin").write_bytes(
        (results / "samples" / "I2SB_N4" / "00000.bin").read_bytes())
    assert cli.main(["eval", "--config", cfg]) == 2
    assert "00099" in capsys.readouterr().err


def test_verify_exit_codes(tmp_path, results):
    cfg = str(_write(tmp_path))
    assert cli.main(["verify", "--config", cfg]) == 0
    assert (results / "verify" / "summary.txt").read_text().count("PASS") == 3
    assert cli.main(["verify", "--config", cfg, "--mutate"]) == 1
    summary = (results / "verify" / "summary.txt").read_text()
    assert summary.count("FAIL") == 3
    assert (results / "verify" / "marginal.csv").exists()


def test_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[dataset]\nsize = 16\n[dataset]\n")
    assert cli.main(["gen-data", "--config", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_config_roundtrip():
    exp = cli.load_config()
    text = cli.dump_config(exp)
    again = cli.Experiment(__import__("configparser").ConfigParser())
    again.cp.read_string(text)
    assert cli.dump_config(again) == text
    assert exp.steps() == (20, 50, 100)
