import json
import subprocess
import sys

import numpy as np
import pytest

from evafuse.cli import main
from evafuse.featureio import read_features

FILES = ["ced_layer04.evaf", "ced_layer08.evaf", "ced_layer12.evaf", "whisper.evaf", "tokens.evaf"]


@pytest.fixture(scope="module")
def gen_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["gen", "--seed", "7", "--duration", "1.6", "--out", str(out)]) == 0
    return out


def _pipeline(gen_dir, out, *extra):
    return main(["pipeline", "--in", str(gen_dir), "--out", str(out), *extra])


def test_gen_writes_five_files_and_manifest(gen_dir):
    assert sorted(p.name for p in gen_dir.iterdir()) == sorted(FILES + ["manifest.json"])
    manifest = json.loads((gen_dir / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert set(manifest["files"]) == set(FILES)
    assert len(manifest["config_hash"]) == 64
    assert manifest["config"]["duration_s"] == 1.6


def test_gen_is_byte_identical(gen_dir, tmp_path):
    assert main(["gen", "--seed", "7", "--duration", "1.6", "--out", str(tmp_path)]) == 0
    for name in FILES + ["manifest.json"]:
        assert (tmp_path / name).read_bytes() == (gen_dir / name).read_bytes(), name


def test_gen_rejects_zero_duration(tmp_path):
    assert main(["gen", "--duration", "0", "--out", str(tmp_path)]) == 1


def test_pipeline_lengths(gen_dir, tmp_path):
    assert _pipeline(gen_dir, tmp_path) == 0
    summary = json.loads((tmp_path / "pipeline_summary.json").read_text())
    lengths = summary["lengths"]
    assert lengths["fused_T"] == lengths["T_w"] == lengths["T_tok"] == 20
    assert lengths["T_c"] == 10
    assert read_features(tmp_path / "fused.evaf").T == 20
    assert summary["alpha"] == 0.01 and summary["band_mask"] == [1, 1, 1, 1]


def test_alpha_zero_matches_mask_ced(gen_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _pipeline(gen_dir, a, "--alpha", "0") == 0
    assert _pipeline(gen_dir, b, "--mask-ced") == 0
    fa, fb = read_features(a / "fused.evaf").data, read_features(b / "fused.evaf").data
    np.testing.assert_allclose(fa, fb, atol=1e-9, rtol=0)
    assert json.loads((b / "pipeline_summary.json").read_text())["mask_ced"] is True


def test_band_mask_recorded(gen_dir, tmp_path):
    assert _pipeline(gen_dir, tmp_path, "--band-mask", "0,1,1,1") == 0
    summary = json.loads((tmp_path / "pipeline_summary.json").read_text())
    assert summary["band_mask"] == [0, 1, 1, 1]
    assert summary["config"]["band_mask"] == [0, 1, 1, 1]


@pytest.mark.parametrize("mask", ["0,1,1", "0,1,2,1", "a,b,c,d"])
def test_bad_band_mask(gen_dir, tmp_path, mask):
    assert _pipeline(gen_dir, tmp_path, "--band-mask", mask) == 1


def test_pipeline_is_deterministic(gen_dir, tmp_path):
    assert _pipeline(gen_dir, tmp_path / "1") == 0
    assert _pipeline(gen_dir, tmp_path / "2") == 0
    for name in ("fused.evaf", "pipeline_summary.json"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()


def test_missing_inputs_exit_2(gen_dir, tmp_path):
    src = tmp_path / "partial"
    src.mkdir()
    for name in FILES[:3]:
        (src / name).write_bytes((gen_dir / name).read_bytes())
    assert _pipeline(src, tmp_path / "out") == 2


def test_corrupt_input_exit_2(gen_dir, tmp_path):
    src = tmp_path / "bad"
    src.mkdir()
    for name in FILES:
        (src / name).write_bytes((gen_dir / name).read_bytes())
    (src / "whisper.evaf").write_bytes(b"XXXX" + (gen_dir / "whisper.evaf").read_bytes()[4:])
    assert _pipeline(src, tmp_path / "out") == 2


def test_dimension_mismatch_is_validation_error(gen_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d_llm": 32}))
    assert _pipeline(gen_dir, tmp_path / "out", "--config", str(cfg)) == 1


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"version": 1, "seed": 3, "duration_s": 0.8, "d_ced": 16, "d_whisper": 8, "d_llm": 8}))
    out = tmp_path / "g"
    assert main(["gen", "--config", str(cfg), "--seed", "4", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 4 and manifest["config"]["d_ced"] == 16
    assert read_features(out / "ced_layer12.evaf").data.shape == (5, 4, 16)


def test_diag_dpi(tmp_path, capsys):
    assert main(["diag", "dpi", "--trials", "200", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "200/200 hold" in text and text.strip().endswith("PASS")
    report = json.loads((tmp_path / "diag_dpi.json").read_text())
    assert report["pass"] and report["rows"][0]["held"] == 200
    assert (tmp_path / "diag_dpi.txt").exists()


def test_diag_length(tmp_path, capsys):
    assert main(["diag", "length", "--window", "8", "--queries", "1", "--lengths", "750",
                 "--out", str(tmp_path)]) == 0
    assert "750 → 94" in capsys.readouterr().out
    report = json.loads((tmp_path / "diag_length.json").read_text())
    assert report["rows"][0]["qformer_length"] == 94


def test_diag_length_rejects_non_compressive_bank(tmp_path):
    assert main(["diag", "length", "--window", "2", "--queries", "2", "--out", str(tmp_path)]) == 1


def test_diag_grad(tmp_path, capsys):
    assert main(["diag", "grad", "--seed", "2", "--duration", "0.96", "--max-coords", "4",
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    for group in ("alpha", "gate_4", "gate_8", "gate_12", "proj_w", "proj_c"):
        line = next(l for l in out.splitlines() if l.startswith(group + " "))
        assert line.rstrip().endswith("PASS")


def test_diag_bands(tmp_path):
    assert main(["diag", "bands", "--trials", "2", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "diag_bands.json").read_text())
    assert len(report["configs"]) == 11 and report["pass"]
    assert all(c["fused_length"] == 100 for c in report["configs"])


def test_diag_reports_are_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["diag", "dpi", "--trials", "20", "--seed", "5", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "diag_dpi.json").read_bytes() == (tmp_path / "b" / "diag_dpi.json").read_bytes()


def test_unknown_diag_kind(tmp_path):
    assert main(["diag", "nonsense", "--out", str(tmp_path)]) == 1


def test_module_entry_point_and_logging(tmp_path):
    env = {"EVA_LOG_LEVEL": "debug", "PATH": "/usr/bin:/bin"}
    proc = subprocess.run([sys.executable, "-m", "evafuse", "gen", "--out", str(tmp_path)],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert proc.stdout == ""
    assert "INFO evafuse: wrote 5 feature files" in proc.stderr
