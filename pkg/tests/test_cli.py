"""CLI harness tests: exit codes, flows, determinism, and the env-var default."""

import json
from pathlib import Path

import pytest

from mmsent.cli import main

TINY = dict(d_t=8, heads=2, channels=3, height=2, width=2, image_blocks=1,
            fusion_blocks=1, cbam_reduction=4, d_attn=8, vocab_size=32,
            classes=2, n_t_max=8, batch_size=4, epochs=2)


@pytest.fixture
def tiny_setup(tmp_path):
    """A generated tiny dataset plus a matching config file."""
    data_dir = tmp_path / "data"
    code = main(["gen", "--out", str(data_dir), "--classes", "2", "--per-class", "6",
                 "--seed", "5", "--channels", "3", "--height", "2", "--width", "2",
                 "--seq-len", "6", "--vocab", "32"])
    assert code == 0
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({**TINY, "dataset_dir": str(data_dir)}))
    return tmp_path, data_dir, config_path


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        assert main(["train", "--no-such-flag"]) == 1
        assert "error" in capsys.readouterr().err

    def test_bad_config_file_is_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["train", "--config", str(bad)]) == 1
        assert "config" in capsys.readouterr().err

    def test_unknown_config_field_is_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"no_such_field": 1}))
        assert main(["train", "--config", str(bad)]) == 1

    def test_missing_dataset_is_two(self, tmp_path, capsys):
        assert main(["train", "--data", str(tmp_path / "nowhere"),
                     "--out", str(tmp_path / "r.json")]) == 2
        assert "dataset" in capsys.readouterr().err

    def test_invalid_dimension_combo_is_one(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"d_t": 30, "heads": 4}))
        assert main(["train", "--config", str(bad)]) == 1


class TestGen:
    def test_writes_files_and_prints_probe(self, tmp_path, capsys):
        out = tmp_path / "ds"
        assert main(["gen", "--out", str(out), "--per-class", "5"]) == 0
        assert (out / "manifest.json").exists() and (out / "records.jsonl").exists()
        printed = capsys.readouterr().out
        assert "nearest-centroid" in printed


class TestTrainEvalFlow:
    def test_train_writes_report_and_eval_reuses_params(self, tiny_setup, capsys):
        tmp_path, _, config_path = tiny_setup
        report_path = tmp_path / "report.json"
        params_path = tmp_path / "params.npz"
        assert main(["train", "--config", str(config_path), "--out", str(report_path),
                     "--save-params", str(params_path)]) == 0
        report = json.loads(report_path.read_text())
        assert len(report["epochs"]) == 2
        assert {"test_acc", "test_macro_f1"} <= set(report["final"])

        capsys.readouterr()  # drop the train command's output
        assert main(["eval", "--config", str(config_path), "--params", str(params_path),
                     "--split", "test"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["split"] == "test"
        assert payload["acc"] == report["final"]["test_acc"]

    def test_eval_without_params_file_is_one(self, tiny_setup):
        tmp_path, _, config_path = tiny_setup
        assert main(["eval", "--config", str(config_path),
                     "--params", str(tmp_path / "missing.npz")]) == 1

    def test_repeated_seed_gives_byte_identical_reports(self, tiny_setup):
        tmp_path, _, config_path = tiny_setup
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["train", "--config", str(config_path), "--out", str(a), "--seed", "11"]) == 0
        assert main(["train", "--config", str(config_path), "--out", str(b), "--seed", "11"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_epoch_and_flag_overrides_land_in_report(self, tiny_setup):
        tmp_path, _, config_path = tiny_setup
        out = tmp_path / "o.json"
        assert main(["train", "--config", str(config_path), "--out", str(out),
                     "--epochs", "1", "--no-use-cbam"]) == 0
        report = json.loads(out.read_text())
        assert len(report["epochs"]) == 1
        assert report["config"]["use_cbam"] is False
        assert "CBAM" not in report["ablation_label"]

    def test_output_dir_env_var(self, tiny_setup, monkeypatch):
        tmp_path, _, config_path = tiny_setup
        outdir = tmp_path / "outputs"
        outdir.mkdir()
        monkeypatch.setenv("MMSENT_OUT_DIR", str(outdir))
        assert main(["train", "--config", str(config_path)]) == 0
        assert (outdir / "report.json").exists()


class TestGradcheckCommand:
    def test_prints_table_and_exits_zero(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "full_model" in out and "PASS" in out
        assert "FAIL" not in out
