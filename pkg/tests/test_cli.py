import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from jointdiff.cli import parse_config, run
from jointdiff.datagen import read_dataset
from jointdiff.errors import ConfigError
from jointdiff.jointmodel import load_checkpoint

TOY = Path(__file__).resolve().parents[1] / "configs" / "toy.json"


def tiny_config(tmp_path, **section_updates):
    cfg = json.loads(TOY.read_text())
    cfg["data"]["n_samples"] = 12
    cfg["model"].update(hidden_dim=16, connector_dim=16, n_inject_sites=2)
    cfg["train"].update(epochs=2, batch_size=4, lr=1e-3, save_every=1)
    cfg["sampling"].update(n_samples=4, T=5)
    cfg["profile"].update(n_bins=4, samples_per_bin=8)
    cfg["paths"] = {k: str(tmp_path / Path(v).name) for k, v in cfg["paths"].items()}
    for section, upd in section_updates.items():
        cfg[section].update(upd)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


@pytest.fixture
def trained(tmp_path):
    path, cfg = tiny_config(tmp_path)
    assert run(["make-data", str(path)]) == 0
    assert run(["train", str(path)]) == 0
    return path, cfg


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_example_config_is_valid(self):
        cfg = parse_config(json.loads(TOY.read_text()))
        assert cfg["sampling"]["gamma"] == 1.5

    def test_unknown_key_rejected(self):
        raw = json.loads(TOY.read_text())
        raw["train"]["momentum"] = 0.9
        with pytest.raises(ConfigError, match="train.momentum"):
            parse_config(raw)

    def test_wrong_type_rejected(self):
        raw = json.loads(TOY.read_text())
        raw["sampling"]["T"] = 2.5
        with pytest.raises(ConfigError, match="sampling.T"):
            parse_config(raw)


class TestMakeData:
    def test_writes_dataset_and_summary(self, tmp_path, capsys):
        path, cfg = tiny_config(tmp_path)
        assert run(["make-data", str(path)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["count"] == 12 and Path(cfg["paths"]["dataset"]).is_file()

    def test_deterministic(self, tmp_path):
        path, cfg = tiny_config(tmp_path)
        run(["make-data", str(path)])
        first = Path(cfg["paths"]["dataset"]).read_bytes()
        run(["make-data", str(path)])
        assert Path(cfg["paths"]["dataset"]).read_bytes() == first

    def test_missing_field_names_it(self, tmp_path, capsys):
        path, cfg = tiny_config(tmp_path)
        del cfg["data"]["jitter"]
        path.write_text(json.dumps(cfg))
        assert run(["make-data", str(path)]) == 2
        assert "data.jitter" in capsys.readouterr().err
        assert not Path(cfg["paths"]["dataset"]).exists()

    def test_invalid_values_leave_no_artifact(self, tmp_path):
        path, cfg = tiny_config(tmp_path, data={"n_events": 40})
        assert run(["make-data", str(path)]) == 2
        assert not Path(cfg["paths"]["dataset"]).exists()

    @pytest.mark.parametrize("text", ["{not json", json.dumps({"version": 2})])
    def test_unreadable_config(self, tmp_path, text):
        (tmp_path / "c.json").write_text(text)
        assert run(["make-data", str(tmp_path / "c.json")]) == 2

    def test_missing_config_file(self, tmp_path):
        assert run(["make-data", str(tmp_path / "nope.json")]) == 2

    def test_seed_override(self, tmp_path):
        path, cfg = tiny_config(tmp_path)
        run(["make-data", str(path)])
        a = Path(cfg["paths"]["dataset"]).read_bytes()
        run(["make-data", str(path), "--seed", "7"])
        assert Path(cfg["paths"]["dataset"]).read_bytes() != a


class TestTrain:
    def test_outputs(self, trained):
        _, cfg = trained
        rows = read_csv(cfg["paths"]["loss_csv"])
        assert rows[0] == ["epoch", "loss"] and [r[0] for r in rows[1:]] == ["1", "2"]
        assert load_checkpoint(cfg["paths"]["checkpoint"]).epoch == 2

    def test_resume_continues_numbering(self, tmp_path):
        path, cfg = tiny_config(tmp_path)
        run(["make-data", str(path)])
        assert run(["train", str(path), "--epochs", "1"]) == 0
        assert run(["train", str(path), "--epochs", "2", "--resume"]) == 0
        resumed = Path(cfg["paths"]["checkpoint"]).read_bytes()
        rows = read_csv(cfg["paths"]["loss_csv"])
        assert [r[0] for r in rows[1:]] == ["1", "2"]
        assert run(["train", str(path), "--epochs", "2"]) == 0
        assert Path(cfg["paths"]["checkpoint"]).read_bytes() == resumed
        assert read_csv(cfg["paths"]["loss_csv"]) == rows

    def test_bad_dataset_path(self, tmp_path):
        path, cfg = tiny_config(tmp_path)
        assert run(["train", str(path), "--dataset", str(tmp_path / "missing.jdds")]) == 2
        assert not Path(cfg["paths"]["checkpoint"]).exists()

    def test_resume_with_other_mode_refused(self, trained):
        path, _ = trained
        assert run(["train", str(path), "--resume", "--inject-mode", "cross_attention"]) == 2

    def test_inject_mode_override(self, tmp_path):
        path, cfg = tiny_config(tmp_path)
        run(["make-data", str(path)])
        assert run(["train", str(path), "--inject-mode", "cross_attention", "--epochs", "1"]) == 0
        assert load_checkpoint(cfg["paths"]["checkpoint"]).model.config.inject_mode == "cross_attention"


class TestGenerate:
    def test_bitwise_reproducible(self, trained, tmp_path):
        path, _ = trained
        outs = []
        for name in ("a", "b"):
            assert run(["generate", str(path), "--out-dir", str(tmp_path / name), "--seed", "3"]) == 0
            outs.append((tmp_path / name / "samples.jdds").read_bytes())
        assert outs[0] == outs[1]
        assert run(["generate", str(path), "--out-dir", str(tmp_path / "c"), "--seed", "4"]) == 0
        assert (tmp_path / "c" / "samples.jdds").read_bytes() != outs[0]

    def test_samples_and_metrics(self, trained, tmp_path):
        path, _ = trained
        out = tmp_path / "g"
        assert run(["generate", str(path), "--out-dir", str(out), "--gamma", "1.25",
                    "--guidance-v", "3", "--guidance-a", "2", "--n-samples", "5"]) == 0
        ds = read_dataset(out / "samples.jdds")
        assert len(ds) == 5 and ds[0].x_v.shape == (16, 8) and ds[0].x_a.shape == (64, 4)
        assert ds.meta["sampling"]["guidance_v"] == 3.0
        report = json.loads((out / "metrics.json").read_text())
        assert report["count"] == 5 and report["gamma"] == 1.25
        assert set(report["mean"]) == {"p", "r", "score_modified", "score_official"}

    @pytest.mark.parametrize("gamma", ["1.0", "1.25", "1.5", "1.75", "2.0"])
    def test_gamma_sweep(self, trained, tmp_path, gamma):
        path, _ = trained
        assert run(["generate", str(path), "--out-dir", str(tmp_path / gamma), "--gamma", gamma,
                    "--n-samples", "2"]) == 0

    def test_zero_samples(self, trained, tmp_path):
        path, _ = trained
        assert run(["generate", str(path), "--n-samples", "0", "--out-dir", str(tmp_path / "z")]) == 2
        assert not (tmp_path / "z").exists()

    def test_bad_gamma(self, trained, tmp_path):
        path, _ = trained
        assert run(["generate", str(path), "--gamma", "-1", "--out-dir", str(tmp_path / "z")]) == 2

    def test_incompatible_checkpoint(self, trained, tmp_path):
        path, cfg = trained
        raw = bytearray(Path(cfg["paths"]["checkpoint"]).read_bytes())
        raw[6] = 9  # format version
        bad = tmp_path / "future.ckpt"
        bad.write_bytes(bytes(raw))
        assert run(["generate", str(path), "--checkpoint", str(bad), "--out-dir", str(tmp_path / "x")]) == 3
        assert not (tmp_path / "x").exists()

    def test_mode_mismatch(self, trained, tmp_path):
        path, _ = trained
        assert run(["generate", str(path), "--inject-mode", "cross_attention",
                    "--out-dir", str(tmp_path / "x")]) == 2


class TestProfileAndEval:
    def test_profile_csv(self, trained):
        path, cfg = trained
        assert run(["profile-loss", str(path), "--gamma", "1.5"]) == 0
        rows = read_csv(cfg["paths"]["profile_csv"])
        assert rows[0] == ["t", "loss_v", "loss_a"] and len(rows) == 5
        assert float(rows[1][1]) == 1.0 and float(rows[1][2]) == 1.0

    def test_profile_too_many_bins(self, trained):
        path, cfg = trained
        assert run(["profile-loss", str(path), "--n-bins", "6"]) == 2
        assert not Path(cfg["paths"]["profile_csv"]).exists()

    def test_eval(self, trained, tmp_path, capsys):
        path, _ = trained
        run(["generate", str(path), "--out-dir", str(tmp_path / "s")])
        before = json.loads((tmp_path / "s" / "metrics.json").read_text())
        capsys.readouterr()
        assert run(["eval", str(tmp_path / "s")]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["av_align"][str(tmp_path / "s")] == before["mean"]["score_modified"]
        assert run(["eval", str(tmp_path / "s"), "--window", "3"]) == 0

    def test_eval_missing(self, tmp_path):
        assert run(["eval", str(tmp_path / "none")]) == 2

    def test_bad_subcommand(self):
        assert run(["frobnicate"]) == 2


def test_console_entry_point(tmp_path):
    path, cfg = tiny_config(tmp_path, data={"n_samples": 3})
    proc = subprocess.run([sys.executable, "-m", "jointdiff.cli", "make-data", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["count"] == 3
    proc = subprocess.run([sys.executable, "-m", "jointdiff.cli", "train", str(path), "--dataset", "/nonexistent"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "dataset not found" in proc.stderr
