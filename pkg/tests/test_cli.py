"""Command line driver: artifact layout, summaries, config precedence."""

from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from craniokit import cli
from craniokit.cohort import load_manifest


def run(capsys, argv):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestPipelineArtifacts:
    def test_expected_files(self, micro_pipeline):
        for name in ["template.ply", "template_labels.csv", "manifest.csv",
                     "factors.csv", "eigenbasis.npz", "checkpoint.npz",
                     "training_log.csv", "training_curves.svg",
                     "disentanglement.csv", "disentanglement.svg",
                     "metrics.json", "analysis.npz", "confusion.csv",
                     "confusion.svg", "attribute_accuracy.csv",
                     "embedding.csv", "embedding.svg", "classification.json",
                     "index.json"]:
            assert (micro_pipeline / name).exists(), name

    def test_plan_outputs(self, micro_pipeline):
        plan = micro_pipeline / "plan"
        assert (plan / "ranking.csv").exists()
        assert (plan / "trajectory_latents.csv").exists()
        assert (plan / "trajectory.svg").exists()
        steps = sorted(plan.glob("step_*.ply"))
        disp = sorted(plan.glob("step_*_displacement.txt"))
        assert len(steps) == 3 and len(disp) == 3
        # first displacement file is the patient: all zeros
        values = np.loadtxt(disp[0])
        np.testing.assert_array_equal(values, np.zeros_like(values))

    def test_store_index_links_stages(self, micro_pipeline):
        index = json.loads((micro_pipeline / "index.json").read_text())
        assert len(index["datasets"]) == 1
        assert len(index["models"]) == 1
        assert len(index["analyses"]) == 1
        (model,) = index["models"].values()
        assert model["dataset"] in index["datasets"]
        assert model["metrics"]

    def test_training_log_format(self, micro_pipeline):
        lines = (micro_pipeline / "training_log.csv").read_text().splitlines()
        assert lines[0] == ("epoch,reconstruction,laplacian,kl,consistency,"
                            "val_reconstruction")
        assert len(lines) == 4  # header + 3 epochs

    def test_manifest_after_augment(self, micro_pipeline):
        records = load_manifest(micro_pipeline / "manifest.csv")
        aug = [r for r in records if r.provenance == "augmented"]
        assert aug and all(len(r.parents) == 2 for r in aug)
        assert all(r.split == "train" for r in aug)
        assert {r.split for r in records} == {"train", "val", "test"}

    def test_classification_summary(self, micro_pipeline):
        body = json.loads((micro_pipeline / "classification.json").read_text())
        assert 0.0 <= body["accuracy"] <= 1.0
        assert 0.0 <= body["macro_f1"] <= 1.0
        with open(micro_pipeline / "attribute_accuracy.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 16  # whole plus 15 attribute scopes
        assert rows[0]["scope"] == "whole"
        assert {r["scope"] for r in rows[1:]} == {
            f"attribute_{k}" for k in range(15)}


class TestCommandSummaries:
    def test_synth_summary(self, capsys, tmp_path):
        code, out, _ = run(capsys, ["synth", "--out", str(tmp_path),
                                    "--counts", "4", "3", "3", "3",
                                    "--subdivisions", "2", "--seed", "1"])
        assert code == 0
        body = json.loads(out)
        assert body["subjects"] == 13 and body["vertices"] == 66
        assert body["counts"] == {"Healthy": 4, "Apert": 3, "Crouzon": 3,
                                  "Muenke": 3}

    def test_spectra_rows(self, capsys, micro_pipeline):
        code, out, _ = run(capsys, ["spectra", "--out", str(micro_pipeline),
                                    "--basis-k", "12", "--components", "8",
                                    "--seed", "7"])
        assert code == 0
        body = json.loads(out)
        assert body["rows"] == body["subjects"] * 3 * 8
        with open(micro_pipeline / "spectra.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == body["rows"] + 1

    def test_no_subcommand_usage(self, capsys):
        code, _, err = run(capsys, [])
        assert code == 2 and "usage" in err.lower()


class TestErrorLines:
    def test_missing_inputs_yield_json_error(self, capsys, tmp_path):
        code, out, err = run(capsys, ["train", "--out", str(tmp_path)])
        assert code == 1 and out == ""
        body = json.loads(err)
        assert body["command"] == "train"
        assert body["error"] and body["type"]

    def test_bad_values_yield_json_error(self, capsys, tmp_path):
        code, _, err = run(capsys, ["synth", "--out", str(tmp_path),
                                    "--counts", "0", "0", "0", "0"])
        assert code == 1
        assert json.loads(err)["command"] == "synth"


class TestConfig:
    def test_config_beats_default_flag_beats_config(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"synth": {"counts": [3, 3, 3, 3],
                                             "subdivisions": 2}}))
        out1 = tmp_path / "a"
        code, out, _ = run(capsys, ["synth", "--out", str(out1),
                                    "--config", str(cfg)])
        assert code == 0
        assert json.loads(out)["subjects"] == 12  # config applied
        out2 = tmp_path / "b"
        code, out, _ = run(capsys, ["synth", "--out", str(out2),
                                    "--config", str(cfg),
                                    "--counts", "2", "2", "2", "2"])
        assert code == 0
        assert json.loads(out)["subjects"] == 8  # flag wins

    def test_unknown_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"synth": {"bogus": 1}}))
        code, _, err = run(capsys, ["synth", "--out", str(tmp_path / "x"),
                                    "--config", str(cfg)])
        assert code == 1 and "bogus" in json.loads(err)["error"]

    def test_unreadable_config(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{nope")
        code, _, err = run(capsys, ["synth", "--out", str(tmp_path / "x"),
                                    "--config", str(cfg)])
        assert code == 1 and "unreadable config" in json.loads(err)["error"]
