import json
from pathlib import Path

import numpy as np
import pytest

from vmdcast.cli import (
    cmd_run,
    cmd_synth,
    load_run_config,
    main,
    stage_diagnose,
    synth_series,
)
from vmdcast.errors import ConfigError
from vmdcast.ingest import load_csv


SMALL_CONFIG = {
    "preset": "price",
    "seed": 1,
    "swvmd": {"window": 32, "k": 5, "lookback": 8},
    "network": {"layers": 1, "hidden": 8, "dropout": 0.0, "l1": 0.0, "l2": 0.0},
    "train": {"batch": 64, "max_epochs": 25, "lr0": 0.01, "patience": 8},
    "split": {"test_len": 40, "val_len": 40},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    input_csv = cmd_synth("trend-cycle", 400, 7, tmp / "input.csv")
    config_path = tmp / "config.json"
    config_path.write_text(json.dumps({**SMALL_CONFIG, "input": str(input_csv)}))
    return tmp, input_csv, config_path


@pytest.fixture(scope="module")
def finished_run(workspace):
    tmp, _, config_path = workspace
    cfg = load_run_config(config_path)
    outdir = cmd_run(cfg, tmp / "full_run")
    return outdir, cfg


class TestSynth:
    def test_two_tone_byte_identical(self, tmp_path):
        a = cmd_synth("two-tone", 1024, 7, tmp_path / "a.csv")
        b = cmd_synth("two-tone", 1024, 7, tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_output_is_ingestible(self, tmp_path):
        path = cmd_synth("random-walk", 100, 3, tmp_path / "w.csv")
        series = load_csv(path)
        assert len(series) == 100
        assert np.all(series.close > 0)

    def test_ar1_with_zero_phi_is_white(self):
        x = synth_series("ar1", 5000, 11, {"phi": 0.0, "sigma": 1.0})
        dev = x - x.mean()
        acf1 = float(np.dot(dev[:-1], dev[1:]) / np.dot(dev, dev))
        assert abs(acf1) < 0.05
        assert x.std() == pytest.approx(1.0, rel=0.1)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            synth_series("sawtooth", 100, 0)

    def test_non_positive_series_rejected(self):
        with pytest.raises(Exception, match="dipped"):
            synth_series("white-noise", 500, 0, {"base": 1.0, "sigma": 5.0})

    def test_random_walk_adf_pattern(self, tmp_path):
        # levels keep the unit root, increments reject it
        path = cmd_synth("random-walk", 1500, 5, tmp_path / "rw.csv")
        report = stage_diagnose(path, tmp_path / "diag.json")
        assert not report["close"]["adf"]["rejects"]["5"]
        assert report["log_returns"]["adf"]["rejects"]["1"]


class TestDecomposeCli:
    def test_columns_and_sidecar(self, tmp_path):
        csv = cmd_synth("two-tone", 256, 1, tmp_path / "t.csv")
        rc = main(["decompose", "--input", str(csv), "--outdir", str(tmp_path),
                   "--k", "3"])
        assert rc == 0
        header = (tmp_path / "decomposition.csv").read_text().splitlines()[0]
        assert header == "date,imf_1,imf_2,imf_3,omega_1,omega_2,omega_3"
        sidecar = json.loads((tmp_path / "decompose_config.json").read_text())
        assert sidecar["k"] == 3 and sidecar["alpha"] == 2000.0

    def test_deterministic(self, tmp_path):
        csv = cmd_synth("two-tone", 256, 1, tmp_path / "t.csv")
        for sub in ("a", "b"):
            (tmp_path / sub).mkdir()
            main(["decompose", "--input", str(csv), "--outdir",
                  str(tmp_path / sub)])
        assert (tmp_path / "a" / "decomposition.csv").read_bytes() == (
            tmp_path / "b" / "decomposition.csv"
        ).read_bytes()


class TestRun:
    def test_artifacts_and_manifest_complete(self, finished_run):
        outdir, _ = finished_run
        manifest = json.loads((outdir / "manifest.json").read_text())
        files = {
            str(p.relative_to(outdir))
            for p in outdir.rglob("*")
            if p.is_file() and p.name != "manifest.json"
        }
        assert set(manifest["artifacts"]) == files
        for name in ("series.csv", "diagnostics.json", "comparison.json",
                     "accuracy.json", "loss_curves.csv", "predictions_swvmd.csv"):
            assert name in files

    def test_rerun_from_manifest_identical_hashes(self, finished_run, tmp_path):
        outdir, _ = finished_run
        cfg = load_run_config(outdir / "manifest.json")
        second = cmd_run(cfg, tmp_path / "rerun")
        a = json.loads((outdir / "manifest.json").read_text())["artifacts"]
        b = json.loads((second / "manifest.json").read_text())["artifacts"]
        assert a == b

    def test_stage_chain_matches_run(self, finished_run, workspace):
        outdir, _ = finished_run
        tmp, input_csv, config_path = workspace
        chained = tmp / "chained"
        steps = [
            ["ingest", "--input", str(input_csv), "--outdir", str(chained)],
            ["diagnose", "--input", str(chained / "series.csv"),
             "--out", str(chained / "diagnostics.json")],
            ["build-dataset", "--config", str(config_path),
             "--outdir", str(chained)],
            ["train", "--config", str(config_path), "--outdir", str(chained),
             "--model", "swvmd"],
            ["train", "--config", str(config_path), "--outdir", str(chained),
             "--model", "baseline"],
            ["evaluate", "--config", str(config_path), "--outdir", str(chained)],
        ]
        for argv in steps:
            assert main(argv) == 0, argv
        run_files = {
            p.relative_to(outdir)
            for p in outdir.rglob("*")
            if p.is_file() and p.name != "manifest.json"
        }
        chained_files = {
            p.relative_to(chained) for p in chained.rglob("*") if p.is_file()
        }
        assert run_files == chained_files
        for rel in sorted(run_files):
            assert (outdir / rel).read_bytes() == (chained / rel).read_bytes(), rel

    def test_price_and_return_presets_share_geometry(self, workspace, tmp_path):
        tmp, input_csv, config_path = workspace
        doc = json.loads(config_path.read_text())
        metas = {}
        targets = {}
        for preset in ("price", "return"):
            doc["preset"] = preset
            cfg_path = tmp_path / f"{preset}.json"
            cfg_path.write_text(json.dumps(doc))
            outdir = tmp_path / preset
            outdir.mkdir()
            assert main(["ingest", "--input", str(input_csv),
                         "--outdir", str(outdir)]) == 0
            assert main(["build-dataset", "--config", str(cfg_path),
                         "--outdir", str(outdir)]) == 0
            metas[preset] = json.loads((outdir / "dataset_meta.json").read_text())
            lines = (outdir / "swvmd_test.jsonl").read_text().splitlines()
            targets[preset] = [json.loads(line)["target"] for line in lines]
        price_meta, return_meta = metas["price"], metas["return"]

        def size(meta, key):
            return meta["splits"][key][1] - meta["splits"][key][0]

        # same split rule: identical val/test blocks; train absorbs the one
        # observation the return series loses to differencing
        for key in ("val", "test"):
            assert size(price_meta, key) == size(return_meta, key)
        assert size(price_meta, "train") - size(return_meta, "train") == 1
        assert targets["price"] != targets["return"]

    def test_missing_input_is_usage_error(self, tmp_path):
        rc = main(["run", "--input", str(tmp_path / "absent.csv"),
                   "--outdir", str(tmp_path / "out")])
        assert rc == 2

    def test_unknown_config_key_is_usage_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"inptu": "x.csv"}))
        rc = main(["run", "--config", str(bad), "--outdir", str(tmp_path / "o")])
        assert rc == 2

    def test_short_series_aborts_with_stage_name(self, tmp_path, capsys):
        csv = cmd_synth("white-noise", 80, 1, tmp_path / "short.csv")
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({**SMALL_CONFIG, "input": str(csv)}))
        rc = main(["run", "--config", str(cfg), "--outdir", str(tmp_path / "o")])
        assert rc == 3
        assert "build-dataset" in capsys.readouterr().err

    def test_seed_flag_overrides_file(self, workspace, tmp_path):
        _, input_csv, config_path = workspace
        cfg = load_run_config(config_path, {"seed": 99})
        assert cfg.seed == 99
        assert cfg.train.seed == 99

    def test_python_m_entrypoint(self, tmp_path):
        import subprocess
        import sys

        out = tmp_path / "m.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "vmdcast.cli", "synth", "--kind", "ar1",
             "--length", "50", "--seed", "2", "--out", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert out.exists()
