"""Run directory contracts: layout, refusal to overwrite, determinism of
eval output, and the report column schema."""

import csv
import json

import numpy as np
import pytest

from lmfcn.rundir import (EPOCH_COLUMNS, REPORT_COLUMNS, eval_op, gen_data_op,
                          prepare_run_dir, read_epochs_csv, report_op,
                          train_op)

# tiny datasets legitimately run out of anchor candidates; the warnings are
# the anchors module doing its job, not something these tests are about
pytestmark = [pytest.mark.filterwarnings("ignore:type1_anchors"),
              pytest.mark.filterwarnings("ignore:type3_anchors")]

TINY_HP = {"phi": 2, "widths": [2, 3], "max_epochs": 3, "sv_close": 2,
           "wr_close": 1, "sh_close": 1, "lr": 1e-2, "seed": 0}

BINARY_SPECS = [
    {"angle_mean": 0.0, "angle_std": 0.0, "period_mean": 6.0,
     "period_std": 0.0, "noise_std": 0.0},
    {"angle_mean": 1.5707963267948966, "angle_std": 0.0, "period_mean": 6.0,
     "period_std": 0.0, "noise_std": 0.0},
]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "stripes"
    gen_data_op(out, n_per_class=10, size=16, seed=0, specs=BINARY_SPECS)
    return out


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("runs") / "binary"
    train_op("binary", data_dir, out, hp_overrides=TINY_HP)
    return out


class TestGenData:
    def test_writes_class_tree_and_manifest(self, data_dir):
        assert (data_dir / "class_0").is_dir()
        assert (data_dir / "class_1").is_dir()
        manifest = json.loads((data_dir / "dataset.json").read_text())
        assert manifest["n_images"] == 20
        assert manifest["n_classes"] == 2
        assert len(list((data_dir / "class_0").glob("*.png"))) == 10

    def test_refuses_non_empty_target(self, data_dir):
        with pytest.raises(FileExistsError, match="not empty"):
            gen_data_op(data_dir, n_per_class=2, size=16)

    def test_default_specs_give_two_classes(self, tmp_path):
        summary = gen_data_op(tmp_path / "d", n_per_class=1, size=16, seed=1)
        assert summary["n_classes"] == 2


class TestTrainOp:
    def test_run_directory_layout(self, run_dir):
        for name in ("config.json", "epochs.csv", "checkpoint.bin",
                     "metrics.json"):
            assert (run_dir / name).exists(), name

    def test_epoch_csv_schema_and_length(self, run_dir):
        with open(run_dir / "epochs.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == EPOCH_COLUMNS
        assert len(rows) == 1 + TINY_HP["max_epochs"]

    def test_config_snapshot_holds_the_effective_hyperparams(self, run_dir,
                                                             data_dir):
        config = json.loads((run_dir / "config.json").read_text())
        assert config["kind"] == "binary"
        assert config["data_dir"] == str(data_dir)
        assert config["hyperparams"]["phi"] == 2
        assert config["hyperparams"]["max_epochs"] == 3

    def test_metrics_summary_matches_the_log(self, run_dir):
        metrics = json.loads((run_dir / "metrics.json").read_text())
        rows = read_epochs_csv(run_dir / "epochs.csv")
        best = rows[metrics["best_epoch"] - 1]
        assert metrics["val_bacc"] == best["val_bacc"]
        assert metrics["epochs_run"] == len(rows)

    def test_single_epoch_budget_gives_one_row(self, data_dir, tmp_path):
        out = tmp_path / "one"
        train_op("binary", data_dir, out,
                 hp_overrides={**TINY_HP, "max_epochs": 1})
        assert len(read_epochs_csv(out / "epochs.csv")) == 1

    def test_refuses_non_empty_run_dir(self, run_dir, data_dir):
        before = sorted(p.name for p in run_dir.iterdir())
        with pytest.raises(FileExistsError, match="not empty"):
            train_op("binary", data_dir, run_dir, hp_overrides=TINY_HP)
        assert sorted(p.name for p in run_dir.iterdir()) == before

    def test_unknown_kind_is_rejected(self, data_dir, tmp_path):
        with pytest.raises(ValueError, match="unknown training kind"):
            train_op("boosted", data_dir, tmp_path / "x")

    def test_val_ratio_bounds(self, data_dir, tmp_path):
        with pytest.raises(ValueError, match="val_ratio"):
            train_op("binary", data_dir, tmp_path / "x", val_ratio=1.0)

    def test_debug_dump_writes_geometry_and_anchor_csvs(self, data_dir,
                                                        tmp_path):
        out = tmp_path / "dbg"
        train_op("binary", data_dir, out,
                 hp_overrides={**TINY_HP, "max_epochs": 1}, debug_dump=True)
        for suffix in ("p", "k", "d"):
            matrix = np.loadtxt(out / "debug" / f"epoch_001_{suffix}.csv",
                                delimiter=",")
            assert matrix.shape == (16, 16)  # 20 images, 80/20 split
        with open(out / "debug" / "epoch_001_anchors.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["table"] for r in rows} <= {"a", "m", "g"}

    def test_lbp_kind_skips_the_epoch_log(self, data_dir, tmp_path):
        out = tmp_path / "lbp"
        summary = train_op("lbp", data_dir, out, hp_overrides={"seed": 0})
        assert not (out / "epochs.csv").exists()
        assert (out / "checkpoint.bin").exists()
        assert 0.0 <= summary["train_bacc"] <= 1.0

    def test_multiclass_kind_writes_per_sub_logs(self, tmp_path):
        specs = BINARY_SPECS + [{"angle_mean": 0.7853981633974483, "angle_std": 0.0,
                                 "period_mean": 6.0, "period_std": 0.0,
                                 "noise_std": 0.0}]
        data = tmp_path / "d3"
        gen_data_op(data, n_per_class=10, size=16, seed=0, specs=specs)
        out = tmp_path / "mc"
        summary = train_op("multiclass", data, out, hp_overrides=TINY_HP,
                           sub_epochs=2)
        for j in range(3):
            assert len(read_epochs_csv(out / f"epochs_sub{j}.csv")) == 2
        assert summary["latent_width"] == TINY_HP["phi"] * 3


class TestEvalOp:
    def test_report_fields_are_consistent(self, run_dir, data_dir):
        report = eval_op(run_dir, data_dir)
        cm = np.asarray(report["confusion_matrix"])
        assert cm.sum() == report["n_instances"] == 20
        recomputed = float(np.mean(report["per_class_recall"]))
        assert abs(recomputed - report["balanced_accuracy"]) < 1e-12

    def test_meta_carries_run_context(self, run_dir, data_dir):
        report = eval_op(run_dir, data_dir)
        assert report["meta"]["seed"] == 0
        assert report["meta"]["hyperparams"]["phi"] == 2
        assert "version" in report["meta"]

    def test_rerunning_writes_byte_identical_json(self, run_dir, data_dir,
                                                  tmp_path):
        eval_op(run_dir, data_dir, out_path=tmp_path / "a.json")
        eval_op(run_dir, data_dir, out_path=tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestReportOp:
    def test_columns_are_the_plot_ready_subset(self, run_dir, tmp_path):
        out = tmp_path / "report.csv"
        rows = report_op(run_dir, out_path=out)
        assert len(rows) == TINY_HP["max_epochs"]
        assert set(rows[0]) == set(REPORT_COLUMNS)
        with open(out, newline="") as fh:
            header = next(csv.reader(fh))
        assert tuple(header) == REPORT_COLUMNS

    def test_missing_epoch_log_is_reported(self, tmp_path):
        run = prepare_run_dir(tmp_path / "empty-run")
        with pytest.raises(FileNotFoundError, match="no .*epoch log"):
            report_op(run)
