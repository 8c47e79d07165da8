"""Run directories and the operations behind the service and CLI.

A training run writes:

    <run>/config.json      effective configuration snapshot
    <run>/epochs.csv       per-epoch log (one per sub-problem for multiclass,
                           named epochs_sub<k>.csv; none for the LBP baseline)
    <run>/checkpoint.bin   serialized model (see checkpoint module)
    <run>/metrics.json     end-of-run summary
    <run>/debug/           optional per-epoch P/K/D and anchor CSV dumps

A non-empty target directory is refused outright so existing runs are never
partially overwritten.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (StripeSpec, default_stripe_specs, gen_gaussian_stripes,
                   load_image_dir, save_dataset, split)
from .metrics import balanced_accuracy, evaluate
from .trainer import (Hyperparams, fit, fit_cnn_baseline, fit_lbp_baseline,
                      fit_multiclass)

EPOCH_COLUMNS = ("epoch", "l_sv", "l_mc", "l_cc", "total", "n_sv", "n_q",
                 "n_r", "train_bacc", "val_bacc", "ms")
REPORT_COLUMNS = ("epoch", "l_sv", "l_mc", "l_cc", "total", "n_sv",
                  "train_bacc", "val_bacc")
TRAIN_KINDS = ("binary", "multiclass", "cnn", "lbp")


def prepare_run_dir(path) -> Path:
    path = Path(path)
    if path.exists() and any(path.iterdir()):
        raise FileExistsError(f"run directory {path} already exists and is "
                              f"not empty; refusing to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_epochs_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPOCH_COLUMNS)
        for r in records:
            writer.writerow([getattr(r, col) for col in EPOCH_COLUMNS])


def read_epochs_csv(path) -> list:
    """Rows as dicts with numeric fields parsed back."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in row:
            row[key] = (int(row[key]) if key in ("epoch", "n_sv", "n_q", "n_r")
                        else float(row[key]))
    return rows


def _dump_hook(debug_dir: Path, hp: Hyperparams):
    """Per-epoch CSV dumps of the geometry matrices and anchor tables."""
    debug_dir.mkdir(parents=True, exist_ok=True)
    requested = {"a": hp.sv_close, "m": hp.wr_close, "g": hp.sh_close}

    def dump(epoch, geo, part, tables):
        tag = f"epoch_{epoch:03d}"
        for name, matrix in (("p", geo.p), ("k", geo.k), ("d", geo.d)):
            np.savetxt(debug_dir / f"{tag}_{name}.csv", matrix, delimiter=",")
        with open(debug_dir / f"{tag}_anchors.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("table", "instance", "slot", "anchor", "distance"))
            for name, rows, owners in (("a", tables.a, part.s),
                                       ("m", tables.m, part.q),
                                       ("g", tables.g, part.r)):
                for row, owner in zip(rows, owners):
                    for slot in range(requested[name]):
                        if slot < len(row):
                            anchor = int(row[slot])
                            dist = geo.d[owner, anchor]
                        else:
                            # masked-out candidates sit past every real
                            # distance, so exhausted slots read as +inf
                            anchor, dist = -1, np.inf
                        writer.writerow((name, int(owner), slot, anchor, dist))
    return dump


def gen_data_op(out_dir, n_per_class: int = 100, size: int = 64,
                seed: int = 0, specs: list | None = None) -> dict:
    """Generate a stripe dataset directory plus a manifest of how."""
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        raise FileExistsError(f"dataset directory {out_dir} already exists "
                              f"and is not empty; refusing to overwrite")
    spec_objs = ([StripeSpec.from_dict(s) for s in specs] if specs
                 else default_stripe_specs())
    data = gen_gaussian_stripes(spec_objs, n_per_class=n_per_class,
                                size=size, seed=seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(data, out_dir)
    manifest = {
        "n_per_class": n_per_class, "size": size, "seed": seed,
        "n_classes": len(spec_objs), "n_images": len(data),
        "specs": [s.to_dict() for s in spec_objs],
    }
    write_json(out_dir / "dataset.json", manifest)
    return {**manifest, "out_dir": str(out_dir)}


def train_op(kind: str, data_dir, out_dir, hp_overrides: dict | None = None,
             val_ratio: float = 0.2, split_seed: int | None = None,
             sub_epochs: int = 10, stop_when_val_perfect: bool = False,
             debug_dump: bool = False) -> dict:
    """Split a dataset directory, train the requested model kind, and write
    the full run directory. Returns the metrics summary."""
    if kind not in TRAIN_KINDS:
        raise ValueError(f"unknown training kind {kind!r}; expected one "
                         f"of {TRAIN_KINDS}")
    if not 0.0 < val_ratio < 1.0:
        raise ValueError(f"val_ratio must be in (0, 1), got {val_ratio}")
    hp = Hyperparams.from_dict(hp_overrides or {})
    if split_seed is None:
        split_seed = hp.seed

    dataset = load_image_dir(data_dir)
    train, val = split(dataset, (1.0 - val_ratio, val_ratio), seed=split_seed)
    run_dir = prepare_run_dir(out_dir)
    config = {
        "kind": kind, "data_dir": str(data_dir), "val_ratio": val_ratio,
        "split_seed": split_seed, "hyperparams": hp.to_dict(),
        "version": __version__,
    }
    if kind == "multiclass":
        config["sub_epochs"] = sub_epochs
    write_json(run_dir / "config.json", config)

    hook = _dump_hook(run_dir / "debug", hp) if debug_dump else None
    if kind == "binary":
        model = fit(train, val, hp, debug_hook=hook)
        write_epochs_csv(run_dir / "epochs.csv", model.records)
        best = model.records[model.best_epoch - 1]
        metrics = {"best_epoch": model.best_epoch, "val_bacc": best.val_bacc,
                   "train_bacc": best.train_bacc,
                   "epochs_run": len(model.records)}
    elif kind == "multiclass":
        model = fit_multiclass(train, val, hp, sub_epochs=sub_epochs)
        for j, sub in enumerate(model.sub_models):
            write_epochs_csv(run_dir / f"epochs_sub{j}.csv", sub.records)
        metrics = {
            "sub_best_epochs": [s.best_epoch for s in model.sub_models],
            "latent_width": model.latent_width,
            "train_bacc": balanced_accuracy(np.asarray(train.labels),
                                            model.predict(train.images)),
            "val_bacc": balanced_accuracy(np.asarray(val.labels),
                                          model.predict(val.images)),
        }
    elif kind == "cnn":
        model = fit_cnn_baseline(train, val, hp,
                                 stop_when_val_perfect=stop_when_val_perfect)
        write_epochs_csv(run_dir / "epochs.csv", model.records)
        best = model.records[model.best_epoch - 1]
        metrics = {"best_epoch": model.best_epoch, "val_bacc": best.val_bacc,
                   "train_bacc": best.train_bacc,
                   "epochs_run": len(model.records)}
    else:
        model = fit_lbp_baseline(train, hp)
        metrics = {
            "train_bacc": balanced_accuracy(np.asarray(train.labels),
                                            model.predict(train.images)),
            "val_bacc": balanced_accuracy(np.asarray(val.labels),
                                          model.predict(val.images)),
        }
    metrics["kind"] = kind
    save_checkpoint(run_dir / "checkpoint.bin", model)
    write_json(run_dir / "metrics.json", metrics)
    return {**metrics, "run_dir": str(run_dir)}


def eval_op(run_dir, data_dir, out_path=None) -> dict:
    """Evaluate a run's checkpoint on a dataset directory.

    The report body is a pure function of (checkpoint, dataset); everything
    contextual goes under ``meta``, and nothing volatile is written at all,
    so re-running produces byte-identical JSON.
    """
    run_dir = Path(run_dir)
    model = load_checkpoint(run_dir / "checkpoint.bin")
    dataset = load_image_dir(data_dir)
    meta = {
        "model": type(model).__name__, "seed": model.hp.seed,
        "hyperparams": model.hp.to_dict(), "version": __version__,
        "run_dir": str(run_dir), "data_dir": str(data_dir),
    }
    report = evaluate(model, dataset, meta=meta).to_dict()
    if out_path is not None:
        write_json(out_path, report)
    return report


def report_op(run_dir, out_path=None) -> list:
    """Reduce a run's epoch log to the plot-ready series (losses, SV counts,
    accuracies per epoch). Returns the rows; optionally writes them as CSV."""
    run_dir = Path(run_dir)
    source = run_dir / "epochs.csv"
    if not source.exists():
        raise FileNotFoundError(f"{source} not found; this run kind has no "
                                f"epoch log")
    rows = [{col: row[col] for col in REPORT_COLUMNS}
            for row in read_epochs_csv(source)]
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    return rows
