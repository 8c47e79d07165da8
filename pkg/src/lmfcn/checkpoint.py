"""Versioned binary checkpoints for trained models.

Byte layout (all integers little-endian):

    offset 0   8 bytes   magic ``b"LMFCNCK\\0"``
    offset 8   u32       format version (currently 1)
    offset 12  u32       header length H
    offset 16  H bytes   UTF-8 JSON header, sorted keys, compact separators
    offset 16+H          array payload: raw C-order little-endian buffers

The header carries ``kind`` (binary | multiclass | cnn | lbp), a ``meta``
object with everything scalar (hyperparameters, best epoch, SVM bias terms,
gamma, C, network shape), and an ``arrays`` manifest listing name, dtype,
shape and payload-relative offset for every buffer. Writing is deterministic:
the same model produces byte-identical files.

Checkpoints embed everything prediction needs: network tensors, BN running
statistics, dual coefficients, bias, support-vector indices and the stored
training latents. Epoch records are not serialized; those live in the run
directory's CSV log.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .fcn import FcnParams
from .svm import MulticlassSvm, SvmModel
from .trainer import (CnnBaselineModel, Hyperparams, LbpSvmModel,
                      MulticlassTrainedModel, TrainedModel)

MAGIC = b"LMFCNCK\x00"
FORMAT_VERSION = 1

_DTYPES = {"f8": "<f8", "i8": "<i8"}


class _Writer:
    def __init__(self):
        self.manifest = []
        self.chunks = []
        self.offset = 0

    def add(self, name: str, array: np.ndarray, dtype: str = "f8") -> None:
        data = np.ascontiguousarray(array, dtype=_DTYPES[dtype])
        raw = data.tobytes()
        self.manifest.append({"name": name, "dtype": dtype,
                              "shape": list(data.shape), "offset": self.offset})
        self.chunks.append(raw)
        self.offset += len(raw)


def _write(path, kind: str, meta: dict, writer: _Writer) -> None:
    header = json.dumps({"kind": kind, "meta": meta, "arrays": writer.manifest},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for chunk in writer.chunks:
            fh.write(chunk)


class _Reader:
    def __init__(self, path):
        blob = Path(path).read_bytes()
        if blob[:8] != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        version, hlen = struct.unpack("<II", blob[8:16])
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(blob[16:16 + hlen].decode())
        self.kind = header["kind"]
        self.meta = header["meta"]
        self.payload = blob[16 + hlen:]
        self.arrays = {entry["name"]: entry for entry in header["arrays"]}

    def get(self, name: str) -> np.ndarray:
        entry = self.arrays[name]
        dtype = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        start = entry["offset"]
        flat = np.frombuffer(self.payload, dtype=dtype, count=count, offset=start)
        return flat.reshape(entry["shape"]).copy()


def _add_fcn(writer: _Writer, params: FcnParams, prefix: str = "") -> dict:
    for name in sorted(params.tensors):
        writer.add(f"{prefix}fcn.{name}", params.tensors[name])
    for name in sorted(params.running):
        writer.add(f"{prefix}run.{name}", params.running[name])
    return {"c": params.c, "phi": params.phi, "widths": list(params.widths)}


def _read_fcn(reader: _Reader, shape_meta: dict, prefix: str = "") -> FcnParams:
    params = FcnParams(c=shape_meta["c"], phi=shape_meta["phi"],
                       widths=tuple(shape_meta["widths"]))
    for name, entry in reader.arrays.items():
        if name.startswith(f"{prefix}fcn."):
            params.tensors[name[len(prefix) + 4:]] = reader.get(name)
        elif name.startswith(f"{prefix}run."):
            params.running[name[len(prefix) + 4:]] = reader.get(name)
    return params


def _add_svm(writer: _Writer, svm: SvmModel, prefix: str) -> dict:
    writer.add(f"{prefix}.alpha", svm.alpha)
    writer.add(f"{prefix}.y", svm.y)
    writer.add(f"{prefix}.sv_indices", svm.sv_indices, dtype="i8")
    return {"b": svm.b, "c": svm.c, "gamma": svm.gamma}


def _read_svm(reader: _Reader, meta: dict, prefix: str) -> SvmModel:
    return SvmModel(alpha=reader.get(f"{prefix}.alpha"), b=meta["b"],
                    y=reader.get(f"{prefix}.y"),
                    sv_indices=reader.get(f"{prefix}.sv_indices").astype(np.intp),
                    c=meta["c"], gamma=meta["gamma"])


def _add_ova(writer: _Writer, ova: MulticlassSvm) -> dict:
    models = [_add_svm(writer, m, f"ova{j}") for j, m in enumerate(ova.models)]
    writer.add("ova.train_latents", ova.train_latents)
    return {"c": ova.c, "gamma": ova.gamma, "models": models}


def _read_ova(reader: _Reader, meta: dict) -> MulticlassSvm:
    models = [_read_svm(reader, m, f"ova{j}")
              for j, m in enumerate(meta["models"])]
    return MulticlassSvm(models=models,
                         train_latents=reader.get("ova.train_latents"),
                         gamma=meta["gamma"], c=meta["c"])


def save_checkpoint(path, model) -> None:
    """Serialize any trained model; the kind is inferred from its type."""
    writer = _Writer()
    if isinstance(model, TrainedModel):
        meta = {"hp": model.hp.to_dict(), "best_epoch": model.best_epoch,
                "shape": _add_fcn(writer, model.params),
                "svm": _add_svm(writer, model.svm, "svm")}
        writer.add("train_latents", model.train_latents)
        _write(path, "binary", meta, writer)
    elif isinstance(model, MulticlassTrainedModel):
        subs = []
        for j, sub in enumerate(model.sub_models):
            shape = _add_fcn(writer, sub.params, prefix=f"sub{j}.")
            subs.append({"shape": shape, "best_epoch": sub.best_epoch})
        meta = {"hp": model.hp.to_dict(), "subs": subs,
                "ova": _add_ova(writer, model.final_svm)}
        _write(path, "multiclass", meta, writer)
    elif isinstance(model, CnnBaselineModel):
        meta = {"hp": model.hp.to_dict(), "best_epoch": model.best_epoch,
                "shape": _add_fcn(writer, model.params)}
        writer.add("fc_w", model.fc_w)
        writer.add("fc_b", model.fc_b)
        _write(path, "cnn", meta, writer)
    elif isinstance(model, LbpSvmModel):
        meta = {"hp": model.hp.to_dict(),
                "ova": _add_ova(writer, model.svm)}
        _write(path, "lbp", meta, writer)
    else:
        raise TypeError(f"cannot checkpoint object of type {type(model).__name__}")


def load_checkpoint(path):
    """Rebuild the model a checkpoint was written from.

    Epoch records are omitted (they live in the run directory CSV), and
    multiclass sub-models come back with their networks only: prediction
    concatenates sub-latents and classifies with the final SVM, so the
    per-sub discriminants are not stored.
    """
    reader = _Reader(path)
    meta = reader.meta
    hp = Hyperparams.from_dict(meta["hp"])
    if reader.kind == "binary":
        return TrainedModel(
            params=_read_fcn(reader, meta["shape"]),
            svm=_read_svm(reader, meta["svm"], "svm"),
            train_latents=reader.get("train_latents"),
            hp=hp, records=[], best_epoch=meta["best_epoch"])
    if reader.kind == "multiclass":
        subs = []
        for j, sub_meta in enumerate(meta["subs"]):
            subs.append(TrainedModel(
                params=_read_fcn(reader, sub_meta["shape"], prefix=f"sub{j}."),
                svm=None, train_latents=None, hp=hp, records=[],
                best_epoch=sub_meta["best_epoch"]))
        return MulticlassTrainedModel(sub_models=subs,
                                      final_svm=_read_ova(reader, meta["ova"]),
                                      hp=hp, records=[])
    if reader.kind == "cnn":
        return CnnBaselineModel(
            params=_read_fcn(reader, meta["shape"]),
            fc_w=reader.get("fc_w"), fc_b=reader.get("fc_b"),
            hp=hp, records=[], best_epoch=meta["best_epoch"])
    if reader.kind == "lbp":
        return LbpSvmModel(svm=_read_ova(reader, meta["ova"]), hp=hp)
    raise ValueError(f"{path}: unknown checkpoint kind {reader.kind!r}")
