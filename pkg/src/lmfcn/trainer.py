"""Training loops: the large-margin epoch cycle, its one-vs-all multiclass
extension, the cross-entropy CNN baseline, and the LBP+SVM baseline.

One epoch of the main loop:

1. eval-mode forward of the full training set -> latent matrix T;
2. squared distances P, kernel K, distances D from T;
3. SMO on K -> predictions and the support-vector set S;
4. partition into S/Q/R and build the anchor tables from D;
5. train-mode forward of only S, Q and the R members with anchors,
   three-term loss against latents frozen in T, backprop, Adam step.

Validation is scored per epoch on the pre-update parameters (the state the
epoch's SVM was trained for); the best-validation snapshot becomes the final
model, ties keeping the earlier epoch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .anchors import build_anchor_tables, partition
from .data import Dataset, lbp_features, lbp_matrix
from .fcn import FcnParams, fcn_backward, fcn_forward, fcn_init
from .geometry import (build_geometry, cross_kernel, median_heuristic_gamma,
                       pairwise_sq_dist)
from .losses import loss_cc, loss_mc, loss_sv, total_loss
from .metrics import balanced_accuracy
from .svm import (MulticlassSvm, SvmModel, ova_predict, ova_train, smo_train,
                  svm_decision, svm_predict)

DEFAULT_SUB_EPOCHS = 10     # epoch budget for each one-vs-all sub-problem
DEFAULT_CNN_EPOCHS = 100


@dataclass
class Hyperparams:
    phi: int = 16
    c_in: int = 3
    gamma: float | None = None   # None: per-epoch median heuristic over P
    c: float = 1.0
    sv_close: int = 5
    wr_close: int = 1
    sh_close: int = 0
    lr: float = 1e-3
    max_epochs: int = 20
    seed: int = 0
    smo_tol: float = 1e-3
    widths: tuple = (64, 128)

    def to_dict(self) -> dict:
        return {
            "phi": self.phi, "c_in": self.c_in, "gamma": self.gamma,
            "c": self.c, "sv_close": self.sv_close, "wr_close": self.wr_close,
            "sh_close": self.sh_close, "lr": self.lr,
            "max_epochs": self.max_epochs, "seed": self.seed,
            "smo_tol": self.smo_tol, "widths": list(self.widths),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        d = dict(d)
        if "widths" in d:
            d["widths"] = tuple(d["widths"])
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    l_sv: float
    l_mc: float
    l_cc: float
    total: float
    n_sv: int
    n_q: int
    n_r: int
    n_backprop: int
    train_bacc: float
    val_bacc: float
    gamma: float
    ms: float


@dataclass
class TrainedModel:
    """Best-validation snapshot of the binary large-margin model."""

    params: FcnParams
    svm: SvmModel
    train_latents: np.ndarray
    hp: Hyperparams
    records: list
    best_epoch: int

    def predict(self, images) -> np.ndarray:
        """Class labels in {0, 1}."""
        latents, _ = fcn_forward(images, self.params, "eval", need_cache=False)
        block = cross_kernel(latents, self.train_latents, self.svm.gamma)
        return (svm_decision(self.svm, block) >= 0.0).astype(np.intp)


@dataclass
class MulticlassTrainedModel:
    sub_models: list              # one TrainedModel per class (binary OVA)
    final_svm: MulticlassSvm
    hp: Hyperparams
    records: list                 # per-class lists of EpochRecords

    @property
    def latent_width(self) -> int:
        return self.final_svm.train_latents.shape[1]

    def concat_latents(self, images) -> np.ndarray:
        parts = [fcn_forward(images, sub.params, "eval", need_cache=False)[0]
                 for sub in self.sub_models]
        return np.concatenate(parts, axis=1)

    def predict(self, images) -> np.ndarray:
        return ova_predict(self.final_svm, self.concat_latents(images))


@dataclass
class CnnBaselineModel:
    params: FcnParams
    fc_w: np.ndarray
    fc_b: np.ndarray
    hp: Hyperparams
    records: list
    best_epoch: int

    def predict(self, images) -> np.ndarray:
        latents, _ = fcn_forward(images, self.params, "eval", need_cache=False)
        return nn.fc_logits(latents, self.fc_w, self.fc_b).argmax(axis=1)


@dataclass
class LbpSvmModel:
    svm: MulticlassSvm
    hp: Hyperparams

    def predict(self, images) -> np.ndarray:
        feats = np.stack([lbp_features(np.asarray(img, dtype=np.float64))
                          for img in images])
        return ova_predict(self.svm, feats)


def _copy_params(params: FcnParams) -> FcnParams:
    return FcnParams(
        c=params.c, phi=params.phi, widths=params.widths,
        tensors={k: v.copy() for k, v in params.tensors.items()},
        running={k: v.copy() for k, v in params.running.items()})


def _binary_targets(labels: np.ndarray) -> np.ndarray:
    """Map {0, 1} class labels to the {-1, +1} convention (class 1 -> +1)."""
    labels = np.asarray(labels)
    if not set(np.unique(labels).tolist()) <= {0, 1}:
        raise ValueError(f"binary training expects labels in {{0, 1}}, "
                         f"got {np.unique(labels)}")
    return np.where(labels == 1, 1.0, -1.0)


@dataclass
class TrainState:
    hp: Hyperparams
    params: FcnParams
    adam: nn.AdamState
    images: np.ndarray
    y: np.ndarray                 # -1/+1 training targets
    labels: np.ndarray            # original 0/1 labels
    val_images: np.ndarray
    val_labels: np.ndarray
    records: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = -1.0
    best_params: FcnParams | None = None
    best_svm: SvmModel | None = None
    best_latents: np.ndarray | None = None
    # called as hook(epoch, geo, part, tables) after step 4, if set
    debug_hook: object = None


def train_epoch(state: TrainState) -> EpochRecord:
    """Run one full epoch cycle and append its record to the state."""
    hp = state.hp
    t0 = time.perf_counter()
    epoch = len(state.records) + 1

    latents, _ = fcn_forward(state.images, state.params, "eval", need_cache=False)
    gamma = hp.gamma if hp.gamma is not None else median_heuristic_gamma(
        pairwise_sq_dist(latents))
    geo = build_geometry(latents, gamma)

    model = smo_train(geo.k, state.y, c=hp.c, tol=hp.smo_tol, gamma=gamma)
    preds = svm_predict(model, geo.k)
    part = partition(state.y, preds, model.sv_indices)
    tables = build_anchor_tables(geo.d, part, hp.sv_close, hp.wr_close, hp.sh_close)
    if state.debug_hook is not None:
        state.debug_hook(epoch, geo, part, tables)

    train_bacc = balanced_accuracy(state.labels, (preds >= 0).astype(np.intp))
    val_latents, _ = fcn_forward(state.val_images, state.params, "eval",
                                 need_cache=False)
    val_preds = (svm_decision(model, cross_kernel(val_latents, latents, gamma))
                 >= 0.0).astype(np.intp)
    val_bacc = balanced_accuracy(state.val_labels, val_preds)
    if val_bacc > state.best_val:
        state.best_val = val_bacc
        state.best_epoch = epoch
        state.best_params = _copy_params(state.params)
        state.best_svm = model
        state.best_latents = latents.copy()

    # only R members that actually have an opposite-class anchor join the pass
    r_used_rows = [i for i, row in enumerate(tables.g) if len(row) > 0]
    r_used = part.r[r_used_rows]
    g_used = [tables.g[i] for i in r_used_rows]
    selected = np.concatenate([part.s, part.q, r_used]).astype(np.intp)

    live, caches = fcn_forward(state.images[selected], state.params, "train")
    n_s, n_q = part.s.size, part.q.size
    l_sv, g_s = loss_sv(live[:n_s], latents, tables.a)
    l_mc, g_q = loss_mc(live[n_s:n_s + n_q], latents, tables.m)
    l_cc, g_r = loss_cc(live[n_s + n_q:], latents, g_used)
    breakdown = total_loss(l_sv, l_mc, l_cc, n_s, n_q, part.r.size)

    def make_record():
        return EpochRecord(
            epoch=epoch, l_sv=breakdown.l_sv, l_mc=breakdown.l_mc,
            l_cc=breakdown.l_cc, total=breakdown.total,
            n_sv=n_s, n_q=n_q, n_r=part.r.size, n_backprop=selected.size,
            train_bacc=train_bacc, val_bacc=val_bacc, gamma=gamma,
            ms=(time.perf_counter() - t0) * 1000.0)

    if not np.isfinite(breakdown.total):
        state.records.append(make_record())
        raise FloatingPointError(f"non-finite loss at epoch {epoch}: {breakdown}")

    latent_grads = np.vstack([g_s, g_q, g_r])
    grads = fcn_backward(latent_grads, caches, state.params)
    nn.adam_step(state.params.tensors, grads, state.adam)
    record = make_record()
    state.records.append(record)
    return record


def _check_split(train: Dataset, val: Dataset) -> None:
    if len(train) == 0 or len(val) == 0:
        raise ValueError("train and validation splits must be non-empty")


def fit(train: Dataset, val: Dataset, hp: Hyperparams,
        debug_hook=None) -> TrainedModel:
    """Binary training loop; returns the peak-validation snapshot."""
    _check_split(train, val)
    params = fcn_init(hp.seed, c=hp.c_in, phi=hp.phi, widths=hp.widths)
    state = TrainState(
        hp=hp, params=params,
        adam=nn.AdamState.for_params(params.tensors, lr=hp.lr),
        images=train.images, y=_binary_targets(train.labels),
        labels=np.asarray(train.labels),
        val_images=val.images, val_labels=np.asarray(val.labels),
        debug_hook=debug_hook)
    for _ in range(hp.max_epochs):
        train_epoch(state)
    return TrainedModel(params=state.best_params, svm=state.best_svm,
                        train_latents=state.best_latents, hp=hp,
                        records=state.records, best_epoch=state.best_epoch)


def fit_multiclass(train: Dataset, val: Dataset, hp: Hyperparams,
                   n_c: int | None = None,
                   sub_epochs: int = DEFAULT_SUB_EPOCHS) -> MulticlassTrainedModel:
    """One-vs-all training: n_c binary models, then a final multiclass SVM
    on the concatenated latent representation (width phi * n_c)."""
    _check_split(train, val)
    labels = np.asarray(train.labels)
    if n_c is None:
        n_c = int(labels.max()) + 1
    if n_c < 3:
        raise ValueError("fit_multiclass needs >= 3 classes; use fit for binary")
    counts = np.bincount(labels, minlength=n_c)
    if counts.min() < 2:
        raise ValueError(f"every class needs >= 2 training instances, "
                         f"got counts {counts.tolist()}")

    sub_models = []
    for cls in range(n_c):
        sub_train = Dataset(images=train.images,
                            labels=(labels == cls).astype(np.intp),
                            names=list(train.names))
        sub_val = Dataset(images=val.images,
                          labels=(np.asarray(val.labels) == cls).astype(np.intp),
                          names=list(val.names))
        sub_hp = replace(hp, max_epochs=sub_epochs, seed=hp.seed + cls)
        sub_models.append(fit(sub_train, sub_val, sub_hp))

    concat = np.concatenate(
        [fcn_forward(train.images, sub.params, "eval", need_cache=False)[0]
         for sub in sub_models], axis=1)
    gamma = hp.gamma if hp.gamma is not None else median_heuristic_gamma(
        pairwise_sq_dist(concat))
    final_svm = ova_train(concat, labels, c=hp.c, gamma=gamma, tol=hp.smo_tol)
    return MulticlassTrainedModel(
        sub_models=sub_models, final_svm=final_svm, hp=hp,
        records=[sub.records for sub in sub_models])


def fit_cnn_baseline(train: Dataset, val: Dataset, hp: Hyperparams,
                     n_classes: int | None = None,
                     stop_when_val_perfect: bool = False) -> CnnBaselineModel:
    """Same conv stack, but a fully connected softmax head trained with
    full-batch cross-entropy; every instance is backpropagated every epoch.

    ``stop_when_val_perfect`` ends the loop once validation balanced accuracy
    reaches 1.0: no later epoch can displace that snapshot (ties keep the
    earlier epoch), so the peak is already decided.
    """
    _check_split(train, val)
    labels = np.asarray(train.labels)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    params = fcn_init(hp.seed, c=hp.c_in, phi=hp.phi, widths=hp.widths)
    rng = np.random.default_rng(hp.seed + 1)
    head = {
        "fc_w": rng.normal(0.0, np.sqrt(2.0 / hp.phi), size=(hp.phi, n_classes)),
        "fc_b": np.zeros(n_classes),
    }
    # adam_step mutates tensors in place, so one merged view stays current
    all_params = dict(params.tensors)
    all_params.update(head)
    adam = nn.AdamState.for_params(all_params, lr=hp.lr)

    records = []
    best_val, best_epoch = -1.0, 0
    best = None
    for epoch in range(1, hp.max_epochs + 1):
        t0 = time.perf_counter()
        # score the pre-update state, mirroring the main loop's bookkeeping
        train_lat, _ = fcn_forward(train.images, params, "eval", need_cache=False)
        train_pred = nn.fc_logits(train_lat, head["fc_w"], head["fc_b"]).argmax(axis=1)
        val_lat, _ = fcn_forward(val.images, params, "eval", need_cache=False)
        val_pred = nn.fc_logits(val_lat, head["fc_w"], head["fc_b"]).argmax(axis=1)
        train_bacc = balanced_accuracy(labels, train_pred)
        val_bacc = balanced_accuracy(np.asarray(val.labels), val_pred)
        if val_bacc > best_val:
            best_val, best_epoch = val_bacc, epoch
            best = (_copy_params(params), head["fc_w"].copy(), head["fc_b"].copy())
        live, caches = fcn_forward(train.images, params, "train")
        ce, (g_latent, g_w, g_b) = nn.fc_softmax_ce(live, head["fc_w"],
                                                    head["fc_b"], labels)
        grads = fcn_backward(g_latent, caches, params)
        grads["fc_w"] = g_w
        grads["fc_b"] = g_b
        nn.adam_step(all_params, grads, adam)

        records.append(EpochRecord(
            epoch=epoch, l_sv=0.0, l_mc=0.0, l_cc=0.0, total=float(ce),
            n_sv=0, n_q=0, n_r=0, n_backprop=len(train),
            train_bacc=train_bacc, val_bacc=val_bacc, gamma=float("nan"),
            ms=(time.perf_counter() - t0) * 1000.0))
        if not np.isfinite(ce):
            raise FloatingPointError(f"non-finite cross-entropy at epoch {epoch}")
        if stop_when_val_perfect and val_bacc >= 1.0:
            break

    best_params, fc_w, fc_b = best
    return CnnBaselineModel(params=best_params, fc_w=fc_w, fc_b=fc_b, hp=hp,
                            records=records, best_epoch=best_epoch)


def fit_lbp_baseline(train: Dataset, hp: Hyperparams) -> LbpSvmModel:
    """Uniform-LBP histograms into the same SVM stack (no epochs to run)."""
    if len(train) == 0:
        raise ValueError("training split must be non-empty")
    feats = lbp_matrix(train)
    gamma = hp.gamma if hp.gamma is not None else median_heuristic_gamma(
        pairwise_sq_dist(feats))
    labels = np.asarray(train.labels)
    if labels.max() < 1:
        raise ValueError("need at least 2 classes")
    svm = ova_train(feats, labels, c=hp.c, gamma=gamma, tol=hp.smo_tol)
    return LbpSvmModel(svm=svm, hp=hp)
