"""Support vector machine on a precomputed kernel.

Training uses sequential minimal optimization with maximal-violating-pair
working-set selection: the first index is the worst KKT violator, the second
maximizes the violation gap against it. The scan order is deterministic, so
retraining on an unchanged kernel reproduces the same model bit for bit.

The one-vs-all wrapper trains one binary machine per class on a shared
kernel over the concatenated latent vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import cross_kernel, pairwise_sq_dist, rbf_kernel

SV_EPS = 1e-8
DEFAULT_C = 1.0
DEFAULT_TOL = 1e-3

# floor for the second-derivative term when a working pair is (near) duplicate
_ETA_FLOOR = 1e-12


@dataclass
class SvmModel:
    alpha: np.ndarray        # dual coefficients in [0, C]
    b: float
    y: np.ndarray            # training labels in {-1, +1}
    sv_indices: np.ndarray   # indices with alpha > SV_EPS, ascending
    c: float
    gamma: float


@dataclass
class MulticlassSvm:
    models: list             # one binary SvmModel per class index
    train_latents: np.ndarray
    gamma: float
    c: float

    @property
    def n_classes(self) -> int:
        return len(self.models)


def _bias_bounds(f: np.ndarray, y: np.ndarray, alpha: np.ndarray, c: float):
    """(b_low, b_up) such that optimality means b_low <= -b <= b_up."""
    up_mask = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
    low_mask = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
    b_up = f[up_mask].min() if up_mask.any() else np.inf
    b_low = f[low_mask].max() if low_mask.any() else -np.inf
    return b_low, b_up, low_mask, up_mask


def smo_train(kernel: np.ndarray, y, c: float = DEFAULT_C,
              tol: float = DEFAULT_TOL, max_iter: int | None = None,
              gamma: float = float("nan")) -> SvmModel:
    """Solve the dual on a precomputed kernel; returns the trained model.

    ``y`` must contain both classes as -1/+1. Stops when the maximal KKT
    violation drops to ``tol``; raises if the iteration budget runs out first.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if kernel.shape != (n, n):
        raise ValueError(f"kernel shape {kernel.shape} does not match {n} labels")
    if not (np.all(np.abs(y) == 1.0) and (y > 0).any() and (y < 0).any()):
        raise ValueError("labels must be -1/+1 with both classes present")
    if c <= 0:
        raise ValueError(f"C must be positive, got {c}")
    if max_iter is None:
        max_iter = max(10000, 200 * n)

    alpha = np.zeros(n)
    f = -y.copy()  # f_i = sum_j alpha_j y_j K_ij - y_i, maintained incrementally
    it = 0
    while True:
        b_low, b_up, low_mask, up_mask = _bias_bounds(f, y, alpha, c)
        if b_low - b_up <= tol:
            break
        if it >= max_iter:
            raise RuntimeError(
                f"SMO did not converge after {max_iter} iterations "
                f"(n={n}, C={c}, remaining violation={b_low - b_up:.3e}, tol={tol})")
        it += 1

        i = int(np.where(low_mask, f, -np.inf).argmax())
        j = int(np.where(up_mask, f, np.inf).argmin())

        eta = kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j]
        step = y[j] * (f[i] - f[j]) / max(eta, _ETA_FLOOR)
        aj_old, ai_old = alpha[j], alpha[i]
        s = y[i] * y[j]
        if s < 0:
            lo, hi = max(0.0, aj_old - ai_old), min(c, c + aj_old - ai_old)
        else:
            lo, hi = max(0.0, aj_old + ai_old - c), min(c, aj_old + ai_old)
        aj_new = float(np.clip(aj_old + step, lo, hi))
        ai_new = ai_old + s * (aj_old - aj_new)
        if aj_new == aj_old:
            # numerically stuck pair; the violation is below what fp can resolve
            break
        alpha[i], alpha[j] = ai_new, aj_new
        f += (ai_new - ai_old) * y[i] * kernel[:, i]
        f += (aj_new - aj_old) * y[j] * kernel[:, j]

    # recompute from scratch so the stored model is independent of update order
    g = kernel @ (alpha * y)
    b_low, b_up, _, _ = _bias_bounds(g - y, y, alpha, c)
    b = -(b_low + b_up) / 2.0
    sv = np.flatnonzero(alpha > SV_EPS)
    if sv.size == 0:
        raise RuntimeError("training produced no support vectors")
    return SvmModel(alpha=alpha, b=float(b), y=y, sv_indices=sv, c=c, gamma=gamma)


def svm_decision(model: SvmModel, k_row: np.ndarray):
    """Decision value(s) for kernel row(s) against the training set."""
    k_row = np.asarray(k_row, dtype=np.float64)
    if k_row.shape[-1] != model.alpha.shape[0]:
        raise ValueError(f"kernel row length {k_row.shape[-1]} != "
                         f"{model.alpha.shape[0]} training points")
    return k_row @ (model.alpha * model.y) + model.b


def svm_predict(model: SvmModel, k_row: np.ndarray):
    """Hard labels in {-1, +1}; a decision value of exactly 0 maps to +1."""
    dec = svm_decision(model, k_row)
    return np.where(dec >= 0.0, 1.0, -1.0)


def ova_train(latents: np.ndarray, labels, c: float = DEFAULT_C,
              gamma: float = 1.0, tol: float = DEFAULT_TOL) -> MulticlassSvm:
    """One binary machine per class on a shared RBF kernel over ``latents``."""
    labels = np.asarray(labels)
    n_classes = int(labels.max()) + 1
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    present = np.unique(labels)
    missing = sorted(set(range(n_classes)) - set(present.tolist()))
    if missing:
        raise ValueError(f"classes absent from training labels: {missing}")
    kernel = rbf_kernel(pairwise_sq_dist(latents), gamma)
    models = []
    for cls in range(n_classes):
        y = np.where(labels == cls, 1.0, -1.0)
        models.append(smo_train(kernel, y, c=c, tol=tol, gamma=gamma))
    return MulticlassSvm(models=models, train_latents=np.array(latents, dtype=np.float64),
                         gamma=gamma, c=c)


def ova_decisions(model: MulticlassSvm, query_latents: np.ndarray) -> np.ndarray:
    block = cross_kernel(query_latents, model.train_latents, model.gamma)
    return np.stack([svm_decision(m, block) for m in model.models], axis=1)


def ova_predict(model: MulticlassSvm, query_latents: np.ndarray) -> np.ndarray:
    """Argmax of the per-class decision values; ties go to the lowest index."""
    return ova_decisions(model, query_latents).argmax(axis=1)
