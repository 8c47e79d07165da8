"""Layer kernels (forward/backward pairs) and the Adam optimizer step.

All tensors are float64 numpy arrays in NCHW layout. Every forward returns
``(output, cache)`` and the paired backward consumes that cache exactly once.
Convolutions are 3x3, stride 1, zero padding 1, so spatial dims are preserved;
max pooling is 2x2 stride 2 and floors odd dims by dropping the last row/column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

# images per im2col block; bounds the transient column-matrix memory
_CONV_CHUNK = 16


def _im2col3(xp: np.ndarray, h: int, w: int) -> np.ndarray:
    """Unfold a zero-padded batch (n, c, h+2, w+2) into (n, c*9, h*w) columns."""
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (n, c, h, w, 3, 3)
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(xp.shape[0], -1, h * w)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """3x3 same-convolution: (n, c_in, h, w) -> (n, c_out, h, w)."""
    n, c, h, wd = x.shape
    c_out, c_in, kh, kw = w.shape
    if c != c_in:
        raise ValueError(f"conv2d: input has {c} channels, weights expect {c_in}")
    if (kh, kw) != (3, 3):
        raise ValueError(f"conv2d: kernel must be 3x3, got {kh}x{kw}")
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    wmat = w.reshape(c_out, c_in * 9)
    out = np.empty((n, c_out, h * wd))
    for s in range(0, n, _CONV_CHUNK):
        cols = _im2col3(xp[s:s + _CONV_CHUNK], h, wd)
        out[s:s + _CONV_CHUNK] = wmat @ cols
    out += b[:, None]
    return out.reshape(n, c_out, h, wd), (xp, w)


def conv2d_backward(grad_out: np.ndarray, cache):
    """Gradients of conv2d w.r.t. input, weights and bias."""
    xp, w = cache
    n, c_out, h, wd = grad_out.shape
    c_in = w.shape[1]
    wmat = w.reshape(c_out, c_in * 9)
    gy = grad_out.reshape(n, c_out, h * wd)

    grad_b = grad_out.sum(axis=(0, 2, 3))
    gw_mat = np.zeros((c_out, c_in * 9))
    grad_xp = np.zeros_like(xp)
    for s in range(0, n, _CONV_CHUNK):
        cols = _im2col3(xp[s:s + _CONV_CHUNK], h, wd)
        gy_c = gy[s:s + _CONV_CHUNK]
        m = gy_c.shape[0]
        gw_mat += gy_c.transpose(1, 0, 2).reshape(c_out, -1) @ \
            cols.transpose(1, 0, 2).reshape(c_in * 9, -1).T
        dcols = (wmat.T @ gy_c).reshape(m, c_in, 3, 3, h, wd)
        for di in range(3):
            for dj in range(3):
                grad_xp[s:s + m, :, di:di + h, dj:dj + wd] += dcols[:, :, di, dj]
    grad_x = grad_xp[:, :, 1:-1, 1:-1]
    return grad_x, gw_mat.reshape(w.shape), grad_b


def maxpool2(x: np.ndarray):
    """2x2 max pooling, stride 2. Odd trailing rows/columns are dropped."""
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ValueError(f"maxpool2: spatial dims {h}x{w} too small to pool")
    xc = x[:, :, :h2 * 2, :w2 * 2]
    win = xc.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (idx.astype(np.uint8), (n, c, h, w))


def maxpool2_backward(grad_out: np.ndarray, cache):
    """Route each output gradient to the argmax position of its window."""
    idx, (n, c, h, w) = cache
    h2, w2 = h // 2, w // 2
    gwin = np.zeros((n, c, h2, w2, 4))
    np.put_along_axis(gwin, idx[..., None].astype(np.intp), grad_out[..., None], axis=-1)
    gx = np.zeros((n, c, h, w))
    gx[:, :, :h2 * 2, :w2 * 2] = (
        gwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
    )
    return gx


def batchnorm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray,
              run_mean: np.ndarray, run_var: np.ndarray, mode: str):
    """Per-channel batch normalization over the (n, h, w) axes.

    ``train`` normalizes with batch statistics and updates ``run_mean`` /
    ``run_var`` in place (momentum 0.1, biased variance); ``eval`` uses the
    stored running statistics. A train-mode batch of one instance is allowed:
    the variance then comes from that single instance's spatial values.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"batchnorm: unknown mode {mode!r}")
    if mode == "train":
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        run_mean *= 1.0 - BN_MOMENTUM
        run_mean += BN_MOMENTUM * mean
        run_var *= 1.0 - BN_MOMENTUM
        run_var += BN_MOMENTUM * var
    else:
        mean, var = run_mean, run_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
    out = scale[:, None, None] * xhat + shift[:, None, None]
    return out, (xhat, inv_std, scale, mode)


def batchnorm_backward(grad_out: np.ndarray, cache):
    """Gradients of batchnorm w.r.t. input, scale and shift."""
    xhat, inv_std, scale, mode = cache
    grad_shift = grad_out.sum(axis=(0, 2, 3))
    grad_scale = (grad_out * xhat).sum(axis=(0, 2, 3))
    if mode == "eval":
        grad_x = grad_out * (scale * inv_std)[:, None, None]
        return grad_x, grad_scale, grad_shift
    n, c, h, w = grad_out.shape
    m = n * h * w
    gxhat = grad_out * scale[:, None, None]
    grad_x = (inv_std[:, None, None] / m) * (
        m * gxhat
        - gxhat.sum(axis=(0, 2, 3))[:, None, None]
        - xhat * (gxhat * xhat).sum(axis=(0, 2, 3))[:, None, None]
    )
    return grad_x, grad_scale, grad_shift


def relu(x: np.ndarray):
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(grad_out: np.ndarray, cache):
    return np.where(cache, grad_out, 0.0)


def gap(x: np.ndarray):
    """Global average pooling: (n, c, h, w) -> (n, c)."""
    return x.mean(axis=(2, 3)), x.shape


def gap_backward(grad_out: np.ndarray, cache):
    n, c, h, w = cache
    gx = np.empty((n, c, h, w))
    gx[:] = (grad_out / (h * w))[:, :, None, None]
    return gx


def fc_logits(latent: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return latent @ w + b


def fc_softmax_ce(latent: np.ndarray, w: np.ndarray, b: np.ndarray, labels: np.ndarray):
    """Fully connected head + softmax cross-entropy, mean over the batch.

    Returns ``(loss, (grad_latent, grad_w, grad_b))``.
    """
    n = latent.shape[0]
    n_classes = w.shape[1]
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    logits = fc_logits(latent, w, b)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(n), labels].mean()
    gl = np.exp(log_probs)
    gl[np.arange(n), labels] -= 1.0
    gl /= n
    grad_w = latent.T @ gl
    grad_b = gl.sum(axis=0)
    grad_latent = gl @ w.T
    return loss, (grad_latent, grad_w, grad_b)


@dataclass
class AdamState:
    """First/second moment accumulators and step counter for Adam."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 1e-3) -> "AdamState":
        state = cls(lr=lr)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} != param shape "
                             f"{p.shape} for '{name}'")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"adam_step: non-finite gradient for '{name}'")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
