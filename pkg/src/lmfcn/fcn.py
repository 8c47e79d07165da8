"""The three-block convolutional feature extractor.

Layer stack: conv(c -> 64), BN, ReLU, maxpool2, conv(64 -> 128), BN, ReLU,
maxpool2, conv(128 -> phi), BN, ReLU, global average pooling. Images go in,
phi-dimensional latent vectors come out; the backward pass accepts
per-instance latent gradients and returns parameter gradients.

Global average pooling makes the latent width independent of image size, so
mixed resolutions are allowed: inputs are grouped by (h, w), forwarded per
group and reassembled in the original row order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn

DEFAULT_WIDTHS = (64, 128)

# eval-mode passes discard caches, so memory is bounded by chunking instead
_EVAL_CHUNK = 32


@dataclass
class FcnParams:
    """Learnable tensors plus BN running statistics, keyed by name."""

    c: int
    phi: int
    widths: tuple = DEFAULT_WIDTHS
    tensors: dict = field(default_factory=dict)
    running: dict = field(default_factory=dict)

    @property
    def n_blocks(self) -> int:
        return len(self.widths) + 1

    def channel_chain(self) -> list:
        return [self.c, *self.widths, self.phi]

    def zero_grads(self) -> dict:
        return {name: np.zeros_like(t) for name, t in self.tensors.items()}


def fcn_init(seed: int, c: int = 3, phi: int = 16,
             widths: tuple = DEFAULT_WIDTHS) -> FcnParams:
    """He-initialized parameters for the conv stack; BN starts as identity."""
    if phi < 1:
        raise ValueError("phi must be >= 1")
    rng = np.random.default_rng(seed)
    params = FcnParams(c=c, phi=phi, widths=tuple(widths))
    chain = params.channel_chain()
    for i in range(params.n_blocks):
        c_in, c_out = chain[i], chain[i + 1]
        fan_in = c_in * 9
        params.tensors[f"conv{i + 1}_w"] = rng.normal(
            0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, 3, 3))
        params.tensors[f"conv{i + 1}_b"] = np.zeros(c_out)
        params.tensors[f"bn{i + 1}_scale"] = np.ones(c_out)
        params.tensors[f"bn{i + 1}_shift"] = np.zeros(c_out)
        params.running[f"bn{i + 1}_mean"] = np.zeros(c_out)
        params.running[f"bn{i + 1}_var"] = np.ones(c_out)
    return params


def _forward_batch(x: np.ndarray, params: FcnParams, mode: str, need_cache: bool):
    t = params.tensors
    r = params.running
    caches = [] if need_cache else None
    h = x
    for i in range(1, params.n_blocks + 1):
        h, c_conv = nn.conv2d(h, t[f"conv{i}_w"], t[f"conv{i}_b"])
        h, c_bn = nn.batchnorm(h, t[f"bn{i}_scale"], t[f"bn{i}_shift"],
                               r[f"bn{i}_mean"], r[f"bn{i}_var"], mode)
        h, c_relu = nn.relu(h)
        if i < params.n_blocks:
            h, c_pool = nn.maxpool2(h)
        else:
            c_pool = None
        if need_cache:
            caches.append((c_conv, c_bn, c_relu, c_pool))
    latent, c_gap = nn.gap(h)
    if need_cache:
        caches.append(c_gap)
    return latent, caches


def _backward_batch(latent_grads: np.ndarray, caches, params: FcnParams, grads: dict):
    gh = nn.gap_backward(latent_grads, caches[-1])
    for i in range(params.n_blocks, 0, -1):
        c_conv, c_bn, c_relu, c_pool = caches[i - 1]
        if c_pool is not None:
            gh = nn.maxpool2_backward(gh, c_pool)
        gh = nn.relu_backward(gh, c_relu)
        gh, gscale, gshift = nn.batchnorm_backward(gh, c_bn)
        grads[f"bn{i}_scale"] += gscale
        grads[f"bn{i}_shift"] += gshift
        gh, gw, gb = nn.conv2d_backward(gh, c_conv)
        grads[f"conv{i}_w"] += gw
        grads[f"conv{i}_b"] += gb


def _as_groups(images):
    """Group images by resolution, keeping the original row order."""
    if isinstance(images, np.ndarray):
        if images.ndim != 4:
            raise ValueError(f"expected (n, c, h, w) images, got shape {images.shape}")
        return [(np.arange(images.shape[0]), images)]
    by_shape: dict = {}
    for row, img in enumerate(images):
        img = np.asarray(img, dtype=np.float64)
        if img.ndim != 3:
            raise ValueError(f"image {row} is not (c, h, w): shape {img.shape}")
        by_shape.setdefault(img.shape, ([], []))
        by_shape[img.shape][0].append(row)
        by_shape[img.shape][1].append(img)
    return [(np.asarray(rows), np.stack(imgs)) for rows, imgs in by_shape.values()]


def fcn_forward(images, params: FcnParams, mode: str, need_cache: bool = True):
    """Map images to the latent matrix T (rows aligned with input order).

    Returns ``(T, caches)``; pass ``need_cache=False`` for inference-style
    passes, which then run in fixed-size chunks to bound memory and return
    ``caches=None``.
    """
    groups = _as_groups(images)
    n = sum(len(rows) for rows, _ in groups)
    latent = np.empty((n, params.phi))
    caches = [] if need_cache else None
    for rows, x in groups:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1] != params.c:
            raise ValueError(f"images have {x.shape[1]} channels, params expect {params.c}")
        if min(x.shape[2], x.shape[3]) < 4:
            raise ValueError(f"images must be at least 4x4, got {x.shape[2]}x{x.shape[3]}")
        if need_cache:
            lat, cache = _forward_batch(x, params, mode, True)
            latent[rows] = lat
            caches.append((rows, cache))
        else:
            for s in range(0, x.shape[0], _EVAL_CHUNK):
                lat, _ = _forward_batch(x[s:s + _EVAL_CHUNK], params, mode, False)
                latent[rows[s:s + _EVAL_CHUNK]] = lat
    if not np.all(np.isfinite(latent)):
        raise FloatingPointError("non-finite values in latent matrix")
    return latent, caches


def fcn_backward(latent_grads: np.ndarray, caches, params: FcnParams) -> dict:
    """Accumulate parameter gradients from per-row latent gradients.

    ``latent_grads`` rows must align with the rows of the forward call that
    produced ``caches`` (same count, same order).
    """
    if caches is None:
        raise ValueError("fcn_backward needs caches from a need_cache=True forward")
    n_rows = sum(len(rows) for rows, _ in caches)
    if latent_grads.shape != (n_rows, params.phi):
        raise ValueError(f"latent_grads shape {latent_grads.shape} does not match "
                         f"forwarded rows ({n_rows}, {params.phi})")
    grads = params.zero_grads()
    for rows, cache in caches:
        _backward_batch(latent_grads[rows], cache, params, grads)
    return grads
