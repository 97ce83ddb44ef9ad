"""Pixelwise k-nearest-neighbor age classification with local-variation features.

Every non-border pixel of a block gets its own KNN over a 33-value feature
(the 3x3x3 neighborhood plus two local-variation statistics per channel).
The pixels that classify a validation set best are kept, retrained with
each class split into an early and a late half, and combined by voting
within blocks and then across blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidArgument, InvalidModel
from ..imaging import RasterImage, block_origins

FEATURE_DIM = 33
MODEL_KIND = "pixelwise-knn"
MODEL_VERSION = 1


def lv_features(window) -> np.ndarray:
    """33 features of one 3x3x3 window: raw values (row, col, channel order), LV1 x3, LV2 x3."""
    w = np.asarray(window, dtype=float)
    if w.shape != (3, 3, 3):
        raise InvalidArgument(f"window must be 3x3x3, got {w.shape}")
    return _features(w[None])[0]


def _features(windows: np.ndarray) -> np.ndarray:
    """``(..., 3, 3, 3)`` windows to ``(..., 33)`` features."""
    center = windows[..., 1, 1, :]
    total = windows.sum(axis=(-3, -2))
    lv1 = np.abs(center - (total - center) / 8.0)
    lv2 = np.sqrt(((windows - center[..., None, None, :]) ** 2).sum(axis=(-3, -2)) / 8.0)
    raw = windows.reshape(windows.shape[:-3] + (27,))
    return np.concatenate([raw, lv1, lv2], axis=-1)


def _as_rgb(img) -> np.ndarray:
    a = img.data if isinstance(img, RasterImage) else np.asarray(img)
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.shape[2] == 1:
        a = np.repeat(a, 3, axis=2)
    if a.shape[2] != 3:
        raise InvalidArgument(f"expected 1 or 3 channels, got {a.shape[2]}")
    return a


def _windows(block: np.ndarray) -> np.ndarray:
    """Interior 3x3 windows of an ``(b, b, 3)`` block as ``(b-2, b-2, 3, 3, 3)``."""
    return sliding_window_view(block, (3, 3), axis=(0, 1)).transpose(0, 1, 3, 4, 2)


def feature_map(block) -> np.ndarray:
    """Features of every non-border pixel, ``((b-2)**2, 33)`` in raster order."""
    f = _features(_windows(_as_rgb(block)))
    return f.reshape(-1, FEATURE_DIM)


def _sq_dist(q: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Squared distances between ``(c, m, d)`` queries and ``(c, n, d)`` references."""
    cross = q @ ref.transpose(0, 2, 1)
    return (q * q).sum(-1)[:, :, None] + (ref * ref).sum(-1)[:, None, :] - 2.0 * cross


def _knn_vote(dist: np.ndarray, labels: np.ndarray, n_labels: int, k: int) -> np.ndarray:
    """Majority label of the ``k`` nearest references; ties go to the smallest label."""
    nn = np.argsort(dist, axis=-1, kind="stable")[..., :k]
    counts = (labels[nn][..., None] == np.arange(n_labels)).sum(axis=-2)
    return np.argmax(counts, axis=-1)


def _vote(labels: np.ndarray, n_labels: int) -> int:
    return int(np.argmax(np.bincount(labels, minlength=n_labels)))


@dataclass
class BlockClassifiers:
    """Selected pixels of one block, each with its own training features."""

    origin: tuple
    pixels: np.ndarray          # (k_select,) raster index among interior pixels
    features: np.ndarray        # (k_select, n_train, 33)
    validation_accuracy: np.ndarray


@dataclass
class PixelwiseKNNModel:
    classes: list
    block_size: int
    k_neighbors: int
    sub_labels: np.ndarray      # (n_train,) sub-class of each stored training sample
    blocks: list

    @property
    def k_select(self) -> int:
        return len(self.blocks[0].pixels)

    def sub_to_class(self, sub):
        return np.asarray(sub) // 2

    def selected_pixels(self) -> list:
        """``(block index, row, col)`` within the block for every kept classifier."""
        inner = self.block_size - 2
        return [(b, int(p // inner) + 1, int(p % inner) + 1)
                for b, blk in enumerate(self.blocks) for p in blk.pixels]

    def as_dict(self) -> dict:
        return {
            "kind": MODEL_KIND,
            "version": MODEL_VERSION,
            "classes": list(self.classes),
            "block_size": self.block_size,
            "k_neighbors": self.k_neighbors,
            "sub_labels": self.sub_labels.tolist(),
            "blocks": [{
                "origin": list(b.origin),
                "pixels": b.pixels.tolist(),
                "features": b.features.tolist(),
                "validation_accuracy": b.validation_accuracy.tolist(),
            } for b in self.blocks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PixelwiseKNNModel":
        if d.get("kind") != MODEL_KIND or d.get("version") != MODEL_VERSION:
            raise InvalidModel("not a supported pixelwise KNN model")
        blocks = [BlockClassifiers(tuple(b["origin"]), np.asarray(b["pixels"], dtype=int),
                                   np.asarray(b["features"], dtype=float),
                                   np.asarray(b["validation_accuracy"], dtype=float))
                  for b in d["blocks"]]
        return cls(list(d["classes"]), int(d["block_size"]), int(d["k_neighbors"]),
                   np.asarray(d["sub_labels"], dtype=int), blocks)


def _pixel_features(images, origin, b, pixels) -> np.ndarray:
    """Features of the given interior pixels in every image, ``(n_images, len(pixels), 33)``."""
    r, c = origin
    inner = b - 2
    rows, cols = pixels // inner, pixels % inner
    return np.stack([_features(_windows(img[r:r + b, c:c + b])[rows, cols]) for img in images])


def _validation_accuracy(tr, ytr, va, yva, origin, b, n_classes, k, budget=2.5e7):
    """Validation accuracy of every interior pixel's KNN, ``((b-2)**2,)`` in raster order.

    The block is processed in row strips so memory stays bounded for large blocks.
    """
    inner = b - 2
    per_pixel = max((len(tr) + len(va)) * FEATURE_DIM, len(tr) * len(va))
    rows = max(1, min(inner, int(budget // (inner * per_pixel))))
    acc = np.empty(inner * inner)
    for r0 in range(0, inner, rows):
        pix = np.arange(r0 * inner, min(r0 + rows, inner) * inner)
        ftr = _pixel_features(tr, origin, b, pix).transpose(1, 0, 2)
        fva = _pixel_features(va, origin, b, pix).transpose(1, 0, 2)
        pred = _knn_vote(_sq_dist(fva, ftr), ytr, n_classes, k)
        acc[pix] = (pred == yva).mean(axis=1)
    return acc


def _temporal_halves(y: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Sub-class ``2k`` for samples at or before their class median time, ``2k + 1`` after."""
    sub = 2 * y
    for k in np.unique(y):
        sel = y == k
        sub[sel & (times > np.median(times[sel]))] += 1
    return sub


def pixelwise_knn_train(
    train_images: Sequence,
    train_labels: Sequence,
    val_images: Sequence,
    val_labels: Sequence,
    train_times: Optional[Sequence[float]] = None,
    val_times: Optional[Sequence[float]] = None,
    block_size: int = 200,
    n_blocks: int = 45,
    k_select: int = 100,
    k_neighbors: int = 5,
    seed: int = 0,
) -> PixelwiseKNNModel:
    """Train, rank and keep the best per-pixel classifiers in ``n_blocks`` random blocks.

    Without timestamps the sample order within a class stands in for time.
    """
    if len(train_images) != len(train_labels) or len(val_images) != len(val_labels):
        raise InvalidArgument("images and labels must have equal lengths")
    if not val_images:
        raise InvalidArgument("a non-empty validation set is required")
    if (block_size - 2) ** 2 < k_select:
        raise InvalidArgument(f"{block_size}px blocks have fewer than {k_select} non-border pixels")
    if k_select < 1 or k_neighbors < 1:
        raise InvalidArgument("k_select and k_neighbors must be >= 1")
    train_labels = [c.item() if isinstance(c, np.generic) else c for c in train_labels]
    val_labels = [c.item() if isinstance(c, np.generic) else c for c in val_labels]
    classes = sorted(set(train_labels) | set(val_labels))
    if len(set(train_labels)) < 2:
        raise InvalidArgument("at least two classes are required in the training set")
    if len(train_images) < k_neighbors:
        raise InvalidArgument(f"need at least k_neighbors={k_neighbors} training samples")
    index = {c: i for i, c in enumerate(classes)}
    ytr = np.array([index[c] for c in train_labels])
    yva = np.array([index[c] for c in val_labels])
    tr = [_as_rgb(x) for x in train_images]
    va = [_as_rgb(x) for x in val_images]
    shape = tr[0].shape
    if any(a.shape != shape for a in tr + va):
        raise InvalidArgument("all images must share dimensions")
    t_tr = np.arange(len(tr), dtype=float) if train_times is None else np.asarray(train_times, float)
    t_va = len(tr) + np.arange(len(va), dtype=float) if val_times is None else np.asarray(val_times, float)
    sub = _temporal_halves(np.concatenate([ytr, yva]), np.concatenate([t_tr, t_va]))

    blocks = []
    for origin in block_origins(shape[0], shape[1], block_size, "random", n_blocks, seed):
        acc = _validation_accuracy(tr, ytr, va, yva, origin, block_size, len(classes), k_neighbors)
        keep = np.argsort(-acc, kind="stable")[:k_select]
        feats = _pixel_features(tr + va, origin, block_size, keep).transpose(1, 0, 2)
        blocks.append(BlockClassifiers(tuple(origin), keep, feats, acc[keep]))
    return PixelwiseKNNModel(classes, block_size, k_neighbors, sub, blocks)


def block_votes(model: PixelwiseKNNModel, image) -> np.ndarray:
    """Per-block class index votes ``(n_blocks, k_select)`` (class indices, not labels)."""
    a = _as_rgb(image)
    b = model.block_size
    n_sub = 2 * len(model.classes)
    out = []
    for blk in model.blocks:
        r, c = blk.origin
        if r + b > a.shape[0] or c + b > a.shape[1]:
            raise InvalidArgument(f"image {a.shape[:2]} is too small for block at {blk.origin}")
        win = _windows(a[r:r + b, c:c + b])
        inner = b - 2
        q = _features(win[blk.pixels // inner, blk.pixels % inner])
        d = _sq_dist(q[:, None, :], blk.features)[:, 0, :]
        out.append(model.sub_to_class(_knn_vote(d, model.sub_labels, n_sub, model.k_neighbors)))
    return np.array(out)


def pixelwise_knn_classify(model: PixelwiseKNNModel, image):
    """Class of an image by majority vote within blocks, then across blocks."""
    n = len(model.classes)
    votes = block_votes(model, image)
    per_block = np.array([_vote(v, n) for v in votes])
    return model.classes[_vote(per_block, n)]
