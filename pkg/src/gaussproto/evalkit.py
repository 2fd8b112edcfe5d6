"""Segmentation metrics and the colorspace-GMM superpixel baseline.

Metrics aggregate one confusion matrix over the whole dataset; "class"
columns refer to the foreground.  The baseline averages HSV values per
SLIC superpixel (hue encoded on the unit circle to avoid wraparound),
fits one gradient-trained GMM per class on those features, and labels
each superpixel by the class with the highest prior-weighted density.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gpl
from .colors import rgb_to_hsv
from .errors import MissingClassError, ShapeMismatchError
from .numerics import Adam
from .regions import SuperpixelConfig, SuperpixelMap, proposals_from_superpixels, slic


@dataclass
class MetricTable:
    mean_iou: float
    class_iou: float
    pixel_accuracy: float
    class_accuracy: float
    confusion: np.ndarray                    # (C, C); rows = truth, cols = prediction
    per_image: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict[str, float]:
        """Keys mirror the result-table column names."""
        return {
            "Mean IoU": self.mean_iou,
            "Class IoU": self.class_iou,
            "Pixel Accuracy": self.pixel_accuracy,
            "Class Accuracy": self.class_accuracy,
        }


def confusion_matrix(pred: np.ndarray, truth: np.ndarray, num_classes: int) -> np.ndarray:
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.shape != truth.shape:
        raise ShapeMismatchError("prediction and ground truth differ in size")
    if pred.min() < 1 or pred.max() > num_classes or truth.min() < 1 or truth.max() > num_classes:
        raise ValueError(f"labels must lie in 1..{num_classes}")
    idx = (truth - 1) * num_classes + (pred - 1)
    return np.bincount(idx, minlength=num_classes ** 2).reshape(num_classes, num_classes)


def _metrics_from_confusion(cm: np.ndarray) -> tuple[float, float, float, float]:
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    union = tp + fp + fn
    present = union > 0
    iou = np.where(present, tp / np.where(union == 0, 1.0, union), np.nan)
    mean_iou = float(np.nanmean(iou)) if present.any() else 1.0
    # foreground = every class above background (label 1)
    fg_iou = iou[1:]
    class_iou = float(np.nanmean(fg_iou)) if np.any(~np.isnan(fg_iou)) else 0.0
    pixel_accuracy = float(tp.sum() / max(cm.sum(), 1))
    fg_truth = cm[1:].sum()
    class_accuracy = float(tp[1:].sum() / fg_truth) if fg_truth > 0 else 0.0
    return mean_iou, class_iou, pixel_accuracy, class_accuracy


def evaluate(predictions, ground_truth, num_classes: int = 2) -> MetricTable:
    """Dataset-level metrics from per-pixel label maps (labels in 1..C)."""
    if isinstance(predictions, np.ndarray) and predictions.ndim == 2:
        predictions, ground_truth = [predictions], [ground_truth]
    if len(predictions) != len(ground_truth):
        raise ShapeMismatchError("need one ground-truth map per prediction")
    total = np.zeros((num_classes, num_classes), dtype=np.int64)
    per_image = []
    for pred, truth in zip(predictions, ground_truth):
        cm = confusion_matrix(pred, truth, num_classes)
        total += cm
        m = _metrics_from_confusion(cm)
        per_image.append({"mean_iou": m[0], "class_iou": m[1],
                          "pixel_accuracy": m[2], "class_accuracy": m[3]})
    mean_iou, class_iou, pix, cls = _metrics_from_confusion(total)
    return MetricTable(mean_iou=mean_iou, class_iou=class_iou, pixel_accuracy=pix,
                       class_accuracy=cls, confusion=total, per_image=per_image)


# -- HSV-GMM superpixel baseline -------------------------------------------------


@dataclass
class HsvGmmBaseline:
    mixtures: dict[int, gpl.GplParams]   # class label -> its own GMM
    log_priors: np.ndarray               # (C,), class frequency over training superpixels
    superpixels: SuperpixelConfig
    num_classes: int


def superpixel_hsv_features(image: np.ndarray, sp: SuperpixelMap) -> np.ndarray:
    """Mean (cos 2*pi*h, sin 2*pi*h, s, v) per superpixel, shape (S, 4)."""
    hsv = rgb_to_hsv(image)
    angle = 2.0 * np.pi * hsv[..., 0]
    feats = np.stack([np.cos(angle), np.sin(angle), hsv[..., 1], hsv[..., 2]], axis=-1)
    flat = feats.reshape(-1, 4)
    labels = sp.labels.reshape(-1)
    counts = np.bincount(labels, minlength=sp.num_segments).astype(np.float64)
    out = np.empty((sp.num_segments, 4))
    for ch in range(4):
        out[:, ch] = np.bincount(labels, weights=flat[:, ch],
                                 minlength=sp.num_segments) / counts
    return out


def hsv_gmm_baseline_fit(images, masks, superpixels: SuperpixelConfig | None = None,
                         components_per_class: int = 2, num_classes: int = 2,
                         steps: int = 400, lr: float = 0.05,
                         seed: int = 0) -> HsvGmmBaseline:
    """Fit per-class GMMs over superpixel mean-HSV features (fully supervised)."""
    superpixels = superpixels or SuperpixelConfig()
    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for image, mask in zip(images, masks):
        sp = slic(image, superpixels.num_segments, superpixels.compactness,
                  superpixels.max_iter, superpixels.min_fragment_ratio)
        label_map = np.where(np.asarray(mask) > 0, 2, 1)
        props = proposals_from_superpixels(sp, label_map, scale=1, num_classes=num_classes)
        feats.append(superpixel_hsv_features(image, sp))
        labels.append(np.array([p.label for p in props], dtype=np.int64))
    x = np.concatenate(feats)
    y = np.concatenate(labels)

    counts = np.bincount(y, minlength=num_classes + 1)[1:]
    if np.any(counts == 0):
        missing = [c + 1 for c in range(num_classes) if counts[c] == 0]
        raise MissingClassError(f"no training superpixels for classes {missing}")

    mixtures = {}
    for cls in range(1, num_classes + 1):
        xc = x[y == cls]
        k = min(components_per_class, len(xc))
        params = gpl.init_from_data(xc, k, np.full(k, cls), rng=rng)
        opt = Adam(params.trainables(), lr=lr)
        for _ in range(steps):
            opt.zero_grad()
            loss = gpl.gmm_nll(params, xc)
            loss.backward()
            opt.step()
        mixtures[cls] = params
    return HsvGmmBaseline(mixtures=mixtures,
                          log_priors=np.log(counts / counts.sum()),
                          superpixels=superpixels, num_classes=num_classes)


def baseline_class_scores(model: HsvGmmBaseline, features: np.ndarray) -> np.ndarray:
    """Prior-weighted log densities per class, shape (S, C)."""
    scores = np.empty((len(features), model.num_classes))
    for cls in range(1, model.num_classes + 1):
        dens = gpl.mixture_log_density(model.mixtures[cls], features)
        scores[:, cls - 1] = dens.data + model.log_priors[cls - 1]
    return scores


def hsv_gmm_baseline_predict(model: HsvGmmBaseline, image: np.ndarray) -> np.ndarray:
    """Per-pixel class map: each superpixel takes its argmax-density class.

    Ties resolve to the smallest class index, i.e. toward background.
    """
    cfg = model.superpixels
    sp = slic(image, cfg.num_segments, cfg.compactness, cfg.max_iter,
              cfg.min_fragment_ratio)
    scores = baseline_class_scores(model, superpixel_hsv_features(image, sp))
    seg_class = np.argmax(scores, axis=1).astype(np.int64) + 1
    return seg_class[sp.labels]
