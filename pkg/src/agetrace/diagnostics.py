"""Content-bias audit of age classifiers through per-class average images and spot masks."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import rng as rngs
from .errors import InvalidArgument
from .imaging import RasterImage, median_array

INPUT_TYPES = ("S", "Y", "Y_c", "Y_r", "Y_f")
VARIANTS = ("Y", "Y_c", "Y_r", "Y_f")
VERDICTS = ("age-signal-consistent", "content-bias-suspected", "inconclusive")
DEFAULT_THRESHOLDS = {"delta1": 0.1, "delta2": 0.1, "delta3": 0.15}


@dataclass(frozen=True)
class AverageImageSet:
    """The four average-image variants of one class, at the source bit depth."""

    class_label: object
    mean: RasterImage
    constant: RasterImage
    structure: RasterImage
    filtered: RasterImage

    def variant(self, name: str) -> RasterImage:
        return {"Y": self.mean, "Y_c": self.constant, "Y_r": self.structure, "Y_f": self.filtered}[name]


def _digest(img: RasterImage) -> bytes:
    return hashlib.sha1(img.data.tobytes() + str(img.data.shape).encode()).digest()


def average_variants(images: Sequence[RasterImage], class_label=None) -> AverageImageSet:
    if not images:
        raise InvalidArgument(f"class {class_label!r} has no samples")
    depth = images[0].bit_depth
    if any(x.data.shape != images[0].data.shape or x.bit_depth != depth for x in images):
        raise InvalidArgument("samples of a class must share shape and bit depth")
    mean = np.mean([x.data.astype(float) for x in images], axis=0)
    color = mean.mean(axis=(0, 1), keepdims=True)
    mid = (2 ** depth) / 2.0
    return AverageImageSet(
        class_label,
        RasterImage.from_float(mean, depth),
        RasterImage.from_float(np.broadcast_to(color, mean.shape), depth),
        RasterImage.from_float(mean - color + mid, depth),
        RasterImage.from_float(median_array(mean, 3), depth),
    )


def average_images(samples: Mapping[object, Sequence[RasterImage]], fraction: float = 0.8,
                   n_sets: int = 20, seed: int = 0) -> list[dict]:
    """``n_sets`` dictionaries class -> :class:`AverageImageSet`, each from a random subsample.

    Samples are put in a content-defined order before drawing, so the result
    does not depend on the order in which they are supplied.
    """
    if not 0 < fraction <= 1:
        raise InvalidArgument("fraction must be in (0, 1]")
    if n_sets < 1:
        raise InvalidArgument("n_sets must be >= 1")
    if not samples:
        raise InvalidArgument("no classes given")
    ordered = {}
    for label, imgs in samples.items():
        if not imgs:
            raise InvalidArgument(f"class {label!r} has no samples")
        ordered[label] = sorted(imgs, key=_digest)
    out = []
    for s in range(n_sets):
        per_class = {}
        for label, imgs in ordered.items():
            k = max(1, int(round(fraction * len(imgs))))
            g = rngs.stream(seed, "average-subsample", s, str(label))
            pick = np.sort(g.choice(len(imgs), size=k, replace=False))
            per_class[label] = average_variants([imgs[i] for i in pick], label)
        out.append(per_class)
    return out


@dataclass
class SuiteResult:
    accuracies: dict
    failures: dict
    n_sets: int


def _accuracy(classifier, items) -> tuple[float, int]:
    correct = total = failed = 0
    for img, label in items:
        try:
            pred = classifier(img)
        except Exception:  # a failing prediction is counted, not fatal
            failed += 1
            continue
        total += 1
        correct += int(pred == label)
    return (correct / total if total else float("nan")), failed


def evaluate_input_suite(classifier: Callable[[RasterImage], object], average_sets: Sequence[dict],
                         test_images: Sequence[RasterImage], test_labels: Sequence) -> SuiteResult:
    """Accuracy on held-out originals and on each average-image variant (mean over sets)."""
    if len(test_images) != len(test_labels):
        raise InvalidArgument("test images and labels differ in length")
    acc, failures = {}, {}
    acc["S"], failures["S"] = _accuracy(classifier, zip(test_images, test_labels))
    for v in VARIANTS:
        vals, fails = [], 0
        for sets in average_sets:
            a, f = _accuracy(classifier, [(s.variant(v), label) for label, s in sets.items()])
            fails += f
            if not np.isnan(a):
                vals.append(a)
        acc[v] = float(np.mean(vals)) if vals else float("nan")
        failures[v] = fails
    return SuiteResult(acc, failures, len(average_sets))


def bias_verdict(table: Mapping[str, float], chance: float, delta1: float = 0.1, delta2: float = 0.1,
                 delta3: float = 0.15) -> str:
    missing = [k for k in INPUT_TYPES if k not in table]
    if missing:
        raise InvalidArgument(f"accuracy table lacks {missing}")
    if (table["Y"] >= table["S"] - delta1 and table["Y_c"] <= chance + delta2
            and table["Y_f"] <= chance + delta2):
        return "age-signal-consistent"
    if table["Y_c"] >= chance + delta3:
        return "content-bias-suspected"
    return "inconclusive"


@dataclass
class BiasReport:
    accuracies: dict
    chance_level: float
    verdict: str
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    n_sets: int = 0
    failures: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "accuracies": dict(self.accuracies),
            "chance_level": self.chance_level,
            "verdict": self.verdict,
            "thresholds": dict(self.thresholds),
            "threshold_policy": "toolkit policy, not a published calibration",
            "n_sets": self.n_sets,
            "failures": dict(self.failures),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["input_type", "accuracy"])
        for k in INPUT_TYPES:
            w.writerow([k, repr(float(self.accuracies[k]))])
        return buf.getvalue()


def bias_report(classifier, samples: Mapping[object, Sequence[RasterImage]], test_images, test_labels,
                fraction: float = 0.8, n_sets: int = 20, seed: int = 0,
                thresholds: Optional[Mapping[str, float]] = None) -> BiasReport:
    """Average images, suite evaluation and verdict in one call; chance is 1 / number of classes."""
    th = dict(DEFAULT_THRESHOLDS, **(thresholds or {}))
    sets = average_images(samples, fraction, n_sets, seed)
    res = evaluate_input_suite(classifier, sets, test_images, test_labels)
    chance = 1.0 / len(samples)
    verdict = bias_verdict(res.accuracies, chance, th["delta1"], th["delta2"], th["delta3"])
    return BiasReport(res.accuracies, chance, verdict, th, res.n_sets, res.failures)


@dataclass
class MaskReport:
    masked_accuracy: float
    unmasked_accuracy: float
    failures: int

    def as_dict(self) -> dict:
        return dict(vars(self))


def apply_mask(img: RasterImage, mask) -> RasterImage:
    m = np.asarray(mask)
    if m.ndim == 2:
        m = m[:, :, None]
    if m.shape[:2] != img.data.shape[:2] or m.shape[2] not in (1, img.channels):
        raise InvalidArgument(f"mask shape {np.asarray(mask).shape} does not match image {img.data.shape}")
    return RasterImage(img.data * (m > 0), img.bit_depth)


def mask_evaluate(classifier, masks, images: Sequence[RasterImage], labels: Sequence) -> MaskReport:
    """Accuracy with inputs multiplied by binary masks, next to the unmasked accuracy.

    ``masks`` is one array for all images or a sequence with one per image.
    """
    if len(images) != len(labels):
        raise InvalidArgument("images and labels differ in length")
    if isinstance(masks, np.ndarray):
        per_image = [masks] * len(images)
    else:
        per_image = list(masks)
        if len(per_image) != len(images):
            raise InvalidArgument("need one mask per image")
    masked = [apply_mask(img, m) for img, m in zip(images, per_image)]
    a_m, f_m = _accuracy(classifier, zip(masked, labels))
    a_u, f_u = _accuracy(classifier, zip(images, labels))
    return MaskReport(a_m, a_u, f_m + f_u)
