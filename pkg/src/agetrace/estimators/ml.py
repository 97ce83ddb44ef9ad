"""Maximum-likelihood age approximation from defect residuals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..detection import (
    DefectEstimate,
    estimate_onset_and_params,
    extract_residual_series,
    site_observations,
)
from ..errors import InvalidArgument, InvalidModel
from ..imaging import AcquisitionMeta, PixelCoord, RasterImage

MODEL_KIND = "ml"
MODEL_VERSION = 1


@dataclass
class LikelihoodAgeModel:
    """Defects with estimated onsets over a trusted set of ``n_trusted`` images."""

    defects: list[DefectEstimate]
    n_trusted: int
    kernel: int = 3
    tau_formula: str = "iso/100*exposure_s"
    trusted_timestamps: list = field(default_factory=list)

    def __post_init__(self):
        if not self.defects:
            raise InvalidModel("the defect set is empty")
        if any(d.params_before.sigma <= 0 or d.params_after.sigma <= 0 for d in self.defects):
            raise InvalidModel("every defect needs sigma > 0 on both sides")

    @property
    def coords(self) -> list[PixelCoord]:
        return [d.coord for d in self.defects]

    def onset_indices(self) -> list[int]:
        return sorted({d.onset_index_j for d in self.defects if 0 < d.onset_index_j < self.n_trusted})

    def candidate_indices(self) -> list[int]:
        """One representative (the interval start) per run of indices with identical likelihood."""
        return [0] + self.onset_indices()

    def as_dict(self) -> dict:
        return {
            "kind": MODEL_KIND,
            "version": MODEL_VERSION,
            "n_trusted": self.n_trusted,
            "kernel": self.kernel,
            "tau_formula": self.tau_formula,
            "trusted_timestamps": list(self.trusted_timestamps),
            "defects": [d.as_dict() for d in self.defects],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LikelihoodAgeModel":
        if d.get("kind") != MODEL_KIND:
            raise InvalidModel(f"not a maximum-likelihood model: kind={d.get('kind')!r}")
        if d.get("version") != MODEL_VERSION:
            raise InvalidModel(f"unsupported model version {d.get('version')}")
        return cls(
            [DefectEstimate.from_dict(x) for x in d["defects"]],
            int(d["n_trusted"]),
            int(d.get("kernel", 3)),
            d.get("tau_formula", "iso/100*exposure_s"),
            list(d.get("trusted_timestamps", [])),
        )


def fit_likelihood_model(
    images: Sequence[RasterImage],
    metas: Sequence[AcquisitionMeta],
    coords: Sequence[PixelCoord],
    kernel: int = 3,
) -> LikelihoodAgeModel:
    """Estimate onset and per-side parameters of every defect over the trusted images."""
    if not coords:
        raise InvalidModel("no defective pixels to model")
    series = extract_residual_series(images, coords, metas, kernel)
    defects = [estimate_onset_and_params(s) for s in series]
    return LikelihoodAgeModel(defects, len(images), kernel, trusted_timestamps=[m.timestamp for m in metas])


def _gauss_logpdf(x, mean, sigma):
    return -0.5 * math.log(2 * math.pi) - math.log(sigma) - (x - mean) ** 2 / (2 * sigma * sigma)


def log_likelihood_profile(model: LikelihoodAgeModel, residuals, illumination, tau) -> dict:
    """Summed Gaussian log-likelihood for each candidate index."""
    w = np.asarray(residuals, dtype=float)
    I = np.asarray(illumination, dtype=float)
    if w.shape != (len(model.defects),) or I.shape != w.shape:
        raise InvalidArgument("residuals and illumination must cover every modeled defect")
    profile = {}
    for j in model.candidate_indices():
        total = 0.0
        for i, d in enumerate(model.defects):
            p = d.params_at(j)
            total += _gauss_logpdf(w[i], p.mean(I[i], tau), p.sigma)
        profile[j] = total
    return profile


def ml_approximate_age(model: LikelihoodAgeModel, residuals, illumination, tau: float) -> int:
    """Index of the trusted ordering that maximizes the likelihood; ties go to the smallest index.

    Indices between two consecutive onsets are indistinguishable, so the
    start of the winning interval is returned.
    """
    if not isinstance(model, LikelihoodAgeModel) or not model.defects:
        raise InvalidModel("an estimated defect set is required")
    profile = log_likelihood_profile(model, residuals, illumination, tau)
    best = max(profile.values())
    return min(j for j, v in profile.items() if v == best)


def approximate_image(model: LikelihoodAgeModel, image: RasterImage, meta: Optional[AcquisitionMeta] = None,
                      tau: Optional[float] = None) -> int:
    """Residuals at the modeled defects of one image, then :func:`ml_approximate_age`."""
    if tau is None:
        if meta is None:
            raise InvalidArgument("either meta or tau is required")
        tau = meta.tau
    res, illum = site_observations([image], model.coords, model.kernel)
    return ml_approximate_age(model, res[0], illum[0], tau)


@dataclass
class LikelihoodClassifier:
    """Class predictions from the ML index estimate: the class of the trusted image at that index."""

    model: LikelihoodAgeModel
    index_classes: Sequence[int]
    tau: float

    def __call__(self, image: RasterImage) -> int:
        j = approximate_image(self.model, image, tau=self.tau)
        return int(self.index_classes[min(j, len(self.index_classes) - 1)])
