"""Temporal image forensics toolkit.

Simulates sensor aging (in-field pixel defects, sensor dust) with ground
truth, implements classical image-age approximation estimators, and audits
classifiers for content bias with average-image diagnostics.
"""

__version__ = "0.1.0"

from .errors import InvalidArgument, InvalidModel
from .imaging import AcquisitionMeta, PixelCoord, RasterImage

__all__ = [
    "__version__",
    "AcquisitionMeta",
    "InvalidArgument",
    "InvalidModel",
    "PixelCoord",
    "RasterImage",
]
