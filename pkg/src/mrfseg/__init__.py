"""Unsupervised image segmentation.

SLIC superpixels described by color moments and derivative texture
histograms, classified by one-vs-all RBF SVMs with Platt calibration,
smoothed by a superpixel-level MRF, and iteratively reduced to a few
coherent segments.  See the README for the CLI and the evaluation suite.
"""

from . import backends
from .evaluation import EvalReport, evaluate, f_frag, f_measure, f_multi, f_single
from .image_io import (
    BinaryMask,
    LabelMap,
    LabImage,
    RasterImage,
    lab_to_rgb,
    load_image,
    load_label_map,
    load_mask,
    rgb_to_lab,
    save_label_map,
)
from .pipeline import PipelineConfig, run
from .presegment import SlicParams, slic, superpixel_stats

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "EvalReport",
    "LabImage",
    "LabelMap",
    "PipelineConfig",
    "RasterImage",
    "SlicParams",
    "backends",
    "evaluate",
    "f_frag",
    "f_measure",
    "f_multi",
    "f_single",
    "lab_to_rgb",
    "load_image",
    "load_label_map",
    "load_mask",
    "rgb_to_lab",
    "run",
    "save_label_map",
    "slic",
    "superpixel_stats",
]
