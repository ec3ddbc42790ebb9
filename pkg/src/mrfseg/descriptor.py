"""57-dimensional per-superpixel descriptors.

Color part (9): per RGB channel the mean, the standard deviation, and
the signed cube root of the third central moment, so all entries stay on
a comparable scale.  Texture part (48): a normalized histogram of
per-pixel codes built from first and second derivatives of the L
channel: 8 gradient orientations x 3 gradient magnitudes x the sign of
the Laplacian.
"""

import numpy as np
from scipy import ndimage

from .errors import EmptyRegionError
from .image_io import LabImage, RasterImage
from .presegment import SuperpixelPartition

N_ORIENT = 8
N_MAG = 3
N_CODES = N_ORIENT * N_MAG * 2
FEATURE_DIM = 9 + N_CODES

# Gradient magnitude thresholds in L-channel units per pixel (L spans
# [0, 100]); Sobel responses are divided by 8 to get units per pixel.
DEFAULT_T1 = 5.0
DEFAULT_T2 = 20.0


def color_moments(pixels) -> np.ndarray:
    """First three moments per channel for an (N, 3) pixel array.

    Output order: (mean, std, cbrt of third central moment) for r, g, b.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.size == 0:
        raise EmptyRegionError("cannot describe an empty region")
    pixels = pixels.reshape(-1, 3)
    mean = pixels.mean(axis=0)
    centered = pixels - mean
    m2 = (centered**2).mean(axis=0)
    m3 = (centered**3).mean(axis=0)
    out = np.empty(9)
    out[0::3] = mean
    out[1::3] = np.sqrt(m2)
    out[2::3] = np.cbrt(m3)
    return out


def texture_codes(lab: LabImage, t1: float = DEFAULT_T1, t2: float = DEFAULT_T2) -> np.ndarray:
    """Per-pixel texture code in [0, 48) from L-channel derivatives.

    code = orientation_bin * 6 + magnitude_bin * 2 + (laplacian >= 0).
    A zero gradient has orientation 0 (atan2 convention) and falls in
    magnitude bin 0.
    """
    lum = lab.data[:, :, 0]
    gx = ndimage.sobel(lum, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(lum, axis=0, mode="nearest") / 8.0
    lap = ndimage.laplace(lum, mode="nearest")

    angle = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)
    orient = np.minimum((angle / (2.0 * np.pi / N_ORIENT)).astype(np.int32), N_ORIENT - 1)
    mag = np.sqrt(gx * gx + gy * gy)
    mag_bin = (mag >= t1).astype(np.int32) + (mag >= t2).astype(np.int32)
    lap_bit = (lap >= 0.0).astype(np.int32)
    return orient * (N_MAG * 2) + mag_bin * 2 + lap_bit


def describe_all(
    p: SuperpixelPartition, img: RasterImage, codes: np.ndarray
) -> np.ndarray:
    """Stack color moments and the normalized code histogram per superpixel.

    Returns the (M, 57) feature matrix with rows aligned to superpixel ids.
    """
    if p.pixel_lists is None:
        raise ValueError("partition stats not filled; run superpixel_stats first")
    flat_labels = p.labels.ravel().astype(np.int64)
    counts = np.bincount(flat_labels, minlength=p.m).astype(np.float64)
    if (counts == 0).any():
        raise EmptyRegionError("partition contains an empty superpixel")

    rgb = img.data.reshape(-1, 3)
    mean = np.stack(
        [np.bincount(flat_labels, weights=rgb[:, c], minlength=p.m) / counts for c in range(3)],
        axis=1,
    )
    centered = rgb - mean[flat_labels]
    m2 = np.stack(
        [np.bincount(flat_labels, weights=centered[:, c] ** 2, minlength=p.m) / counts
         for c in range(3)],
        axis=1,
    )
    m3 = np.stack(
        [np.bincount(flat_labels, weights=centered[:, c] ** 3, minlength=p.m) / counts
         for c in range(3)],
        axis=1,
    )

    features = np.empty((p.m, FEATURE_DIM))
    features[:, 0:9:3] = mean
    features[:, 1:9:3] = np.sqrt(np.maximum(m2, 0.0))
    features[:, 2:9:3] = np.cbrt(m3)

    hist = np.bincount(
        flat_labels * N_CODES + codes.ravel().astype(np.int64), minlength=p.m * N_CODES
    ).reshape(p.m, N_CODES)
    features[:, 9:] = hist / counts[:, None]
    return features
