"""Image and mask I/O plus sRGB <-> CIELAB conversion.

Supported encodings are deliberately narrow: 8-bit PNG and binary PPM (P6)
for color input, 16-bit grayscale PNG or PGM (P5, big-endian) for label
maps, and grayscale PNG/PGM for ground-truth masks.
"""

import numpy as np
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .errors import DimensionMismatchError, FormatError

# sRGB -> XYZ under D65, IEC 61966-2-1 primaries.  Rows sum to the D65
# white point, so (1,1,1) maps to L=100, a=b=0 up to rounding of the
# published 7-digit coefficients.
_XYZ_FROM_RGB = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_RGB_FROM_XYZ = np.linalg.inv(_XYZ_FROM_RGB)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])
_LAB_EPS = 0.008856  # (6/29)^3, classic rounding
_LAB_KAPPA = 7.787  # (29/6)^2 / 3, classic rounding


@dataclass
class RasterImage:
    """H x W x 3 RGB image with channels in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError("expected an (H, W, 3) array")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("channel values must lie in [0, 1]")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


@dataclass
class LabImage:
    """H x W x 3 CIELAB image (L in [0, 100], a/b roughly [-128, 127])."""

    data: np.ndarray

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


@dataclass
class BinaryMask:
    """H x W boolean foreground mask."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=bool)
        if self.data.ndim != 2:
            raise ValueError("expected an (H, W) boolean array")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


@dataclass
class LabelMap:
    """H x W integer label ids forming a contiguous range [0, num_labels)."""

    data: np.ndarray
    num_labels: int

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ValueError("expected an (H, W) integer array")
        if self.data.min() < 0 or self.data.max() >= self.num_labels:
            raise ValueError("label ids must lie in [0, num_labels)")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


def _read_pnm_header(f, magic):
    """Parse a Netpbm binary header, returning (width, height, maxval)."""
    got = f.read(2)
    if got != magic:
        raise FormatError(f"expected {magic.decode()} magic, got {got!r}")

    fields = []
    while len(fields) < 3:
        tok = b""
        ch = f.read(1)
        while ch.isspace():
            ch = f.read(1)
        if ch == b"#":  # comment runs to end of line
            while ch not in (b"", b"\n"):
                ch = f.read(1)
            continue
        while ch and not ch.isspace() and ch != b"#":
            tok += ch
            ch = f.read(1)
        if ch == b"#":
            while ch not in (b"", b"\n"):
                ch = f.read(1)
        if not tok:
            raise FormatError("truncated header")
        if not tok.isdigit():
            raise FormatError(f"bad header token {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError("non-positive image dimensions")
    if maxval < 1 or maxval > 65535:
        raise FormatError(f"unsupported maxval {maxval}")
    return width, height, maxval


def _read_pnm_samples(f, count, maxval):
    width = 2 if maxval > 255 else 1
    raw = f.read(count * width)
    if len(raw) != count * width:
        raise FormatError("truncated pixel data")
    dtype = ">u2" if maxval > 255 else np.uint8
    return np.frombuffer(raw, dtype=dtype).astype(np.int64)


def load_image(path) -> RasterImage:
    """Load an 8-bit PNG or binary PPM (P6) as floats in [0, 1]."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"P6":
        with open(path, "rb") as f:
            w, h, maxval = _read_pnm_header(f, b"P6")
            if maxval > 255:
                raise FormatError("16-bit PPM is not supported")
            data = _read_pnm_samples(f, w * h * 3, maxval).reshape(h, w, 3)
        return RasterImage(data / float(maxval))
    if magic == b"\x89P":
        with Image.open(path) as img:
            if img.format != "PNG":
                raise FormatError(f"unsupported format {img.format}")
            if img.mode in ("I", "I;16", "I;16B", "F"):
                raise FormatError("only 8-bit PNG input is supported")
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
        return RasterImage(rgb / 255.0)
    raise FormatError(f"unrecognized image magic {magic!r}")


def _srgb_to_linear(v):
    return np.where(v > 0.04045, ((v + 0.055) / 1.055) ** 2.4, v / 12.92)


def _linear_to_srgb(v):
    v = np.clip(v, 0.0, None)
    return np.where(v > 0.0031308, 1.055 * v ** (1.0 / 2.4) - 0.055, 12.92 * v)


def rgb_to_lab(img: RasterImage) -> LabImage:
    """sRGB -> linear RGB -> XYZ (D65) -> CIELAB, per pixel."""
    linear = _srgb_to_linear(img.data)
    xyz = linear @ _XYZ_FROM_RGB.T
    t = xyz / _D65_WHITE
    f = np.where(t > _LAB_EPS, np.cbrt(t), _LAB_KAPPA * t + 16.0 / 116.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return LabImage(np.stack([L, a, b], axis=-1))


def lab_to_rgb(lab: LabImage) -> RasterImage:
    """Inverse of :func:`rgb_to_lab`; out-of-gamut results are clipped."""
    L, a, b = lab.data[..., 0], lab.data[..., 1], lab.data[..., 2]
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(f > 6.0 / 29.0, f**3, (f - 16.0 / 116.0) / _LAB_KAPPA)
    xyz = t * _D65_WHITE
    linear = xyz @ _RGB_FROM_XYZ.T
    return RasterImage(np.clip(_linear_to_srgb(linear), 0.0, 1.0))


def save_label_map(lm: LabelMap, path) -> None:
    """Write label ids as 16-bit grayscale PNG or PGM (by extension)."""
    if lm.num_labels > 65536:
        raise OverflowError(f"{lm.num_labels} labels exceed 16-bit storage")
    path = Path(path)
    ids = lm.data.astype(np.uint16)
    if path.suffix.lower() == ".pgm":
        with open(path, "wb") as f:
            f.write(b"P5\n%d %d\n65535\n" % (lm.width, lm.height))
            f.write(ids.astype(">u2").tobytes())
        return
    Image.fromarray(ids, mode="I;16").save(path, format="PNG")


def load_label_map(path) -> LabelMap:
    """Read a label map written by :func:`save_label_map`."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"P5":
        with open(path, "rb") as f:
            w, h, maxval = _read_pnm_header(f, b"P5")
            data = _read_pnm_samples(f, w * h, maxval).reshape(h, w)
    elif magic == b"\x89P":
        with Image.open(path) as img:
            data = np.asarray(img, dtype=np.int64)
        if data.ndim != 2:
            raise FormatError("label map PNG must be single-channel")
    else:
        raise FormatError(f"unrecognized label map magic {magic!r}")
    return LabelMap(data, num_labels=int(data.max()) + 1)


def load_mask(path) -> BinaryMask:
    """Load a grayscale mask; pixels above 50% of maxval are foreground."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"P5":
        with open(path, "rb") as f:
            w, h, maxval = _read_pnm_header(f, b"P5")
            data = _read_pnm_samples(f, w * h, maxval).reshape(h, w)
        return BinaryMask(data * 2 > maxval)
    if magic == b"\x89P":
        with Image.open(path) as img:
            if img.mode == "1":
                return BinaryMask(np.asarray(img, dtype=bool))
            if img.mode in ("I", "I;16", "I;16B"):
                data = np.asarray(img, dtype=np.int64)
                return BinaryMask(data * 2 > 65535)
            if img.mode in ("L", "P"):
                data = np.asarray(img.convert("L"), dtype=np.int64)
                return BinaryMask(data * 2 > 255)
            raise FormatError(f"mask must be grayscale, got mode {img.mode}")
    raise FormatError(f"unrecognized mask magic {magic!r}")


def check_same_shape(lm: LabelMap, mask: BinaryMask) -> None:
    if (lm.height, lm.width) != (mask.height, mask.width):
        raise DimensionMismatchError(
            f"label map is {lm.width}x{lm.height}, mask is {mask.width}x{mask.height}"
        )
