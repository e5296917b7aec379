"""
Image loading, grayscale conversion, resizing, discrete differential operators
and edge detectors that feed the GVF solver.

All images and fields are numpy float64 arrays shaped (height, width); RGB
images carry a trailing channel axis. Functions are pure and thread-safe.
"""

import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image
from scipy import ndimage

from errors import (
    CorruptImageError,
    FieldError,
    FieldFormatError,
    ImageNotFoundError,
    ShapeMismatchError,
    UnsupportedFormatError,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

BT601_WEIGHTS = np.array([0.299, 0.587, 0.114])
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
JPEG_SIGNATURE = b"\xff\xd8\xff"

CANNY_SIGMA = 1.4
CANNY_RADIUS = 2  # 5x5 kernel

# 16-byte header shared by the raw float formats: magic, width, height, extra word
FCF_HEADER = np.dtype([("magic", "S4"), ("width", "<u4"), ("height", "<u4"), ("extra", "<u4")])
FCF_SCALAR_MAGIC = b"FCF1"
FCF_PLANES_MAGIC = b"FCF2"


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------

def require_min_shape(field: np.ndarray, minimum: int, what: str = "field") -> None:
    """Raise FieldError unless both dimensions are at least `minimum`."""
    if field.ndim != 2:
        raise FieldError(f"{what} must be two-dimensional, got shape {field.shape}")
    height, width = field.shape
    if width < minimum or height < minimum:
        raise FieldError(f"{what} is {width}x{height}, needs at least {minimum}x{minimum}")


def require_same_shape(*fields: np.ndarray) -> None:
    shapes = {f.shape for f in fields}
    if len(shapes) > 1:
        raise ShapeMismatchError(f"fields differ in shape: {sorted(shapes)}")


def require_finite(*fields: np.ndarray) -> None:
    for f in fields:
        if not np.all(np.isfinite(f)):
            raise FieldError("field contains NaN or infinite values")


# ---------------------------------------------------------------------------
# loading and conversion
# ---------------------------------------------------------------------------

def load_image(path: PathLike) -> np.ndarray:
    """
    Decode a PNG or JPEG file into an RGB array with channels in [0, 1].

    Raises:
        ImageNotFoundError: the path does not exist
        UnsupportedFormatError: the file is not PNG or JPEG
        CorruptImageError: the file has a PNG/JPEG signature but cannot be decoded
    """
    image_path = Path(path)
    if not image_path.is_file():
        raise ImageNotFoundError(image_path, "file not found")

    with open(image_path, "rb") as f:
        signature = f.read(len(PNG_SIGNATURE))
    if not (signature.startswith(PNG_SIGNATURE) or signature.startswith(JPEG_SIGNATURE)):
        raise UnsupportedFormatError(image_path, "not a PNG or JPEG file")

    try:
        with Image.open(image_path) as img:
            img.load()
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    except (OSError, SyntaxError, ValueError) as e:
        raise CorruptImageError(image_path, f"cannot decode image data ({e})")

    if rgb.shape[0] < 2 or rgb.shape[1] < 2:
        raise CorruptImageError(image_path, f"image is {rgb.shape[1]}x{rgb.shape[0]}, needs at least 2x2")
    return rgb / 255.0


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB array."""
    gray = img[..., :3] @ BT601_WEIGHTS
    return np.clip(gray, 0.0, 1.0)


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """
    Bilinear resize with pixel-center alignment.

    Output sample (r, c) reads the source at ((r + 0.5) * in_h / out_h - 0.5,
    (c + 0.5) * in_w / out_w - 0.5), clamped to the source extent, so values
    never leave [min(img), max(img)].
    """
    if out_w < 2 or out_h < 2:
        raise FieldError(f"target size {out_w}x{out_h} is degenerate, needs at least 2x2")
    in_h, in_w = img.shape
    if (in_h, in_w) == (out_h, out_w):
        return img.astype(np.float64, copy=True)

    rows = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0.0, in_h - 1)
    cols = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0.0, in_w - 1)
    grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(img.astype(np.float64), [grid_r, grid_c], order=1, mode="nearest")


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

def central_gradients(img: np.ndarray, spacing: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Central differences inside, one-sided differences on the border. Returns (fx, fy)."""
    require_min_shape(img, 3, "image")
    fy, fx = np.gradient(img.astype(np.float64), spacing)
    return fx, fy


def laplacian(f: np.ndarray) -> np.ndarray:
    """5-point Laplacian with replicated (zero-flux) borders."""
    require_min_shape(f, 3)
    return ndimage.laplace(f.astype(np.float64), mode="nearest")


def sobel_gradients(img: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    3x3 Sobel responses (gx, gy).

    The image is padded by odd reflection, i.e. linear extrapolation, so an
    affine image produces a uniform response up to the border.
    """
    require_min_shape(img, 3, "image")
    padded = np.pad(img.astype(np.float64), 1, mode="reflect", reflect_type="odd")
    gx = ndimage.sobel(padded, axis=1)[1:-1, 1:-1]
    gy = ndimage.sobel(padded, axis=0)[1:-1, 1:-1]
    return gx, gy


def sobel_magnitude(img: np.ndarray) -> np.ndarray:
    gx, gy = sobel_gradients(img)
    return np.hypot(gx, gy)


def sobel_edges(img: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude, min-max normalized to [0, 1]."""
    return minmax_normalize(sobel_magnitude(img))


# Neighbour offsets along the quantised gradient direction (row, col), pointing
# towards increasing gradient angle measured with rows growing downwards.
_NMS_OFFSETS = ((0, 1), (1, 1), (1, 0), (1, -1))


def quantize_directions(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Map gradient directions to bins 0..3 (0, 45, 90, 135 degrees)."""
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    return (((angle + 22.5) // 45.0) % 4).astype(np.int64)


def non_maximum_suppression(magnitude: np.ndarray, bins: np.ndarray) -> np.ndarray:
    """
    Keep samples that are >= the forward neighbour and > the backward neighbour
    along their direction bin; everything else becomes zero.
    """
    height, width = magnitude.shape
    padded = np.pad(magnitude, 1, mode="constant")
    keep = np.zeros(magnitude.shape, dtype=bool)
    for index, (dr, dc) in enumerate(_NMS_OFFSETS):
        forward = padded[1 + dr:1 + dr + height, 1 + dc:1 + dc + width]
        backward = padded[1 - dr:1 - dr + height, 1 - dc:1 - dc + width]
        keep |= (bins == index) & (magnitude >= forward) & (magnitude > backward)
    return np.where(keep & (magnitude > 0), magnitude, 0.0)


def hysteresis(suppressed: np.ndarray, low: float, high: float) -> np.ndarray:
    """Keep 8-connected components of samples >= low that contain a sample >= high."""
    weak = suppressed >= low
    strong = suppressed >= high
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    anchored = np.unique(labels[strong & weak])
    anchored = anchored[anchored > 0]
    return np.isin(labels, anchored) & weak


def canny_edges(img: np.ndarray, low_frac: float = 0.1, high_frac: float = 0.3) -> np.ndarray:
    """
    Binary Canny edge map in {0, 1}.

    Gaussian smoothing (sigma 1.4, 5x5), Sobel gradients, non-maximum suppression
    over four direction bins, double threshold at fractions of the peak magnitude
    and 8-connected hysteresis.
    """
    if not 0 < low_frac < high_frac <= 1:
        raise FieldError(f"Canny thresholds must satisfy 0 < low < high <= 1, got ({low_frac}, {high_frac})")
    require_min_shape(img, 3, "image")

    smoothed = ndimage.gaussian_filter(img.astype(np.float64), sigma=CANNY_SIGMA,
                                       radius=CANNY_RADIUS, mode="nearest")
    gx, gy = sobel_gradients(smoothed)
    magnitude = np.hypot(gx, gy)
    peak = magnitude.max()
    if peak == 0:
        return np.zeros_like(magnitude)

    suppressed = non_maximum_suppression(magnitude, quantize_directions(gx, gy))
    edges = hysteresis(suppressed, low_frac * peak, high_frac * peak)
    return edges.astype(np.float64)


def avg_pool(f: np.ndarray, factor: int) -> np.ndarray:
    """Mean over non-overlapping factor x factor blocks."""
    if factor < 1:
        raise FieldError(f"pooling factor must be positive, got {factor}")
    height, width = f.shape
    if height % factor or width % factor:
        raise FieldError(f"{width}x{height} field is not divisible by pooling factor {factor}")
    if factor == 1:
        return f.astype(np.float64, copy=True)
    blocks = f.reshape(height // factor, factor, width // factor, factor)
    return blocks.mean(axis=(1, 3))


def minmax_normalize(f: np.ndarray) -> np.ndarray:
    """Map values to [0, 1]; a constant field maps to zeros."""
    low = f.min()
    high = f.max()
    if high == low:
        return np.zeros_like(f, dtype=np.float64)
    return (f - low) / (high - low)


# ---------------------------------------------------------------------------
# writers and raw float codec
# ---------------------------------------------------------------------------

def write_bytes_atomic(path: PathLike, data: bytes) -> None:
    """Write through a temporary file in the target directory, then rename."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def encode_png(array: np.ndarray) -> bytes:
    """Encode a uint8 array (HxW or HxWx3) with a pinned encoder configuration."""
    buffer = io.BytesIO()
    Image.fromarray(array).save(buffer, format="PNG", optimize=False, compress_level=6)
    return buffer.getvalue()


def to_uint8(field: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1], scale by 255 and round to nearest."""
    return np.rint(np.clip(field, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_field_png(path: PathLike, field: np.ndarray) -> None:
    write_bytes_atomic(path, encode_png(to_uint8(field)))


def encode_fcf(magic: bytes, planes: np.ndarray, extra: int) -> bytes:
    """Header + little-endian float32 planes, row-major."""
    _, height, width = planes.shape
    header = np.zeros(1, dtype=FCF_HEADER)
    header["magic"] = magic
    header["width"] = width
    header["height"] = height
    header["extra"] = extra
    return header.tobytes() + np.ascontiguousarray(planes, dtype="<f4").tobytes()


def decode_fcf(data: bytes, source: str = "<bytes>") -> Tuple[bytes, np.ndarray]:
    """Return (magic, planes) where planes has shape (channels, height, width)."""
    if len(data) < FCF_HEADER.itemsize:
        raise FieldFormatError(f"{source}: file shorter than the {FCF_HEADER.itemsize}-byte header")
    header = np.frombuffer(data, dtype=FCF_HEADER, count=1)[0]
    magic = bytes(header["magic"])
    width, height, extra = int(header["width"]), int(header["height"]), int(header["extra"])

    if magic == FCF_SCALAR_MAGIC:
        if extra != 0:
            raise FieldFormatError(f"{source}: reserved header word must be 0, got {extra}")
        channels = 1
    elif magic == FCF_PLANES_MAGIC:
        if extra < 1:
            raise FieldFormatError(f"{source}: channel count must be positive")
        channels = extra
    else:
        raise FieldFormatError(f"{source}: unknown magic {magic!r}")
    if width < 1 or height < 1:
        raise FieldFormatError(f"{source}: degenerate size {width}x{height}")

    payload = data[FCF_HEADER.itemsize:]
    expected = channels * width * height * 4
    if len(payload) != expected:
        raise FieldFormatError(f"{source}: payload is {len(payload)} bytes, header implies {expected}")
    planes = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return magic, planes.reshape(channels, height, width)


def write_fcf1(path: PathLike, field: np.ndarray) -> None:
    """Write a scalar field in the FCF1 raw float format."""
    write_bytes_atomic(path, encode_fcf(FCF_SCALAR_MAGIC, field[np.newaxis], 0))


def read_fcf1(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, planes = decode_fcf(data, str(path))
    if magic != FCF_SCALAR_MAGIC:
        raise FieldFormatError(f"{path}: expected a FCF1 scalar field, found {magic!r}")
    return planes[0]
