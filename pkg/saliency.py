"""
Saliency maps: three deterministic baseline generators, a loader for externally
computed maps, and the saliency gradient that drives the enhanced GVF stream.
"""

import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image
from scipy import ndimage

from errors import CorruptImageError, FieldError, FieldFormatError, ImageNotFoundError, UnsupportedFormatError
from imagecore import (
    FCF_SCALAR_MAGIC,
    PNG_SIGNATURE,
    central_gradients,
    decode_fcf,
    minmax_normalize,
    require_min_shape,
    resize_bilinear,
    sobel_magnitude,
)

logger = logging.getLogger(__name__)

UNIFORM_LEVEL = 0.5
DEFAULT_CENTER_SIGMA_FRAC = 0.3
DEFAULT_EDGE_SIGMA = 2.0


def _require_size(w: int, h: int) -> None:
    if w < 2 or h < 2:
        raise FieldError(f"saliency size {w}x{h} is degenerate, needs at least 2x2")


def uniform_saliency(w: int, h: int) -> np.ndarray:
    """Constant map; only its (zero) gradient reaches the solver."""
    _require_size(w, h)
    return np.full((h, w), UNIFORM_LEVEL)


def center_bias_saliency(w: int, h: int, sigma_frac: float = DEFAULT_CENTER_SIGMA_FRAC) -> np.ndarray:
    """Isotropic Gaussian around the grid center with sigma = sigma_frac * min(w, h)."""
    _require_size(w, h)
    if not sigma_frac > 0:
        raise FieldError(f"sigma_frac must be positive, got {sigma_frac}")
    sigma = sigma_frac * min(w, h)
    rows = np.arange(h) - (h - 1) / 2.0
    cols = np.arange(w) - (w - 1) / 2.0
    d2 = rows[:, np.newaxis] ** 2 + cols[np.newaxis, :] ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


def edge_saliency(img: np.ndarray, sigma: float = DEFAULT_EDGE_SIGMA) -> np.ndarray:
    """Gaussian-blurred Sobel magnitude, min-max normalized."""
    require_min_shape(img, 3, "image")
    blurred = ndimage.gaussian_filter(sobel_magnitude(img), sigma=sigma, mode="nearest")
    return minmax_normalize(blurred)


def load_saliency(path: Union[str, Path], w: int, h: int) -> np.ndarray:
    """
    Load an externally computed saliency map and resample it to (w, h).

    Grayscale PNGs are divided by 255. FCF1 raw floats are kept as-is when they
    already lie in [0, 1] and min-max normalized otherwise.
    """
    _require_size(w, h)
    source = Path(path)
    if not source.is_file():
        raise ImageNotFoundError(source, "saliency file not found")

    data = source.read_bytes()
    if data.startswith(PNG_SIGNATURE):
        try:
            with Image.open(source) as img:
                img.load()
                values = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        except (OSError, SyntaxError, ValueError) as e:
            raise CorruptImageError(source, f"cannot decode saliency PNG ({e})")
    elif data[:4] == FCF_SCALAR_MAGIC:
        _, planes = decode_fcf(data, str(source))
        values = planes[0]
        if not np.all(np.isfinite(values)):
            raise FieldFormatError(f"{source}: saliency contains non-finite values")
        if values.min() < 0.0 or values.max() > 1.0:
            logger.info(f"Saliency {source.name} spans [{values.min():.4g}, {values.max():.4g}], min-max normalizing")
            values = minmax_normalize(values)
    else:
        raise UnsupportedFormatError(source, "saliency must be a grayscale PNG or FCF1 file")

    if values.shape[0] < 2 or values.shape[1] < 2:
        raise FieldFormatError(f"{source}: saliency is {values.shape[1]}x{values.shape[0]}, cannot resize to {w}x{h}")
    if values.shape != (h, w):
        logger.info(f"Resizing saliency {source.name} from {values.shape[1]}x{values.shape[0]} to {w}x{h}")
        values = resize_bilinear(values, w, h)
    return np.clip(values, 0.0, 1.0)


def saliency_gradient(s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(Sx, Sy) by central differences."""
    require_min_shape(s, 3, "saliency map")
    return central_gradients(s)
