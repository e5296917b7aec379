"""
Deterministic synthetic grayscale images: line compositions for corpora and a
standard set of structured images used by the solver checks.
"""

from typing import Dict, Literal, Optional

import numpy as np

Orientation = Literal["horizontal", "vertical"]


def ramp(w: int, h: int, axis: int = 1) -> np.ndarray:
    """Values growing linearly from 0 to 1 along columns (axis=1) or rows (axis=0)."""
    if axis == 1:
        return np.tile(np.arange(w) / (w - 1), (h, 1))
    return np.tile((np.arange(h) / (h - 1))[:, np.newaxis], (1, w))


def step(w: int, h: int, column: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    """Vertical step edge: columns >= column take the high value."""
    img = np.full((h, w), low)
    img[:, column:] = high
    return img


def horizontal_line(w: int, h: int, row: int, thickness: int = 1,
                    value: float = 1.0, background: float = 0.0) -> np.ndarray:
    img = np.full((h, w), background)
    img[row:row + thickness, :] = value
    return img


def vertical_line(w: int, h: int, column: int, thickness: int = 1,
                  value: float = 1.0, background: float = 0.0) -> np.ndarray:
    return horizontal_line(h, w, column, thickness, value, background).T.copy()


def gaussian_bump(w: int, h: int, sigma: float, center: Optional[tuple] = None) -> np.ndarray:
    cy, cx = center if center is not None else ((h - 1) / 2.0, (w - 1) / 2.0)
    rows = np.arange(h)[:, np.newaxis] - cy
    cols = np.arange(w)[np.newaxis, :] - cx
    return np.exp(-(rows ** 2 + cols ** 2) / (2.0 * sigma ** 2))


def checker(w: int, h: int, period: int) -> np.ndarray:
    rows = (np.arange(h) // period)[:, np.newaxis]
    cols = (np.arange(w) // period)[np.newaxis, :]
    return ((rows + cols) % 2).astype(np.float64)


def rectangle(w: int, h: int, top: int, left: int, bottom: int, right: int,
              value: float = 1.0, background: float = 0.0) -> np.ndarray:
    img = np.full((h, w), background)
    img[top:bottom, left:right] = value
    return img


def standard_test_images(size: int = 56) -> Dict[str, np.ndarray]:
    """Structured images with sharp edges, at solver resolution."""
    third = size // 3
    cross = np.maximum(horizontal_line(size, size, size // 2, 2), vertical_line(size, size, size // 2, 2))
    return {
        "step": step(size, size, size // 2),
        "offset_step": step(size, size, third, low=0.2, high=0.7),
        "horizontal_line": horizontal_line(size, size, third, 2),
        "vertical_line": vertical_line(size, size, 2 * third, 1),
        "rectangle": rectangle(size, size, third, third, 2 * third, 2 * third),
        "checker": checker(size, size, 8),
        "cross": cross,
    }


def line_composition(orientation: Orientation, rng: np.random.Generator, size: int = 112) -> np.ndarray:
    """
    One full-span line near the upper (or left) third of the frame, with random
    jitter, thickness, contrast, background and mild noise.
    """
    position = size // 3 + int(rng.integers(-size // 32, size // 32 + 1))
    thickness = int(rng.integers(2, 5))
    background = float(rng.uniform(0.05, 0.3))
    value = min(1.0, background + float(rng.uniform(0.5, 0.7)))
    img = horizontal_line(size, size, position, thickness, value, background)
    img = np.clip(img + rng.normal(0.0, 0.01, img.shape), 0.0, 1.0)
    return img if orientation == "horizontal" else img.T.copy()
