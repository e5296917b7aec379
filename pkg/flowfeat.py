"""
Differential flow features (divergence, curl, magnitude) at three pooling
scales, their statistical summaries, and the deterministic flow descriptor
used as an image embedding.

Descriptor layout, per stream (baseline first, then saliency-enhanced):
    for scale in (1, 2, 4):
        for cell in 4x4 grid, row-major:
            for field in (div, curl, mag):
                mean, std
    then FlowStats: for field in (div, curl, mag): mean, std, positive ratio, negative ratio
That is 3 * 16 * 3 * 2 + 12 = 300 values per stream, 600 in total.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from errors import FieldError
from gvf import FlowField
from imagecore import avg_pool, require_min_shape, require_same_shape, write_bytes_atomic
from models import FeatureName, StreamSelection

logger = logging.getLogger(__name__)

SCALES = (1, 2, 4)
FIELDS = ("div", "curl", "mag")
STREAMS = ("baseline", "saliency")
CELLS_PER_SIDE = 4
CELL_STATS = ("mean", "std")
SUMMARY_STATS = ("mean", "std", "pos_ratio", "neg_ratio")
STREAM_LENGTH = len(SCALES) * CELLS_PER_SIDE ** 2 * len(FIELDS) * len(CELL_STATS) + len(FIELDS) * len(SUMMARY_STATS)
DESCRIPTOR_LENGTH = len(STREAMS) * STREAM_LENGTH


@dataclass(frozen=True)
class ScaleFeatures:
    scale: int
    div: np.ndarray
    curl: np.ndarray
    mag: np.ndarray

    def fields(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.div, self.curl, self.mag


@dataclass(frozen=True)
class FlowStats:
    """Mean, population std and sign ratios of div, curl and mag at scale 1."""
    values: np.ndarray  # shape (3, 4): fields x (mean, std, pos_ratio, neg_ratio)

    def field(self, name: str) -> np.ndarray:
        return self.values[FIELDS.index(name)]

    def as_vector(self) -> np.ndarray:
        return self.values.reshape(-1)


def divergence(flow: FlowField, spacing: float = 1.0) -> np.ndarray:
    """du/dx + dv/dy."""
    require_min_shape(flow.u, 3, "flow")
    return np.gradient(flow.u, spacing, axis=1) + np.gradient(flow.v, spacing, axis=0)


def curl(flow: FlowField, spacing: float = 1.0) -> np.ndarray:
    """dv/dx - du/dy."""
    require_min_shape(flow.u, 3, "flow")
    return np.gradient(flow.v, spacing, axis=1) - np.gradient(flow.u, spacing, axis=0)


def magnitude(flow: FlowField) -> np.ndarray:
    return np.hypot(flow.u, flow.v)


def multiscale_features(flow: FlowField, scales: Sequence[int] = SCALES) -> List[ScaleFeatures]:
    """
    Pool u and v, then differentiate on the pooled grid. Differences are divided
    by the pooling factor so derivatives stay in original-grid units.
    """
    height, width = flow.shape
    largest = max(scales)
    if height % largest or width % largest:
        raise FieldError(f"{width}x{height} flow is not divisible by pooling factor {largest}")

    features = []
    for scale in scales:
        pooled = FlowField(avg_pool(flow.u, scale), avg_pool(flow.v, scale))
        features.append(ScaleFeatures(
            scale=scale,
            div=divergence(pooled, spacing=scale),
            curl=curl(pooled, spacing=scale),
            mag=magnitude(pooled),
        ))
    return features


def _summary(field: np.ndarray) -> List[float]:
    count = field.size
    return [
        float(field.mean()),
        float(field.std()),
        float(np.count_nonzero(field > 0)) / count,
        float(np.count_nonzero(field < 0)) / count,
    ]


def flow_statistics(flow: FlowField) -> FlowStats:
    require_min_shape(flow.u, 3, "flow")
    fields = (divergence(flow), curl(flow), magnitude(flow))
    return FlowStats(np.array([_summary(f) for f in fields]))


def cell_edges(n: int, cells: int = CELLS_PER_SIDE) -> np.ndarray:
    """Integer cell boundaries floor(k * n / cells) for k = 0..cells."""
    return (np.arange(cells + 1) * n) // cells


def _cell_block(features: ScaleFeatures) -> np.ndarray:
    height, width = features.div.shape
    row_edges = cell_edges(height)
    col_edges = cell_edges(width)
    block = []
    for r in range(CELLS_PER_SIDE):
        for c in range(CELLS_PER_SIDE):
            window = (slice(row_edges[r], row_edges[r + 1]), slice(col_edges[c], col_edges[c + 1]))
            for field in features.fields():
                cell = field[window]
                block.extend((cell.mean(), cell.std()))
    return np.array(block)


def _stream_vector(flow: FlowField) -> np.ndarray:
    parts = [_cell_block(features) for features in multiscale_features(flow)]
    parts.append(flow_statistics(flow).as_vector())
    return np.concatenate(parts)


def descriptor(base: FlowField, sal: FlowField) -> np.ndarray:
    """Concatenated baseline and saliency-enhanced stream vectors (length 600)."""
    require_same_shape(base.u, sal.u)
    height, width = base.shape
    largest = max(SCALES)
    if height % largest or width % largest:
        raise FieldError(f"{width}x{height} flow is not divisible by pooling factor {largest}")
    if min(height, width) // largest < CELLS_PER_SIDE:
        raise FieldError(f"{width}x{height} flow is too small for a {CELLS_PER_SIDE}x{CELLS_PER_SIDE} grid at scale {largest}")
    return np.concatenate([_stream_vector(base), _stream_vector(sal)])


def descriptor_layout() -> List[Tuple[str, str]]:
    """(stream, field) for every descriptor entry, in descriptor order."""
    stream_part = []
    for _scale in SCALES:
        for _cell in range(CELLS_PER_SIDE ** 2):
            for field in FIELDS:
                stream_part.extend([field] * len(CELL_STATS))
    for field in FIELDS:
        stream_part.extend([field] * len(SUMMARY_STATS))
    return [(stream, field) for stream in STREAMS for field in stream_part]


def select_descriptor(vector: np.ndarray, drop_features: Iterable[FeatureName] = (),
                      streams: StreamSelection = "both") -> np.ndarray:
    """Ablation view: drop whole differential fields and/or keep a single stream."""
    if vector.shape != (DESCRIPTOR_LENGTH,):
        raise FieldError(f"descriptor must have length {DESCRIPTOR_LENGTH}, got {vector.shape}")
    dropped = set(drop_features)
    if dropped >= set(FIELDS):
        raise FieldError("cannot drop every differential field")
    kept_streams = STREAMS if streams == "both" else (streams,)
    mask = np.array([stream in kept_streams and field not in dropped
                     for stream, field in descriptor_layout()])
    return vector[mask]


def format_descriptor_row(image_id: str, vector: np.ndarray) -> str:
    """id followed by shortest round-trip decimal floats."""
    return ",".join([image_id] + [repr(float(x)) for x in vector])


def write_descriptors(path: Union[str, Path], rows: Iterable[Tuple[str, np.ndarray]]) -> int:
    """Write one line per image; returns the number of rows written."""
    lines = [format_descriptor_row(image_id, vector) for image_id, vector in rows]
    write_bytes_atomic(path, ("\n".join(lines) + "\n").encode("utf-8") if lines else b"")
    logger.info(f"Wrote {len(lines)} descriptors to {path}")
    return len(lines)
