"""
Gradient vector flow solver: baseline and saliency-enhanced streams by explicit
(Jacobi) iterative diffusion, energy evaluation, stream averaging and assembly
of the three-channel [S, u, v] input tensor.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from errors import FieldError, FieldFormatError
from imagecore import (
    FCF_PLANES_MAGIC,
    canny_edges,
    central_gradients,
    decode_fcf,
    encode_fcf,
    encode_png,
    laplacian,
    minmax_normalize,
    require_finite,
    require_min_shape,
    require_same_shape,
    resize_bilinear,
    sobel_edges,
    to_uint8,
    write_bytes_atomic,
)
from models import EdgeSource, GvfParams

logger = logging.getLogger(__name__)

DEFAULT_TENSOR_SIZE = 224


@dataclass(frozen=True)
class FlowField:
    """One GVF stream: horizontal component u and vertical component v (rows grow downwards)."""
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        require_same_shape(self.u, self.v)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape


@dataclass(frozen=True)
class InputTensor:
    """Channels [S, u, v] stacked as an array of shape (3, size, size)."""
    channels: np.ndarray

    @property
    def saliency(self) -> np.ndarray:
        return self.channels[0]

    @property
    def u(self) -> np.ndarray:
        return self.channels[1]

    @property
    def v(self) -> np.ndarray:
        return self.channels[2]


def edge_force_field(img: np.ndarray, source: EdgeSource = "intensity",
                     canny_low: float = 0.1, canny_high: float = 0.3) -> Tuple[np.ndarray, np.ndarray]:
    """External force basis (fx, fy) from the chosen edge source."""
    require_min_shape(img, 3, "image")
    if source == "intensity":
        basis = img
    elif source == "sobel":
        basis = sobel_edges(img)
    elif source == "canny":
        basis = canny_edges(img, canny_low, canny_high)
    else:
        raise FieldError(f"unknown edge source '{source}'")
    return central_gradients(basis)


def _check_forces(*fields: np.ndarray) -> None:
    require_same_shape(*fields)
    require_min_shape(fields[0], 3, "force field")
    require_finite(*fields)


def _diffuse(fx: np.ndarray, fy: np.ndarray, p: GvfParams,
             force_u: Optional[np.ndarray] = None,
             force_v: Optional[np.ndarray] = None) -> FlowField:
    # u0 = fx, v0 = fy; every sample reads only the previous iterate
    weight = fx * fx + fy * fy
    u = fx.astype(np.float64, copy=True)
    v = fy.astype(np.float64, copy=True)
    for _ in range(p.iterations):
        u_next = u + p.mu * laplacian(u) - weight * (u - fx)
        v_next = v + p.mu * laplacian(v) - weight * (v - fy)
        if force_u is not None:
            u_next = u_next + force_u
            v_next = v_next + force_v
        u, v = u_next, v_next
    return FlowField(u, v)


def gvf_baseline(fx: np.ndarray, fy: np.ndarray, p: GvfParams) -> FlowField:
    """
    Baseline stream, raw (unnormalized).

    The update is explicit with a unit step and is guaranteed to stay bounded while
    fx^2 + fy^2 + 4 * mu <= 1 at every sample. Gradients of images in [0, 1]
    keep the fidelity weight at 0.5 or below; larger forces (e.g. unscaled
    intensities) must be rescaled first or the iterates grow without bound.
    """
    _check_forces(fx, fy)
    return _diffuse(fx, fy, p)


def gvf_saliency(fx: np.ndarray, fy: np.ndarray, sx: np.ndarray, sy: np.ndarray,
                 p: GvfParams) -> FlowField:
    """Saliency-enhanced stream: the baseline recurrence plus beta * grad S each step."""
    _check_forces(fx, fy, sx, sy)
    force_u = p.beta * sx
    force_v = p.beta * sy
    if not force_u.any() and not force_v.any():
        # a vanishing saliency force must reproduce the baseline bit for bit
        return _diffuse(fx, fy, p)
    return _diffuse(fx, fy, p, force_u, force_v)


def gvf_energy(flow: FlowField, fx: np.ndarray, fy: np.ndarray, mu: float) -> float:
    """
    Discrete baseline energy with unit grid spacing.

    mu * sum(u_xx^2 + u_yy^2 + v_xx^2 + v_yy^2) over the samples where a
    3-point second difference fits, plus sum((fx^2 + fy^2) * ((u - fx)^2 + (v - fy)^2)).
    """
    require_same_shape(flow.u, flow.v, fx, fy)
    smoothness = 0.0
    for component in (flow.u, flow.v):
        smoothness += np.sum(np.diff(component, n=2, axis=1) ** 2)
        smoothness += np.sum(np.diff(component, n=2, axis=0) ** 2)
    weight = fx * fx + fy * fy
    fidelity = np.sum(weight * ((flow.u - fx) ** 2 + (flow.v - fy) ** 2))
    return float(mu * smoothness + fidelity)


def gvf_energy_saliency(flow: FlowField, fx: np.ndarray, fy: np.ndarray,
                        sx: np.ndarray, sy: np.ndarray, mu: float, beta: float) -> float:
    """Baseline energy minus the saliency attraction beta * sum(u Sx + v Sy)."""
    require_same_shape(flow.u, sx, sy)
    attraction = np.sum(flow.u * sx + flow.v * sy)
    return gvf_energy(flow, fx, fy, mu) - float(beta * attraction)


def normalize_flow(flow: FlowField) -> FlowField:
    """Per-channel min-max normalization to [0, 1]."""
    return FlowField(minmax_normalize(flow.u), minmax_normalize(flow.v))


def average_streams(base: FlowField, sal: FlowField) -> FlowField:
    require_same_shape(base.u, sal.u)
    return FlowField((base.u + sal.u) / 2.0, (base.v + sal.v) / 2.0)


def assemble_input(s: np.ndarray, avg: FlowField, out_size: int = DEFAULT_TENSOR_SIZE) -> InputTensor:
    """Normalize the averaged flow and resample S, u, v to out_size x out_size."""
    if out_size < 2:
        raise FieldError(f"tensor size {out_size} is degenerate, needs at least 2")
    normalized = normalize_flow(avg)
    channels = [resize_bilinear(plane, out_size, out_size) for plane in (s, normalized.u, normalized.v)]
    return InputTensor(np.stack(channels))


# ---------------------------------------------------------------------------
# FCF2 multi-plane files
# ---------------------------------------------------------------------------

def write_flow(path: Union[str, Path], flow: FlowField) -> None:
    """u plane then v plane, channels=2."""
    write_bytes_atomic(path, encode_fcf(FCF_PLANES_MAGIC, np.stack([flow.u, flow.v]), 2))


def read_flow(path: Union[str, Path]) -> FlowField:
    data = Path(path).read_bytes()
    magic, planes = decode_fcf(data, str(path))
    if magic != FCF_PLANES_MAGIC or planes.shape[0] != 2:
        raise FieldFormatError(f"{path}: expected a two-channel FCF2 flow file")
    return FlowField(planes[0], planes[1])


def write_tensor(path: Union[str, Path], tensor: InputTensor) -> None:
    write_bytes_atomic(path, encode_fcf(FCF_PLANES_MAGIC, tensor.channels, tensor.channels.shape[0]))


def write_tensor_preview(path: Union[str, Path], tensor: InputTensor) -> None:
    """RGB PNG with S, u, v in the red, green and blue channels."""
    rgb = np.moveaxis(to_uint8(tensor.channels), 0, -1)
    write_bytes_atomic(path, encode_png(np.ascontiguousarray(rgb)))
