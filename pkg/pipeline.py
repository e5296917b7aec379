"""
Service layer shared by the CLI commands: image -> saliency -> dual GVF streams
-> descriptor, plus corpus-level embedding with a bounded worker pool.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import ClusteringError, FlowCompError, NoValidTripletsError
from evalkit import LabeledEmbeddingSet, cda_multiseed, davies_bouldin, silhouette
from flowfeat import descriptor, select_descriptor
from gvf import FlowField, InputTensor, average_streams, assemble_input, edge_force_field, gvf_baseline, gvf_saliency
from imagecore import load_image, resize_bilinear, to_grayscale
from models import AblationReport, CdaMode, EvalReport, PipelineConfig
from saliency import center_bias_saliency, edge_saliency, load_saliency, saliency_gradient, uniform_saliency

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
SALIENCY_SUFFIXES = (".png", ".fcf")


@dataclass(frozen=True)
class ImageFlows:
    """Everything the solver produced for one image at grid resolution."""
    image_id: str
    gray: np.ndarray
    saliency: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    baseline: FlowField
    enhanced: FlowField

    @property
    def averaged(self) -> FlowField:
        return average_streams(self.baseline, self.enhanced)


def list_images(directory: Path) -> List[Path]:
    """PNG/JPEG files of a directory, sorted by id (file stem)."""
    if not directory.is_dir():
        raise FlowCompError(f"not a readable directory: {directory}")
    files = [p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    return sorted(files, key=lambda p: (p.stem, p.name))


class FlowCompositionService:
    """Runs the saliency + GVF + descriptor pipeline for one configuration."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.params = config.gvf_params

    def load_gray(self, path: Path) -> np.ndarray:
        """Grayscale image resampled to the solver grid."""
        gray = to_grayscale(load_image(path))
        if gray.shape != (self.config.grid, self.config.grid):
            gray = resize_bilinear(gray, self.config.grid, self.config.grid)
        return gray

    def saliency_for(self, image_id: str, gray: np.ndarray, source: Optional[str] = None) -> np.ndarray:
        """Saliency map on the solver grid from the configured (or given) source."""
        source = source or self.config.saliency_source
        grid = self.config.grid
        if source == "uniform":
            return uniform_saliency(grid, grid)
        if source == "center":
            return center_bias_saliency(grid, grid, self.config.center_sigma_frac)
        if source == "edge":
            return edge_saliency(gray, self.config.edge_saliency_sigma)
        if source.startswith("file:"):
            return load_saliency(self.find_saliency_file(Path(source[len("file:"):]), image_id), grid, grid)
        if Path(source).is_file():
            return load_saliency(source, grid, grid)
        raise FlowCompError(f"unknown saliency source '{source}'")

    @staticmethod
    def find_saliency_file(directory: Path, image_id: str) -> Path:
        for suffix in SALIENCY_SUFFIXES:
            candidate = directory / f"{image_id}{suffix}"
            if candidate.is_file():
                return candidate
        raise FlowCompError(f"no saliency file for '{image_id}' in {directory}")

    def solve(self, image_id: str, gray: np.ndarray, saliency: np.ndarray) -> ImageFlows:
        fx, fy = edge_force_field(gray, self.params.edge_source, self.config.canny_low, self.config.canny_high)
        sx, sy = saliency_gradient(saliency)
        baseline = gvf_baseline(fx, fy, self.params)
        enhanced = gvf_saliency(fx, fy, sx, sy, self.params)
        return ImageFlows(image_id, gray, saliency, fx, fy, sx, sy, baseline, enhanced)

    def process(self, path: Path, saliency_source: Optional[str] = None) -> ImageFlows:
        gray = self.load_gray(path)
        saliency = self.saliency_for(path.stem, gray, saliency_source)
        return self.solve(path.stem, gray, saliency)

    def tensor(self, flows: ImageFlows) -> InputTensor:
        return assemble_input(flows.saliency, flows.averaged, self.config.tensor_size)

    def embed(self, path: Path) -> Tuple[str, np.ndarray]:
        """(id, descriptor) with the configured ablation view applied."""
        flows = self.process(path)
        vector = descriptor(flows.baseline, flows.enhanced)
        if self.config.drop_features or self.config.streams != "both":
            vector = select_descriptor(vector, self.config.drop_features, self.config.streams)
        return flows.image_id, vector

    def embed_corpus(self, paths: Sequence[Path], threads: int = 1
                     ) -> Tuple[List[Tuple[str, np.ndarray]], List[Tuple[Path, str]]]:
        """
        Embed every image with at most `threads` workers.

        Returns rows sorted by id and (path, reason) failures sorted by path.
        """
        def attempt(path: Path):
            try:
                return path, self.embed(path), None
            except FlowCompError as e:
                return path, None, str(e)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(attempt, paths))

        rows, failures = [], []
        for path, row, reason in outcomes:
            if row is None:
                logger.error(f"Failed to embed {path.name}: {reason}")
                failures.append((path, reason))
            else:
                rows.append(row)
        rows.sort(key=lambda r: r[0])
        failures.sort(key=lambda f: str(f[0]))
        return rows, failures


def clustering_metrics(data: LabeledEmbeddingSet) -> Tuple[Optional[float], Optional[float]]:
    """(dbi, silhouette), or None where the partition does not allow them."""
    try:
        return davies_bouldin(data), silhouette(data)
    except ClusteringError as e:
        logger.warning(f"Clustering metrics skipped: {e}")
        return None, None


def build_eval_report(data: LabeledEmbeddingSet, mode: CdaMode, config: PipelineConfig) -> EvalReport:
    cda_report = cda_multiseed(data, mode, config.seeds, config.per_anchor)
    dbi, sil = clustering_metrics(data)
    return EvalReport(
        mode=mode,
        seeds=cda_report.seeds,
        mean=cda_report.mean,
        std=cda_report.std,
        cv=cda_report.cv,
        dbi=dbi,
        silhouette=sil,
        embedding_dim=data.dim,
        n_images=len(data),
        config=config,
    )


def build_ablation_report(name: str, data: LabeledEmbeddingSet, config: PipelineConfig) -> AblationReport:
    """CDA-1, CDA-2 (when semantic labels allow it) and clustering metrics of one sweep cell."""
    reports = {}
    for mode in ("cda1", "cda2"):
        try:
            reports[mode] = cda_multiseed(data, mode, config.seeds, config.per_anchor)
        except NoValidTripletsError as e:
            logger.warning(f"[{name}] {mode} skipped: {e}")
            reports[mode] = None
    dbi, sil = clustering_metrics(data)
    return AblationReport(
        name=name,
        cda1=reports["cda1"],
        cda2=reports["cda2"],
        dbi=dbi,
        silhouette=sil,
        embedding_dim=data.dim,
        n_images=len(data),
        config=config,
    )
