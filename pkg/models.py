"""
Pydantic models for solver parameters, pipeline configuration and evaluation reports.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

EdgeSource = Literal["intensity", "sobel", "canny"]
CdaMode = Literal["cda1", "cda2"]
StreamSelection = Literal["both", "baseline", "saliency"]
FeatureName = Literal["div", "curl", "mag"]

DEFAULT_SEEDS = [42, 43, 44, 45, 46]


class GvfParams(BaseModel):
    """Parameters shared by both GVF streams."""
    model_config = ConfigDict(frozen=True)

    mu: float = Field(0.15, gt=0, description="Smoothness weight")
    beta: float = Field(0.1, ge=0, description="Saliency force strength")
    iterations: int = Field(10, ge=1, description="Number of synchronous diffusion updates")
    edge_source: EdgeSource = Field("intensity", description="External force basis")


class PipelineConfig(BaseModel):
    """Effective configuration of a run. Serialized flat so it can be echoed into reports."""
    model_config = ConfigDict(extra="forbid")

    grid: int = Field(56, ge=16, description="Solver grid size (square)")
    tensor_size: int = Field(224, ge=2, description="Side of the assembled input tensor")
    mu: float = Field(0.15, gt=0)
    beta: float = Field(0.1, ge=0)
    iterations: int = Field(10, ge=1)
    edge_source: EdgeSource = "intensity"
    saliency_source: str = Field("edge", description="uniform | center | edge | file:<dir>")
    center_sigma_frac: float = Field(0.3, gt=0)
    edge_saliency_sigma: float = Field(2.0, gt=0)
    canny_low: float = Field(0.1, gt=0, le=1)
    canny_high: float = Field(0.3, gt=0, le=1)
    per_anchor: int = Field(12, ge=1)
    seeds: List[int] = Field(default_factory=lambda: list(DEFAULT_SEEDS), min_length=1)
    free_classes: bool = False
    drop_features: List[FeatureName] = Field(default_factory=list)
    streams: StreamSelection = "both"
    output_dir: str = "output"

    @field_validator("grid")
    @classmethod
    def grid_divisible_by_four(cls, value: int) -> int:
        if value % 4:
            raise ValueError("grid must be divisible by 4 so every pooling scale is exact")
        return value

    @field_validator("saliency_source")
    @classmethod
    def known_saliency_source(cls, value: str) -> str:
        if value in ("uniform", "center", "edge"):
            return value
        if value.startswith("file:") and len(value) > len("file:"):
            return value
        raise ValueError(f"unknown saliency source '{value}'")

    @model_validator(mode="after")
    def canny_thresholds_ordered(self) -> "PipelineConfig":
        if not self.canny_low < self.canny_high:
            raise ValueError("canny_low must be smaller than canny_high")
        return self

    @property
    def gvf_params(self) -> GvfParams:
        return GvfParams(mu=self.mu, beta=self.beta, iterations=self.iterations,
                         edge_source=self.edge_source)


class SeedResult(BaseModel):
    """Accuracy of one seeded triplet draw."""
    seed: int
    accuracy: float = Field(..., ge=0, le=1)
    n_triplets: int = Field(..., ge=0)


class CdaReport(BaseModel):
    """Multi-seed CDA summary."""
    mode: CdaMode
    seeds: List[SeedResult]
    mean: float
    std: float
    cv: float


class EvalReport(BaseModel):
    """JSON report written by the eval command."""
    mode: CdaMode
    seeds: List[SeedResult]
    mean: float
    std: float
    cv: float
    dbi: Optional[float] = Field(None, description="Davies-Bouldin index, lower is better")
    silhouette: Optional[float] = Field(None, description="Mean silhouette, higher is better")
    embedding_dim: int
    n_images: int
    config: PipelineConfig


class AblationReport(BaseModel):
    """One cell of an ablation sweep."""
    name: str
    cda1: Optional[CdaReport] = None
    cda2: Optional[CdaReport] = None
    dbi: Optional[float] = None
    silhouette: Optional[float] = None
    embedding_dim: int
    n_images: int
    config: PipelineConfig
