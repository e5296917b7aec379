#!/usr/bin/env python3
"""
Command-line front end for the flow composition toolkit.

Subcommands: config, saliency, gvf, embed, eval, render, ablate.
Every command returns exit status 0 only when no item failed.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from PIL import Image, ImageDraw

from config import Config, build_pipeline_config
from errors import ConfigError, FieldError, FieldFormatError, FlowCompError, ImageNotFoundError
from evalkit import build_embedding_set, load_embeddings, load_labels
from flowfeat import curl, divergence, magnitude, write_descriptors
from gvf import FlowField, gvf_energy, gvf_energy_saliency, write_flow, write_tensor, write_tensor_preview
from imagecore import (
    FCF_PLANES_MAGIC,
    PNG_SIGNATURE,
    JPEG_SIGNATURE,
    decode_fcf,
    encode_png,
    load_image,
    minmax_normalize,
    to_grayscale,
    write_bytes_atomic,
    write_fcf1,
    write_field_png,
)
from models import PipelineConfig
from pipeline import FlowCompositionService, build_ablation_report, build_eval_report, list_images
from saliency import center_bias_saliency, edge_saliency, uniform_saliency

logger = logging.getLogger(__name__)

RENDER_KINDS = ("div", "curl", "mag", "saliency", "quiver")
BUILTIN_SALIENCY = ("uniform", "center", "edge")
ABLATION_MUS = (0.05, 0.15, 0.25)
ABLATION_ITERATIONS = (10, 30, 50)
ABLATION_EDGE_SOURCES = ("intensity", "sobel", "canny")


def configure_logging(verbose: bool, level: str) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s'
    )


def pipeline_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """PipelineConfig keys taken from flags; unset flags stay None and are ignored."""
    keys = ("grid", "tensor_size", "mu", "beta", "iterations", "edge_source", "saliency_source",
            "center_sigma_frac", "edge_saliency_sigma", "canny_low", "canny_high", "per_anchor",
            "seeds", "free_classes", "drop_features", "streams", "output_dir")
    return {key: getattr(args, key, None) for key in keys}


def effective_config(args: argparse.Namespace) -> PipelineConfig:
    return build_pipeline_config(args.config, pipeline_overrides(args))


def write_json(path: Path, payload: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    write_bytes_atomic(path, (payload + "\n").encode("utf-8"))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_config(args: argparse.Namespace) -> int:
    print(effective_config(args).model_dump_json(indent=2))
    return 0


def cmd_saliency(args: argparse.Namespace) -> int:
    config = effective_config(args)
    images = list_images(args.input_dir)
    if not images:
        logger.error(f"no images found in {args.input_dir}")
        return 1
    output_dir = Path(args.output or config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    failures = []
    for path in images:
        try:
            gray = to_grayscale(load_image(path))
            height, width = gray.shape
            if args.generator == "uniform":
                saliency = uniform_saliency(width, height)
            elif args.generator == "center":
                saliency = center_bias_saliency(width, height, config.center_sigma_frac)
            else:
                saliency = edge_saliency(gray, config.edge_saliency_sigma)
            if args.format == "png":
                write_field_png(output_dir / f"{path.stem}.png", saliency)
            else:
                write_fcf1(output_dir / f"{path.stem}.fcf", saliency)
        except FlowCompError as e:
            logger.error(f"❌ {path.name}: {e}")
            failures.append(path.name)

    written = len(images) - len(failures)
    print(f"{written} of {len(images)} saliency maps written to {output_dir}, {len(failures)} failed")
    for name in failures:
        print(f"  failed: {name}")
    return 1 if failures else 0


def cmd_gvf(args: argparse.Namespace) -> int:
    # a plain file path bypasses the config's saliency_source
    explicit_saliency = None
    args.saliency_source = args.saliency
    if args.saliency is not None and args.saliency not in BUILTIN_SALIENCY and not args.saliency.startswith("file:"):
        explicit_saliency, args.saliency_source = args.saliency, None
    config = effective_config(args)
    service = FlowCompositionService(config)

    flows = service.process(args.image, explicit_saliency)
    output_dir = Path(args.output or config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    stem = flows.image_id
    write_flow(output_dir / f"{stem}_baseline.fcf", flows.baseline)
    write_flow(output_dir / f"{stem}_enhanced.fcf", flows.enhanced)
    write_flow(output_dir / f"{stem}_averaged.fcf", flows.averaged)
    tensor = service.tensor(flows)
    write_tensor(output_dir / f"{stem}_tensor.fcf", tensor)
    write_tensor_preview(output_dir / f"{stem}_tensor.png", tensor)

    initial = FlowField(flows.fx, flows.fy)
    print(f"baseline energy: iteration 0 = {gvf_energy(initial, flows.fx, flows.fy, config.mu):.6g}, "
          f"iteration {config.iterations} = {gvf_energy(flows.baseline, flows.fx, flows.fy, config.mu):.6g}")
    enhanced_args = (flows.fx, flows.fy, flows.sx, flows.sy, config.mu, config.beta)
    print(f"enhanced energy: iteration 0 = {gvf_energy_saliency(initial, *enhanced_args):.6g}, "
          f"iteration {config.iterations} = {gvf_energy_saliency(flows.enhanced, *enhanced_args):.6g}")
    logger.info(f"✅ Flows for {stem} written to {output_dir}")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    config = effective_config(args)
    images = list_images(args.image_dir)
    if not images:
        logger.error(f"no images found in {args.image_dir}")
        return 1
    if args.labels is not None:
        labels = load_labels(args.labels, config.free_classes)
        missing = [p.stem for p in images if p.stem not in labels]
        if missing:
            logger.warning(f"{len(missing)} images have no labels (first: {missing[0]})")

    rows, failures = FlowCompositionService(config).embed_corpus(images, args.threads)
    output = Path(args.output or Path(config.output_dir) / "descriptors.csv")
    output.parent.mkdir(parents=True, exist_ok=True)
    count = write_descriptors(output, rows)
    print(f"{count} descriptors written to {output}, {len(failures)} failed")
    for path, reason in failures:
        print(f"  failed: {path.name}: {reason}")
    return 1 if failures else 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = effective_config(args)
    data = build_embedding_set(load_embeddings(args.embeddings), load_labels(args.labels, config.free_classes))
    report = build_eval_report(data, args.mode, config)
    payload = report.model_dump_json(indent=2)
    print(payload)
    output = Path(args.output or Path(config.output_dir) / f"eval_{args.mode}.json")
    write_json(output, payload)
    print(f"{args.mode}: mean {report.mean:.4f}, std {report.std:.4f}, cv {report.cv:.2%}")
    return 0


def _load_render_source(args: argparse.Namespace, config: PipelineConfig):
    """(flow, saliency) from an FCF2 flow/tensor file or from an image run through the pipeline."""
    if not Path(args.input).is_file():
        raise ImageNotFoundError(args.input, "input file not found")
    data = Path(args.input).read_bytes()
    if data.startswith(PNG_SIGNATURE) or data.startswith(JPEG_SIGNATURE):
        flows = FlowCompositionService(config).process(Path(args.input))
        stream = {"baseline": flows.baseline, "enhanced": flows.enhanced, "averaged": flows.averaged}[args.stream]
        return stream, flows.saliency
    magic, planes = decode_fcf(data, str(args.input))
    if magic != FCF_PLANES_MAGIC or planes.shape[0] not in (2, 3):
        raise FieldFormatError(f"{args.input}: expected an FCF2 flow (2 channels) or tensor (3 channels)")
    if planes.shape[0] == 2:
        return FlowField(planes[0], planes[1]), None
    return FlowField(planes[1], planes[2]), planes[0]


def render_quiver(flow: FlowField, scale: int, step: int) -> np.ndarray:
    """White arrows on a black canvas, scale pixels per sample, one arrow every step samples."""
    if scale < 1 or step < 1:
        raise FieldError("quiver scale and step must be at least 1")
    height, width = flow.shape
    canvas = Image.new("L", (width * scale, height * scale), 0)
    draw = ImageDraw.Draw(canvas)
    lengths = magnitude(flow)
    peak = float(lengths.max())
    if peak > 0:
        reach = 0.9 * step * scale
        for row in range(step // 2, height, step):
            for col in range(step // 2, width, step):
                if lengths[row, col] == 0:
                    continue
                dx = flow.u[row, col] / peak * reach
                dy = flow.v[row, col] / peak * reach
                x0, y0 = (col + 0.5) * scale, (row + 0.5) * scale
                x1, y1 = x0 + dx, y0 + dy
                draw.line([(x0, y0), (x1, y1)], fill=255)
                # arrowhead: two strokes at +-150 degrees from the shaft
                angle = np.arctan2(dy, dx)
                head = 0.3 * np.hypot(dx, dy)
                for turn in (2.618, -2.618):
                    draw.line([(x1, y1), (x1 + head * np.cos(angle + turn), y1 + head * np.sin(angle + turn))], fill=255)
    return np.asarray(canvas)


def cmd_render(args: argparse.Namespace) -> int:
    config = effective_config(args)
    flow, saliency = _load_render_source(args, config)
    if args.kind == "quiver":
        write_bytes_atomic(args.output, encode_png(render_quiver(flow, args.scale, args.step)))
    elif args.kind == "saliency":
        if saliency is None:
            raise FieldFormatError(f"{args.input}: a two-channel flow file carries no saliency map")
        write_field_png(args.output, saliency)
    else:
        field = {"div": divergence, "curl": curl, "mag": magnitude}[args.kind](flow)
        write_field_png(args.output, minmax_normalize(field))
    logger.info(f"✅ {args.kind} rendered to {args.output}")
    return 0


def ablation_cells(base: PipelineConfig, extended: bool) -> List[Tuple[str, PipelineConfig]]:
    """(name, config) for every sweep cell; the default sweep has exactly 12 cells."""
    cells = []
    for mu in ABLATION_MUS:
        for iterations in ABLATION_ITERATIONS:
            cells.append((f"mu{mu:.2f}_iter{iterations}",
                          base.model_copy(update={"mu": mu, "iterations": iterations})))
    for source in ABLATION_EDGE_SOURCES:
        cells.append((f"edge_{source}",
                      base.model_copy(update={"mu": 0.15, "iterations": 10, "edge_source": source})))
    if extended:
        sources = list(BUILTIN_SALIENCY)
        if base.saliency_source.startswith("file:"):
            sources.append(base.saliency_source)
        for source in sources:
            name = "saliency_file" if source.startswith("file:") else f"saliency_{source}"
            cells.append((name, base.model_copy(update={"saliency_source": source})))
        for feature in ("div", "curl", "mag"):
            cells.append((f"no_{feature}", base.model_copy(update={"drop_features": [feature]})))
        for stream in ("baseline", "saliency"):
            cells.append((f"stream_{stream}", base.model_copy(update={"streams": stream})))
    return cells


def cmd_ablate(args: argparse.Namespace) -> int:
    base = effective_config(args)
    images = list_images(args.image_dir)
    if not images:
        logger.error(f"no images found in {args.image_dir}")
        return 1
    labels = load_labels(args.labels, base.free_classes)
    output_dir = Path(args.output or Path(base.output_dir) / "ablation")
    output_dir.mkdir(parents=True, exist_ok=True)

    summary = []
    failed = False
    cells = ablation_cells(base, args.extended)
    for position, (name, config) in enumerate(cells, start=1):
        logger.info(f"[{position}/{len(cells)}] ablation cell {name}")
        rows, failures = FlowCompositionService(config).embed_corpus(images, args.threads)
        failed = failed or bool(failures)
        report = build_ablation_report(name, build_embedding_set(dict(rows), labels), config)
        write_json(output_dir / f"{name}.json", report.model_dump_json(indent=2))
        summary.append({
            "name": name,
            "mu": config.mu,
            "iterations": config.iterations,
            "edge_source": config.edge_source,
            "saliency_source": config.saliency_source,
            "cda1": report.cda1.mean if report.cda1 else None,
            "cda2": report.cda2.mean if report.cda2 else None,
            "dbi": report.dbi,
            "silhouette": report.silhouette,
        })

    pd.DataFrame(summary).to_csv(output_dir / "summary.csv", index=False, lineterminator="\n")
    print(f"{len(cells)} ablation reports written to {output_dir}")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat JSON config file")
    common.add_argument("--threads", type=int, help="worker pool size (default: FLOWCOMP_THREADS)")
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--output-dir", dest="output_dir")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--grid", type=int)
    solver.add_argument("--tensor-size", dest="tensor_size", type=int)
    solver.add_argument("--mu", type=float)
    solver.add_argument("--beta", type=float)
    solver.add_argument("--iterations", type=int)
    solver.add_argument("--edge-source", dest="edge_source", choices=ABLATION_EDGE_SOURCES)
    solver.add_argument("--center-sigma", dest="center_sigma_frac", type=float)
    solver.add_argument("--edge-sigma", dest="edge_saliency_sigma", type=float)
    solver.add_argument("--canny-low", dest="canny_low", type=float)
    solver.add_argument("--canny-high", dest="canny_high", type=float)

    evaluation = argparse.ArgumentParser(add_help=False)
    evaluation.add_argument("--seeds", type=int, nargs="+")
    evaluation.add_argument("--per-anchor", dest="per_anchor", type=int)
    evaluation.add_argument("--free-classes", dest="free_classes", action="store_true", default=None)

    features = argparse.ArgumentParser(add_help=False)
    features.add_argument("--saliency-source", dest="saliency_source",
                          help="uniform | center | edge | file:<dir>")
    features.add_argument("--drop-feature", dest="drop_features", action="append",
                          choices=("div", "curl", "mag"))
    features.add_argument("--streams", choices=("both", "baseline", "saliency"))

    parser = argparse.ArgumentParser(description="Saliency-guided gradient vector flow composition toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", parents=[common, solver, evaluation, features],
                       help="print the effective configuration")
    p.set_defaults(handler=cmd_config)

    p = sub.add_parser("saliency", parents=[common, solver], help="generate saliency maps for a directory")
    p.add_argument("input_dir", type=Path)
    p.add_argument("--generator", choices=BUILTIN_SALIENCY, default="center")
    p.add_argument("--format", choices=("png", "fcf"), default="png")
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(handler=cmd_saliency)

    p = sub.add_parser("gvf", parents=[common, solver], help="solve both GVF streams for one image")
    p.add_argument("image", type=Path)
    p.add_argument("--saliency", help="uniform | center | edge | file:<dir> | path to a saliency file")
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(handler=cmd_gvf)

    p = sub.add_parser("embed", parents=[common, solver, evaluation, features],
                       help="write flow descriptors for a directory")
    p.add_argument("image_dir", type=Path)
    p.add_argument("--labels", type=Path)
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("eval", parents=[common, evaluation], help="CDA and clustering metrics")
    p.add_argument("embeddings", type=Path)
    p.add_argument("labels", type=Path)
    p.add_argument("--mode", choices=("cda1", "cda2"), default="cda1")
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("render", parents=[common, solver, features], help="render a field as PNG")
    p.add_argument("input", type=Path, help="FCF2 flow/tensor file or image")
    p.add_argument("--kind", choices=RENDER_KINDS, required=True)
    p.add_argument("--stream", choices=("baseline", "enhanced", "averaged"), default="averaged")
    p.add_argument("--scale", type=int, default=8)
    p.add_argument("--step", type=int, default=4)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(handler=cmd_render)

    p = sub.add_parser("ablate", parents=[common, solver, evaluation, features],
                       help="sweep mu / iterations / edge sources")
    p.add_argument("image_dir", type=Path)
    p.add_argument("labels", type=Path)
    p.add_argument("--extended", action="store_true", help="add saliency, feature and stream cells")
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(handler=cmd_ablate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        env = Config()
    except ConfigError as e:
        configure_logging(False, "INFO")
        logger.error(f"❌ {e}")
        return 2
    configure_logging(args.verbose, env.log_level)
    if args.threads is None:
        args.threads = env.threads
    if args.threads < 1:
        logger.error("❌ --threads must be at least 1")
        return 2

    try:
        return args.handler(args)
    except FlowCompError as e:
        logger.error(f"❌ {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
