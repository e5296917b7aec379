#!/usr/bin/env python3
"""
Writes a labeled synthetic corpus of horizontal- and vertical-line compositions
plus the matching labels TSV, ready for `main.py embed` and `main.py eval`.
"""

import argparse
import logging
from pathlib import Path
from typing import List, Tuple

import numpy as np

from imagecore import write_bytes_atomic, write_field_png
from synthetic import line_composition

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

COMPOSITION_BY_ORIENTATION = {"horizontal": "Horizontal", "vertical": "Vertical"}
SEMANTIC_LABEL = "line"


class CorpusBuilder:
    """Generates line-composition images and their labels."""

    def __init__(self, output_dir: Path, per_class: int = 20, size: int = 112, seed: int = 0):
        self.output_dir = Path(output_dir)
        self.images_dir = self.output_dir / "images"
        self.labels_path = self.output_dir / "labels.tsv"
        self.per_class = per_class
        self.size = size
        self.seed = seed
        self.labels: List[Tuple[str, str]] = []

    def ensure_directories(self) -> None:
        self.images_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"Ensured directory exists: {self.images_dir}")

    def write_images(self) -> None:
        rng = np.random.default_rng(self.seed)
        for orientation, composition in COMPOSITION_BY_ORIENTATION.items():
            for index in range(self.per_class):
                image_id = f"{orientation[0]}{index:03d}"
                write_field_png(self.images_dir / f"{image_id}.png", line_composition(orientation, rng, self.size))
                self.labels.append((image_id, composition))
        logger.info(f"Wrote {len(self.labels)} images to {self.images_dir}")

    def write_labels(self) -> None:
        lines = [f"{image_id}\t{composition}\t{SEMANTIC_LABEL}" for image_id, composition in sorted(self.labels)]
        write_bytes_atomic(self.labels_path, ("\n".join(lines) + "\n").encode("utf-8"))
        logger.info(f"Wrote labels to {self.labels_path}")

    def run(self) -> Path:
        self.ensure_directories()
        self.write_images()
        self.write_labels()
        logger.info("✅ Corpus generated")
        return self.output_dir


def main(argv=None):
    parser = argparse.ArgumentParser(description="Generate a synthetic horizontal/vertical line corpus")
    parser.add_argument("output_dir", type=Path)
    parser.add_argument("--per-class", type=int, default=20)
    parser.add_argument("--size", type=int, default=112)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    CorpusBuilder(args.output_dir, args.per_class, args.size, args.seed).run()


if __name__ == "__main__":
    main()
