"""
Shared fixtures: synthetic and natural test images, and labeled line corpora.
"""

import numpy as np
import pytest
from skimage import data as skdata

from generate_corpus import CorpusBuilder
from imagecore import resize_bilinear, to_grayscale
from synthetic import standard_test_images

NATURAL_IMAGE_NAMES = ("camera", "astronaut", "coffee", "chelsea", "coins")


@pytest.fixture(scope="session")
def natural_images():
    """Bundled photographs as 56x56 grayscale fields."""
    images = {}
    for name in NATURAL_IMAGE_NAMES:
        pixels = getattr(skdata, name)().astype(np.float64) / 255.0
        gray = to_grayscale(pixels) if pixels.ndim == 3 else pixels
        images[name] = resize_bilinear(gray, 56, 56)
    return images


@pytest.fixture(scope="session")
def structured_images():
    return standard_test_images(56)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def line_corpus(tmp_path_factory):
    """40 images: 20 horizontal and 20 vertical line compositions, with labels.tsv."""
    return CorpusBuilder(tmp_path_factory.mktemp("line_corpus"), per_class=20).run()


@pytest.fixture(scope="session")
def small_line_corpus(tmp_path_factory):
    return CorpusBuilder(tmp_path_factory.mktemp("small_corpus"), per_class=4, seed=7).run()
