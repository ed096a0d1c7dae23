import pytest

from facexplain import CachingEmbedder, FillStrategy, build_masks
from facexplain.synthetic import (
    SyntheticRegionEmbedder,
    descending_weights,
    make_strip_set,
    paint_regions,
    strip_landmarks,
    uniform_intensities,
)


@pytest.fixture(scope="session")
def strip5():
    """5 vertical strips on a 40x40 raster: set, landmarks, masks."""
    sset = make_strip_set(5)
    landmarks = strip_landmarks(5, 40, 40, "strip5")
    return sset, landmarks, build_masks(landmarks, sset)


@pytest.fixture(scope="session")
def gray():
    return FillStrategy.gray()


@pytest.fixture(scope="session")
def planted5(strip5):
    """Synthetic embedder with well-separated descending weights plus a
    16-image calibration set of uniform-intensity fixtures."""
    _, _, masks = strip5
    weights = descending_weights(5)
    embedder = CachingEmbedder(SyntheticRegionEmbedder(masks, weights, dim=8, seed=3))
    images = [paint_regions(masks, uniform_intensities(5, i, seed=2)) for i in range(16)]
    return embedder, weights, images, masks
