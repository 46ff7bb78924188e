import numpy as np
import pytest

from inkprop.raster import LineArtRaster, LineClass, RgbRaster


def make_random_lineart(rng, h=24, w=24, color_lines=False) -> LineArtRaster:
    """Random strokes on a blank canvas: a plausible little line drawing."""
    classes = np.zeros((h, w), dtype=np.uint8)
    for _ in range(rng.integers(2, 6)):
        cls = LineClass.BLACK
        if color_lines and rng.random() < 0.4:
            cls = rng.choice([LineClass.RED, LineClass.BLUE, LineClass.GREEN])
        if rng.random() < 0.5:
            y = int(rng.integers(0, h))
            x0, x1 = sorted(rng.integers(0, w, size=2))
            classes[y, x0 : x1 + 1] = cls
        else:
            x = int(rng.integers(0, w))
            y0, y1 = sorted(rng.integers(0, h, size=2))
            classes[y0 : y1 + 1, x] = cls
    # keep at least one blank pixel
    if (classes != LineClass.BLANK).all():
        classes[0, 0] = LineClass.BLANK
    return LineArtRaster(classes)


def make_random_flat(rng, h=24, w=24, n_colors=4) -> RgbRaster:
    """Random flat-color frame: rectangles of distinct colors over a base."""
    palette = rng.integers(0, 255, size=(n_colors + 1, 3)).astype(np.uint8)
    # distinct colors guaranteed on the packed key
    while len(np.unique(palette.astype(np.int64) @ [65536, 256, 1])) <= n_colors:
        palette = rng.integers(0, 255, size=(n_colors + 1, 3)).astype(np.uint8)
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[...] = palette[0]
    for i in range(1, n_colors + 1):
        y0, y1 = sorted(rng.integers(0, h, size=2))
        x0, x1 = sorted(rng.integers(0, w, size=2))
        img[y0 : y1 + 1, x0 : x1 + 1] = palette[i]
    return RgbRaster(pixels=img)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
