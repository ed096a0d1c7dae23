import numpy as np
import pytest
from PIL import Image


def draw_face(width=96, height=112, cx=None, cy=None, rx=None, ry=None, brightness=190.0):
    """Bright face-shaped ellipse on a dark background."""
    cx = width / 2 if cx is None else cx
    cy = height / 2 if cy is None else cy
    rx = width * 0.36 if rx is None else rx
    ry = height * 0.42 if ry is None else ry
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    inside = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    img = np.full((height, width), 25.0)
    img[inside] = brightness
    # darken eye and mouth patches so the crop looks face-like
    for ex in (cx - rx * 0.45, cx + rx * 0.45):
        eye = ((xx - ex) / (rx * 0.18)) ** 2 + ((yy - (cy - ry * 0.25)) / (ry * 0.10)) ** 2 <= 1.0
        img[eye] = 120.0
    mouth = ((xx - cx) / (rx * 0.35)) ** 2 + ((yy - (cy + ry * 0.45)) / (ry * 0.10)) ** 2 <= 1.0
    img[mouth] = 110.0
    return img


@pytest.fixture()
def fixture_faces(tmp_path):
    """Three face crops, one blank frame, one two-face frame."""
    indir = tmp_path / "crops"
    indir.mkdir()
    for i in range(3):
        img = draw_face(96 + 8 * i, 112, brightness=180.0 + 10 * i)
        Image.fromarray(np.clip(img, 0, 255).astype(np.uint8)).save(indir / f"face{i}.png")
    Image.fromarray(np.full((64, 64), 30, dtype=np.uint8)).save(indir / "blank.png")
    two = np.full((120, 200), 25.0)
    two[:, :96] = draw_face(96, 120)
    two[10:106, 110:190] = draw_face(80, 96, brightness=200.0)
    Image.fromarray(np.clip(two, 0, 255).astype(np.uint8)).save(indir / "two_faces.png")
    return indir
