"""Built-in semantic sets and the canonical face-mesh layout they target.

Three sets ship with the package:

* ``set0`` - 13 broad regions; paired features (eyes, brows, cheeks) are
  single regions holding one polygon per side.
* ``set1`` - 13 regions with left/right splits for the paired features.
* ``set2`` - 30 fine-grained regions, including the named sub-areas used in
  contribution tables ('Lower area around the right eye', 'Left Cheek', ...).

Region polygons are index lists over a 468-point mesh.  Indices for the
classic contours (face oval, eyes, eyebrows, lips) follow the widely used
facemesh numbering; interior anchors are package-defined.  The canonical
template below positions every anchor, so synthetic fixtures, built-in sets
and the landmark-extractor helper agree on geometry.  'Left'/'Right' name
the subject's side on an unmirrored photograph (subject-right appears on the
image's left half).
"""
from __future__ import annotations

import math

import numpy as np

from .semantics import LandmarkFile, SemanticRegion, SemanticSet

__all__ = [
    "BUILTIN_SET_IDS",
    "CANONICAL_MESH_SIZE",
    "FACE_OVAL_CENTER",
    "FACE_OVAL_RADII",
    "builtin_set",
    "canonical_face_template",
    "canonical_landmarks",
]

BUILTIN_SET_IDS = ("set0", "set1", "set2")
CANONICAL_MESH_SIZE = 468

# --- canonical layout ------------------------------------------------------
# Normalized coordinates in [0, 1] x [0, 1]; x grows rightwards, y downwards.
# The oval parameters are public: downstream tools project the template onto
# detected face boxes.

FACE_OVAL_CENTER = (0.5, 0.53)
FACE_OVAL_RADII = (0.34, 0.44)
_FACE_CENTER = FACE_OVAL_CENTER
_FACE_RADII = FACE_OVAL_RADII


def _ellipse(indices, center, radii, angles_deg):
    cx, cy = center
    rx, ry = radii
    return {
        idx: (cx + rx * math.cos(math.radians(a)), cy + ry * math.sin(math.radians(a)))
        for idx, a in zip(indices, angles_deg)
    }


_OVAL = (10, 338, 297, 332, 284, 251, 389, 356, 454, 323, 361, 288, 397, 365, 379, 378,
         400, 377, 152, 148, 176, 149, 150, 136, 172, 58, 132, 93, 234, 127, 162, 21,
         54, 103, 67, 109)

_EYE_RIGHT = (33, 7, 163, 144, 145, 153, 154, 155, 133, 173, 157, 158, 159, 160, 161, 246)
_EYE_LEFT = (263, 249, 390, 373, 374, 380, 381, 382, 362, 398, 384, 385, 386, 387, 388, 466)
_EYE_ANGLES_RIGHT = tuple(180.0 - 22.5 * i for i in range(9)) + tuple(337.5 - 22.5 * i for i in range(7))
_EYE_ANGLES_LEFT = tuple(22.5 * i for i in range(9)) + tuple(202.5 + 22.5 * i for i in range(7))

_LIPS_OUTER = (61, 146, 91, 181, 84, 17, 314, 405, 321, 375, 291, 409, 270, 269, 267, 0, 37, 39, 40, 185)
_LIPS_INNER = (78, 95, 88, 178, 87, 14, 317, 402, 318, 324, 308, 415, 310, 311, 312, 13, 82, 81, 80, 191)
_LIPS_ANGLES = tuple(180.0 - 18.0 * i for i in range(11)) + tuple(342.0 - 18.0 * i for i in range(9))

# Interior anchors: subject-right side (image left), centerline, then mirrors.
_INTERIOR = {
    151: (0.500, 0.270),
    9: (0.500, 0.350),
    168: (0.500, 0.425),
    195: (0.500, 0.540),
    4: (0.500, 0.585),
    1: (0.500, 0.615),
    2: (0.500, 0.640),
    18: (0.500, 0.775),
    108: (0.400, 0.300), 337: (0.600, 0.300),
    104: (0.345, 0.315), 333: (0.655, 0.315),
    68: (0.280, 0.335), 298: (0.720, 0.335),
    139: (0.250, 0.400), 368: (0.750, 0.400),
    117: (0.270, 0.505), 346: (0.730, 0.505),
    118: (0.315, 0.525), 347: (0.685, 0.525),
    119: (0.360, 0.530), 348: (0.640, 0.530),
    120: (0.405, 0.520), 349: (0.595, 0.520),
    47: (0.440, 0.500), 277: (0.560, 0.500),
    114: (0.455, 0.510), 343: (0.545, 0.510),
    217: (0.425, 0.555), 437: (0.575, 0.555),
    64: (0.425, 0.595), 294: (0.575, 0.595),
    98: (0.440, 0.615), 327: (0.560, 0.615),
    123: (0.260, 0.560), 352: (0.740, 0.560),
    205: (0.340, 0.575), 425: (0.660, 0.575),
    216: (0.410, 0.565), 436: (0.590, 0.565),
    92: (0.425, 0.665), 322: (0.575, 0.665),
    57: (0.360, 0.720), 287: (0.640, 0.720),
    201: (0.425, 0.800), 421: (0.575, 0.800),
}

_BROWS = {
    46: (0.2600, 0.3900), 53: (0.3050, 0.3825), 52: (0.3500, 0.3780),
    65: (0.3975, 0.3800), 55: (0.4425, 0.3875),
    70: (0.2550, 0.3625), 63: (0.3000, 0.3520), 105: (0.3475, 0.3475),
    66: (0.3950, 0.3490), 107: (0.4400, 0.3555),
    276: (0.7400, 0.3900), 283: (0.6950, 0.3825), 282: (0.6500, 0.3780),
    295: (0.6025, 0.3800), 285: (0.5575, 0.3875),
    300: (0.7450, 0.3625), 293: (0.7000, 0.3520), 334: (0.6525, 0.3475),
    296: (0.6050, 0.3490), 336: (0.5600, 0.3555),
}


def _anchor_table() -> dict[int, tuple[float, float]]:
    anchors: dict[int, tuple[float, float]] = {}
    for part in (
        _ellipse(_OVAL, _FACE_CENTER, _FACE_RADII, tuple(10.0 * k - 90.0 for k in range(36))),
        _ellipse(_EYE_RIGHT, (0.355, 0.44), (0.085, 0.035), _EYE_ANGLES_RIGHT),
        _ellipse(_EYE_LEFT, (0.645, 0.44), (0.085, 0.035), _EYE_ANGLES_LEFT),
        _ellipse(_LIPS_OUTER, (0.5, 0.70), (0.115, 0.045), _LIPS_ANGLES),
        _ellipse(_LIPS_INNER, (0.5, 0.70), (0.075, 0.020), _LIPS_ANGLES),
        _INTERIOR,
        _BROWS,
    ):
        for idx, pos in part.items():
            if idx in anchors:
                raise AssertionError(f"canonical layout assigns index {idx} twice")
            anchors[idx] = pos
    return anchors


_ANCHORS = _anchor_table()


def canonical_face_template(mesh_size: int = CANONICAL_MESH_SIZE) -> np.ndarray:
    """Normalized (mesh_size, 2) layout; anchors at semantic positions, the
    rest on a deterministic spiral inside the face oval."""
    if mesh_size < max(_ANCHORS) + 1:
        raise ValueError(f"canonical template needs mesh_size >= {max(_ANCHORS) + 1}")
    pts = np.empty((mesh_size, 2), dtype=np.float64)
    cx, cy = _FACE_CENTER
    rx, ry = _FACE_RADII
    for i in range(mesh_size):
        if i in _ANCHORS:
            pts[i] = _ANCHORS[i]
        else:
            t = (i * 0.6180339887498949) % 1.0
            rad = 0.12 + 0.68 * math.sqrt(t)
            phi = i * 2.399963229728653
            pts[i] = (cx + 0.92 * rx * rad * math.cos(phi), cy + 0.92 * ry * rad * math.sin(phi))
    return pts


def canonical_landmarks(width: int, height: int, image_id: str = "canonical",
                        mesh_size: int = CANONICAL_MESH_SIZE) -> LandmarkFile:
    """The canonical template scaled to pixel coordinates of a given raster."""
    pts = canonical_face_template(mesh_size)
    scaled = np.empty_like(pts)
    scaled[:, 0] = pts[:, 0] * (width - 1)
    scaled[:, 1] = pts[:, 1] * (height - 1)
    return LandmarkFile(image_id=image_id, width=width, height=height, mesh_size=mesh_size, points=scaled)


# --- region polygons -------------------------------------------------------

_POLY = {
    "forehead_center": (109, 10, 338, 337, 336, 9, 107, 108),
    "forehead_left": (338, 297, 332, 298, 333, 337),
    "forehead_right": (109, 67, 103, 68, 104, 108),
    "temple_left": (332, 284, 251, 389, 356, 368, 298),
    "temple_right": (103, 54, 21, 162, 127, 139, 68),
    "brow_left": (276, 283, 282, 295, 285, 336, 296, 334, 293, 300),
    "brow_right": (46, 53, 52, 65, 55, 107, 66, 105, 63, 70),
    "glabella": (107, 9, 336, 285, 168, 55),
    "eye_left": _EYE_LEFT,
    "eye_right": _EYE_RIGHT,
    "under_eye_left": (263, 249, 390, 373, 374, 380, 381, 382, 362, 277, 349, 348, 347, 346),
    "under_eye_right": (33, 7, 163, 144, 145, 153, 154, 155, 133, 47, 120, 119, 118, 117),
    "nose_bridge": (168, 343, 195, 114),
    "nose_left": (343, 437, 294, 327, 2, 1, 4, 195),
    "nose_right": (114, 195, 4, 1, 2, 98, 64, 217),
    "cheekbone_left": (346, 347, 348, 349, 277, 436, 425, 352),
    "cheekbone_right": (117, 118, 119, 120, 47, 216, 205, 123),
    "cheek_left": (436, 425, 352, 361, 288, 397, 287, 322),
    "cheek_right": (216, 205, 123, 132, 58, 172, 57, 92),
    "mouth_upper_area": (98, 2, 327, 322, 291, 409, 270, 269, 267, 0, 37, 39, 40, 185, 61, 92),
    "lip_upper": (61, 185, 40, 39, 37, 0, 267, 269, 270, 409, 291,
                  308, 415, 310, 311, 312, 13, 82, 81, 80, 191, 78),
    "mouth_inner": _LIPS_INNER,
    "lip_lower": (61, 146, 91, 181, 84, 17, 314, 405, 321, 375, 291,
                  308, 324, 318, 402, 317, 14, 87, 178, 88, 95, 78),
    "mouth_lower_area": (61, 146, 91, 181, 84, 17, 314, 405, 321, 375, 291, 287, 18, 57),
    "chin": (18, 421, 377, 152, 148, 201),
    "jaw_left": (287, 397, 365, 379, 378, 400, 377, 421),
    "jaw_right": (57, 172, 136, 150, 149, 176, 148, 201),
    "ear_left": (356, 454, 323, 361, 352, 368),
    "ear_right": (127, 234, 93, 132, 123, 139),
}

_BACKGROUND = SemanticRegion(name="Background", is_background=True)


def _region(name, *poly_keys) -> SemanticRegion:
    return SemanticRegion(name=name, polygons=tuple(_POLY[k] for k in poly_keys))


_SET2_REGIONS = (
    _BACKGROUND,
    _region("Central area of the forehead", "forehead_center"),
    _region("Left side of the forehead", "forehead_left"),
    _region("Right side of the forehead", "forehead_right"),
    _region("Left temple", "temple_left"),
    _region("Right temple", "temple_right"),
    _region("Left eyebrow", "brow_left"),
    _region("Right eyebrow", "brow_right"),
    _region("Between the eyebrows", "glabella"),
    _region("Left eye", "eye_left"),
    _region("Right eye", "eye_right"),
    _region("Lower area around the left eye", "under_eye_left"),
    _region("Lower area around the right eye", "under_eye_right"),
    _region("Nose bridge", "nose_bridge"),
    _region("Left side of the nose", "nose_left"),
    _region("Right side of the nose", "nose_right"),
    _region("Left cheekbone", "cheekbone_left"),
    _region("Right cheekbone", "cheekbone_right"),
    _region("Left Cheek", "cheek_left"),
    _region("Right Cheek", "cheek_right"),
    _region("Upper area of the mouth", "mouth_upper_area"),
    _region("Upper lip", "lip_upper"),
    _region("Inner mouth", "mouth_inner"),
    _region("Lower lip", "lip_lower"),
    _region("Lower area of the mouth", "mouth_lower_area"),
    _region("Chin", "chin"),
    _region("Left jawline", "jaw_left"),
    _region("Right jawline", "jaw_right"),
    _region("Left ear area", "ear_left"),
    _region("Right ear area", "ear_right"),
)

_SET0_REGIONS = (
    _BACKGROUND,
    _region("Forehead", "forehead_center", "forehead_left", "forehead_right", "glabella"),
    _region("Temples", "temple_left", "temple_right"),
    _region("Eyebrows", "brow_left", "brow_right"),
    _region("Eyes", "eye_left", "eye_right"),
    _region("Lower eye areas", "under_eye_left", "under_eye_right"),
    _region("Nose", "nose_bridge", "nose_left", "nose_right"),
    _region("Cheeks", "cheekbone_left", "cheekbone_right", "cheek_left", "cheek_right"),
    _region("Ears", "ear_left", "ear_right"),
    _region("Upper area of the mouth", "mouth_upper_area"),
    _region("Mouth", "lip_upper", "mouth_inner", "lip_lower"),
    _region("Lower area of the mouth", "mouth_lower_area"),
    _region("Chin and jaw", "chin", "jaw_left", "jaw_right"),
)

_SET1_REGIONS = (
    _BACKGROUND,
    _region("Forehead", "forehead_center", "forehead_left", "forehead_right"),
    _region("Between the eyebrows", "glabella"),
    _region("Left eyebrow", "brow_left"),
    _region("Right eyebrow", "brow_right"),
    _region("Left eye", "eye_left"),
    _region("Right eye", "eye_right"),
    _region("Nose", "nose_bridge", "nose_left", "nose_right"),
    _region("Left cheek area", "under_eye_left", "cheekbone_left", "cheek_left", "ear_left", "temple_left"),
    _region("Right cheek area", "under_eye_right", "cheekbone_right", "cheek_right", "ear_right", "temple_right"),
    _region("Upper mouth", "mouth_upper_area", "lip_upper"),
    _region("Lower mouth", "mouth_inner", "lip_lower", "mouth_lower_area"),
    _region("Chin and jaw", "chin", "jaw_left", "jaw_right"),
)

_SETS = {"set0": _SET0_REGIONS, "set1": _SET1_REGIONS, "set2": _SET2_REGIONS}


def builtin_set(set_id: str) -> SemanticSet:
    if set_id not in _SETS:
        raise KeyError(f"unknown built-in set '{set_id}', available: {BUILTIN_SET_IDS}")
    return SemanticSet(set_id=set_id, mesh_size=CANONICAL_MESH_SIZE, regions=_SETS[set_id])
