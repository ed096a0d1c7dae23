"""Semantic face regions: landmark meshes, built-in sets, masks, occlusion.

Builds the canonical 468-point landmark layout, rasterizes all three
built-in semantic sets against it, exports the masks as PNGs, and previews
an occlusion for each fill strategy.
"""
from pathlib import Path

import numpy as np

import facexplain as fx
from facexplain.semantics import masks_to_png

OUT = Path(__file__).parent / "output" / "01_semantic_masks"
OUT.mkdir(parents=True, exist_ok=True)

landmarks = fx.canonical_landmarks(256, 256, image_id="demo-face")
print(f"canonical layout: {landmarks.mesh_size} landmarks on a "
      f"{landmarks.width}x{landmarks.height} raster")

for set_id in ("set0", "set1", "set2"):
    sset = fx.load_semantic_set(set_id)
    stack = fx.build_masks(landmarks, sset)
    coverage = stack.masks.any(axis=0).mean()
    print(f"{set_id}: {sset.size} regions, raster coverage {coverage:.0%}, "
          f"{len(stack.overlaps)} overlapping pairs recorded")
    masks_to_png(stack, OUT / set_id, names=sset.region_names)

# paint a fake face so the occlusion preview has visible structure
sset = fx.load_semantic_set("set2")
stack = fx.build_masks(landmarks, sset)
rng = np.random.default_rng(0)
image = np.zeros((256, 256))
for n in range(stack.size):
    image[stack.masks[n]] = rng.uniform(60, 220)

eye = sset.region_names.index("Right eye")
for fill in (fx.FillStrategy.gray(), fx.FillStrategy.black(), fx.FillStrategy.mean()):
    occluded = fx.occlude(image, stack.masks[eye], fill)
    from facexplain.data import write_image_png

    write_image_png(OUT / f"occluded_right_eye_{fill.label}.png", occluded)
    print(f"occluded 'Right eye' with {fill.label}: "
          f"{int((occluded != image).sum())} pixels changed")

print(f"artifacts in {OUT}")
