"""Apply each image-enhancement tool to a sample tile and save the results
side by side.

Run:  python demos/03_image_tools.py
"""

import numpy as np
from _common import fresh_output, make_tile
from PIL import Image

from sciscope.imaging import (
    adjust_brightness,
    adjust_contrast,
    edge_detect,
    histogram_equalize,
    sharpen,
)

out = fresh_output("03_tools")
tile = make_tile(seed=42, base=110, size=96)

results = {
    "original": tile,
    "brightness_x1.5": adjust_brightness(tile),
    "contrast_up": adjust_contrast(tile, "increase"),
    "contrast_down": adjust_contrast(tile, "decrease"),
    "sharpened": sharpen(tile),
    "edges": edge_detect(tile),
    "equalized": histogram_equalize(tile),
}

for name, img in results.items():
    Image.fromarray(img).save(out / f"{name}.png")
    print(f"{name:>16}: mean {img.mean():7.2f}  std {img.std():6.2f}  -> {name}.png")

strip = np.concatenate(list(results.values()), axis=1)
Image.fromarray(strip).save(out / "strip.png")
print(f"\ncombined strip written to {out / 'strip.png'}")
