"""Walk a satellite viewport around with the pan/zoom algebra and render
each stop through the offline tile provider.

Run:  python demos/04_geospatial_viewport.py
"""

from _common import fresh_output
from PIL import Image

from sciscope.geo import FixtureTileProvider, Viewport, fetch_view, pan, zoom_view

out = fresh_output("04_viewport")
tiles = FixtureTileProvider()

view = Viewport.at(lat=-8.75, lon=-63.9, zoom=15)  # Rondonia-ish coordinates
print(f"origin: lat {view.lat:.5f}, lon {view.lon:.5f}, zoom {view.zoom}")

moves = [
    ("pan right (relative)", lambda v: pan(v, "right", "relative")),
    ("pan up (relative)", lambda v: pan(v, "up", "relative")),
    ("zoom in (relative)", lambda v: zoom_view(v, "in", "relative")),
    ("pan down (relative)", lambda v: pan(v, "down", "relative")),
    ("zoom out (absolute)", lambda v: zoom_view(v, "out", "absolute")),
]

current = view
for i, (label, move) in enumerate(moves):
    current = move(current)
    raster = fetch_view(tiles, current, size=(128, 128))
    Image.fromarray(raster).save(out / f"step{i}_{label.split()[0]}_{label.split()[1]}.png")
    print(f"{label:>22}: lat {current.lat: .5f}, lon {current.lon: .5f}, zoom {current.zoom}")

# the algebra is exact: an up/down pair cancels perfectly
round_trip = pan(pan(view, "up", "relative"), "down", "relative")
print(f"\npan up then down restores the origin exactly: {round_trip == view}")
