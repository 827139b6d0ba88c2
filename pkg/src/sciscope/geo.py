"""Geographic viewport algebra and satellite tile providers.

A viewport is the camera state of one conversation: a center, a zoom
level, and the immutable origin it started from. Pan offsets are stored as
integer multiples of a 2^-40 degree quantum rather than raw floats --
every pan step is an exact integer number of quanta, so relative
pan/zoom inverse pairs restore the viewport exactly and absolute
operations are idempotent (plain float arithmetic loses a ulp on roughly
3% of step pairs).
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, replace

import httpx
import numpy as np

from .data import GeoPoint
from .errors import ProviderBoundsExceeded, ProviderUnavailable
from .imaging import from_png_bytes

# Web-Mercator world: 360 degrees of longitude across 256 * 2^zoom pixels.
TILE_SIZE = 256
MAX_MERCATOR_LAT = 85.05112878
DEFAULT_VIEW_PX = 640
ZOOM_MIN = 0
ZOOM_MAX = 22

_UNIT_EXP = 40  # offsets quantized to 2^-40 degrees (~0.1 um at the equator)
_UNIT_DEG = 2.0**-_UNIT_EXP
_FULL_CIRCLE_UNITS = 360 * 2**_UNIT_EXP

PAN_DIRECTIONS = ("up", "down", "left", "right")
ZOOM_DIRECTIONS = ("in", "out")
MODES = ("relative", "absolute")


def _wrap_lon(lon: float) -> float:
    return ((lon + 180.0) % 360.0) - 180.0


def pan_step_units(zoom: int, view_px: int) -> int:
    """Half the viewport span at this zoom, in offset quanta (exact integer).

    The span follows the slippy-map ground-resolution formula: a view of
    ``view_px`` pixels covers view_px * 360 / (256 * 2^zoom) degrees.
    """
    exponent = _UNIT_EXP - 6 - zoom  # step = 45 * view_px * 2^(-6-zoom) degrees
    if exponent < 0:
        raise ProviderBoundsExceeded(f"zoom {zoom} exceeds the supported pan resolution")
    return 45 * view_px * 2**exponent


@dataclass(frozen=True)
class Viewport:
    """Camera state: origin anchor plus exact integer pan offsets."""

    origin: GeoPoint
    lat_units: int = 0
    lon_units: int = 0
    zoom: int = -1  # replaced by origin.zoom in __post_init__ when negative

    def __post_init__(self):
        if self.zoom < 0:
            object.__setattr__(self, "zoom", self.origin.zoom)
        object.__setattr__(self, "lon_units", self.lon_units % _FULL_CIRCLE_UNITS)

    @classmethod
    def at(cls, lat: float, lon: float, zoom: int) -> "Viewport":
        return cls(origin=GeoPoint(lat=lat, lon=lon, zoom=zoom))

    @property
    def lat(self) -> float:
        return self.origin.lat + self.lat_units * _UNIT_DEG

    @property
    def lon(self) -> float:
        return _wrap_lon(self.origin.lon + self.lon_units * _UNIT_DEG)


def _clamp_lat_units(origin_lat: float, units: int) -> int:
    max_units = int(np.floor((MAX_MERCATOR_LAT - origin_lat) / _UNIT_DEG))
    min_units = int(np.ceil((-MAX_MERCATOR_LAT - origin_lat) / _UNIT_DEG))
    return min(max(units, min_units), max_units)


def pan(view: Viewport, direction: str, mode: str, view_px: int = DEFAULT_VIEW_PX) -> Viewport:
    """Shift the viewport half a span in the given direction.

    Relative mode steps from the current state; absolute mode steps from
    the origin. Latitude clamps at the Mercator limit; longitude wraps.
    """
    if direction not in PAN_DIRECTIONS:
        raise ValueError(f"direction must be one of {PAN_DIRECTIONS}, got {direction!r}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")

    if mode == "relative":
        lat_units, lon_units, zoom = view.lat_units, view.lon_units, view.zoom
    else:
        lat_units, lon_units, zoom = 0, 0, view.origin.zoom

    step = pan_step_units(zoom, view_px)
    if direction == "up":
        lat_units += step
    elif direction == "down":
        lat_units -= step
    elif direction == "left":
        lon_units -= step
    else:
        lon_units += step

    lat_units = _clamp_lat_units(view.origin.lat, lat_units)
    return replace(view, lat_units=lat_units, lon_units=lon_units, zoom=zoom)


def zoom_view(
    view: Viewport,
    direction: str,
    mode: str,
    zoom_bounds: tuple[int, int] = (ZOOM_MIN, ZOOM_MAX),
) -> Viewport:
    """Change zoom by one level, keeping the center of the base view.

    Relative mode steps from the current state; absolute mode steps from
    the origin view. Stepping outside ``zoom_bounds`` raises.
    """
    if direction not in ZOOM_DIRECTIONS:
        raise ValueError(f"direction must be one of {ZOOM_DIRECTIONS}, got {direction!r}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")

    if mode == "relative":
        lat_units, lon_units, base_zoom = view.lat_units, view.lon_units, view.zoom
    else:
        lat_units, lon_units, base_zoom = 0, 0, view.origin.zoom

    new_zoom = base_zoom + (1 if direction == "in" else -1)
    lo, hi = zoom_bounds
    if not lo <= new_zoom <= hi:
        raise ProviderBoundsExceeded(f"zoom {new_zoom} outside provider bounds [{lo}, {hi}]")
    return replace(view, lat_units=lat_units, lon_units=lon_units, zoom=new_zoom)


class TileProvider:
    """Renders a satellite view centered on (lat, lon) at a zoom level."""

    provider_id: str = "abstract"
    zoom_bounds: tuple[int, int] = (ZOOM_MIN, ZOOM_MAX)

    def fetch(self, lat: float, lon: float, zoom: int, size: tuple[int, int]) -> np.ndarray:
        raise NotImplementedError

    def check_health(self) -> bool:
        return True


class FixtureTileProvider(TileProvider):
    """Offline provider rendering a deterministic procedural landscape.

    The random seed quantizes (lat, lon) to 1e-6 degrees and includes the
    zoom and output size, so identical viewports yield bit-identical
    rasters and any change of position or zoom changes the image.
    """

    provider_id = "fixture-tiles"

    def __init__(self, block: int = 8):
        self.block = block

    def fetch(self, lat: float, lon: float, zoom: int, size: tuple[int, int]) -> np.ndarray:
        lo, hi = self.zoom_bounds
        if not lo <= zoom <= hi:
            raise ProviderBoundsExceeded(f"zoom {zoom} outside provider bounds [{lo}, {hi}]")
        w, h = size
        if w < 1 or h < 1:
            raise ValueError(f"invalid view size {size}")
        key = f"{round(lat * 1e6)}:{round(lon * 1e6)}:{zoom}:{w}x{h}".encode()
        seed = int.from_bytes(hashlib.sha256(key).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        cells = rng.integers(
            0, 256, size=(h // self.block + 1, w // self.block + 1, 3), dtype=np.uint8
        )
        img = np.repeat(np.repeat(cells, self.block, axis=0), self.block, axis=1)
        return np.ascontiguousarray(img[:h, :w])


class HttpTileProvider(TileProvider):
    """Client for a static-maps HTTP endpoint.

    Protocol: GET with lat, lon, zoom, size=WxH (plus an optional key)
    returning encoded image bytes. Transient failures are retried with
    exponential backoff before raising ProviderUnavailable.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.25,
        zoom_bounds: tuple[int, int] = (ZOOM_MIN, ZOOM_MAX),
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.retries = retries
        self.backoff = backoff
        self.zoom_bounds = zoom_bounds
        digest = hashlib.sha256(endpoint.encode()).hexdigest()[:12]
        self.provider_id = f"http-tiles-{digest}"
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def fetch(self, lat: float, lon: float, zoom: int, size: tuple[int, int]) -> np.ndarray:
        lo, hi = self.zoom_bounds
        if not lo <= zoom <= hi:
            raise ProviderBoundsExceeded(f"zoom {zoom} outside provider bounds [{lo}, {hi}]")
        params = {"lat": lat, "lon": lon, "zoom": zoom, "size": f"{size[0]}x{size[1]}"}
        if self.api_key:
            params["key"] = self.api_key
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._client.get(self.endpoint, params=params)
                if resp.status_code >= 500:
                    raise httpx.HTTPStatusError(
                        f"server error {resp.status_code}", request=resp.request, response=resp
                    )
                resp.raise_for_status()
                return from_png_bytes(resp.content)
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_error = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * 2**attempt)
        raise ProviderUnavailable(
            f"tile endpoint {self.endpoint} unavailable after {self.retries} attempts: "
            f"{last_error}",
            retries=self.retries,
        )

    def check_health(self) -> bool:
        try:
            self._client.get(self.endpoint, params={"lat": 0, "lon": 0, "zoom": 1, "size": "1x1"})
            return True
        except httpx.TransportError:
            return False


def fetch_view(provider: TileProvider, view: Viewport, size: tuple[int, int]) -> np.ndarray:
    """Render the viewport through a tile provider."""
    return provider.fetch(view.lat, view.lon, view.zoom, size)
