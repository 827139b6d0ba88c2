"""The per-dataset tool registries the agent can call during inference.

Each tool is a named function over the conversation's image state that
returns either a transformed image or a scalar, plus a fixed natural-
language message rendered into the conversation. Aquaculture registries
add geospatial pan/zoom tools over a tile provider; all registries include
a machine-learning prediction tool backed by the trained probe.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import imaging
from .data import NATIVE_SIZE, GeoPoint
from .embeddings import EmbeddingProvider
from .errors import MissingDependency, UnknownTool
from .geo import TileProvider, Viewport, fetch_view, pan, zoom_view
from .probe import MlpParams, mlp_forward

PREDICT_MESSAGE = (
    "The machine learning model predicts a probability of {p:.2f} that the target is present."
)


class ToolKind(Enum):
    IMAGE_TRANSFORM = "image_transform"
    SCALAR = "scalar"


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    kind: ToolKind


@dataclass
class ToolResult:
    produced_by: str
    message: str
    image: np.ndarray | None = None
    value: float | None = None

    def __post_init__(self):
        if self.image is None and self.value is None:
            raise ValueError("tool result must carry an image or a scalar")
        if self.value is not None and not np.isfinite(self.value):
            raise ValueError("scalar tool result must be finite")


@dataclass
class ToolSession:
    """Mutable per-conversation state the tools act on.

    Image transforms compose on ``image``; geospatial fetches move
    ``viewport`` and replace ``image`` with the newly rendered view.
    """

    image: np.ndarray
    viewport: Viewport | None = None
    view_size: tuple[int, int] = (640, 640)


class ToolRegistry:
    """Ordered name -> (descriptor, executor) mapping for one dataset."""

    def __init__(self, dataset_kind: str):
        self.dataset_kind = dataset_kind
        self._tools: dict[str, tuple[ToolDescriptor, object]] = {}

    def add(self, descriptor: ToolDescriptor, executor) -> None:
        if descriptor.name in self._tools:
            raise ValueError(f"duplicate tool name {descriptor.name!r}")
        if not descriptor.description:
            raise ValueError(f"tool {descriptor.name!r} has an empty description")
        self._tools[descriptor.name] = (descriptor, executor)

    def __len__(self) -> int:
        return len(self._tools)

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def names(self) -> list[str]:
        return list(self._tools)

    def descriptors(self) -> list[ToolDescriptor]:
        return [d for d, _ in self._tools.values()]

    def descriptor(self, name: str) -> ToolDescriptor:
        if name not in self._tools:
            raise UnknownTool(f"unknown tool {name!r}")
        return self._tools[name][0]

    def execute(self, name: str, session: ToolSession) -> ToolResult:
        """Run a tool against the session, applying its state update."""
        if name not in self._tools:
            raise UnknownTool(f"unknown tool {name!r}")
        descriptor, executor = self._tools[name]
        result = executor(session)
        if descriptor.kind is ToolKind.IMAGE_TRANSFORM:
            assert result.image is not None
            session.image = result.image
        return result


# Verbatim tool descriptions, keyed by dataset kind then tool name.

AQUACULTURE_TOOLS = {
    "PredictAquaculturePondTool": (
        "Predicts the probability of an aquaculture pond being present in the image using a "
        "machine learning model. This tool is particularly helpful when you need a quantitative "
        "assessment of the likelihood of aquaculture pond presence in the satellite image."
    ),
    "PanUpToolRelative": "Pans the view upwards relative to the last image seen.",
    "PanUpToolAbsolute": "Pans the view upwards relative to the original starting image.",
    "PanDownToolRelative": "Pans the view downwards relative to the last image seen.",
    "PanDownToolAbsolute": "Pans the view downwards relative to the original starting image.",
    "PanLeftToolRelative": "Pans the view to the left relative to the last image seen.",
    "PanLeftToolAbsolute": "Pans the view to the left relative to the original starting image.",
    "PanRightToolRelative": "Pans the view to the right relative to the last image seen.",
    "PanRightToolAbsolute": "Pans the view to the right relative to the original starting image.",
    "ZoomInToolRelative": "Zooms in on the center of the current view relative to the last image seen.",
    "ZoomInToolAbsolute": "Zooms in on the center of the original view relative to the original starting image.",
    "ZoomOutToolRelative": "Zooms out from the current view relative to the last image seen.",
    "ZoomOutToolAbsolute": "Zooms out from the original view relative to the original starting image.",
}

EELGRASS_TOOLS = {
    "AdjustBrightnessTool": (
        "Adjusts the brightness of the image by 50%. This tool can help when the image is too "
        "dark or too bright, allowing for better visibility of disease symptoms on the eelgrass "
        "blade."
    ),
    "SharpenTool": (
        "Sharpens the image to enhance edges and details. This tool is useful for making subtle "
        "features more prominent, which can help in identifying signs of eelgrass wasting disease."
    ),
    "EdgeDetectionTool": (
        "Applies edge detection to the image, highlighting boundaries and features. This can "
        "help in identifying lesions or patterns associated with eelgrass wasting disease."
    ),
    "IncreaseContrastTool": (
        "Increases the contrast of the image by 50%. This tool can be helpful when the image "
        "appears too flat or when you need to enhance the visibility of subtle details, "
        "especially in cases where eelgrass wasting disease symptoms might be hard to distinguish."
    ),
    "DecreaseContrastTool": (
        "Decreases the contrast of the image by 50%. This tool can be useful when the image "
        "appears too harsh or when you want to reduce the intensity of bright areas, which might "
        "help in identifying overall patterns or structures in the eelgrass."
    ),
    "PredictEelgrassWastingDiseaseTool": (
        "Predicts the probability of eelgrass wasting disease in the image using a machine "
        "learning model. This tool is particularly helpful when you need a quantitative "
        "assessment of the likelihood of disease presence in the eelgrass sample."
    ),
    "HistogramEqualizationTool": (
        "Enhances the contrast of the image using histogram equalization. This can help in "
        "making features more distinguishable, which is beneficial for detecting eelgrass "
        "wasting disease symptoms."
    ),
}

SOLAR_TOOLS = {
    "HistogramEqualizationTool": (
        "Enhances the contrast of the image using histogram equalization. This can help in "
        "making features more distinguishable, which is beneficial for detecting solar panels "
        "and potential defects."
    ),
    "AdjustBrightnessTool": (
        "Adjusts the brightness of the image by 50%. This tool can help when the image is too "
        "dark or too bright, allowing for better visibility of solar panels and their features."
    ),
    "SharpenTool": (
        "Sharpens the image to enhance edges and details. This tool is useful for making subtle "
        "features more prominent, which can help in identifying solar panels and potential "
        "defects."
    ),
    "EdgeDetectionTool": (
        "Applies edge detection to the image, highlighting boundaries and features. This can "
        "help in identifying the outlines of solar panels and potential defects or anomalies."
    ),
    "IncreaseContrastTool": (
        "Increases the contrast of the image by 50%. This tool can be helpful when the image "
        "appears too flat or when you need to enhance the visibility of subtle details, "
        "especially in cases where solar panels might be hard to distinguish from their "
        "surroundings."
    ),
    "DecreaseContrastTool": (
        "Decreases the contrast of the image by 50%. This tool can be useful when the image "
        "appears too harsh or when you want to reduce the intensity of bright areas, which "
        "might help in identifying overall patterns or structures in the solar panel array."
    ),
    "PredictSolarPanelTool": (
        "Predicts the probability of a solar panel being in the image using a machine learning "
        "model. This tool is particularly helpful when you need a quantitative assessment of "
        "the likelihood of a solar panel being present in the image."
    ),
}

PREDICT_TOOL_NAMES = {
    "aquaculture": "PredictAquaculturePondTool",
    "eelgrass": "PredictEelgrassWastingDiseaseTool",
    "solar": "PredictSolarPanelTool",
}

REGISTRY_TOOL_NAMES = {
    "aquaculture": list(AQUACULTURE_TOOLS),
    "eelgrass": list(EELGRASS_TOOLS),
    "solar": list(SOLAR_TOOLS),
}

_ENHANCE_MESSAGES = {
    "AdjustBrightnessTool": "Brightness adjusted by 50%. The updated image is attached.",
    "SharpenTool": "The image has been sharpened. The updated image is attached.",
    "EdgeDetectionTool": "Edge detection applied. The edge map is attached.",
    "IncreaseContrastTool": "Contrast increased by 50%. The updated image is attached.",
    "DecreaseContrastTool": "Contrast decreased by 50%. The updated image is attached.",
    "HistogramEqualizationTool": "Histogram equalization applied. The updated image is attached.",
}

_ENHANCE_OPS = {
    "AdjustBrightnessTool": imaging.adjust_brightness,
    "SharpenTool": imaging.sharpen,
    "EdgeDetectionTool": imaging.edge_detect,
    "IncreaseContrastTool": lambda img: imaging.adjust_contrast(img, "increase"),
    "DecreaseContrastTool": lambda img: imaging.adjust_contrast(img, "decrease"),
    "HistogramEqualizationTool": imaging.histogram_equalize,
}


def predict_tool(probe: MlpParams, provider: EmbeddingProvider, img: np.ndarray) -> ToolResult:
    """Embed the image and run the trained probe; returns the probability."""
    p = mlp_forward(probe, provider.embed_image(img))
    return ToolResult(
        produced_by="predict", message=PREDICT_MESSAGE.format(p=p), value=p
    )


def _make_enhance_executor(name: str):
    op = _ENHANCE_OPS[name]

    def run(session: ToolSession) -> ToolResult:
        return ToolResult(
            produced_by=name, message=_ENHANCE_MESSAGES[name], image=op(session.image)
        )

    return run


def _make_predict_executor(name: str, probe: MlpParams, provider: EmbeddingProvider):
    def run(session: ToolSession) -> ToolResult:
        result = predict_tool(probe, provider, session.image)
        result.produced_by = name
        return result

    return run


def _make_pan_executor(name: str, direction: str, mode: str, tiles: TileProvider):
    wording = {"relative": "the last image seen", "absolute": "the original starting image"}

    def run(session: ToolSession) -> ToolResult:
        if session.viewport is None:
            raise MissingDependency(f"{name} needs a geospatial viewport on this conversation")
        session.viewport = pan(session.viewport, direction, mode, view_px=session.view_size[0])
        image = fetch_view(tiles, session.viewport, session.view_size)
        message = (
            f"Panned {direction} relative to {wording[mode]}. The new view is attached."
        )
        return ToolResult(produced_by=name, message=message, image=image)

    return run


def _make_zoom_executor(name: str, direction: str, mode: str, tiles: TileProvider):
    wording = {"relative": "the last image seen", "absolute": "the original starting image"}

    def run(session: ToolSession) -> ToolResult:
        if session.viewport is None:
            raise MissingDependency(f"{name} needs a geospatial viewport on this conversation")
        session.viewport = zoom_view(
            session.viewport, direction, mode, zoom_bounds=tiles.zoom_bounds
        )
        image = fetch_view(tiles, session.viewport, session.view_size)
        message = f"Zoomed {direction} relative to {wording[mode]}. The new view is attached."
        return ToolResult(produced_by=name, message=message, image=image)

    return run


def build_registry(
    dataset_kind: str,
    probe: MlpParams | None = None,
    embedder: EmbeddingProvider | None = None,
    tile_provider: TileProvider | None = None,
) -> ToolRegistry:
    """Assemble the tool registry for one dataset kind.

    Every kind needs the trained probe and an embedding provider for its
    prediction tool; aquaculture additionally needs a tile provider for
    the pan/zoom tools.
    """
    if dataset_kind not in REGISTRY_TOOL_NAMES:
        raise ValueError(f"unknown dataset kind {dataset_kind!r}")
    if probe is None or embedder is None:
        raise MissingDependency(f"{dataset_kind} registry needs a trained probe and an embedder")
    if dataset_kind == "aquaculture" and tile_provider is None:
        raise MissingDependency("aquaculture registry needs a tile provider for pan/zoom tools")

    registry = ToolRegistry(dataset_kind)
    descriptions = {
        "aquaculture": AQUACULTURE_TOOLS,
        "eelgrass": EELGRASS_TOOLS,
        "solar": SOLAR_TOOLS,
    }[dataset_kind]

    for name, description in descriptions.items():
        if name == PREDICT_TOOL_NAMES[dataset_kind]:
            kind = ToolKind.SCALAR
            executor = _make_predict_executor(name, probe, embedder)
        elif name.startswith("Pan"):
            kind = ToolKind.IMAGE_TRANSFORM
            direction = name.removeprefix("Pan").split("Tool")[0].lower()
            mode = "relative" if name.endswith("Relative") else "absolute"
            executor = _make_pan_executor(name, direction, mode, tile_provider)
        elif name.startswith("Zoom"):
            kind = ToolKind.IMAGE_TRANSFORM
            direction = "in" if name.startswith("ZoomIn") else "out"
            mode = "relative" if name.endswith("Relative") else "absolute"
            executor = _make_zoom_executor(name, direction, mode, tile_provider)
        else:
            kind = ToolKind.IMAGE_TRANSFORM
            executor = _make_enhance_executor(name)
        registry.add(ToolDescriptor(name=name, description=description, kind=kind), executor)

    return registry


def new_session(
    pixels: np.ndarray,
    geo: GeoPoint | None,
    dataset_kind: str,
    view_size: tuple[int, int] | None = None,
) -> ToolSession:
    """Start the per-conversation tool state for a test image."""
    if view_size is None:
        native = NATIVE_SIZE.get(dataset_kind, 640)
        view_size = (native, native)
    viewport = Viewport.at(geo.lat, geo.lon, geo.zoom) if geo is not None else None
    return ToolSession(image=pixels, viewport=viewport, view_size=view_size)
