"""Model variant tags shared by the dataset and model layers."""

from __future__ import annotations

from enum import Enum


class Task(str, Enum):
    """Which ground-truth mask a network learns."""

    BOUNDARY = "boundary"
    AREA = "area"


class ModelVariant(str, Enum):
    SPATIAL = "spatial"
    SPATIAL_PRETRAINED = "spatial_pretrained"
    SPATIOTEMPORAL = "spatiotemporal"
    SPATIOTEMPORAL_PRETRAINED = "spatiotemporal_pretrained"

    @property
    def input_channels(self) -> int:
        """3 for single-image variants, 9 for three stacked RGB time slots."""
        return 3 if self in (ModelVariant.SPATIAL, ModelVariant.SPATIAL_PRETRAINED) else 9

    @property
    def pretrained(self) -> bool:
        return self in (ModelVariant.SPATIAL_PRETRAINED, ModelVariant.SPATIOTEMPORAL_PRETRAINED)

    @property
    def display_name(self) -> str:
        return {
            ModelVariant.SPATIAL: "Spatial U-Net",
            ModelVariant.SPATIAL_PRETRAINED: "U-Net (Pretrained on ImageNet)",
            ModelVariant.SPATIOTEMPORAL: "Spatio-temporal U-Net",
            ModelVariant.SPATIOTEMPORAL_PRETRAINED: "Spatio-temporal U-Net (Pretrained on ImageNet)",
        }[self]
