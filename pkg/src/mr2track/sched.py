"""Full-res / low-res interleaving and the average-MAC cost model."""

from __future__ import annotations

from dataclasses import dataclass

from .core import ResolutionTier, Tier


@dataclass(frozen=True)
class ModelPreset:
    name: str
    full: ResolutionTier
    low: ResolutionTier


def _preset(name: str, full_px: int, full_mmac: float, low_px: int, low_mmac: float) -> ModelPreset:
    return ModelPreset(
        name,
        ResolutionTier(Tier.FULL, full_px, full_px, full_mmac),
        ResolutionTier(Tier.LOW, low_px, low_px, low_mmac),
    )


MODEL_PRESETS: dict[str, ModelPreset] = {
    p.name: p
    for p in (
        _preset("yolox-nano", 320, 316.0, 192, 114.0),
        _preset("nanodet-plus", 320, 463.0, 192, 167.0),
        _preset("efficientdet-d0", 384, 1440.0, 256, 640.0),
    )
}


@dataclass(frozen=True)
class ScheduleConfig:
    """One full-res frame followed by ``p`` low-res frames, repeating."""

    p: int
    full: ResolutionTier
    low: ResolutionTier

    def __post_init__(self) -> None:
        if self.p < 0:
            raise ValueError("p must be non-negative")
        if self.full.width_px < self.low.width_px or self.full.height_px < self.low.height_px:
            raise ValueError("full-res tier must not be smaller than the low-res tier")

    @classmethod
    def from_preset(cls, model: str, p: int) -> ScheduleConfig:
        preset = MODEL_PRESETS[model]
        return cls(p, preset.full, preset.low)

    @property
    def rho(self) -> float:
        return 1.0 / (1 + self.p)

    def tier(self, kind: Tier) -> ResolutionTier:
        return self.full if kind is Tier.FULL else self.low


def tier_for_frame(cfg: ScheduleConfig, frame_index: int) -> ResolutionTier:
    return cfg.full if frame_index % (1 + cfg.p) == 0 else cfg.low


def avg_mac_per_frame(cfg: ScheduleConfig) -> float:
    # rho*full + (1-rho)*low, written with a single rounding step
    return (cfg.full.mac_cost + cfg.p * cfg.low.mac_cost) / (1 + cfg.p)


def mac_reduction(cfg: ScheduleConfig) -> float:
    """Fractional saving versus running every frame at full resolution."""
    return 1.0 - avg_mac_per_frame(cfg) / cfg.full.mac_cost
