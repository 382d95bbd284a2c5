"""Framework configuration: sensor, contact parameters, grasp thresholds.

One JSON document configures a run:

    {
      "sensor": {"width": 320, "height": 240, "pixel_pitch": 0.06, "sigma": 2.0},
      "contact": {"k_n": 40.0, "k_s": 0.2, "collision_margin": 0.0,
                  "gel_thickness": 4.0, "max_shear": 2.0},
      "thresholds": {"lift_height": 180.0, "trans_fail": 150.0, "rot_fail": 0.1,
                     "record_duration": 3.0, "frame_rate": 10.0, "lift_speed": 100.0}
    }

Missing sections fall back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .contact import ContactParams
from .geometry import DepthCamera
from .grasp import GraspThresholds


@dataclass(frozen=True)
class SensorSpec:
    width: int = 320
    height: int = 240
    pixel_pitch: float = 0.06
    sigma: float = 2.0  # px of gel smoothing during shading

    def camera(self) -> DepthCamera:
        return DepthCamera(width=self.width, height=self.height,
                           pixel_pitch=self.pixel_pitch)


@dataclass(frozen=True)
class SimConfig:
    sensor: SensorSpec = field(default_factory=SensorSpec)
    contact: ContactParams = field(default_factory=ContactParams)
    thresholds: GraspThresholds = field(default_factory=GraspThresholds)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        return cls(
            sensor=SensorSpec(**data.get("sensor", {})),
            contact=ContactParams(**data.get("contact", {})),
            thresholds=GraspThresholds(**data.get("thresholds", {})),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
