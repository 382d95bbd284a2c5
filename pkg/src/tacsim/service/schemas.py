"""Request/response models for the simulation service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ObjectInfo(BaseModel):
    name: str
    mass: float
    mu: float
    center_of_mass: list[float]
    faces: int


class GraspConfigModel(BaseModel):
    force: float = Field(gt=0, description="grasp force per finger, N")
    x: float
    y: float
    z: float


class PressRequest(BaseModel):
    mesh: str | None = None          # mesh file path; or use a builtin object
    object: str | None = None
    force: float = Field(gt=0)
    knorm: float | None = Field(default=None, gt=0, description="k_n override, mm^3/N")
    scale: float = 1.0
    out_dir: str
    config: dict | None = None


class PressResponse(BaseModel):
    indentation_depth_mm: float
    achieved_volume_mm3: float
    target_volume_mm3: float
    contact_area_mm2: float
    iterations: int
    heightmap_png: str
    tactile_png: str


class GraspRequest(BaseModel):
    object: str | dict
    config: GraspConfigModel
    out_dir: str
    mu: float | None = None
    added_mass: float | None = None
    sim_config: dict | None = Field(default=None, alias="config")

    model_config = {"populate_by_name": True}


class GraspResponse(BaseModel):
    label: str
    final_translation_mm: float
    final_rotation_rad: float
    fail_time_s: float | None
    frames: int
    episode_dir: str


class SweepRequest(BaseModel):
    spec: dict
    out_dir: str
    object: str | dict | None = None   # overrides spec.object
    threads: int = 1
    record_frames: bool = True
    seed: int | None = None
    sim_config: dict | None = Field(default=None, alias="config")

    model_config = {"populate_by_name": True}


class SweepResponse(BaseModel):
    episodes: int
    train: int
    test: int
    class_counts: dict[str, int]
    balance_warning: bool
    config_hash: str
    manifest: str


class CalibrateContactRequest(BaseModel):
    presses: list[list[float]] | None = None  # [force, measurement] pairs
    presses_csv: str | None = None
    out_path: str | None = None


class CalibrateContactResponse(BaseModel):
    coefficient: float
    residual_rms: float
    r_squared: float
    linearity_warning: bool
    out_path: str | None


class CalibrateFrictionRequest(BaseModel):
    object: str | dict
    reference_csv: str | None = None
    grid: dict | None = None  # {"heights": [...], "forces": [...], "labels": [[...]]}
    out_path: str | None = None
    sim_config: dict | None = Field(default=None, alias="config")

    model_config = {"populate_by_name": True}


class CalibrateFrictionResponse(BaseModel):
    best_mu: float
    candidates: list[float]
    mismatch_counts: list[int]
    unreachable_cells: list[list[float]]
    out_path: str | None


class AblateRequest(BaseModel):
    kind: str
    values: list[float]
    spec: dict
    out_dir: str
    object: str | dict | None = None
    threads: int = 1
    record_frames: bool = True
    sim_config: dict | None = Field(default=None, alias="config")

    model_config = {"populate_by_name": True}


class AblateResponse(BaseModel):
    kind: str
    object: str
    rows: list[dict]
    report: str


class RenderRequest(BaseModel):
    heightmap_png: str
    table_path: str | None = None  # default: the service's calibrated table
    out_png: str
    sim_config: dict | None = Field(default=None, alias="config")

    model_config = {"populate_by_name": True}


class RenderResponse(BaseModel):
    out_png: str


class ExportTableRequest(BaseModel):
    out_path: str
    sim_config: dict | None = Field(default=None, alias="config")

    model_config = {"populate_by_name": True}


class SimulateGridRequest(BaseModel):
    object: str | dict
    heights: list[float]
    forces: list[float]
    mu: float
    out_path: str | None = None
    sim_config: dict | None = Field(default=None, alias="config")

    model_config = {"populate_by_name": True}


class ErrorBody(BaseModel):
    error: str
    message: str
