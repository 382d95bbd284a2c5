"""FastAPI service exposing the simulation pipeline.

The service owns the expensive, reusable state (calibrated lookup tables per
sensor geometry); request handlers write artifacts to server-side paths and
return JSON summaries. The CLI is a thin client of these endpoints.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..calibration import (
    OutcomeGrid,
    PressSample,
    fit_contact_coefficients,
    load_outcome_grid,
    load_press_samples,
    optimize_friction,
    r_squared_through_origin,
    save_friction_result,
    save_outcome_grid,
)
from ..config import SimConfig
from ..contact import contact_area, solve_indentation, volume_from_force
from ..dataset import ablation_sweep, builtin_objects, resolve_object, run_sweep, SweepSpec
from ..errors import TacsimError
from ..geometry import Pose, load_heightmap_png, load_mesh, save_heightmap_png
from ..grasp import GraspConfig, run_episode, save_episode
from ..optics import calibrate_lookup, load_lookup, make_calibration_pairs, render_tactile, save_lookup
from . import schemas
from PIL import Image
import dataclasses
import warnings


def create_app() -> FastAPI:
    app = FastAPI(title="tacsim", version=__version__)
    app.state.tables = {}  # (width, height, pitch, sigma) -> LookupTable

    def sim_config(data: dict | None) -> SimConfig:
        return SimConfig.from_dict(data) if data else SimConfig()

    def default_table(cfg: SimConfig):
        key = (cfg.sensor.width, cfg.sensor.height, cfg.sensor.pixel_pitch,
               cfg.sensor.sigma)
        if key not in app.state.tables:
            pairs = make_calibration_pairs(cfg.sensor.height, cfg.sensor.width,
                                           cfg.sensor.pixel_pitch,
                                           sigma=cfg.sensor.sigma)
            app.state.tables[key] = calibrate_lookup(pairs, sigma=cfg.sensor.sigma)
        return app.state.tables[key]

    @app.exception_handler(TacsimError)
    async def tacsim_error(_request: Request, exc: TacsimError):
        body = schemas.ErrorBody(error=type(exc).__name__, message=str(exc))
        return JSONResponse(status_code=422, content=body.model_dump())

    @app.exception_handler(FileNotFoundError)
    async def missing_file(_request: Request, exc: FileNotFoundError):
        body = schemas.ErrorBody(error="FileNotFoundError", message=str(exc))
        return JSONResponse(status_code=404, content=body.model_dump())

    @app.exception_handler(ValueError)
    async def bad_value(_request: Request, exc: ValueError):
        body = schemas.ErrorBody(error="ValueError", message=str(exc))
        return JSONResponse(status_code=422, content=body.model_dump())

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/objects", response_model=list[schemas.ObjectInfo])
    def objects():
        return [
            schemas.ObjectInfo(name=name, mass=obj.mass, mu=obj.mu,
                               center_of_mass=list(obj.center_of_mass),
                               faces=len(obj.mesh.faces))
            for name, obj in sorted(builtin_objects().items())
        ]

    @app.post("/press", response_model=schemas.PressResponse)
    def press(req: schemas.PressRequest):
        cfg = sim_config(req.config)
        params = cfg.contact
        if req.knorm is not None:
            params = dataclasses.replace(params, k_n=req.knorm)
        if req.mesh is not None:
            mesh = load_mesh(req.mesh, scale=req.scale)
        elif req.object is not None:
            mesh = resolve_object(req.object).mesh
        else:
            raise TacsimError("press needs either a mesh path or a builtin object name")
        camera = cfg.sensor.camera()
        # center the mesh over the sensor, resting above the gel plane
        lo, hi = mesh.bounds()
        pose = Pose.from_translation((-(lo[0] + hi[0]) / 2.0,
                                      -(lo[1] + hi[1]) / 2.0,
                                      -lo[2] + 1.0))
        target = volume_from_force(req.force, params)
        solution = solve_indentation(mesh, pose, camera, target, params)
        table = default_table(cfg)
        rgb = render_tactile(solution.contact_map, table)

        out = Path(req.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        heightmap_png = out / "contact_map.png"
        tactile_png = out / "tactile.png"
        save_heightmap_png(solution.contact_map, heightmap_png)
        Image.fromarray(rgb).save(tactile_png)
        return schemas.PressResponse(
            indentation_depth_mm=solution.indentation_depth,
            achieved_volume_mm3=solution.achieved_volume,
            target_volume_mm3=target,
            contact_area_mm2=contact_area(solution.contact_map),
            iterations=solution.iterations,
            heightmap_png=str(heightmap_png),
            tactile_png=str(tactile_png),
        )

    @app.post("/grasp", response_model=schemas.GraspResponse)
    def grasp(req: schemas.GraspRequest):
        cfg = sim_config(req.sim_config)
        obj = resolve_object(req.object, mu=req.mu)
        if req.added_mass:
            obj = dataclasses.replace(obj, mass=obj.mass + req.added_mass)
        config = GraspConfig(req.config.force, req.config.x, req.config.y, req.config.z)
        table = default_table(cfg)
        episode = run_episode(obj, config, cfg.contact, table, cfg.thresholds,
                              camera=cfg.sensor.camera())
        out = Path(req.out_dir)
        save_episode(episode, out)
        return schemas.GraspResponse(
            label=episode.outcome.label,
            final_translation_mm=episode.outcome.final_translation,
            final_rotation_rad=episode.outcome.final_rotation,
            fail_time_s=episode.outcome.fail_time,
            frames=len(episode.frames),
            episode_dir=str(out),
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        cfg = sim_config(req.sim_config)
        spec = SweepSpec.from_dict(req.spec)
        if req.seed is not None:
            spec = dataclasses.replace(spec, seed=req.seed)
        obj = resolve_object(req.object if req.object is not None else spec.object_name)
        table = default_table(cfg) if req.record_frames else None
        manifest = run_sweep(spec, obj, cfg.contact, table, cfg.thresholds,
                             req.out_dir, camera=cfg.sensor.camera(),
                             threads=req.threads, record_frames=req.record_frames)
        return schemas.SweepResponse(
            episodes=len(manifest.entries),
            train=len(manifest.split_entries("train")),
            test=len(manifest.split_entries("test")),
            class_counts=manifest.class_counts,
            balance_warning=manifest.balance_warning,
            config_hash=manifest.config_hash,
            manifest=str(Path(req.out_dir) / "manifest.jsonl"),
        )

    @app.post("/calibrate-contact", response_model=schemas.CalibrateContactResponse)
    def calibrate_contact(req: schemas.CalibrateContactRequest):
        if req.presses is not None:
            samples = [PressSample(f, v) for f, v in req.presses]
        elif req.presses_csv is not None:
            samples = load_press_samples(req.presses_csv)
        else:
            raise TacsimError("provide press samples inline or as a CSV path")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            coefficient, residual = fit_contact_coefficients(samples)
        r2 = r_squared_through_origin(samples, coefficient)
        payload = {
            "coefficient": coefficient,
            "residual_rms": residual,
            "r_squared": r2,
            "linearity_warning": len(caught) > 0,
        }
        if req.out_path:
            Path(req.out_path).parent.mkdir(parents=True, exist_ok=True)
            with open(req.out_path, "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
        return schemas.CalibrateContactResponse(out_path=req.out_path, **payload)

    @app.post("/calibrate-friction", response_model=schemas.CalibrateFrictionResponse)
    def calibrate_friction(req: schemas.CalibrateFrictionRequest):
        cfg = sim_config(req.sim_config)
        obj = resolve_object(req.object)
        if req.reference_csv is not None:
            reference = load_outcome_grid(req.reference_csv, object_id=obj.name)
        elif req.grid is not None:
            reference = OutcomeGrid(
                tuple(req.grid["heights"]), tuple(req.grid["forces"]),
                tuple(tuple(row) for row in req.grid["labels"]), obj.name)
        else:
            raise TacsimError("provide a reference grid CSV path or an inline grid")
        result = optimize_friction(reference, obj, cfg.contact, cfg.thresholds,
                                   cfg.sensor.camera())
        if req.out_path:
            Path(req.out_path).parent.mkdir(parents=True, exist_ok=True)
            save_friction_result(result, req.out_path)
        return schemas.CalibrateFrictionResponse(
            best_mu=result.best_mu,
            candidates=list(result.candidates),
            mismatch_counts=list(result.mismatch_counts),
            unreachable_cells=[list(c) for c in result.unreachable_cells],
            out_path=req.out_path,
        )

    @app.post("/ablate", response_model=schemas.AblateResponse)
    def ablate(req: schemas.AblateRequest):
        cfg = sim_config(req.sim_config)
        spec = SweepSpec.from_dict(req.spec)
        obj = resolve_object(req.object if req.object is not None else spec.object_name)
        table = default_table(cfg) if req.record_frames else None
        report = ablation_sweep(req.kind, req.values, spec, obj, cfg.contact, table,
                                cfg.thresholds, req.out_dir,
                                camera=cfg.sensor.camera(), threads=req.threads,
                                record_frames=req.record_frames)
        return schemas.AblateResponse(
            kind=report["kind"], object=report["object"], rows=report["rows"],
            report=str(Path(req.out_dir) / f"ablation_{req.kind}.json"),
        )

    @app.post("/render", response_model=schemas.RenderResponse)
    def render(req: schemas.RenderRequest):
        cfg = sim_config(req.sim_config)
        if req.table_path:
            table = load_lookup(req.table_path)
        else:
            table = default_table(cfg)
        hmap = load_heightmap_png(req.heightmap_png, fallback_pitch=table.pixel_pitch)
        rgb = render_tactile(hmap, table)
        Path(req.out_png).parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(rgb).save(req.out_png)
        return schemas.RenderResponse(out_png=req.out_png)

    @app.post("/export-table")
    def export_table(req: schemas.ExportTableRequest):
        cfg = sim_config(req.sim_config)
        table = default_table(cfg)
        Path(req.out_path).parent.mkdir(parents=True, exist_ok=True)
        save_lookup(table, req.out_path)
        return {"out_path": req.out_path,
                "residual_rms": [float(r) for r in table.residual_rms]}

    @app.post("/simulate-grid")
    def simulate_grid(req: schemas.SimulateGridRequest):
        from ..calibration import simulate_outcome_grid
        cfg = sim_config(req.sim_config)
        obj = resolve_object(req.object)
        grid = simulate_outcome_grid(obj, req.heights, req.forces, req.mu,
                                     cfg.contact, cfg.thresholds, cfg.sensor.camera())
        if req.out_path:
            Path(req.out_path).parent.mkdir(parents=True, exist_ok=True)
            save_outcome_grid(grid, req.out_path)
        return {"heights": list(grid.heights), "forces": list(grid.forces),
                "labels": [list(r) for r in grid.labels], "out_path": req.out_path}

    return app


app = create_app()
