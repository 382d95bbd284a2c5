"""Physical-parameter calibration.

Two calibration paths: fitting the linear contact coefficients from press
measurements, and recovering the friction coefficient by matching grasp
outcome grids against a reference (real robot data, or self-generated grids
for sim-to-sim checks).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .contact import ContactParams, contact_area, solve_indentation, volume_from_force
from .errors import NoGraspContact, TacsimError, VolumeUnreachable
from .geometry import DepthCamera
from .grasp import (
    SUCCESS,
    GraspConfig,
    GraspThresholds,
    ObjectModel,
    _sensor_pose,
    label_outcome,
    plan_grasp,
    slip_dynamics,
)

FRICTION_STEP = 0.05  # candidate grid [0, 1] in steps of 0.05: 21 candidates
R2_WARN_LIMIT = 0.98


@dataclass(frozen=True)
class PressSample:
    """One press measurement: applied force and the measured response."""

    force: float        # N
    measurement: float  # mm^3 indentation volume, or mm of summed marker motion

    def __post_init__(self):
        if self.force < 0 or self.measurement < 0:
            raise ValueError("press samples must be non-negative")


@dataclass(frozen=True)
class OutcomeGrid:
    """Grasp outcome labels over grasp heights x forces."""

    heights: tuple[float, ...]
    forces: tuple[float, ...]
    labels: tuple[tuple[str, ...], ...]  # labels[i][j] for heights[i], forces[j]
    object_id: str = "object"
    unreachable: frozenset = frozenset()  # (i, j) cells the simulation cannot grasp

    def __post_init__(self):
        if len(self.labels) != len(self.heights) or any(
                len(row) != len(self.forces) for row in self.labels):
            raise ValueError("label grid shape does not match the axes")
        for row in self.labels:
            for cell in row:
                if cell not in ("S", "F"):
                    raise ValueError(f"grid cells must be 'S' or 'F', got {cell!r}")

    def mismatches(self, other: "OutcomeGrid") -> int:
        if self.heights != other.heights or self.forces != other.forces:
            raise ValueError("outcome grids have different axes")
        count = 0
        for i in range(len(self.heights)):
            for j in range(len(self.forces)):
                flagged = (i, j) in self.unreachable or (i, j) in other.unreachable
                if flagged or self.labels[i][j] != other.labels[i][j]:
                    count += 1
        return count


@dataclass(frozen=True)
class FrictionSearchResult:
    best_mu: float
    candidates: tuple[float, ...]
    mismatch_counts: tuple[int, ...]
    unreachable_cells: tuple[tuple[float, float], ...] = ()  # (height, force)

    def __post_init__(self):
        best_count = self.mismatch_counts[self.candidates.index(self.best_mu)]
        if best_count != min(self.mismatch_counts):
            raise ValueError("best_mu does not attain the minimum mismatch count")


def fit_contact_coefficients(samples: list[PressSample]) -> tuple[float, float]:
    """Least-squares slope through the origin and residual RMS.

    Warns when R^2 < 0.98, i.e. when the linear-response assumption looks
    violated by the measurements.
    """
    if len(samples) < 3:
        raise ValueError("need at least 3 press samples")
    force = np.array([s.force for s in samples])
    meas = np.array([s.measurement for s in samples])
    denom = float(force @ force)
    if denom == 0.0:
        raise ValueError("degenerate samples: all forces are zero")
    coefficient = float(force @ meas) / denom
    residuals = meas - coefficient * force
    residual_rms = float(np.sqrt(np.mean(residuals ** 2)))
    ss_tot = float(((meas - meas.mean()) ** 2).sum())
    r2 = 1.0 - float((residuals ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    if r2 < R2_WARN_LIMIT:
        warnings.warn(
            f"press data deviates from a line through the origin (R^2 = {r2:.4f}); "
            f"the linear contact model may not hold", stacklevel=2)
    return coefficient, residual_rms


def r_squared_through_origin(samples: list[PressSample], coefficient: float) -> float:
    force = np.array([s.force for s in samples])
    meas = np.array([s.measurement for s in samples])
    residuals = meas - coefficient * force
    ss_tot = float(((meas - meas.mean()) ** 2).sum())
    return 1.0 - float((residuals ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0


# ---------------------------------------------------------------------------
# outcome grids


class _GridEvaluator:
    """Caches per-cell contact geometry, which is independent of friction."""

    def __init__(self, obj: ObjectModel, heights, forces, params: ContactParams,
                 thresholds: GraspThresholds, camera: DepthCamera, x: float | None):
        self.obj = obj
        self.heights = tuple(float(h) for h in heights)
        self.forces = tuple(float(f) for f in forces)
        self.params = params
        self.thresholds = thresholds
        self.camera = camera
        lo, hi = obj.mesh.bounds()
        self.x = float(x) if x is not None else float((lo[0] + hi[0]) / 2.0)
        self._areas: dict[tuple[float, float], tuple[float, float] | None] = {}

    def _cell_areas(self, height: float, force: float):
        key = (height, force)
        if key not in self._areas:
            config = GraspConfig(force, self.x, 0.0, height)
            try:
                rec_a, rec_b = plan_grasp(self.obj, config)
                target = volume_from_force(force, self.params)
                areas = []
                for rec, is_a in ((rec_a, True), (rec_b, False)):
                    sol = solve_indentation(self.obj.mesh, _sensor_pose(rec, is_a),
                                            self.camera, target, self.params)
                    areas.append(contact_area(sol.contact_map))
                self._areas[key] = tuple(areas)
            except (NoGraspContact, VolumeUnreachable):
                self._areas[key] = None
        return self._areas[key]

    def grid(self, mu: float) -> OutcomeGrid:
        obj = replace(self.obj, mu=float(mu))
        labels = []
        unreachable = set()
        for i, height in enumerate(self.heights):
            row = []
            for j, force in enumerate(self.forces):
                areas = self._cell_areas(height, force)
                if areas is None:
                    unreachable.add((i, j))
                    row.append("F")
                    continue
                config = GraspConfig(force, self.x, 0.0, height)
                trajectory = slip_dynamics(obj, config, self.thresholds, areas)
                outcome = label_outcome(trajectory, self.thresholds)
                row.append("S" if outcome.label == SUCCESS else "F")
            labels.append(tuple(row))
        return OutcomeGrid(self.heights, self.forces, tuple(labels), self.obj.name,
                           frozenset(unreachable))


def simulate_outcome_grid(obj: ObjectModel, heights, forces, mu: float,
                          params: ContactParams | None = None,
                          thresholds: GraspThresholds | None = None,
                          camera: DepthCamera | None = None,
                          x: float | None = None) -> OutcomeGrid:
    """Label every (height, force) cell with the candidate friction.

    Tactile rendering is skipped; only contact geometry and slip dynamics
    run. Cells where the grasp cannot even be planned are Failure and
    flagged as unreachable.
    """
    evaluator = _GridEvaluator(obj, heights, forces, params or ContactParams(),
                               thresholds or GraspThresholds(),
                               camera or DepthCamera.gelsight(), x)
    return evaluator.grid(mu)


def friction_candidates() -> tuple[float, ...]:
    return tuple(round(k * FRICTION_STEP, 2) for k in range(21))


def optimize_friction(reference: OutcomeGrid, obj: ObjectModel,
                      params: ContactParams | None = None,
                      thresholds: GraspThresholds | None = None,
                      camera: DepthCamera | None = None,
                      x: float | None = None) -> FrictionSearchResult:
    """Exhaustive friction search over [0, 1] in steps of 0.05.

    Simulates the reference grid's (height, force) axes at each candidate
    and counts label mismatches; unreachable cells always count. Ties break
    toward the smallest candidate (conservative: predicts failure more
    often).
    """
    evaluator = _GridEvaluator(obj, reference.heights, reference.forces,
                               params or ContactParams(),
                               thresholds or GraspThresholds(),
                               camera or DepthCamera.gelsight(), x)
    candidates = friction_candidates()
    counts = []
    unreachable: set[tuple[float, float]] = set()
    for mu in candidates:
        grid = evaluator.grid(mu)
        counts.append(grid.mismatches(reference))
        for i, j in grid.unreachable:
            unreachable.add((grid.heights[i], grid.forces[j]))
    best = candidates[int(np.argmin(counts))]
    return FrictionSearchResult(best, candidates, tuple(counts),
                                tuple(sorted(unreachable)))


def mismatch_curve_is_quasiconvex(result: FrictionSearchResult) -> bool:
    """True when mismatches fall (weakly) to the minimum and then rise."""
    counts = result.mismatch_counts
    lowest = min(counts)
    first_min = counts.index(lowest)
    last_min = len(counts) - 1 - counts[::-1].index(lowest)
    descending = all(counts[i] >= counts[i + 1] for i in range(first_min))
    ascending = all(counts[i] <= counts[i + 1] for i in range(last_min, len(counts) - 1))
    flat_min = all(c == lowest for c in counts[first_min:last_min + 1])
    return descending and ascending and flat_min


# ---------------------------------------------------------------------------
# file formats


def save_outcome_grid(grid: OutcomeGrid, path: str | Path) -> None:
    """CSV: header row of forces, first column of heights, cells S/F."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["height_mm"] + [repr(f) for f in grid.forces])
        for height, row in zip(grid.heights, grid.labels):
            writer.writerow([repr(height)] + list(row))


def load_outcome_grid(path: str | Path, object_id: str = "object") -> OutcomeGrid:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise ValueError(f"{path}: outcome grid needs a header and at least one row")
    forces = tuple(float(v) for v in rows[0][1:])
    heights = []
    labels = []
    for row in rows[1:]:
        heights.append(float(row[0]))
        cells = tuple(c.strip() for c in row[1:])
        if len(cells) != len(forces):
            raise ValueError(f"{path}: row for height {row[0]} has {len(cells)} cells, "
                             f"expected {len(forces)}")
        labels.append(cells)
    return OutcomeGrid(tuple(heights), forces, tuple(labels), object_id)


def save_friction_result(result: FrictionSearchResult, path: str | Path) -> None:
    payload = {
        "best_mu": result.best_mu,
        "candidates": list(result.candidates),
        "mismatch_counts": list(result.mismatch_counts),
        "unreachable_cells": [list(c) for c in result.unreachable_cells],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_press_samples(path: str | Path) -> list[PressSample]:
    """CSV with a force column and a measurement column (header optional)."""
    samples = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or len(row) < 2:
                continue
            try:
                samples.append(PressSample(float(row[0]), float(row[1])))
            except ValueError:
                continue  # header or comment row
    if not samples:
        raise TacsimError(f"{path}: no press samples found")
    return samples
