"""Quasi-static parallel-jaw grasp episodes.

World frame: the table is the z = 0 plane with z up; objects rest on it.
The gripper closes along the y axis through the grasp location, so finger A
approaches from -y and finger B from +y. The tactile sensor rides on finger
A; its sensor frame has the gel plane through the contact point, x pointing
along -x_world and y along +z_world (gravity is image-down).

Slip is modeled with constant-acceleration kinematics once Coulomb /
soft-finger capacities are exceeded, which makes every outcome label
checkable against closed form.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .contact import (
    ContactParams,
    ContactSolution,
    ContactState,
    contact_area,
    contact_map,
    shear_from_force,
    solve_indentation,
    volume_from_force,
)
from .errors import NoGraspContact
from .geometry import DepthCamera, Pose, TriangleMesh, raycast
from .optics import LookupTable, MarkerField, TactileFrame, compose_frame, displace_markers, render_tactile

GRAVITY = 9.81  # m/s^2
DT = 1e-3       # s, slip integration step

SUCCESS = "Success"
TRANSLATIONAL_SLIP = "TranslationalSlip"
ROTATIONAL_SLIP = "RotationalSlip"


@dataclass(frozen=True)
class ObjectModel:
    """Rigid object resting on the table: mesh in world frame, mass in kg."""

    mesh: TriangleMesh
    mass: float
    center_of_mass: tuple[float, float, float]  # mm, mesh frame
    mu: float
    name: str = "object"

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not 0.0 <= self.mu <= 2.0:
            raise ValueError("friction coefficient must be in [0, 2]")
        lo, hi = self.mesh.bounds()
        com = np.asarray(self.center_of_mass, dtype=np.float64)
        if (com < lo - 1e-9).any() or (com > hi + 1e-9).any():
            raise ValueError("center of mass lies outside the mesh bounding box")


@dataclass(frozen=True)
class GraspConfig:
    """Grasp descriptor (F, X, Y, Z): force in N, location/height in mm."""

    force: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.force <= 0:
            raise ValueError("grasp force must be positive")


@dataclass(frozen=True)
class GraspThresholds:
    lift_height: float = 180.0     # mm
    trans_fail: float = 150.0      # mm of object translation = failure
    rot_fail: float = 0.1          # rad of object rotation = failure
    record_duration: float = 3.0   # s of tactile recording after close
    frame_rate: float = 10.0       # Hz
    lift_speed: float = 100.0      # mm/s

    def __post_init__(self):
        for name in ("lift_height", "trans_fail", "rot_fail", "record_duration",
                     "frame_rate", "lift_speed"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def lift_duration(self) -> float:
        return self.lift_height / self.lift_speed


@dataclass(frozen=True)
class GraspOutcome:
    label: str
    final_translation: float  # mm
    final_rotation: float     # rad
    fail_time: float | None   # s, first threshold crossing

    def __post_init__(self):
        if self.label not in (SUCCESS, TRANSLATIONAL_SLIP, ROTATIONAL_SLIP):
            raise ValueError(f"unknown label {self.label!r}")


@dataclass(frozen=True)
class ContactRecord:
    """One finger contact: point and closing-direction normal in world mm."""

    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    solution: ContactSolution | None = None


@dataclass
class SlipTrajectory:
    """Object translation/rotation relative to the gripper over time."""

    times: np.ndarray        # s
    translation: np.ndarray  # mm
    rotation: np.ndarray     # rad
    trans_fail_time: float | None
    rot_fail_time: float | None

    def at(self, t: float) -> tuple[float, float]:
        i = min(int(round(t / DT)), len(self.times) - 1)
        return float(self.translation[i]), float(self.rotation[i])


@dataclass
class GraspEpisode:
    config: GraspConfig
    contacts: tuple[ContactRecord, ContactRecord]
    frames: list[TactileFrame]
    outcome: GraspOutcome
    trajectory: SlipTrajectory | None = None
    object_name: str = "object"


def plan_grasp(obj: ObjectModel, config: GraspConfig) -> tuple[ContactRecord, ContactRecord]:
    """Find the two antipodal finger contacts along the closing axis.

    Opposing rays are cast along +-y through (X, *, Z); the nearest hits are
    the contact points and the grip width is their separation.
    """
    lo, hi = obj.mesh.bounds()
    margin = 10.0
    start_a = np.array([config.x, lo[1] - margin, config.z])
    start_b = np.array([config.x, hi[1] + margin, config.z])
    dirs = np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]])
    t = raycast(obj.mesh, Pose.identity(), np.stack([start_a, start_b]), dirs)
    if not np.isfinite(t).all():
        missed = "A" if not np.isfinite(t[0]) else "B"
        raise NoGraspContact(
            f"finger {missed} closing ray misses {obj.name} at x={config.x}, z={config.z}")
    point_a = start_a + t[0] * dirs[0]
    point_b = start_b + t[1] * dirs[1]
    return (
        ContactRecord(tuple(point_a), (0.0, 1.0, 0.0)),
        ContactRecord(tuple(point_b), (0.0, -1.0, 0.0)),
    )


def contact_forces(obj: ObjectModel, config: GraspConfig,
                   phase: str) -> tuple[ContactState, ContactState]:
    """Per-finger contact forces for the given phase.

    While grasped on the table the fingers only squeeze. During lifting each
    finger carries half the object weight as shear while sticking, capped at
    the Coulomb limit mu * F_n once slipping.
    """
    if phase not in ("grasped", "lifting"):
        raise ValueError(f"unknown phase {phase!r}")
    normal = config.force
    if phase == "grasped":
        state = ContactState(normal, 0.0)
        return state, state
    demanded = obj.mass * GRAVITY / 2.0
    capacity = obj.mu * normal
    slipping = demanded > capacity
    state = ContactState(normal, min(demanded, capacity), (0.0, -1.0), slipping=slipping)
    return state, state


def slip_dynamics(obj: ObjectModel, config: GraspConfig, thresholds: GraspThresholds,
                  contact_areas: tuple[float, float]) -> SlipTrajectory:
    """Integrate relative object motion during lift and hold (dt = 1 ms).

    Translational channel: once weight exceeds the total friction capacity
    2 mu F, the object accelerates down at g - 2 mu F / m. Rotational
    channel: gravity torque m g r_perp against the soft-finger torsional
    capacity (2/3) mu F r_eq per finger, with inertia m (r_perp^2 + r_g^2).
    Accumulation stops once both thresholds are crossed.
    """
    mass = obj.mass
    weight = mass * GRAVITY                      # N
    capacity = 2.0 * obj.mu * config.force       # N
    accel_t = max(0.0, GRAVITY - capacity / mass) if weight > capacity else 0.0  # m/s^2

    r_perp = abs(obj.center_of_mass[0] - config.x) / 1000.0   # m
    torque_g = mass * GRAVITY * r_perp                         # N m
    r_eq = sum(np.sqrt(max(a, 0.0) / np.pi) for a in contact_areas) / 1000.0  # m, both fingers
    torque_max = (2.0 / 3.0) * obj.mu * config.force * r_eq    # N m
    lo, hi = obj.mesh.bounds()
    extent = (hi - lo) / 1000.0
    r_gyr_sq = (extent[0] ** 2 + extent[2] ** 2) / 12.0        # about the grasp axis
    inertia = mass * (r_perp ** 2 + r_gyr_sq)                  # kg m^2
    accel_r = (torque_g - torque_max) / inertia if torque_g > torque_max else 0.0

    n_steps = int(round(thresholds.record_duration / DT))
    times = np.arange(n_steps + 1) * DT
    translation = np.zeros(n_steps + 1)
    rotation = np.zeros(n_steps + 1)
    s = v = theta = omega = 0.0
    trans_fail_time = rot_fail_time = None
    for i in range(1, n_steps + 1):
        if trans_fail_time is not None and rot_fail_time is not None:
            translation[i:] = translation[i - 1]
            rotation[i:] = rotation[i - 1]
            break
        s_prev, v_prev = s, v
        theta_prev, omega_prev = theta, omega
        s += v * DT + 0.5 * accel_t * DT * DT  # exact for constant acceleration
        v += accel_t * DT
        theta += omega * DT + 0.5 * accel_r * DT * DT
        omega += accel_r * DT
        translation[i] = s * 1000.0  # m -> mm
        rotation[i] = theta
        if trans_fail_time is None and translation[i] >= thresholds.trans_fail:
            tau = _crossing_time(s_prev, v_prev, accel_t, thresholds.trans_fail / 1000.0)
            trans_fail_time = times[i - 1] + tau
        if rot_fail_time is None and rotation[i] >= thresholds.rot_fail:
            tau = _crossing_time(theta_prev, omega_prev, accel_r, thresholds.rot_fail)
            rot_fail_time = times[i - 1] + tau
    return SlipTrajectory(times, translation, rotation, trans_fail_time, rot_fail_time)


def _crossing_time(x0: float, v0: float, accel: float, threshold: float) -> float:
    """Exact within-step time where x0 + v0 t + a t^2 / 2 reaches the threshold."""
    gap = threshold - x0
    if gap <= 0:
        return 0.0
    if accel <= 0:
        return gap / v0 if v0 > 0 else DT
    return (-v0 + np.sqrt(v0 * v0 + 2.0 * accel * gap)) / accel


def label_outcome(trajectory: SlipTrajectory, thresholds: GraspThresholds) -> GraspOutcome:
    """First threshold crossing wins; simultaneous crossings count as translational."""
    final_t = float(trajectory.translation[-1])
    final_r = float(trajectory.rotation[-1])
    t_t, t_r = trajectory.trans_fail_time, trajectory.rot_fail_time
    if t_t is None and t_r is None:
        return GraspOutcome(SUCCESS, final_t, final_r, None)
    if t_r is None or (t_t is not None and t_t <= t_r):
        return GraspOutcome(TRANSLATIONAL_SLIP, final_t, final_r, t_t)
    return GraspOutcome(ROTATIONAL_SLIP, final_t, final_r, t_r)


# ---------------------------------------------------------------------------
# sensor frames


def _sensor_pose(contact: ContactRecord, finger_a: bool) -> Pose:
    """World -> sensor frame for a finger: gel plane through the contact point."""
    if finger_a:  # view +y, right -x, up +z
        rot = np.array([[-1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    else:         # view -y, right +x, up +z
        rot = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
    point = np.asarray(contact.point)
    return Pose(rot, -rot @ point)


def run_episode(obj: ObjectModel, config: GraspConfig, params: ContactParams,
                table: LookupTable | None, thresholds: GraspThresholds,
                camera: DepthCamera | None = None,
                record_frames: bool = True) -> GraspEpisode:
    """Simulate one grasp: plan, press, lift, record tactile frames, label.

    With ``record_frames`` off only the contact geometry and the outcome are
    computed (used for calibration grids).
    """
    if record_frames and table is None:
        raise ValueError("a lookup table is required to record tactile frames")
    if camera is None:
        if table is not None:
            h, w, _ = table.background.shape
            camera = DepthCamera(width=w, height=h, pixel_pitch=table.pixel_pitch)
        else:
            camera = DepthCamera.gelsight()

    rec_a, rec_b = plan_grasp(obj, config)
    target = volume_from_force(config.force, params)
    solutions = []
    for rec, is_a in ((rec_a, True), (rec_b, False)):
        pose = _sensor_pose(rec, is_a)
        solutions.append(solve_indentation(obj.mesh, pose, camera, target, params))
    rec_a = replace(rec_a, solution=solutions[0])
    rec_b = replace(rec_b, solution=solutions[1])

    areas = tuple(contact_area(s.contact_map) for s in solutions)
    trajectory = slip_dynamics(obj, config, thresholds, areas)
    outcome = label_outcome(trajectory, thresholds)

    frames: list[TactileFrame] = []
    if record_frames:
        frames = _render_frames(obj, config, params, table, thresholds, camera,
                                rec_a, trajectory)
    return GraspEpisode(config, (rec_a, rec_b), frames, outcome, trajectory,
                        obj.name)


def _render_frames(obj, config, params, table, thresholds, camera, rec_a,
                   trajectory) -> list[TactileFrame]:
    """Tactile frames from finger A's sensor, reflecting shear and slip."""
    solution = rec_a.solution
    markers_rest = MarkerField.grid(camera.width, camera.height)
    # rotation sign: gravity torque about +y_world; finger A's view axis is +y
    rot_sign = 1.0 if obj.center_of_mass[0] >= config.x else -1.0
    lo, hi = obj.mesh.bounds()
    slip_cap = float(np.linalg.norm(hi - lo)) + \
        (camera.width + camera.height) * camera.pixel_pitch

    n_frames = int(round(thresholds.record_duration * thresholds.frame_rate))
    frames = []
    for k in range(n_frames):
        t = k / thresholds.frame_rate
        phase = "grasped" if k == 0 else "lifting"
        state_a, _ = contact_forces(obj, config, phase)
        shear, saturated = shear_from_force(state_a.shear_force, params)
        slip_t, slip_r = trajectory.at(t)
        offset = shear + min(slip_t, slip_cap)  # both drag the image downward
        pose = Pose.from_axis_angle((0.0, 0.0, 1.0), rot_sign * slip_r).compose(
            solution.touch_pose)
        hmap = contact_map(obj.mesh, pose, camera, solution.indentation_depth,
                           offset, (0.0, -1.0), params)
        rgb = render_tactile(hmap, table)
        markers = displace_markers(markers_rest, shear, (0.0, -1.0), hmap)
        frames.append(compose_frame(rgb, markers, t))
    return frames


# ---------------------------------------------------------------------------
# episode serialization


def save_episode(episode: GraspEpisode, directory: str | Path) -> dict:
    """Write frames/NNNN.png, markers.csv, and episode.json; returns the summary."""
    directory = Path(directory)
    frame_dir = directory / "frames"
    frame_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(episode.frames):
        Image.fromarray(frame.rgb).save(frame_dir / f"{i:04d}.png")

    with open(directory / "markers.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "marker_id", "x", "y"])
        for i, frame in enumerate(episode.frames):
            for m, (x, y) in enumerate(frame.marker_positions):
                writer.writerow([i, m, f"{x:.3f}", f"{y:.3f}"])

    summary = episode_summary(episode)
    with open(directory / "episode.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def episode_summary(episode: GraspEpisode) -> dict:
    def contact_dict(rec: ContactRecord) -> dict:
        d = {"point": list(rec.point), "normal": list(rec.normal)}
        if rec.solution is not None:
            d.update({
                "indentation_depth": rec.solution.indentation_depth,
                "achieved_volume": rec.solution.achieved_volume,
                "contact_area": contact_area(rec.solution.contact_map),
                "solver_iterations": rec.solution.iterations,
            })
        return d

    rec_a, rec_b = episode.contacts
    grip_width = float(np.linalg.norm(np.subtract(rec_b.point, rec_a.point)))
    return {
        "grip_width": grip_width,
        "object": episode.object_name,
        "config": {"force": episode.config.force, "x": episode.config.x,
                   "y": episode.config.y, "z": episode.config.z},
        "contacts": [contact_dict(r) for r in episode.contacts],
        "outcome": {
            "label": episode.outcome.label,
            "final_translation_mm": episode.outcome.final_translation,
            "final_rotation_rad": episode.outcome.final_rotation,
            "fail_time_s": episode.outcome.fail_time,
        },
        "frames": len(episode.frames),
        "timestamps": [f.timestamp for f in episode.frames],
    }
