"""Contact model: simulated contact forces to sensor-surface deformation.

The gel deformation is approximated by two linear maps measured on the
physical sensor rather than by soft-body simulation: normal force to
indentation volume (V = k_n * F_n) and shear force to tangential surface
displacement (D = k_s * F_s). The indentation depth realizing a target
volume has no closed form for general geometry, so it is recovered by
bisection on the object translation along the contact normal, which is
monotone in rendered volume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NoContact, VolumeUnreachable
from .geometry import DepthCamera, HeightMap, Pose, TriangleMesh, render_depth

VOLUME_EPS = 1e-6  # mm^3 floor for the relative-tolerance test at V_target ~ 0


@dataclass(frozen=True)
class ContactParams:
    """Linear deformation coefficients and gel geometry."""

    k_n: float = 40.0              # mm^3 indentation volume per N of normal force
    k_s: float = 0.2               # mm shear displacement per N of shear force
    collision_margin: float = 0.0  # mm separation an upstream engine reserves
    gel_thickness: float = 4.0     # mm, maximum indentation
    max_shear: float = 2.0         # mm, gel slips beyond this; linear model invalid

    def __post_init__(self):
        if self.k_n <= 0 or self.k_s <= 0:
            raise ValueError("k_n and k_s must be positive")
        if self.gel_thickness <= 0:
            raise ValueError("gel_thickness must be positive")
        if self.collision_margin < 0:
            raise ValueError("collision_margin must be non-negative")


@dataclass(frozen=True)
class ContactState:
    """Forces acting at one finger contact."""

    normal_force: float                      # N, >= 0
    shear_force: float = 0.0                 # N magnitude, >= 0
    shear_dir: tuple[float, float] = (0.0, -1.0)  # unit vector in the sensor plane
    pose: Pose | None = None                 # object pose relative to the sensor
    slipping: bool = False                   # shear force capped at the Coulomb limit

    def __post_init__(self):
        if self.normal_force < 0 or self.shear_force < 0:
            raise ValueError("forces must be non-negative")
        if self.shear_force > 0:
            norm = float(np.hypot(*self.shear_dir))
            if abs(norm - 1.0) > 1e-6:
                raise ValueError("shear_dir must be unit-norm when shear_force > 0")


@dataclass(frozen=True)
class ContactSolution:
    """Result of inverting a target volume to an indentation depth.

    ``touch_pose`` is normalized so that
    contact_map(mesh, touch_pose, camera, indentation_depth, ...) reproduces
    ``contact_map`` below; episode rendering reuses it for shear and slip.
    """

    indentation_depth: float   # mm of object travel past first touch
    shear_displacement: float  # mm
    contact_map: HeightMap
    achieved_volume: float     # mm^3, equals integrate_volume(contact_map)
    iterations: int
    shear_saturated: bool = False
    touch_pose: Pose | None = None


def volume_from_force(normal_force: float, params: ContactParams) -> float:
    """Indentation volume for a normal force: V = k_n * F_n."""
    if normal_force < 0:
        raise ValueError("normal force must be non-negative")
    return params.k_n * normal_force


def shear_from_force(shear_force: float, params: ContactParams) -> tuple[float, bool]:
    """Shear displacement D = k_s * F_s, capped at the gel's max shear.

    Returns (displacement, saturated).
    """
    if shear_force < 0:
        raise ValueError("shear force must be non-negative")
    d = params.k_s * shear_force
    if d > params.max_shear:
        return params.max_shear, True
    return d, False


def integrate_volume(hmap: HeightMap) -> float:
    """Indentation volume: sum of per-pixel depth times pixel area."""
    return float(hmap.depths.sum() * hmap.pixel_pitch ** 2)


def contact_area(hmap: HeightMap, threshold: float = 0.01) -> float:
    """Contact patch area: pixels deeper than ``threshold`` times pixel area."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    return float((hmap.depths > threshold).sum() * hmap.pixel_pitch ** 2)


def contact_map(mesh: TriangleMesh, pose: Pose, camera: DepthCamera,
                indentation_depth: float, shear_displacement: float = 0.0,
                shear_dir: Sequence[float] = (0.0, -1.0),
                params: ContactParams | None = None) -> HeightMap:
    """Render the contact map at a commanded indentation depth and shear.

    ``pose`` is the engine-reported touch pose; any collision margin the
    engine reserved is an extra separation, so the object is moved by
    indentation_depth + collision_margin along the contact normal (removing
    the margin offset) and by the shear displacement in the sensor plane,
    then depth-rendered. Depths clamp at the gel thickness.
    """
    params = params or ContactParams()
    if not 0.0 <= indentation_depth <= params.gel_thickness:
        raise ValueError("indentation_depth must be within [0, gel_thickness]")
    right, up, view = camera.axes
    travel = indentation_depth + params.collision_margin
    shear = shear_displacement * (shear_dir[0] * right + shear_dir[1] * up)
    shifted = Pose(np.eye(3), -travel * view + shear).compose(pose)
    hmap = render_depth(mesh, shifted, camera)
    if hmap.depths.max() > params.gel_thickness:
        hmap = hmap.replace(np.minimum(hmap.depths, params.gel_thickness))
    return hmap


def solve_indentation(mesh: TriangleMesh, pose: Pose, camera: DepthCamera,
                      target_volume: float, params: ContactParams,
                      tol: float = 1e-3, max_iter: int = 60) -> ContactSolution:
    """Find the indentation depth whose rendered volume matches the target.

    Bisection over object translation along the contact normal within
    [0, gel_thickness], rendering and integrating the candidate contact map
    at every step. The given pose is first normalized so the object exactly
    touches the gel plane at depth 0. Raises VolumeUnreachable when even
    full-thickness indentation cannot produce the target, and NoContact when
    the ray bundle misses the mesh entirely.
    """
    if target_volume < 0:
        raise ValueError("target volume must be non-negative")
    if not 0.0 < tol <= 0.1:
        raise ValueError("tol must be in (0, 0.1]")

    _, _, view = camera.axes
    origin_axis = float((camera.pose.translation + camera.near * view) @ view)
    if params.gel_thickness > -origin_axis:
        raise ValueError(
            f"camera rays start {-origin_axis:.1f} mm behind the gel plane and "
            f"cannot observe the full {params.gel_thickness} mm gel depth")
    # probe plane beyond any reachable hit: every hit shows as positive depth
    probe_plane = origin_axis + (camera.far - camera.near) + 1.0
    probe = render_depth(mesh, pose, camera, gel_plane=probe_plane)
    zeros = np.zeros_like(probe.depths)
    if probe.depths.max() <= 0:
        if target_volume > VOLUME_EPS:
            raise NoContact("closing ray bundle never intersects the mesh")
        return ContactSolution(0.0, 0.0, probe.replace(zeros), 0.0, 0, False)

    # Touch pose: deepest point exactly on the gel plane, then backed off by
    # the collision margin so contact_map's margin compensation cancels it.
    deepest_axis = probe_plane - probe.depths.max()
    touch = Pose(np.eye(3), (params.collision_margin - deepest_axis) * view).compose(pose)

    def render_at(depth: float) -> HeightMap:
        return contact_map(mesh, touch, camera, depth, params=params)

    if target_volume <= VOLUME_EPS:
        return ContactSolution(0.0, 0.0, probe.replace(zeros), 0.0, 0, False, touch)

    floor = max(target_volume, VOLUME_EPS)
    upper = render_at(params.gel_thickness)
    upper_volume = integrate_volume(upper)
    if upper_volume < target_volume * (1.0 - tol):
        raise VolumeUnreachable(
            f"target {target_volume:.4g} mm^3 exceeds {upper_volume:.4g} mm^3 "
            f"at full {params.gel_thickness} mm indentation")

    lo, hi = 0.0, params.gel_thickness
    best_depth, best_map, best_volume = params.gel_thickness, upper, upper_volume
    best_err = abs(upper_volume - target_volume)
    iterations = 0
    for _ in range(max_iter):
        if best_err <= tol * floor:
            break
        mid = 0.5 * (lo + hi)
        iterations += 1
        candidate = render_at(mid)
        volume = integrate_volume(candidate)
        if abs(volume - target_volume) < best_err:
            best_depth, best_map, best_volume = mid, candidate, volume
            best_err = abs(volume - target_volume)
        if volume < target_volume:
            lo = mid
        else:
            hi = mid
    return ContactSolution(best_depth, 0.0, best_map, best_volume, iterations,
                           False, touch)
