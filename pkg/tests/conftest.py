"""Shared fixtures and independent oracle helpers.

The oracle functions here are deliberately closed-form / brute-force and do
not call into the rendering path they are used to check.
"""

import struct

import numpy as np
import pytest
from scipy.optimize import brentq

from tacsim.geometry import DepthCamera, HeightMap, Pose, TriangleMesh


# ---------------------------------------------------------------------------
# analytic sphere-press oracles


def rendered_sphere_volume(radius: float, depth: float) -> float:
    """Exact displaced volume seen by a depth camera for a sphere press.

    For depth <= R this is the spherical-cap volume pi d^2 (3R - d) / 3.
    Beyond the equator the camera sees the lower hemisphere silhouette, so
    the volume grows linearly with depth.
    """
    if depth <= 0:
        return 0.0
    if depth <= radius:
        return np.pi * depth * depth * (3 * radius - depth) / 3.0
    hemisphere = 2.0 * np.pi * radius ** 3 / 3.0
    return np.pi * radius ** 2 * (depth - radius) + hemisphere


def invert_sphere_volume(radius: float, volume: float, depth_hi: float = 100.0) -> float:
    """Numerical inversion of the sphere-press volume (the solver's oracle)."""
    return brentq(lambda d: rendered_sphere_volume(radius, d) - volume,
                  0.0, depth_hi, xtol=1e-12)


def analytic_cap_area(radius: float, depth: float) -> float:
    """Contact footprint area pi (2 R d - d^2) for a cap press, d <= R."""
    return np.pi * (2 * radius * depth - depth * depth)


def sphere_press_profile(radius: float, depth: float, r: np.ndarray) -> np.ndarray:
    """Analytic indentation profile d(r) for a sphere pressed to max depth."""
    dome = np.sqrt(np.maximum(radius ** 2 - r ** 2, 0.0))
    prof = depth - radius + dome
    return np.where(r <= radius, np.maximum(prof, 0.0), 0.0)


# ---------------------------------------------------------------------------
# oracle-grade geometry (fine tessellation where the contact happens)


def fine_sphere_cap(radius: float, max_polar: float = 0.9, rings: int = 64,
                    sectors: int = 128) -> TriangleMesh:
    """Bottom patch of a sphere, finely tessellated around the contact pole.

    Chord error ~ R (max_polar/rings)^2 / 8, far below pixel discretization,
    so renders of this mesh can be compared against the exact sphere math.
    """
    verts = [np.array([0.0, 0.0, -radius])]
    for k in range(1, rings + 1):
        phi = max_polar * k / rings
        z = -radius * np.cos(phi)
        rho = radius * np.sin(phi)
        for s in range(sectors):
            ang = 2.0 * np.pi * s / sectors
            verts.append(np.array([rho * np.cos(ang), rho * np.sin(ang), z]))
    faces = []
    for s in range(sectors):
        faces.append([0, 1 + s, 1 + (s + 1) % sectors])
    for k in range(1, rings):
        a0 = 1 + (k - 1) * sectors
        b0 = 1 + k * sectors
        for s in range(sectors):
            s1 = (s + 1) % sectors
            faces.append([a0 + s, b0 + s, b0 + s1])
            faces.append([a0 + s, b0 + s1, a0 + s1])
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))


def flat_slab(width: float, depth_extent: float, thickness: float = 5.0) -> TriangleMesh:
    """Axis-aligned slab whose bottom face presses flat onto the sensor."""
    from tacsim.geometry import make_box
    return make_box((width, depth_extent, thickness))


# ---------------------------------------------------------------------------
# mesh file fixtures (writers independent of the loader under test)


def write_cube_obj(path) -> None:
    lines = ["# unit cube"]
    for x in (0, 1):
        for y in (0, 1):
            for z in (0, 1):
                lines.append(f"v {x} {y} {z}")
    # vertex order above: index = 4x + 2y + z + 1
    quads = [
        (1, 2, 4, 3), (5, 7, 8, 6),  # x faces
        (1, 5, 6, 2), (3, 4, 8, 7),  # y faces
        (1, 3, 7, 5), (2, 6, 8, 4),  # z faces
    ]
    for a, b, c, d in quads:
        lines.append(f"f {a} {b} {c}")
        lines.append(f"f {a} {c} {d}")
    path.write_text("\n".join(lines) + "\n")


def write_stl_binary(path, triangles: np.ndarray) -> None:
    """triangles: (n, 3, 3) float array."""
    with open(path, "wb") as fh:
        fh.write(b"\x00" * 80)
        fh.write(struct.pack("<I", len(triangles)))
        for tri in triangles:
            fh.write(struct.pack("<3f", 0.0, 0.0, 0.0))  # normal, unused
            for vertex in tri:
                fh.write(struct.pack("<3f", *vertex))
            fh.write(struct.pack("<H", 0))


# ---------------------------------------------------------------------------
# fixtures


@pytest.fixture(scope="session")
def camera() -> DepthCamera:
    return DepthCamera.gelsight()


@pytest.fixture(scope="session")
def small_camera() -> DepthCamera:
    """Coarse, fast camera for property tests."""
    return DepthCamera(width=80, height=60, pixel_pitch=0.2)


@pytest.fixture()
def zero_map(camera) -> HeightMap:
    return HeightMap(np.zeros((camera.height, camera.width)), camera.pixel_pitch)


@pytest.fixture(scope="session")
def touching_sphere_pose() -> Pose:
    return Pose.identity()


def sphere_at_depth(radius: float, depth: float) -> Pose:
    """Pose placing a centered sphere so its lowest point is `depth` past z=0."""
    return Pose.from_translation((0.0, 0.0, radius - depth))
