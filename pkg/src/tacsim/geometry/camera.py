"""Virtual orthographic depth camera behind the sensor surface.

The sensor frame convention used throughout the framework: the gel surface
is the plane z = 0, the camera sits at negative z looking along +z, and
objects press into the gel from the +z side. Penetration past the gel plane
(along the view axis) is what a height map records.

Image coordinates: column j maps to x = (j - (W-1)/2) * pitch, row i maps to
y = ((H-1)/2 - i) * pitch, i.e. x grows rightward and y grows upward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .mesh import Pose, TriangleMesh

_HEIGHTMAP_UM_PER_UNIT = 1000.0  # 16-bit heightmap PNGs store micrometers


@dataclass
class DepthCamera:
    """Orthographic depth camera; pose maps camera frame to sensor frame."""

    width: int = 320
    height: int = 240
    pixel_pitch: float = 0.06  # mm per pixel
    near: float = 1.0
    far: float = 200.0
    pose: Pose = field(default_factory=lambda: Pose.from_translation((0.0, 0.0, -50.0)))

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("camera resolution must be at least 8x8")
        if self.pixel_pitch <= 0:
            raise ValueError("pixel_pitch must be positive")
        if not self.near < self.far:
            raise ValueError("near plane must be closer than far plane")

    @classmethod
    def gelsight(cls, high_res: bool = False) -> "DepthCamera":
        """Default GelSight-like sensor camera (320x240 at 0.06 mm/px).

        ``high_res`` switches to 640x480 at 0.03 mm/px over the same field.
        """
        if high_res:
            return cls(width=640, height=480, pixel_pitch=0.03)
        return cls()

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, view) unit vectors in the sensor frame."""
        r = self.pose.rotation
        return r[:, 0].copy(), r[:, 1].copy(), r[:, 2].copy()

    def pixel_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-column x (mm) and per-row y (mm) image-plane coordinates."""
        x = (np.arange(self.width) - (self.width - 1) / 2.0) * self.pixel_pitch
        y = ((self.height - 1) / 2.0 - np.arange(self.height)) * self.pixel_pitch
        return x, y


@dataclass
class HeightMap:
    """Per-pixel gel indentation depth in mm; 0 means no contact."""

    depths: np.ndarray
    pixel_pitch: float

    def __post_init__(self):
        self.depths = np.ascontiguousarray(self.depths, dtype=np.float64)
        if self.depths.ndim != 2:
            raise ValueError("depths must be a (height, width) array")
        if self.pixel_pitch <= 0:
            raise ValueError("pixel_pitch must be positive")
        if not np.isfinite(self.depths).all():
            raise ValueError("height map contains non-finite depths")
        if self.depths.min() < 0:
            raise ValueError("height map contains negative depths")
        self.depths.setflags(write=False)

    @property
    def width(self) -> int:
        return self.depths.shape[1]

    @property
    def height(self) -> int:
        return self.depths.shape[0]

    def replace(self, depths: np.ndarray) -> "HeightMap":
        return HeightMap(depths, self.pixel_pitch)


def render_depth(mesh: TriangleMesh, pose: Pose, camera: DepthCamera,
                 gel_plane: float = 0.0) -> HeightMap:
    """Orthographic raycast depth render of the mesh against the gel plane.

    One ray per pixel along the camera view axis, nearest hit via the mesh
    BVH. Depth = max(0, penetration of the hit past ``gel_plane`` measured
    along the view axis); pixels whose ray misses the mesh are 0.
    """
    right, up, view = camera.axes
    cam_origin = camera.pose.translation + camera.near * view
    origin_axis = float(cam_origin @ view)

    depths = np.zeros((camera.height, camera.width))
    window = _active_window(mesh, pose, camera, right, up, view, gel_plane)
    if window is None:
        return HeightMap(depths, camera.pixel_pitch)
    j0, j1, i0, i1 = window

    # rays in mesh-local frame so the BVH is reused across poses
    inv = pose.inverse()
    base_world = (cam_origin
                  + (j0 - (camera.width - 1) / 2.0) * camera.pixel_pitch * right
                  + ((camera.height - 1) / 2.0 - i0) * camera.pixel_pitch * up)
    base = inv.apply(base_world)
    du = inv.rotation @ (camera.pixel_pitch * right)
    dv = inv.rotation @ (-camera.pixel_pitch * up)
    direction = inv.rotation @ view

    t = mesh.bvh.cast_grid(base, du, dv, direction,
                           j1 - j0, i1 - i0, camera.far - camera.near)
    hit_axis = origin_axis + t  # lateral offsets are orthogonal to the view axis
    window_depth = np.where(np.isfinite(t), np.maximum(0.0, gel_plane - hit_axis), 0.0)
    depths[i0:i1, j0:j1] = window_depth
    return HeightMap(depths, camera.pixel_pitch)


def _active_window(mesh, pose, camera, right, up, view, gel_plane):
    """Pixel window that can possibly see penetration, or None.

    Only mesh parts past the gel plane can produce nonzero depth. Every
    triangle with a point past the plane has at least one vertex past it,
    and no triangle point lies farther than the longest edge from that
    vertex, so the window is the projected bounding box of the past-plane
    vertices grown by the longest edge.
    """
    axis_coord = mesh.vertices @ (pose.rotation.T @ view) + pose.translation @ view
    below = axis_coord < gel_plane
    if not below.any():
        return None
    sel = mesh.vertices[below]
    u_coord = sel @ (pose.rotation.T @ right) + pose.translation @ right
    v_coord = sel @ (pose.rotation.T @ up) + pose.translation @ up
    grow = mesh.bvh.max_edge + camera.pixel_pitch
    pitch = camera.pixel_pitch
    half_w = (camera.width - 1) / 2.0
    half_h = (camera.height - 1) / 2.0
    j0 = int(np.floor((u_coord.min() - grow) / pitch + half_w))
    j1 = int(np.ceil((u_coord.max() + grow) / pitch + half_w)) + 1
    i0 = int(np.floor(half_h - (v_coord.max() + grow) / pitch))
    i1 = int(np.ceil(half_h - (v_coord.min() - grow) / pitch)) + 1
    j0, j1 = max(j0, 0), min(j1, camera.width)
    i0, i1 = max(i0, 0), min(i1, camera.height)
    if j0 >= j1 or i0 >= i1:
        return None
    return j0, j1, i0, i1


def raycast(mesh: TriangleMesh, pose: Pose, origins: np.ndarray,
            directions: np.ndarray, tmax: float = np.inf) -> np.ndarray:
    """First-hit distances for arbitrary world-frame rays; inf = miss."""
    inv = pose.inverse()
    origins = inv.apply(np.asarray(origins, dtype=np.float64).reshape(-1, 3))
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3) @ inv.rotation.T
    return mesh.bvh.cast_rays(origins, directions, tmax)


def save_heightmap_png(hmap: HeightMap, path: str | Path) -> None:
    """16-bit grayscale PNG, one micrometer per level, pitch in a text chunk."""
    um = np.round(hmap.depths * _HEIGHTMAP_UM_PER_UNIT)
    if um.max() > 65535:
        raise ValueError("height map exceeds the 65.535 mm range of 16-bit storage")
    img = Image.fromarray(um.astype(np.uint16))
    meta = PngInfo()
    meta.add_text("pixel_pitch_mm", repr(hmap.pixel_pitch))
    img.save(path, pnginfo=meta)


def load_heightmap_png(path: str | Path, fallback_pitch: float | None = None) -> HeightMap:
    """Load a 16-bit heightmap PNG; embedded pitch metadata wins."""
    img = Image.open(path)
    depths = np.asarray(img, dtype=np.float64) / _HEIGHTMAP_UM_PER_UNIT
    text = getattr(img, "text", {})
    if "pixel_pitch_mm" in text:
        pitch = float(text["pixel_pitch_mm"])
    elif fallback_pitch is not None:
        pitch = fallback_pitch
    else:
        raise ValueError(f"{path}: no pixel_pitch_mm metadata; pass a fallback pitch")
    return HeightMap(depths, pitch)
