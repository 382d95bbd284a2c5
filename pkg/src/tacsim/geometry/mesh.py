"""Triangle meshes, rigid poses, and mesh file loading.

All coordinates are millimeters. Meshes are treated as immutable after
construction; vertex/face arrays are marked read-only so a cached BVH can
never go stale.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import MeshLoadError

log = logging.getLogger(__name__)

_DEGENERATE_AREA = 1e-12  # mm^2, dropped at load / rejected at construction


@dataclass
class Pose:
    """Rigid transform: x -> rotation @ x + translation (mm)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError(f"rotation is not orthonormal (max |R R^T - I| = {err:.3g})")
        if np.linalg.det(self.rotation) < 0:
            raise ValueError("rotation has negative determinant (reflection)")
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(np.eye(3), np.asarray(t, dtype=np.float64))

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        k = np.array([
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ])
        rot = np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
        return cls(rot, np.asarray(translation, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self.compose(other)).apply(x) == self.apply(other.apply(x))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)


@dataclass
class TriangleMesh:
    """Indexed triangle mesh (vertices in mm)."""

    vertices: np.ndarray
    faces: np.ndarray
    _bvh: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.isfinite(self.vertices).all():
            raise MeshLoadError("mesh has non-finite vertex coordinates")
        if len(self.faces) == 0:
            raise MeshLoadError("mesh has no faces")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise MeshLoadError("face index out of range")
        if _face_areas(self.vertices, self.faces).min() <= _DEGENERATE_AREA:
            raise MeshLoadError("mesh contains degenerate (zero-area) faces")
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

    @property
    def bvh(self):
        """Median-split BVH over the faces, built once and cached."""
        if self._bvh is None:
            from .bvh import BVH
            self._bvh = BVH.build(self.vertices, self.faces)
        return self._bvh

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - a
    e2 = vertices[faces[:, 2]] - a
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def _clean_faces(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Drop zero-area faces (collapsed or repeated-index triangles)."""
    if len(faces) == 0:
        return faces
    keep = _face_areas(vertices, faces) > _DEGENERATE_AREA
    dropped = int((~keep).sum())
    if dropped:
        log.warning("dropped %d degenerate face(s) at load", dropped)
    return faces[keep]


def transform_mesh(mesh: TriangleMesh, pose: Pose) -> TriangleMesh:
    """Return a new mesh with every vertex mapped v -> R v + t."""
    return TriangleMesh(pose.apply(mesh.vertices), mesh.faces.copy())


# ---------------------------------------------------------------------------
# file loading


def load_mesh(path: str | Path, scale: float = 1.0) -> TriangleMesh:
    """Load an OBJ or STL (binary or ASCII) mesh file, units in mm.

    ``scale`` multiplies all coordinates, for files authored in other units.
    """
    path = Path(path)
    if not path.exists():
        raise MeshLoadError(f"mesh file not found: {path}")
    data = path.read_bytes()
    suffix = path.suffix.lower()
    if suffix == ".obj":
        vertices, faces = _parse_obj(data)
    elif suffix == ".stl":
        vertices, faces = _parse_stl(data)
    else:
        raise MeshLoadError(f"unsupported mesh format: {path.suffix!r} (expected .obj or .stl)")
    if len(vertices) == 0:
        raise MeshLoadError(f"{path.name}: no vertices")
    vertices = vertices * float(scale)
    faces = _clean_faces(vertices, faces)
    if len(faces) == 0:
        raise MeshLoadError(f"{path.name}: no usable faces after degenerate-face cleanup")
    return TriangleMesh(vertices, faces)


def _parse_obj(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    offset = 0
    for raw in data.split(b"\n"):
        line = raw.strip()
        try:
            if line.startswith(b"v "):
                parts = line.split()
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif line.startswith(b"f "):
                idx = []
                for token in line.split()[1:]:
                    # "f v", "f v/vt", "f v/vt/vn", "f v//vn"; negative = relative
                    v = int(token.split(b"/")[0])
                    idx.append(v - 1 if v > 0 else len(vertices) + v)
                if len(idx) < 3:
                    raise MeshLoadError("face with fewer than 3 vertices", byte_offset=offset)
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
        except (ValueError, IndexError) as exc:
            raise MeshLoadError(f"OBJ parse failure: {exc}", byte_offset=offset) from exc
        offset += len(raw) + 1
    vert = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    face = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(face) and (face.min() < 0 or face.max() >= len(vert)):
        raise MeshLoadError("OBJ face index out of range")
    return vert, face


def _parse_stl(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    # ASCII STL starts with "solid" AND contains "facet"; binary files may
    # also start with "solid" in the comment header, so check both.
    if data[:5].lower() == b"solid" and b"facet" in data[:512]:
        return _parse_stl_ascii(data)
    return _parse_stl_binary(data)


def _parse_stl_binary(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) < 84:
        raise MeshLoadError("binary STL truncated before triangle count",
                            byte_offset=len(data))
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + count * 50
    if len(data) < expected:
        raise MeshLoadError(
            f"binary STL truncated: {count} triangles declared, file ends early",
            byte_offset=len(data))
    records = np.frombuffer(data, dtype=np.uint8, count=count * 50, offset=84)
    records = records.reshape(count, 50)
    tri = records[:, 12:48].copy().view("<f4").reshape(count, 3, 3).astype(np.float64)
    vertices = tri.reshape(-1, 3)
    faces = np.arange(count * 3, dtype=np.int64).reshape(count, 3)
    return _weld_vertices(vertices, faces)


def _parse_stl_ascii(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    vertices: list[list[float]] = []
    offset = 0
    saw_endsolid = False
    for raw in data.split(b"\n"):
        line = raw.strip()
        if line.startswith(b"vertex"):
            parts = line.split()
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except (ValueError, IndexError) as exc:
                raise MeshLoadError(f"ASCII STL parse failure: {exc}",
                                    byte_offset=offset) from exc
        elif line.startswith(b"endsolid"):
            saw_endsolid = True
        offset += len(raw) + 1
    if not saw_endsolid:
        raise MeshLoadError("ASCII STL truncated: missing 'endsolid'", byte_offset=len(data))
    if len(vertices) % 3 != 0:
        raise MeshLoadError(f"ASCII STL vertex count {len(vertices)} not a multiple of 3",
                            byte_offset=len(data))
    vert = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.arange(len(vertices), dtype=np.int64).reshape(-1, 3)
    return _weld_vertices(vert, faces)


def _weld_vertices(vertices: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge exactly-coincident vertices (STL repeats them per facet)."""
    unique, inverse = np.unique(vertices, axis=0, return_inverse=True)
    return unique, inverse[faces.reshape(-1)].reshape(-1, 3).astype(np.int64)


# ---------------------------------------------------------------------------
# primitive generators (mm, centered at the origin)


def make_box(extents=(40.0, 40.0, 40.0)) -> TriangleMesh:
    """Axis-aligned box with the given (x, y, z) edge lengths."""
    hx, hy, hz = np.asarray(extents, dtype=np.float64) / 2.0
    v = np.array([
        [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
        [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
    ])
    f = np.array([
        [0, 2, 1], [0, 3, 2],  # bottom
        [4, 5, 6], [4, 6, 7],  # top
        [0, 1, 5], [0, 5, 4],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 4, 7], [0, 7, 3],  # -x
        [1, 2, 6], [1, 6, 5],  # +x
    ], dtype=np.int64)
    return TriangleMesh(v, f)


def make_icosphere(radius: float, subdivisions: int = 3) -> TriangleMesh:
    """Geodesic sphere: subdivided icosahedron, 20 * 4^n faces."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts[0])
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    vlist = [v for v in verts]
    for _ in range(subdivisions):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint_cache:
                m = vlist[a] + vlist[b]
                vlist.append(m / np.linalg.norm(m))
                midpoint_cache[key] = len(vlist) - 1
            return midpoint_cache[key]

        next_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            next_faces += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        faces = next_faces
    return TriangleMesh(np.array(vlist) * radius, np.array(faces, dtype=np.int64))


def make_cylinder(radius: float, height: float, sectors: int = 48) -> TriangleMesh:
    """Closed cylinder along z."""
    ang = 2.0 * np.pi * np.arange(sectors) / sectors
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    hz = height / 2.0
    bottom = np.column_stack([ring, np.full(sectors, -hz)])
    top = np.column_stack([ring, np.full(sectors, hz)])
    verts = np.vstack([bottom, top, [[0, 0, -hz]], [[0, 0, hz]]])
    cb, ct = 2 * sectors, 2 * sectors + 1
    faces = []
    for i in range(sectors):
        j = (i + 1) % sectors
        faces += [[i, j, sectors + i], [j, sectors + j, sectors + i]]   # wall
        faces += [[cb, j, i], [ct, sectors + i, sectors + j]]           # caps
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def make_l_bracket(leg: float = 60.0, width: float = 30.0, thickness: float = 20.0) -> TriangleMesh:
    """L-shaped solid: a horizontal foot plus a vertical leg at one end.

    The mass concentration in the foot puts the center of mass well off the
    bounding-box center, which is what makes it useful for rotational-slip
    scenarios.
    """
    foot = make_box((leg, width, thickness))
    post = make_box((thickness, width, leg))
    foot_v = foot.vertices + np.array([0.0, 0.0, -(leg - thickness) / 2.0])
    post_v = post.vertices + np.array([-(leg - thickness) / 2.0, 0.0, 0.0])
    verts = np.vstack([foot_v, post_v])
    faces = np.vstack([foot.faces, post.faces + len(foot_v)])
    return TriangleMesh(verts, faces)
