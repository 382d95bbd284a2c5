from .mesh import (
    Pose,
    TriangleMesh,
    load_mesh,
    make_box,
    make_cylinder,
    make_icosphere,
    make_l_bracket,
    transform_mesh,
)
from .camera import (
    DepthCamera,
    HeightMap,
    load_heightmap_png,
    raycast,
    render_depth,
    save_heightmap_png,
)

__all__ = [
    "Pose",
    "TriangleMesh",
    "load_mesh",
    "transform_mesh",
    "make_box",
    "make_cylinder",
    "make_icosphere",
    "make_l_bracket",
    "DepthCamera",
    "HeightMap",
    "render_depth",
    "raycast",
    "save_heightmap_png",
    "load_heightmap_png",
]
