"""Bounding-volume hierarchy over mesh triangles and raycast kernels.

Median-split BVH, at most 4 triangles per leaf. Traversal is ordered
(near child first) with early termination against the best hit so far.
The kernels are numba-compiled; they are deterministic for identical
inputs, which the rendering contract relies on.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np
from numba import njit

MAX_LEAF_TRIS = 4
_STACK_DEPTH = 128  # supports meshes far beyond the ~1M-triangle range


@dataclass
class BVH:
    node_min: np.ndarray   # (n_nodes, 3)
    node_max: np.ndarray   # (n_nodes, 3)
    node_right: np.ndarray  # (n_nodes,) index of right child; left child is node+1
    node_start: np.ndarray  # (n_nodes,) leaf: first index into tri_order
    node_count: np.ndarray  # (n_nodes,) leaf: triangle count; 0 for inner nodes
    tri_order: np.ndarray   # (n_tris,) permutation of face indices
    tri_v0: np.ndarray      # (n_tris, 3) first vertex per face
    tri_e1: np.ndarray      # (n_tris, 3) second edge vectors
    tri_e2: np.ndarray
    max_edge: float         # longest triangle edge, used for conservative bounds

    @classmethod
    def build(cls, vertices: np.ndarray, faces: np.ndarray) -> "BVH":
        v0 = np.ascontiguousarray(vertices[faces[:, 0]])
        v1 = vertices[faces[:, 1]]
        v2 = vertices[faces[:, 2]]
        e1 = np.ascontiguousarray(v1 - v0)
        e2 = np.ascontiguousarray(v2 - v0)
        tri_lo = np.minimum(np.minimum(v0, v1), v2)
        tri_hi = np.maximum(np.maximum(v0, v1), v2)
        centroids = (v0 + v1 + v2) / 3.0
        max_edge = float(np.sqrt(max(
            (e1 ** 2).sum(axis=1).max(),
            (e2 ** 2).sum(axis=1).max(),
            ((e2 - e1) ** 2).sum(axis=1).max(),
        )))

        n = len(faces)
        order = np.arange(n, dtype=np.int64)
        nodes: list[list] = []  # [lo, hi, right, start, count]

        sys.setrecursionlimit(max(sys.getrecursionlimit(), 10000))

        def split(start: int, end: int) -> int:
            idx = len(nodes)
            sel = order[start:end]
            lo = tri_lo[sel].min(axis=0)
            hi = tri_hi[sel].max(axis=0)
            nodes.append([lo, hi, -1, start, end - start])
            if end - start <= MAX_LEAF_TRIS:
                return idx
            axis = int(np.argmax(hi - lo))
            mid = start + (end - start) // 2
            order[start:end] = sel[np.argsort(centroids[sel, axis], kind="stable")]
            split(start, mid)
            nodes[idx][2] = split(mid, end)
            nodes[idx][4] = 0
            return idx

        split(0, n)
        return cls(
            node_min=np.ascontiguousarray([nd[0] for nd in nodes], dtype=np.float64),
            node_max=np.ascontiguousarray([nd[1] for nd in nodes], dtype=np.float64),
            node_right=np.array([nd[2] for nd in nodes], dtype=np.int64),
            node_start=np.array([nd[3] for nd in nodes], dtype=np.int64),
            node_count=np.array([nd[4] for nd in nodes], dtype=np.int64),
            tri_order=order,
            tri_v0=v0,
            tri_e1=e1,
            tri_e2=e2,
            max_edge=max_edge,
        )

    def cast_grid(self, base: np.ndarray, du: np.ndarray, dv: np.ndarray,
                  direction: np.ndarray, width: int, height: int,
                  tmax: float) -> np.ndarray:
        """Hit distances for a (height, width) grid of parallel rays; inf = miss."""
        return _cast_grid(self.node_min, self.node_max, self.node_right,
                          self.node_start, self.node_count, self.tri_order,
                          self.tri_v0, self.tri_e1, self.tri_e2,
                          np.asarray(base, dtype=np.float64),
                          np.asarray(du, dtype=np.float64),
                          np.asarray(dv, dtype=np.float64),
                          np.asarray(direction, dtype=np.float64),
                          width, height, tmax)

    def cast_rays(self, origins: np.ndarray, directions: np.ndarray,
                  tmax: float = np.inf) -> np.ndarray:
        """Hit distances for arbitrary rays; inf = miss."""
        origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        directions = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
        return _cast_rays(self.node_min, self.node_max, self.node_right,
                          self.node_start, self.node_count, self.tri_order,
                          self.tri_v0, self.tri_e1, self.tri_e2,
                          origins, directions, tmax)


@njit(cache=True, inline="always")
def _safe_inv(d):
    if d >= 0.0:
        return 1.0 / max(d, 1e-300)
    return 1.0 / min(d, -1e-300)


@njit(cache=True, inline="always")
def _slab(lox, hix, loy, hiy, loz, hiz, ox, oy, oz, ix, iy, iz):
    """Ray/AABB overlap interval (t0, t1); empty when t0 > t1."""
    a0 = (lox - ox) * ix
    a1 = (hix - ox) * ix
    if a0 > a1:
        a0, a1 = a1, a0
    b0 = (loy - oy) * iy
    b1 = (hiy - oy) * iy
    if b0 > b1:
        b0, b1 = b1, b0
    if b0 > a0:
        a0 = b0
    if b1 < a1:
        a1 = b1
    c0 = (loz - oz) * iz
    c1 = (hiz - oz) * iz
    if c0 > c1:
        c0, c1 = c1, c0
    if c0 > a0:
        a0 = c0
    if c1 < a1:
        a1 = c1
    return a0, a1


@njit(cache=True, inline="always")
def _traverse(node_min, node_max, node_right, node_start, node_count, tri_order,
              tri_v0, tri_e1, tri_e2, stack, tstack,
              ox, oy, oz, ix, iy, iz, dx, dy, dz, tmax):
    t_best = tmax
    t0, t1 = _slab(node_min[0, 0], node_max[0, 0], node_min[0, 1], node_max[0, 1],
                   node_min[0, 2], node_max[0, 2], ox, oy, oz, ix, iy, iz)
    if t1 < t0 or t1 < 0.0:
        return t_best
    sp = 0
    stack[0] = 0
    tstack[0] = t0
    while sp >= 0:
        node = stack[sp]
        t_node = tstack[sp]
        sp -= 1
        if t_node >= t_best:
            continue
        count = node_count[node]
        if count > 0:
            start = node_start[node]
            for q in range(start, start + count):
                tri = tri_order[q]
                # Moller-Trumbore, no backface culling
                e2x = tri_e2[tri, 0]
                e2y = tri_e2[tri, 1]
                e2z = tri_e2[tri, 2]
                px = dy * e2z - dz * e2y
                py = dz * e2x - dx * e2z
                pz = dx * e2y - dy * e2x
                e1x = tri_e1[tri, 0]
                e1y = tri_e1[tri, 1]
                e1z = tri_e1[tri, 2]
                det = e1x * px + e1y * py + e1z * pz
                if abs(det) < 1e-14:
                    continue
                invdet = 1.0 / det
                sx = ox - tri_v0[tri, 0]
                sy = oy - tri_v0[tri, 1]
                sz = oz - tri_v0[tri, 2]
                u = (sx * px + sy * py + sz * pz) * invdet
                if u < 0.0 or u > 1.0:
                    continue
                qx = sy * e1z - sz * e1y
                qy = sz * e1x - sx * e1z
                qz = sx * e1y - sy * e1x
                v = (dx * qx + dy * qy + dz * qz) * invdet
                if v < 0.0 or u + v > 1.0:
                    continue
                t = (e2x * qx + e2y * qy + e2z * qz) * invdet
                if 0.0 < t < t_best:
                    t_best = t
        else:
            left = node + 1
            right = node_right[node]
            l0, l1 = _slab(node_min[left, 0], node_max[left, 0],
                           node_min[left, 1], node_max[left, 1],
                           node_min[left, 2], node_max[left, 2],
                           ox, oy, oz, ix, iy, iz)
            r0, r1 = _slab(node_min[right, 0], node_max[right, 0],
                           node_min[right, 1], node_max[right, 1],
                           node_min[right, 2], node_max[right, 2],
                           ox, oy, oz, ix, iy, iz)
            hit_l = l1 >= l0 and l1 >= 0.0 and l0 < t_best
            hit_r = r1 >= r0 and r1 >= 0.0 and r0 < t_best
            if hit_l and hit_r:
                if l0 <= r0:  # push far child first so near is popped first
                    sp += 1
                    stack[sp] = right
                    tstack[sp] = r0
                    sp += 1
                    stack[sp] = left
                    tstack[sp] = l0
                else:
                    sp += 1
                    stack[sp] = left
                    tstack[sp] = l0
                    sp += 1
                    stack[sp] = right
                    tstack[sp] = r0
            elif hit_l:
                sp += 1
                stack[sp] = left
                tstack[sp] = l0
            elif hit_r:
                sp += 1
                stack[sp] = right
                tstack[sp] = r0
    return t_best


@njit(cache=True)
def _cast_grid(node_min, node_max, node_right, node_start, node_count, tri_order,
               tri_v0, tri_e1, tri_e2, base, du, dv, direction, width, height, tmax):
    out = np.full((height, width), np.inf)
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    tstack = np.empty(_STACK_DEPTH, dtype=np.float64)
    dx, dy, dz = direction[0], direction[1], direction[2]
    ix, iy, iz = _safe_inv(dx), _safe_inv(dy), _safe_inv(dz)
    for i in range(height):
        for j in range(width):
            ox = base[0] + j * du[0] + i * dv[0]
            oy = base[1] + j * du[1] + i * dv[1]
            oz = base[2] + j * du[2] + i * dv[2]
            t = _traverse(node_min, node_max, node_right, node_start, node_count,
                          tri_order, tri_v0, tri_e1, tri_e2, stack, tstack,
                          ox, oy, oz, ix, iy, iz, dx, dy, dz, tmax)
            if t < tmax:
                out[i, j] = t
    return out


@njit(cache=True)
def _cast_rays(node_min, node_max, node_right, node_start, node_count, tri_order,
               tri_v0, tri_e1, tri_e2, origins, directions, tmax):
    n = origins.shape[0]
    out = np.full(n, np.inf)
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    tstack = np.empty(_STACK_DEPTH, dtype=np.float64)
    for k in range(n):
        dx, dy, dz = directions[k, 0], directions[k, 1], directions[k, 2]
        t = _traverse(node_min, node_max, node_right, node_start, node_count,
                      tri_order, tri_v0, tri_e1, tri_e2, stack, tstack,
                      origins[k, 0], origins[k, 1], origins[k, 2],
                      _safe_inv(dx), _safe_inv(dy), _safe_inv(dz),
                      dx, dy, dz, tmax)
        if t < tmax:
            out[k] = t
    return out
