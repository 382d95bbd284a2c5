"""Tactile image synthesis from contact maps.

A calibrated lookup table maps surface gradients to per-channel color
deltas over a stored background image, following the calibrate-then-render
workflow of lookup-based tactile simulators. Because no real sensor data
ships with the framework, calibration references come from an in-repo
photometric reference renderer (three tinted directional lights shading the
height field); the calibration path itself is identical either way.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt, gaussian_filter

from .errors import InsufficientCoverage
from .geometry import HeightMap

MIN_BIN_SAMPLES = 10
_MARKER_COLOR = np.array([30, 30, 35], dtype=np.uint8)
_LUT_MAGIC = b"TACLUT"
_LUT_VERSION = 1

# reference sensor illumination: azimuth spacing 120 deg, elevation 45 deg
_LIGHT_AZIMUTHS = np.deg2rad([0.0, 120.0, 240.0])
_LIGHT_ELEVATION = np.deg2rad(45.0)
_LIGHT_TINTS = np.array([
    [140.0, 25.0, 25.0],
    [25.0, 140.0, 25.0],
    [30.0, 30.0, 160.0],
])
_AMBIENT = np.array([20.0, 20.0, 30.0])


def smooth_heightmap(hmap: HeightMap, sigma: float) -> HeightMap:
    """Gaussian-smoothed height map (gel low-pass); sigma in pixels."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return hmap
    smoothed = gaussian_filter(hmap.depths, sigma, mode="constant", cval=0.0)
    return hmap.replace(np.maximum(smoothed, 0.0))


def gradients(hmap: HeightMap) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (gx, gy) in mm/mm; x grows rightward, y upward.

    Central differences in the interior, one-sided at the boundary.
    """
    gy_row, gx = np.gradient(hmap.depths, hmap.pixel_pitch)
    return gx, -gy_row


def photometric_reference(hmap: HeightMap, sigma: float = 2.0) -> np.ndarray:
    """Reference sensor image: Phong-shaded height field, uint8 RGB.

    Stands in for real captures during lookup-table calibration.
    """
    gx, gy = gradients(smooth_heightmap(hmap, sigma))
    norm = np.sqrt(gx * gx + gy * gy + 1.0)
    # surface normal is (-gx, -gy, 1) / norm
    img = np.empty(hmap.depths.shape + (3,))
    img[:] = _AMBIENT
    for az, tint in zip(_LIGHT_AZIMUTHS, _LIGHT_TINTS):
        lx = np.cos(az) * np.cos(_LIGHT_ELEVATION)
        ly = np.sin(az) * np.cos(_LIGHT_ELEVATION)
        lz = np.sin(_LIGHT_ELEVATION)
        diffuse = np.maximum(0.0, (-gx * lx - gy * ly + lz) / norm)
        img += diffuse[:, :, None] * tint
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


@dataclass
class LookupTable:
    """Gradient-to-color lookup: per-bin affine map of (gx, gy) to color delta."""

    direction_bins: int
    magnitude_bins: int
    max_magnitude: float
    coeffs: np.ndarray        # (direction_bins, magnitude_bins, 3 channels, 3 affine)
    background: np.ndarray    # (H, W, 3) uint8
    residual_rms: np.ndarray  # (3,) per-channel fit residual, intensity levels
    sigma: float              # smoothing used during calibration
    pixel_pitch: float

    def __post_init__(self):
        if self.direction_bins < 8 or self.magnitude_bins < 8:
            raise ValueError("lookup table needs at least 8 bins per axis")
        if self.max_magnitude <= 0:
            raise ValueError("max_magnitude must be positive")
        if self.background.dtype != np.uint8 or self.background.ndim != 3:
            raise ValueError("background must be an (H, W, 3) uint8 image")

    def bin_indices(self, gx: np.ndarray, gy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        angle = np.arctan2(gy, gx)  # [-pi, pi]
        d = np.floor((angle + np.pi) / (2.0 * np.pi) * self.direction_bins).astype(np.int64)
        d = np.clip(d, 0, self.direction_bins - 1)
        mag = np.hypot(gx, gy)
        m = np.floor(mag / self.max_magnitude * self.magnitude_bins).astype(np.int64)
        m = np.clip(m, 0, self.magnitude_bins - 1)
        return d, m


def calibrate_lookup(reference: list[tuple[HeightMap, np.ndarray]],
                     direction_bins: int = 64, magnitude_bins: int = 32,
                     sigma: float = 2.0) -> LookupTable:
    """Fit the gradient-to-color lookup table from (height map, image) pairs.

    The reference set must include a rest capture (all-zero map), which
    becomes the background. Bins with fewer than 10 samples inherit the
    nearest populated bin; more than 50% unpopulated bins is an error.
    """
    if len(reference) < 5:
        raise InsufficientCoverage(
            f"need at least 5 reference pairs, got {len(reference)}")
    background = None
    for hmap, image in reference:
        if hmap.depths.max() == 0.0:
            background = np.asarray(image, dtype=np.uint8)
            break
    if background is None:
        raise ValueError("reference set must include a rest (all-zero map) capture")

    gx_all, gy_all, delta_all = [], [], []
    for hmap, image in reference:
        image = np.asarray(image, dtype=np.float64)
        if image.shape != background.shape:
            raise ValueError("reference images must share one resolution")
        gx, gy = gradients(smooth_heightmap(hmap, sigma))
        gx_all.append(gx.ravel())
        gy_all.append(gy.ravel())
        delta_all.append((image - background).reshape(-1, 3))
    gx = np.concatenate(gx_all)
    gy = np.concatenate(gy_all)
    delta = np.concatenate(delta_all)

    max_magnitude = float(np.hypot(gx, gy).max())
    if max_magnitude <= 0.0:
        raise InsufficientCoverage("references contain no gradient coverage at all")

    table = LookupTable(direction_bins, magnitude_bins, max_magnitude,
                        np.zeros((direction_bins, magnitude_bins, 3, 3)),
                        background, np.zeros(3), sigma, reference[0][0].pixel_pitch)
    d_idx, m_idx = table.bin_indices(gx, gy)
    flat = d_idx * magnitude_bins + m_idx
    n_bins = direction_bins * magnitude_bins
    counts = np.bincount(flat, minlength=n_bins)
    populated = counts >= MIN_BIN_SAMPLES
    if populated.sum() * 2 < n_bins:
        raise InsufficientCoverage(
            f"{n_bins - int(populated.sum())} of {n_bins} bins unpopulated "
            f"(limit is 50%); add presses with broader gradient coverage")

    order = np.argsort(flat, kind="stable")
    boundaries = np.searchsorted(flat[order], np.arange(n_bins + 1))
    coeffs = np.zeros((n_bins, 3, 3))
    mag_width = max_magnitude / magnitude_bins
    for b in range(n_bins):
        sel = order[boundaries[b]:boundaries[b + 1]]
        if len(sel) < MIN_BIN_SAMPLES:
            continue
        coeffs[b] = _fit_bin(gx[sel], gy[sel], delta[sel],
                             b % magnitude_bins, mag_width, direction_bins)

    _inherit_unpopulated(coeffs, populated, direction_bins, magnitude_bins)
    table.coeffs = coeffs.reshape(direction_bins, magnitude_bins, 3, 3)

    predicted = _apply_affine(table.coeffs, d_idx, m_idx, gx, gy)
    table.residual_rms = np.sqrt(np.mean((predicted - delta) ** 2, axis=0))
    return table


def _fit_bin(gx, gy, delta, mag_bin, mag_width, direction_bins):
    """Affine fit of color delta over one bin, robust to degenerate spreads.

    Slopes are recovered by SVD of the centered gradient samples; directions
    whose spread is below a small fraction of the bin's own extent are
    unresolved by the data and are dropped (the fit falls back to the bin
    mean along them). Without this, bins whose samples cluster at a point
    would fit huge slopes to quantization noise and extrapolate wildly.
    """
    cx, cy = gx.mean(), gy.mean()
    centered = np.column_stack([gx - cx, gy - cy])
    mean_delta = delta.mean(axis=0)
    bin_extent = np.hypot(mag_width, (mag_bin + 0.5) * mag_width *
                          2.0 * np.pi / direction_bins)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    keep = s > np.sqrt(len(gx)) * 0.02 * bin_extent
    inv_s = np.where(keep, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    slopes = (vt.T * inv_s) @ (u.T @ (delta - mean_delta))  # (2, channels)
    out = np.empty((3, 3))
    out[:, 0] = slopes[0]
    out[:, 1] = slopes[1]
    out[:, 2] = mean_delta - slopes[0] * cx - slopes[1] * cy
    return out


def _inherit_unpopulated(coeffs, populated, direction_bins, magnitude_bins):
    """Copy each empty bin's coefficients from its nearest populated bin.

    Distance in bin-index space; the direction axis is circular.
    """
    pop_idx = np.nonzero(populated)[0]
    pop_d, pop_m = pop_idx // magnitude_bins, pop_idx % magnitude_bins
    for b in np.nonzero(~populated)[0]:
        bd, bm = b // magnitude_bins, b % magnitude_bins
        dd = np.abs(pop_d - bd)
        dd = np.minimum(dd, direction_bins - dd)
        dist = dd * dd + (pop_m - bm) ** 2
        coeffs[b] = coeffs[pop_idx[np.argmin(dist)]]


def _apply_affine(coeffs, d_idx, m_idx, gx, gy):
    c = coeffs[d_idx, m_idx]  # (n, 3 channels, 3 affine)
    basis = np.stack([gx, gy, np.ones_like(gx)], axis=1)
    return np.einsum("nca,na->nc", c, basis)


def render_tactile(hmap: HeightMap, table: LookupTable,
                   sigma: float | None = None) -> np.ndarray:
    """Render a uint8 RGB tactile image from a contact map.

    Smooth, take gradients, look up per-pixel color deltas, add them to the
    background. An all-zero map reproduces the background bit-exactly.
    """
    h, w, _ = table.background.shape
    if hmap.depths.shape != (h, w):
        raise ValueError(
            f"height map {hmap.depths.shape} does not match table background {(h, w)}")
    if sigma is None:
        sigma = table.sigma
    gx, gy = gradients(smooth_heightmap(hmap, sigma))
    d_idx, m_idx = table.bin_indices(gx.ravel(), gy.ravel())
    delta = _apply_affine(table.coeffs, d_idx, m_idx, gx.ravel(), gy.ravel())
    delta[(gx.ravel() == 0.0) & (gy.ravel() == 0.0)] = 0.0  # no deformation, no delta
    img = table.background.astype(np.float64) + delta.reshape(h, w, 3)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def save_lookup(table: LookupTable, path: str | Path) -> None:
    """Binary sidecar: magic + version header, JSON meta, raw arrays."""
    meta = {
        "direction_bins": table.direction_bins,
        "magnitude_bins": table.magnitude_bins,
        "max_magnitude": table.max_magnitude,
        "sigma": table.sigma,
        "pixel_pitch": table.pixel_pitch,
        "background_shape": list(table.background.shape),
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_LUT_MAGIC)
        fh.write(struct.pack("<HI", _LUT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(table.coeffs.astype("<f8").tobytes())
        fh.write(table.residual_rms.astype("<f8").tobytes())
        fh.write(table.background.tobytes())


def load_lookup(path: str | Path) -> LookupTable:
    with open(path, "rb") as fh:
        magic = fh.read(len(_LUT_MAGIC))
        if magic != _LUT_MAGIC:
            raise ValueError(f"{path}: not a lookup table file")
        version, meta_len = struct.unpack("<HI", fh.read(6))
        if version != _LUT_VERSION:
            raise ValueError(f"{path}: unsupported lookup table version {version}")
        meta = json.loads(fh.read(meta_len))
        d, m = meta["direction_bins"], meta["magnitude_bins"]
        coeffs = np.frombuffer(fh.read(d * m * 9 * 8), dtype="<f8").reshape(d, m, 3, 3)
        residual = np.frombuffer(fh.read(3 * 8), dtype="<f8").copy()
        shape = tuple(meta["background_shape"])
        background = np.frombuffer(fh.read(int(np.prod(shape))), dtype=np.uint8)
    return LookupTable(d, m, meta["max_magnitude"], coeffs.copy(),
                       background.reshape(shape).copy(), residual,
                       meta["sigma"], meta["pixel_pitch"])


# ---------------------------------------------------------------------------
# marker field


@dataclass
class MarkerField:
    """Grid of gel surface markers; displacements visualize shear."""

    rest_positions: np.ndarray  # (N, 2) pixel coordinates (x=col, y=row)
    radius: float               # pixels
    displacements: np.ndarray = field(default=None)  # (N, 2) pixels

    def __post_init__(self):
        self.rest_positions = np.asarray(self.rest_positions, dtype=np.float64).reshape(-1, 2)
        if self.displacements is None:
            self.displacements = np.zeros_like(self.rest_positions)
        self.displacements = np.asarray(self.displacements, dtype=np.float64).reshape(-1, 2)

    @classmethod
    def grid(cls, width: int, height: int, nx: int = 12, ny: int = 9,
             radius: float = 3.0) -> "MarkerField":
        xs = (np.arange(nx) + 0.5) * width / nx
        ys = (np.arange(ny) + 0.5) * height / ny
        spacing = min(width / nx, height / ny)
        if spacing <= 2 * radius:
            raise ValueError("marker grid spacing must exceed the marker diameter")
        gx, gy = np.meshgrid(xs, ys)
        return cls(np.column_stack([gx.ravel(), gy.ravel()]), radius)

    def positions(self) -> np.ndarray:
        return self.rest_positions + self.displacements


FALLOFF_PIXELS = 10.0  # attenuation band outside the contact footprint


def displace_markers(fieldgrid: MarkerField, shear_displacement: float,
                     shear_dir, contact: HeightMap,
                     threshold: float = 0.01) -> MarkerField:
    """Shift markers with the sheared gel surface.

    Markers inside the contact footprint move by the full shear displacement
    (converted to pixels); outside, the motion decays linearly to zero over a
    10-pixel band around the footprint.
    """
    mask = contact.depths > threshold
    if mask.any():
        outside_dist = distance_transform_edt(~mask)
        factor_map = np.maximum(0.0, 1.0 - outside_dist / FALLOFF_PIXELS)
        factor_map[mask] = 1.0
    else:
        factor_map = np.zeros_like(contact.depths)
    px = np.clip(np.rint(fieldgrid.rest_positions[:, 0]).astype(int), 0, contact.width - 1)
    py = np.clip(np.rint(fieldgrid.rest_positions[:, 1]).astype(int), 0, contact.height - 1)
    factor = factor_map[py, px]
    shift_px = shear_displacement / contact.pixel_pitch
    direction = np.asarray(shear_dir, dtype=np.float64)
    # image rows grow downward while y grows upward
    disp = np.outer(factor * shift_px, [direction[0], -direction[1]])
    return MarkerField(fieldgrid.rest_positions, fieldgrid.radius, disp)


@dataclass
class TactileFrame:
    """One recorded sensor frame: shaded image, marker positions, timestamp."""

    rgb: np.ndarray            # (H, W, 3) uint8, markers drawn in
    marker_positions: np.ndarray  # (N, 2) pixel coordinates
    timestamp: float           # seconds since gripper close

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")
        if self.rgb.dtype != np.uint8 or self.rgb.ndim != 3:
            raise ValueError("rgb must be an (H, W, 3) uint8 image")


def compose_frame(rgb: np.ndarray, markers: MarkerField | None,
                  timestamp: float) -> TactileFrame:
    """Draw markers as dark discs onto the image and assemble a frame."""
    img = np.array(rgb, dtype=np.uint8, copy=True)
    if markers is None or len(markers.rest_positions) == 0:
        return TactileFrame(img, np.zeros((0, 2)), timestamp)
    h, w = img.shape[:2]
    r = markers.radius
    span = int(np.floor(r))
    offsets = [(dx, dy) for dy in range(-span, span + 1)
               for dx in range(-span, span + 1) if dx * dx + dy * dy <= r * r]
    positions = markers.positions()
    for x, y in positions:
        cx, cy = int(round(x)), int(round(y))
        for dx, dy in offsets:
            px, py = cx + dx, cy + dy
            if 0 <= px < w and 0 <= py < h:
                img[py, px] = _MARKER_COLOR
    return TactileFrame(img, positions, timestamp)


# ---------------------------------------------------------------------------
# built-in calibration data


def analytic_sphere_press(camera_height: int, camera_width: int, pixel_pitch: float,
                          radius: float, depth: float,
                          center_px: tuple[float, float] | None = None) -> HeightMap:
    """Closed-form sphere-press height map, used for calibration presses."""
    if center_px is None:
        center_px = ((camera_width - 1) / 2.0, (camera_height - 1) / 2.0)
    jj, ii = np.meshgrid(np.arange(camera_width), np.arange(camera_height))
    r2 = ((jj - center_px[0]) ** 2 + (ii - center_px[1]) ** 2) * pixel_pitch ** 2
    dome = np.sqrt(np.maximum(radius * radius - r2, 0.0))
    depths = np.maximum(0.0, depth - radius + dome)
    depths[r2 >= radius * radius] = 0.0
    return HeightMap(depths, pixel_pitch)


def make_calibration_pairs(camera_height: int = 240, camera_width: int = 320,
                           pixel_pitch: float = 0.06, radius: float = 4.0,
                           depths: tuple = (0.3, 0.6, 1.0), n_positions: int = 5,
                           sigma: float = 2.0) -> list[tuple[HeightMap, np.ndarray]]:
    """Reference press set: rest frame plus sphere presses on a position cross."""
    cx, cy = (camera_width - 1) / 2.0, (camera_height - 1) / 2.0
    off = min(camera_width, camera_height) / 4.0
    centers = [(cx, cy), (cx - off, cy), (cx + off, cy), (cx, cy - off), (cx, cy + off)]
    rest = HeightMap(np.zeros((camera_height, camera_width)), pixel_pitch)
    pairs = [(rest, photometric_reference(rest, sigma))]
    for center in centers[:n_positions]:
        for depth in depths:
            hmap = analytic_sphere_press(camera_height, camera_width, pixel_pitch,
                                         radius, depth, center)
            pairs.append((hmap, photometric_reference(hmap, sigma)))
    return pairs
