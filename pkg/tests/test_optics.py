import numpy as np
import pytest

from tacsim.errors import InsufficientCoverage
from tacsim.geometry import HeightMap
from tacsim.optics import (
    MarkerField,
    analytic_sphere_press,
    calibrate_lookup,
    compose_frame,
    displace_markers,
    gradients,
    load_lookup,
    make_calibration_pairs,
    photometric_reference,
    render_tactile,
    save_lookup,
    smooth_heightmap,
)

W, H, PITCH = 160, 120, 0.12


@pytest.fixture(scope="module")
def pairs():
    return make_calibration_pairs(H, W, PITCH)


@pytest.fixture(scope="module")
def table(pairs):
    return calibrate_lookup(pairs)


def press(depth=1.0, radius=4.0, center=None):
    return analytic_sphere_press(H, W, PITCH, radius, depth, center)


class TestSmoothing:
    def test_sigma_zero_identity(self):
        hmap = press()
        out = smooth_heightmap(hmap, 0.0)
        np.testing.assert_array_equal(out.depths, hmap.depths)

    def test_step_edge_becomes_monotone_ramp(self):
        depths = np.zeros((H, W))
        depths[:, W // 2:] = 1.0
        out = smooth_heightmap(HeightMap(depths, PITCH), 2.0)
        row = out.depths[H // 2, W // 2 - 10:W // 2 + 10]
        assert (np.diff(row) >= -1e-12).all()
        assert row[0] < 0.1 and row[-1] > 0.9

    def test_volume_preserved_within_1pct(self):
        hmap = press()
        before = hmap.depths.sum()
        after = smooth_heightmap(hmap, 2.0).depths.sum()
        assert after == pytest.approx(before, rel=0.01)


class TestGradients:
    def test_linear_plane(self):
        xs = (np.arange(W) - (W - 1) / 2) * PITCH
        depths = np.tile(0.1 * (xs - xs[0]), (H, 1))
        gx, gy = gradients(HeightMap(depths, PITCH))
        np.testing.assert_allclose(gx[1:-1, 1:-1], 0.1, atol=1e-12)
        np.testing.assert_allclose(gy[1:-1, 1:-1], 0.0, atol=1e-12)

    def test_constant_map(self):
        gx, gy = gradients(HeightMap(np.full((H, W), 0.7), PITCH))
        assert np.abs(gx).max() == 0.0
        assert np.abs(gy).max() == 0.0

    def test_sphere_center_zero_by_symmetry(self):
        # odd dimensions put a pixel exactly at the press center
        hmap = analytic_sphere_press(121, 161, PITCH, 4.0, 1.0)
        gx, gy = gradients(hmap)
        assert abs(gx[60, 80]) < 1e-12
        assert abs(gy[60, 80]) < 1e-12


class TestCalibration:
    def test_residual_within_2_levels(self, table):
        assert (table.residual_rms <= 2.0).all()

    def test_flat_reference_only_insufficient(self):
        flat = HeightMap(np.zeros((H, W)), PITCH)
        img = photometric_reference(flat)
        with pytest.raises(InsufficientCoverage):
            calibrate_lookup([(flat, img)] * 6)

    def test_too_few_pairs(self, pairs):
        with pytest.raises(InsufficientCoverage):
            calibrate_lookup(pairs[:3])

    def test_magnitude_rows_below_max_all_populated(self, pairs, table):
        gx_all, gy_all = [], []
        for hmap, _ in pairs:
            gx, gy = gradients(smooth_heightmap(hmap, table.sigma))
            gx_all.append(gx.ravel())
            gy_all.append(gy.ravel())
        d_idx, m_idx = table.bin_indices(np.concatenate(gx_all), np.concatenate(gy_all))
        row_counts = np.bincount(m_idx, minlength=table.magnitude_bins)
        assert (row_counts >= 10).all()

    def test_requires_rest_capture(self, pairs):
        without_rest = [p for p in pairs if p[0].depths.max() > 0]
        with pytest.raises(ValueError):
            calibrate_lookup(without_rest)

    def test_save_load_roundtrip(self, table, tmp_path):
        path = tmp_path / "table.bin"
        save_lookup(table, path)
        loaded = load_lookup(path)
        np.testing.assert_array_equal(loaded.coeffs, table.coeffs)
        np.testing.assert_array_equal(loaded.background, table.background)
        np.testing.assert_array_equal(loaded.residual_rms, table.residual_rms)
        assert loaded.max_magnitude == table.max_magnitude
        assert loaded.sigma == table.sigma
        assert loaded.pixel_pitch == table.pixel_pitch

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a table")
        with pytest.raises(ValueError):
            load_lookup(path)


class TestRenderTactile:
    def test_zero_map_is_background_bit_exact(self, table):
        zero = HeightMap(np.zeros((H, W)), PITCH)
        out = render_tactile(zero, table)
        np.testing.assert_array_equal(out, table.background)

    def test_calibration_roundtrip(self, pairs, table):
        for hmap, reference in pairs:
            out = render_tactile(hmap, table)
            err = out.astype(np.float64) - reference.astype(np.float64)
            rms = np.sqrt((err ** 2).mean(axis=(0, 1)))
            assert (rms <= table.residual_rms + 2.0).all()

    def test_purity_same_map_same_image(self, table):
        hmap = press(0.8)
        a = render_tactile(hmap, table)
        b = render_tactile(hmap, table)
        np.testing.assert_array_equal(a, b)

    def test_resolution_mismatch_rejected(self, table):
        wrong = HeightMap(np.zeros((H + 2, W)), PITCH)
        with pytest.raises(ValueError):
            render_tactile(wrong, table)

    def test_rotational_consistency(self, pairs):
        # square sensor so rot90 is an exact symmetry of the pixel grid
        n = 120
        sq_pairs = make_calibration_pairs(n, n, PITCH)
        sq_table = calibrate_lookup(sq_pairs)
        hmap = analytic_sphere_press(n, n, PITCH, 4.0, 1.0,
                                     center_px=((n - 1) / 2.0, (n - 1) / 2.0))
        rotated = HeightMap(np.rot90(hmap.depths).copy(), PITCH)
        base = render_tactile(hmap, sq_table)
        rot = render_tactile(rotated, sq_table)
        np.testing.assert_array_equal(rot[2:-2, 2:-2], base[2:-2, 2:-2])

    def test_outputs_bounded_no_nan(self, table):
        rng = np.random.default_rng(3)
        wild = HeightMap(rng.uniform(0, 30.0, size=(H, W)), PITCH)
        out = render_tactile(wild, table)
        assert out.dtype == np.uint8
        assert out.min() >= 0 and out.max() <= 255


class TestMarkers:
    def test_grid_inside_image(self):
        field = MarkerField.grid(W, H)
        pos = field.rest_positions
        assert (pos[:, 0] >= 0).all() and (pos[:, 0] < W).all()
        assert (pos[:, 1] >= 0).all() and (pos[:, 1] < H).all()
        assert len(pos) == 12 * 9

    def test_zero_shear_no_motion(self):
        field = MarkerField.grid(W, H)
        moved = displace_markers(field, 0.0, (0.0, -1.0), press())
        assert np.abs(moved.displacements).max() == 0.0

    def test_uniform_contact_exact_shift(self):
        field = MarkerField.grid(W, H)
        full = HeightMap(np.full((H, W), 0.5), PITCH)
        moved = displace_markers(field, 0.6, (1.0, 0.0), full)
        shift_px = 0.6 / PITCH
        np.testing.assert_allclose(moved.displacements[:, 0], shift_px)
        np.testing.assert_allclose(moved.displacements[:, 1], 0.0)
        total = np.abs(moved.displacements[:, 0]).sum()
        assert total == pytest.approx(shift_px * len(field.rest_positions))

    def test_linear_in_shear_force(self):
        from tacsim.contact import ContactParams, shear_from_force
        params = ContactParams(k_s=0.2)
        field = MarkerField.grid(W, H)
        full = HeightMap(np.full((H, W), 0.5), PITCH)

        def summed_motion(force):
            displacement, _ = shear_from_force(force, params)
            moved = displace_markers(field, displacement, (0.0, -1.0), full)
            return np.linalg.norm(moved.displacements, axis=1).sum()

        assert summed_motion(2.0) == pytest.approx(2 * summed_motion(1.0), rel=1e-12)

    def test_falloff_outside_footprint(self):
        depths = np.zeros((H, W))
        depths[:, :W // 2] = 1.0  # contact on the left half
        hmap = HeightMap(depths, PITCH)
        positions = np.array([[W // 2 - 10, H // 2],   # inside
                              [W // 2 + 4, H // 2],    # 5 px outside
                              [W // 2 + 60, H // 2]])  # far outside
        field = MarkerField(positions, 3.0)
        moved = displace_markers(field, 1.2, (0.0, -1.0), hmap)
        shift = 1.2 / PITCH
        assert moved.displacements[0, 1] == pytest.approx(shift)
        assert 0.0 < moved.displacements[1, 1] < shift
        assert moved.displacements[2, 1] == 0.0


class TestComposeFrame:
    def test_no_markers_unchanged(self, table):
        frame = compose_frame(table.background, None, 0.0)
        np.testing.assert_array_equal(frame.rgb, table.background)

    def test_disc_pixel_count(self):
        img = np.full((200, 200, 3), 200, dtype=np.uint8)
        field = MarkerField(np.array([[100.0, 100.0]]), 3.0)
        frame = compose_frame(img, field, 0.5)
        dark = (frame.rgb != 200).any(axis=2)
        assert dark.sum() == 29  # rasterized disc of radius 3
        ys, xs = np.nonzero(dark)
        assert xs.mean() == pytest.approx(100.0) and ys.mean() == pytest.approx(100.0)

    def test_timestamp_propagates(self, table):
        frame = compose_frame(table.background, MarkerField.grid(W, H), 1.25)
        assert frame.timestamp == 1.25

    def test_negative_timestamp_rejected(self, table):
        with pytest.raises(ValueError):
            compose_frame(table.background, None, -0.1)
