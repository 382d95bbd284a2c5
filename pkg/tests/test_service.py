import json

import numpy as np
import pytest
from starlette.testclient import TestClient

from tacsim.service import create_app

SMALL_SENSOR = {"sensor": {"width": 160, "height": 120, "pixel_pitch": 0.12}}


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app(), raise_server_exceptions=False) as c:
        yield c


class TestHealthAndObjects:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"

    def test_objects(self, client):
        r = client.get("/objects")
        names = [o["name"] for o in r.json()]
        assert {"box", "sphere", "cylinder", "bracket"} <= set(names)


class TestPress:
    def test_builtin_press(self, client, tmp_path):
        r = client.post("/press", json={
            "object": "sphere", "force": 2.0, "out_dir": str(tmp_path),
            "config": SMALL_SENSOR,
        })
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["achieved_volume_mm3"] == pytest.approx(80.0, rel=2e-3)
        assert body["iterations"] <= 60
        assert (tmp_path / "contact_map.png").exists()
        assert (tmp_path / "tactile.png").exists()

    def test_mesh_file_press(self, client, tmp_path):
        from conftest import write_cube_obj
        mesh_path = tmp_path / "cube.obj"
        write_cube_obj(mesh_path)
        r = client.post("/press", json={
            "mesh": str(mesh_path), "force": 1.0, "scale": 10.0,
            "out_dir": str(tmp_path / "out"), "config": SMALL_SENSOR,
        })
        assert r.status_code == 200, r.text

    def test_knorm_override(self, client, tmp_path):
        r = client.post("/press", json={
            "object": "sphere", "force": 2.0, "knorm": 20.0,
            "out_dir": str(tmp_path), "config": SMALL_SENSOR,
        })
        assert r.json()["target_volume_mm3"] == pytest.approx(40.0)

    def test_missing_mesh_422(self, client, tmp_path):
        r = client.post("/press", json={
            "force": 2.0, "out_dir": str(tmp_path), "config": SMALL_SENSOR,
        })
        assert r.status_code == 422
        assert "error" in r.json()


class TestGraspEndpoint:
    def test_successful_grasp(self, client, tmp_path):
        r = client.post("/grasp", json={
            "object": "box", "config": {"force": 8.0, "x": 0.0, "y": 0.0, "z": 40.0},
            "out_dir": str(tmp_path / "ep"), "sim_config": SMALL_SENSOR,
        })
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["label"] == "Success"
        assert body["frames"] == 30
        assert (tmp_path / "ep" / "episode.json").exists()

    def test_grasp_miss_is_422_with_machine_readable_error(self, client, tmp_path):
        r = client.post("/grasp", json={
            "object": "box", "config": {"force": 8.0, "x": 90.0, "y": 0.0, "z": 40.0},
            "out_dir": str(tmp_path / "ep"), "sim_config": SMALL_SENSOR,
        })
        assert r.status_code == 422
        body = r.json()
        assert body["error"] == "NoGraspContact"
        assert "message" in body


class TestSweepEndpoint:
    def test_sweep(self, client, tmp_path):
        spec = {"object": "box", "forces": [4.0, 8.0], "heights": [30.0, 50.0],
                "xy": [[0.0, 0.0]], "seed": 5, "train_count": 2, "test_count": 1}
        r = client.post("/sweep", json={
            "spec": spec, "out_dir": str(tmp_path), "sim_config": SMALL_SENSOR,
        })
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["episodes"] == 4
        assert body["train"] == 2 and body["test"] == 1
        assert (tmp_path / "manifest.jsonl").exists()


class TestCalibrationEndpoints:
    def test_contact_inline(self, client):
        presses = [[f, 40.0 * f] for f in (1.0, 2.0, 3.0, 4.0)]
        r = client.post("/calibrate-contact", json={"presses": presses})
        body = r.json()
        assert body["coefficient"] == pytest.approx(40.0)
        assert body["linearity_warning"] is False

    def test_contact_nonlinear_warns(self, client):
        presses = [[f, f * f] for f in (1.0, 2.0, 4.0, 8.0)]
        r = client.post("/calibrate-contact", json={"presses": presses})
        assert r.json()["linearity_warning"] is True

    def test_friction_inline_grid(self, client, tmp_path):
        # reference generated at mu=0.45 for the 0.7 kg box: S iff mu* <= 0.45
        forces = [5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
        labels = [["F", "F", "F", "S", "S", "S"], ["F", "F", "F", "S", "S", "S"]]
        r = client.post("/calibrate-friction", json={
            "object": "box",
            "grid": {"heights": [30.0, 50.0], "forces": forces, "labels": labels},
            "out_path": str(tmp_path / "friction.json"),
            "sim_config": SMALL_SENSOR,
        })
        assert r.status_code == 200, r.text
        body = r.json()
        assert 0.40 <= body["best_mu"] <= 0.50
        assert len(body["candidates"]) == 21
        saved = json.loads((tmp_path / "friction.json").read_text())
        assert saved["best_mu"] == body["best_mu"]


class TestRenderEndpoint:
    def test_render_roundtrip(self, client, tmp_path):
        from tacsim.geometry import save_heightmap_png
        from tacsim.optics import analytic_sphere_press
        hmap = analytic_sphere_press(120, 160, 0.12, 4.0, 1.0)
        hpath = tmp_path / "h.png"
        save_heightmap_png(hmap, hpath)

        r = client.post("/export-table", json={
            "out_path": str(tmp_path / "table.bin"), "config": SMALL_SENSOR})
        assert r.status_code == 200, r.text

        r = client.post("/render", json={
            "heightmap_png": str(hpath), "table_path": str(tmp_path / "table.bin"),
            "out_png": str(tmp_path / "img.png"),
        })
        assert r.status_code == 200, r.text
        from PIL import Image
        img = np.asarray(Image.open(tmp_path / "img.png"))
        assert img.shape == (120, 160, 3)
        assert img.std() > 1.0  # actually shaded, not a flat image


class TestSimulateGridEndpoint:
    def test_grid_csv(self, client, tmp_path):
        r = client.post("/simulate-grid", json={
            "object": "box", "heights": [30.0, 50.0], "forces": [5.0, 8.0],
            "mu": 0.45, "out_path": str(tmp_path / "grid.csv"),
            "sim_config": SMALL_SENSOR,
        })
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["labels"][0][0] == "F"  # mu* = 0.49 > 0.45 at 5 N
        assert body["labels"][0][1] == "S"
        assert (tmp_path / "grid.csv").exists()
