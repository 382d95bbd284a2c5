import json
from pathlib import Path

import pytest

from tacsim.cli import main
from conftest import write_cube_obj

SMALL_CONFIG = {"sensor": {"width": 160, "height": 120, "pixel_pitch": 0.12}}


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG))
    return str(path)


def run_cli(capsys, *args):
    code = main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestPressCommand:
    def test_press_builtin(self, tmp_path, config_file, capsys):
        code, out, _ = run_cli(capsys, "--config", config_file, "press",
                               "--object", "sphere", "--force", "2",
                               "--out", str(tmp_path / "press"))
        assert code == 0
        body = json.loads(out)
        assert body["achieved_volume_mm3"] == pytest.approx(80.0, rel=2e-3)
        assert Path(body["tactile_png"]).exists()

    def test_press_mesh_file(self, tmp_path, config_file, capsys):
        mesh = tmp_path / "cube.obj"
        write_cube_obj(mesh)
        code, out, _ = run_cli(capsys, "--config", config_file, "press",
                               "--mesh", str(mesh), "--scale", "10",
                               "--force", "1", "--out", str(tmp_path / "press"))
        assert code == 0

    def test_press_error_machine_readable(self, tmp_path, config_file, capsys):
        code, _, err = run_cli(capsys, "--config", config_file, "press",
                               "--mesh", str(tmp_path / "missing.obj"),
                               "--force", "2", "--out", str(tmp_path / "press"))
        assert code == 2
        body = json.loads(err.strip())
        assert body["error"] == "MeshLoadError"


class TestGraspCommand:
    def test_grasp(self, tmp_path, config_file, capsys):
        code, out, _ = run_cli(capsys, "--config", config_file, "grasp",
                               "--object", "box", "--config", "8,0,0,40",
                               "--out", str(tmp_path / "ep"))
        assert code == 0
        assert json.loads(out)["label"] == "Success"

    def test_grasp_failure_label(self, tmp_path, config_file, capsys):
        code, out, _ = run_cli(capsys, "--config", config_file, "grasp",
                               "--object", "box", "--config", "5,0,0,40",
                               "--mu", "0.3", "--out", str(tmp_path / "ep"))
        assert code == 0
        assert json.loads(out)["label"] == "TranslationalSlip"

    def test_grasp_miss_exit_code(self, tmp_path, config_file, capsys):
        code, _, err = run_cli(capsys, "--config", config_file, "grasp",
                               "--object", "box", "--config", "8,90,0,40",
                               "--out", str(tmp_path / "ep"))
        assert code == 2
        assert json.loads(err.strip())["error"] == "NoGraspContact"


class TestSweepCommand:
    def test_sweep_and_seed_override(self, tmp_path, config_file, capsys):
        spec = {"object": "box", "forces": [4.0, 8.0], "heights": [30.0, 50.0],
                "xy": [[0.0, 0.0]], "seed": 1, "train_count": 2, "test_count": 1}
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        code, out, _ = run_cli(capsys, "--config", config_file, "--seed", "9",
                               "sweep", "--spec", str(spec_path),
                               "--out", str(tmp_path / "data"))
        assert code == 0
        body = json.loads(out)
        assert body["episodes"] == 4
        assert (tmp_path / "data" / "manifest.jsonl").exists()

    def test_sweep_no_frames(self, tmp_path, config_file, capsys):
        spec = {"object": "box", "forces": [4.0], "heights": [30.0],
                "xy": [[0.0, 0.0]], "seed": 1}
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        code, out, _ = run_cli(capsys, "--config", config_file, "sweep",
                               "--spec", str(spec_path), "--no-frames",
                               "--out", str(tmp_path / "data"))
        assert code == 0
        entry = json.loads((tmp_path / "data" / "manifest.jsonl").read_text())
        assert not (tmp_path / "data" / entry["path"] / "frames" / "0000.png").exists()


class TestCalibrationCommands:
    def test_calibrate_contact(self, tmp_path, capsys):
        presses = tmp_path / "presses.csv"
        presses.write_text("force,volume\n1,40\n2,80\n3,120\n4,160\n")
        out_path = tmp_path / "params.json"
        code, out, _ = run_cli(capsys, "calibrate-contact", "--presses", str(presses),
                               "--out", str(out_path))
        assert code == 0
        assert json.loads(out)["coefficient"] == pytest.approx(40.0)
        assert json.loads(out_path.read_text())["coefficient"] == pytest.approx(40.0)

    def test_simulate_grid_then_calibrate_friction(self, tmp_path, config_file, capsys):
        grid_csv = tmp_path / "grid.csv"
        code, _, _ = run_cli(capsys, "--config", config_file, "simulate-grid",
                             "--object", "box", "--heights", "30,50",
                             "--forces", "5,6,7,8,9,10", "--mu", "0.45",
                             "--out", str(grid_csv))
        assert code == 0
        assert grid_csv.exists()

        result_path = tmp_path / "friction.json"
        code, out, _ = run_cli(capsys, "--config", config_file, "calibrate-friction",
                               "--reference", str(grid_csv), "--object", "box",
                               "--out", str(result_path))
        assert code == 0
        body = json.loads(out)
        assert 0.40 <= body["best_mu"] <= 0.50
        assert len(body["mismatch_counts"]) == 21


class TestRenderCommand:
    def test_render_with_exported_table(self, tmp_path, config_file, capsys):
        from tacsim.geometry import save_heightmap_png
        from tacsim.optics import analytic_sphere_press
        hpath = tmp_path / "h.png"
        save_heightmap_png(analytic_sphere_press(120, 160, 0.12, 4.0, 1.0), hpath)
        table_path = tmp_path / "table.bin"
        code, _, _ = run_cli(capsys, "--config", config_file, "export-table",
                             "--out", str(table_path))
        assert code == 0
        code, out, _ = run_cli(capsys, "render", "--heightmap", str(hpath),
                               "--table", str(table_path),
                               "--out", str(tmp_path / "img.png"))
        assert code == 0
        assert (tmp_path / "img.png").exists()


class TestAblateCommand:
    def test_ablate_friction(self, tmp_path, config_file, capsys):
        spec = {"object": "box", "forces": [4.0, 8.0], "heights": [30.0],
                "xy": [[0.0, 0.0]], "seed": 1}
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        code, out, _ = run_cli(capsys, "--config", config_file, "ablate",
                               "--kind", "friction", "--values", "0.2,0.8",
                               "--spec", str(spec_path), "--no-frames",
                               "--out", str(tmp_path / "abl"))
        assert code == 0
        body = json.loads(out)
        assert len(body["rows"]) == 2
        assert (tmp_path / "abl" / "ablation_friction.json").exists()
