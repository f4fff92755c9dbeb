import json

import numpy as np
import pandas as pd
import pytest

from main import build_parser, run
from src.services.geometry_service import box_halfspaces, make_domain
from src.services.frame_service import encode_frame, frame_path, read_frame
from src.services.laguerre_service import build_diagram
from src.services.restricted_cell_service import evaluate_cells
from src.utils.DB_Utils import describe_exit_code, recent_runs


@pytest.fixture
def tiny_scene(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({
        "name": "tiny",
        "domain": {"box": {"lower": [0, 0, 0], "upper": [1, 1, 1]}},
        "phases": [{"id": 0, "viscosity": 0.1}],
        "emitters": [{"lower": [0.4, 0.4, 0.4], "upper": [0.6, 0.6, 0.6], "spacing": 0.1}],
        "sim": {"dt": 0.005, "epsilon": 0.05, "gravity": [0, 0, 0], "steps": 50},
    }), encoding="utf-8")
    return path


def test_parser_knows_every_command():
    parser = build_parser()
    for argv in (["simulate", "dam_break"], ["render", "f.potf", "--scene", "dam_break"], ["validate"],
                 ["bench", "--sizes", "100"], ["runs", "--limit", "3"]):
        assert parser.parse_args(argv).command == argv[0]


def test_simulate_then_render(tiny_scene, tmp_path):
    out = tmp_path / "run"
    assert run(["simulate", str(tiny_scene), "--out", str(out), "--steps", "2"]) == 0

    stats = pd.read_csv(out / "stats.csv")
    assert stats["step"].tolist() == [1, 2]
    assert not stats["flagged"].any()
    frame = read_frame(frame_path(out, 2))
    assert frame.n == 8 and frame.step == 2
    diagram = build_diagram(frame.positions, frame.psi, make_domain(box_halfspaces([0, 0, 0], [1, 1, 1])))
    volumes = [c.volume for c in evaluate_cells(diagram, frame.positions, frame.psi)]
    assert np.allclose(volumes, frame.volumes, rtol=0.0, atol=1e-12)

    image = tmp_path / "frame.ppm"
    code = run(["render", str(frame_path(out, 2)), "--scene", str(tiny_scene), "--out", str(image),
                "--width", "16", "--height", "12", "--samples", "50", "--points-out", str(tmp_path / "cloud.xyz")])
    assert code == 0
    assert image.read_bytes().startswith(b"P6")
    assert (tmp_path / "cloud.xyz").exists()

    depth = tmp_path / "depth.ppm"
    assert run(["render", str(frame_path(out, 2)), "--scene", str(tiny_scene), "--out", str(depth),
                "--mode", "depth", "--traversal", "surface", "--width", "16", "--height", "12"]) == 0
    assert depth.read_bytes().startswith(b"P6")

    latest = recent_runs(limit=1, command="render")[0]
    assert latest.exit_code == 0
    assert latest.status_description == "Success"


def test_warm_start_continues_the_step_count(tiny_scene, tmp_path):
    first = tmp_path / "first"
    assert run(["simulate", str(tiny_scene), "--out", str(first), "--steps", "1"]) == 0
    second = tmp_path / "second"
    code = run(["simulate", str(tiny_scene), "--out", str(second), "--steps", "1",
                "--warm-start", str(frame_path(first, 1))])
    assert code == 0
    assert frame_path(second, 2).exists()


def test_config_errors_exit_with_code_2(tmp_path, capsys):
    assert run(["simulate", str(tmp_path / "missing.json")]) == 2
    latest = recent_runs(limit=1, command="simulate")[0]
    assert latest.exit_code == 2
    assert latest.status_description == "Config Error"
    assert "not found" in latest.error_message
    capsys.readouterr()
    assert run(["runs", "--command", "simulate", "--limit", "1"]) == 0
    listing = capsys.readouterr().out
    assert "Config Error" in listing
    assert latest.id in listing


def test_render_rejects_a_bad_field_of_view(tiny_scene, tmp_path):
    assert run(["render", str(tmp_path / "f.potf"), "--scene", str(tiny_scene), "--fov", "180"]) == 2


def test_exit_code_descriptions():
    assert describe_exit_code(0) == "Success"
    assert describe_exit_code(3) == "Non-Convergence"
    assert describe_exit_code(4) == "Validation Failure"
    assert describe_exit_code(1) == "Error"


@pytest.mark.slow
def test_geometry_validation_passes():
    assert run(["validate", "--suite", "geometry", "--samples", "50000"]) == 0


@pytest.mark.slow
def test_bench_writes_a_timing_table(tmp_path):
    csv = tmp_path / "bench.csv"
    assert run(["bench", "--sizes", "60,120", "--steps", "1", "--csv", str(csv)]) == 0
    table = pd.read_csv(csv)
    assert len(table) == 2
    assert {"particles", "step_s"} <= set(table.columns)
    assert (table["step_s"] > 0).all()


def test_frames_do_not_depend_on_the_thread_count(tiny_scene, tmp_path):
    for threads in (1, 3):
        assert run(["simulate", str(tiny_scene), "--out", str(tmp_path / f"t{threads}"), "--steps", "2",
                    "--threads", str(threads)]) == 0
    serial, pooled = read_frame(frame_path(tmp_path / "t1", 2)), read_frame(frame_path(tmp_path / "t3", 2))
    serial.wall_time = pooled.wall_time = 0.0
    assert encode_frame(serial) == encode_frame(pooled)
