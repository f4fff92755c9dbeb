import json
import logging

import numpy as np
import pytest

from config import resolve_threads
from src.utils.Errors import OtNonConvergence, PotflowError, ValidationFailure
from src.utils.Helper import StageTimer, generate_id, make_rng, parallel_map, plane_basis
from src.utils.Logger import JsonLineFormatter


def test_log_lines_are_json():
    record = logging.LogRecord("potflow_app_logger", logging.WARNING, __file__, 7, 'bad "value"\nnext', None, None)
    payload = json.loads(JsonLineFormatter().format(record))
    assert payload["level"] == "WARNING"
    assert payload["message"] == 'bad "value"\nnext'


def test_parallel_map_keeps_order():
    items = list(range(50))
    assert parallel_map(lambda x: x * x, items, threads=4) == [x * x for x in items]


def test_streams_are_reproducible_and_distinct():
    assert np.array_equal(make_rng(3, 1).random(5), make_rng(3, 1).random(5))
    assert not np.array_equal(make_rng(3, 1).random(5), make_rng(3, 2).random(5))


@pytest.mark.parametrize("axis", [[0, 0, 1], [1, 0, 0], [0.3, -0.4, 0.8]])
def test_plane_basis_is_right_handed(axis):
    u, w = plane_basis(np.array(axis, dtype=float))
    n = np.asarray(axis) / np.linalg.norm(axis)
    assert np.allclose(np.cross(u, w), n)
    assert abs(u @ w) < 1e-12


def test_stage_timer_accumulates():
    timer = StageTimer()
    for _ in range(2):
        with timer.stage("solve"):
            pass
    other = StageTimer()
    with other.stage("diagram"):
        pass
    timer.merge(other)
    assert set(timer.totals) == {"solve", "diagram"}


def test_generated_ids():
    assert len(generate_id()) == 14


def test_thread_resolution(monkeypatch):
    monkeypatch.setenv("POTFLOW_THREADS", "6")
    assert resolve_threads(None) == 6
    assert resolve_threads(2) == 2
    monkeypatch.setenv("POTFLOW_THREADS", "many")
    assert resolve_threads(None) == 1


def test_exit_codes():
    assert PotflowError("x").exit_code == 1
    assert PotflowError("x", exit_code=5).exit_code == 5
    assert OtNonConvergence("x").exit_code == 3
    assert ValidationFailure("x").exit_code == 4
