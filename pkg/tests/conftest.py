import os
import tempfile
from pathlib import Path

# the ledger engine is created when config is imported
os.environ.setdefault("POTFLOW_LEDGER_FILE", str(Path(tempfile.mkdtemp(prefix="potflow-tests-")) / "runs.db"))

import numpy as np
import pytest

from src.services.geometry_service import box_halfspaces, make_domain
from src.utils.Helper import make_rng


def pytest_collection_modifyitems(config, items):
    if os.getenv("POTFLOW_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set POTFLOW_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def unit_box():
    return make_domain(box_halfspaces([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]))


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def lattice_sites():
    side = np.array([0.3, 0.5, 0.7])
    return np.stack(np.meshgrid(side, side, side, indexing="ij"), axis=-1).reshape(-1, 3)
