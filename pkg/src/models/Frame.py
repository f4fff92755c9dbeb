# src/models/Frame.py
from dataclasses import dataclass

import numpy as np

FRAME_MAGIC = b"POTF"
FRAME_VERSION = 1


@dataclass
class FrameRecord:
    step: int
    time: float
    positions: np.ndarray  # (n, 3)
    velocities: np.ndarray  # (n, 3)
    psi: np.ndarray
    volumes: np.ndarray
    free_surface_areas: np.ndarray
    phase_ids: np.ndarray
    worst_rel_error: float
    newton_iters: int
    wall_time: float  # seconds
    flagged: bool = False

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.velocities = np.asarray(self.velocities, dtype=np.float64).reshape(-1, 3)
        self.psi = np.asarray(self.psi, dtype=np.float64).reshape(-1)
        self.volumes = np.asarray(self.volumes, dtype=np.float64).reshape(-1)
        self.free_surface_areas = np.asarray(self.free_surface_areas, dtype=np.float64).reshape(-1)
        self.phase_ids = np.asarray(self.phase_ids).reshape(-1).astype(int)
        n = self.n
        lengths = {self.velocities.shape[0], self.psi.shape[0], self.volumes.shape[0],
                   self.free_surface_areas.shape[0], self.phase_ids.shape[0]}
        if lengths != {n}:
            raise ValueError("Frame arrays must all have one entry per particle")

    @property
    def n(self) -> int:
        return int(self.positions.shape[0])
