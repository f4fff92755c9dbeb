# src/models/Fluid.py
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.models.Transport import SolverSettings


@dataclass
class Phase:
    id: int
    density: float = 1000.0
    viscosity: float = 0.0
    surface_tension: float = 0.0
    boundary_affinity: Dict[int, float] = field(default_factory=dict)  # domain face -> mu
    default_affinity: float = 0.0

    def __post_init__(self):
        if self.density <= 0.0:
            raise ValueError(f"Phase {self.id}: density must be positive")
        if self.viscosity < 0.0 or self.surface_tension < 0.0:
            raise ValueError(f"Phase {self.id}: viscosity and surface tension must be non-negative")

    def affinity(self, face: int) -> float:
        return self.boundary_affinity.get(face, self.default_affinity)


@dataclass
class SimParams:
    dt: float
    epsilon: float  # spring strength
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    viscosity_table: Dict[Tuple[int, int], float] = field(default_factory=dict)
    solver: SolverSettings = field(default_factory=SolverSettings)
    viscosity_cg_tol: float = 1e-10
    best_effort: bool = False

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.dt <= 0.0:
            raise ValueError("Time step must be positive")
        if self.epsilon <= 0.0:
            raise ValueError("Spring strength epsilon must be positive")


@dataclass
class FluidState:
    positions: np.ndarray  # (n, 3)
    velocities: np.ndarray  # (n, 3)
    nu: np.ndarray  # (n,)
    phase_ids: np.ndarray  # (n,) ints
    psi: Optional[np.ndarray] = None  # carried from the previous solve
    step: int = 0
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        self.nu = np.asarray(self.nu, dtype=float).reshape(-1)
        self.phase_ids = np.asarray(self.phase_ids, dtype=int).reshape(-1)
        n = self.positions.shape[0]
        if not (self.velocities.shape[0] == self.nu.shape[0] == self.phase_ids.shape[0] == n):
            raise ValueError("Per-particle arrays must have the same length")

    @property
    def n(self) -> int:
        return int(self.positions.shape[0])

    def masses(self, phases: Sequence[Phase]) -> np.ndarray:
        density = {p.id: p.density for p in phases}
        return np.array([density[int(k)] for k in self.phase_ids]) * self.nu

    def copy(self) -> "FluidState":
        return FluidState(
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            nu=self.nu.copy(),
            phase_ids=self.phase_ids.copy(),
            psi=None if self.psi is None else self.psi.copy(),
            step=self.step,
            time=self.time,
        )


@dataclass
class BoundaryContact:
    """Restricted facet shared by particle ``i`` and domain face ``face``."""
    i: int
    face: int
    area: float
    distance: float  # from the site to the face plane
    normal: np.ndarray  # outward face normal
    foot: np.ndarray  # projection of the site on the face plane


@dataclass
class StepRecord:
    step: int
    time: float
    worst_rel_error: float
    newton_iters: int
    total_volume: float
    kinetic_energy: float
    free_surface_area: float
    momentum: np.ndarray
    wall_ms: float
    flagged: bool = False
    empty_force_events: int = 0
    rescues: int = 0
    fallbacks: int = 0
    timings: Dict[str, float] = field(default_factory=dict)

    def as_row(self) -> Dict[str, float]:
        return {
            "step": self.step,
            "time": self.time,
            "worst_rel_error": self.worst_rel_error,
            "newton_iters": self.newton_iters,
            "total_volume": self.total_volume,
            "kinetic_energy": self.kinetic_energy,
            "free_surface_area": self.free_surface_area,
            "wall_ms": self.wall_ms,
            "flagged": self.flagged,
            "empty_force_events": self.empty_force_events,
            "rescues": self.rescues,
            "fallbacks": self.fallbacks,
            **{f"{name}_ms": 1000.0 * value for name, value in self.timings.items()},
        }


