# src/models/Transport.py
"""Sites, the partial optimal transport problem and the Newton solver state."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.sparse import csr_matrix

from src.models.Geometry import Domain
from src.models.RestrictedCell import RestrictedCell


@dataclass
class Site:
    p: np.ndarray
    psi: float
    nu: float
    phase: int = 0

    def __post_init__(self):
        if self.psi < 0.0:
            raise ValueError("Site weight must be non-negative")
        if self.nu <= 0.0:
            raise ValueError("Prescribed volume must be positive")


@dataclass
class SolverSettings:
    tolerance: float = 0.01  # worst-cell relative volume error
    max_newton: int = 100
    cg_tol: float = 1e-3
    cg_max_iter: int = 1000
    min_alpha: float = 2.0 ** -20
    max_kappa: float = 2.0 ** 10
    ball_aware: bool = True
    threads: int = 1


@dataclass
class PotProblem:
    positions: np.ndarray  # (n, 3)
    nu: np.ndarray  # (n,)
    domain: Domain
    settings: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.nu = np.asarray(self.nu, dtype=float).reshape(-1)
        if self.positions.shape[0] != self.nu.shape[0]:
            raise ValueError("positions and nu must have the same length")
        if np.any(self.nu <= 0.0):
            raise ValueError("Every prescribed volume must be positive")
        if float(self.nu.sum()) >= self.domain.volume:
            raise ValueError(
                f"Prescribed volume {self.nu.sum():.6g} does not fit in the domain ({self.domain.volume:.6g})"
            )

    @staticmethod
    def from_sites(sites: List[Site], domain: Domain, settings: Optional[SolverSettings] = None) -> "PotProblem":
        return PotProblem(
            positions=np.array([s.p for s in sites], dtype=float),
            nu=np.array([s.nu for s in sites], dtype=float),
            domain=domain,
            settings=settings or SolverSettings(),
        )

    @property
    def n(self) -> int:
        return int(self.nu.shape[0])


@dataclass
class IterationRecord:
    iteration: int
    worst_rel_error: float
    alpha: float
    cg_iterations: int


@dataclass
class PotState:
    psi: np.ndarray
    cells: List[RestrictedCell]
    worst_rel_error: float
    newton_iters: int
    converged: bool = False
    stalled: bool = False
    rescues: int = 0
    history: List[IterationRecord] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return not self.converged

    @property
    def volumes(self) -> np.ndarray:
        return np.array([c.volume for c in self.cells])

    @property
    def free_surface_areas(self) -> np.ndarray:
        return np.array([c.free_surface_area for c in self.cells])


@dataclass
class CgResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    breakdown: bool = False


SparseSpd = csr_matrix
