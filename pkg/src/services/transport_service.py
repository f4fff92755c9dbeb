# src/services/transport_service.py
"""
Semi-discrete partial optimal transport: damped Newton iterations on the site
weights until every restricted cell holds its prescribed volume.
"""
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from src.models.Geometry import ConvexCell
from src.models.RestrictedCell import RestrictedCell
from src.models.Transport import CgResult, IterationRecord, PotProblem, PotState
from src.services.laguerre_service import SpatialGrid, build_diagram
from src.services.restricted_cell_service import evaluate_cells
from src.utils.Errors import InitFailure
from src.utils.Helper import StageTimer
from src.utils.Logger import logger

IterationCallback = Callable[[IterationRecord], None]


def weight_floor(problem: PotProblem) -> float:
    return 1e-12 * problem.domain.diagonal ** 2


def evaluate_state(
    problem: PotProblem,
    psi: np.ndarray,
    timer: Optional[StageTimer] = None,
    grid: Optional[SpatialGrid] = None,
) -> Tuple[List[Optional[ConvexCell]], List[RestrictedCell]]:
    """Builds the Laguerre diagram for ``psi`` and restricts every cell to its ball."""
    timer = timer or StageTimer()
    settings = problem.settings
    with timer.stage("diagram"):
        diagram = build_diagram(problem.positions, psi, problem.domain, grid=grid,
                                ball_aware=settings.ball_aware, threads=settings.threads)
    with timer.stage("evaluation"):
        cells = evaluate_cells(diagram, problem.positions, psi, threads=settings.threads)
    return diagram, cells


def relative_errors(nu: np.ndarray, cells: Sequence[RestrictedCell]) -> np.ndarray:
    volumes = np.array([c.volume for c in cells])
    return np.abs(volumes - nu) / nu


def assemble_gradient(nu: np.ndarray, cells: Sequence[RestrictedCell]) -> np.ndarray:
    """g_i = nu_i - |V_i|; positive for under-filled cells."""
    return np.asarray(nu, dtype=float) - np.array([c.volume for c in cells])


def assemble_hessian(
    positions: np.ndarray,
    psi: np.ndarray,
    cells: Sequence[RestrictedCell],
    psi_floor: float,
) -> csr_matrix:
    """
    Jacobian of the cell volumes with respect to the weights (the negated Hessian
    of the dual functional). Off-diagonal -|B_ij|/(2 D_ij), diagonal the sum of
    the neighbor terms plus |K_i|/(2 sqrt(psi_i)).
    """
    n = len(cells)
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    diagonal = np.zeros(n)
    for i, cell in enumerate(cells):
        root = math.sqrt(max(float(psi[i]), psi_floor))
        if cell.is_empty:
            diagonal[i] = 2.0 * math.pi * root
            continue
        for facet in cell.site_facets():
            j = facet.tag.index
            dist = float(np.linalg.norm(positions[j] - positions[i]))
            coupling = 0.5 * facet.area / dist
            rows.append(i)
            cols.append(j)
            vals.append(-coupling)
            diagonal[i] += coupling
        diagonal[i] += 0.5 * cell.free_surface_area / root
        if diagonal[i] <= 0.0:
            diagonal[i] = 2.0 * math.pi * root
    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(diagonal.tolist())
    h = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return ((h + h.T) * 0.5).tocsr()


def cg_solve(h: csr_matrix, b: np.ndarray, tol: float = 1e-3, max_iter: int = 1000) -> CgResult:
    """Jacobi-preconditioned conjugate gradients; stops at ||Hx - b|| <= tol ||b||."""
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return CgResult(x=x, iterations=0, residual=0.0, converged=True)
    diag = h.diagonal()
    inv_diag = np.where(diag > 0.0, 1.0 / np.where(diag > 0.0, diag, 1.0), 1.0)

    r = b.copy()
    z = inv_diag * r
    d = z.copy()
    rz = float(r @ z)
    residual = b_norm
    for it in range(1, max_iter + 1):
        hd = h @ d
        curvature = float(d @ hd)
        if curvature <= 0.0:
            logger.warning(f"CG breakdown after {it - 1} iterations (curvature {curvature:.3e})")
            return CgResult(x=x, iterations=it - 1, residual=residual / b_norm, converged=False, breakdown=True)
        step = rz / curvature
        x += step * d
        r -= step * hd
        residual = float(np.linalg.norm(r))
        if residual <= tol * b_norm:
            return CgResult(x=x, iterations=it, residual=residual / b_norm, converged=True)
        z = inv_diag * r
        rz_next = float(r @ z)
        d = z + (rz_next / rz) * d
        rz = rz_next
    return CgResult(x=x, iterations=max_iter, residual=residual / b_norm, converged=False)


def equivalent_radii(nu: np.ndarray) -> np.ndarray:
    return (3.0 * np.asarray(nu, dtype=float) / (4.0 * math.pi)) ** (1.0 / 3.0)


def init_weights(
    problem: PotProblem,
    previous: Optional[np.ndarray] = None,
    timer: Optional[StageTimer] = None,
) -> Tuple[np.ndarray, int]:
    """
    Starting weights with every restricted cell non-empty, and the number of
    warm-start rescues. A cold start uses psi_i = kappa * r_i^2 for the ball
    radius r_i of volume nu_i, doubling kappa from 1.
    """
    radii = equivalent_radii(problem.nu)
    max_kappa = problem.settings.max_kappa
    if previous is not None:
        previous = np.asarray(previous, dtype=float).reshape(-1)
        if previous.shape[0] != problem.n:
            raise InitFailure(f"Warm start has {previous.shape[0]} weights for {problem.n} sites")
        floor = (0.5 * radii) ** 2
        rescued = previous < floor
        psi = np.maximum(previous, floor)
        rescues = int(rescued.sum())
        kappa = 1.0
        while True:
            _, cells = evaluate_state(problem, psi, timer)
            empty = np.array([c.is_empty for c in cells])
            if not empty.any():
                if rescues:
                    logger.warning(f"Warm start rescued {rescues} cells")
                return psi, rescues
            kappa *= 2.0
            if kappa > max_kappa:
                raise InitFailure(f"{int(empty.sum())} cells stay empty after warm-start rescue")
            psi = np.where(empty, np.maximum(psi, kappa * radii ** 2), psi)
            rescues += int(empty.sum())

    kappa = 1.0
    while kappa <= max_kappa:
        psi = kappa * radii ** 2
        _, cells = evaluate_state(problem, psi, timer)
        empty = sum(c.is_empty for c in cells)
        if empty == 0:
            logger.debug(f"Cold start accepted with kappa={kappa:g}")
            return psi, 0
        kappa *= 2.0
    raise InitFailure(f"Could not make every cell non-empty with kappa up to {max_kappa:g}")


def newton_solve(
    problem: PotProblem,
    psi_init: Optional[np.ndarray] = None,
    timer: Optional[StageTimer] = None,
    on_iteration: Optional[IterationCallback] = None,
) -> PotState:
    """
    Damped Newton on the weights. A step is accepted once every cell keeps at
    least half of min(min nu, min initial volume); non-convergence returns a
    flagged state rather than raising.
    """
    settings = problem.settings
    timer = timer or StageTimer()
    rescues = 0
    if psi_init is None:
        psi, rescues = init_weights(problem, timer=timer)
    else:
        psi = np.asarray(psi_init, dtype=float).copy()
    grid = SpatialGrid.build(problem.positions, problem.domain.lower, problem.domain.upper, problem.domain.volume)
    psi_floor = weight_floor(problem)

    _, cells = evaluate_state(problem, psi, timer, grid)
    errors = relative_errors(problem.nu, cells)
    worst = float(errors.max()) if len(errors) else 0.0
    volume_floor = 0.5 * min(float(problem.nu.min()), float(min(c.volume for c in cells)))
    history: List[IterationRecord] = []

    state = PotState(psi=psi, cells=cells, worst_rel_error=worst, newton_iters=0, rescues=rescues)
    iteration = 0
    while worst > settings.tolerance and iteration < settings.max_newton:
        iteration += 1
        with timer.stage("solve"):
            g = assemble_gradient(problem.nu, cells)
            h = assemble_hessian(problem.positions, psi, cells, psi_floor)
            cg_tol = settings.cg_tol * (0.1 if worst < 10.0 * settings.tolerance else 1.0)
            result = cg_solve(h, g, tol=cg_tol, max_iter=settings.cg_max_iter)
        u = result.x

        alpha = 1.0
        accepted = False
        while alpha >= settings.min_alpha:
            candidate = psi + alpha * u
            if np.all(candidate >= 0.0):
                _, trial = evaluate_state(problem, candidate, timer, grid)
                if min(c.volume for c in trial) >= volume_floor:
                    psi, cells = candidate, trial
                    accepted = True
                    break
            alpha *= 0.5

        if not accepted:
            logger.warning(f"Damping stalled at iteration {iteration} (alpha < {settings.min_alpha:g})")
            state.stalled = True
            record = IterationRecord(iteration=iteration, worst_rel_error=worst, alpha=0.0,
                                     cg_iterations=result.iterations)
            history.append(record)
            if on_iteration:
                on_iteration(record)
            break

        errors = relative_errors(problem.nu, cells)
        worst = float(errors.max())
        record = IterationRecord(iteration=iteration, worst_rel_error=worst, alpha=alpha,
                                 cg_iterations=result.iterations)
        history.append(record)
        logger.debug(f"newton {iteration}: worst={worst:.3e} alpha={alpha:g} cg={result.iterations}")
        if on_iteration:
            on_iteration(record)

    state.psi = psi
    state.cells = cells
    state.worst_rel_error = worst
    state.newton_iters = iteration
    state.converged = worst <= settings.tolerance
    state.history = history
    state.timings = dict(timer.totals)
    if state.converged:
        logger.info(f"Transport solve converged in {iteration} iterations (worst error {worst:.3e})")
    else:
        logger.warning(f"Transport solve not converged after {iteration} iterations (worst error {worst:.3e})")
    return state
