# src/services/fluid_service.py
"""
Free-surface fluid time stepping.

Each step moves the particles, projects them onto prescribed-volume cells with
the partial transport solver, then integrates spring pressure, gravity and
surface tension with an implicit viscosity solve.
"""
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, diags

from src.models.Fluid import BoundaryContact, FluidState, Phase, SimParams, StepRecord
from src.models.Geometry import Domain
from src.models.RestrictedCell import RestrictedCell
from src.models.Transport import PotProblem, PotState
from src.services.transport_service import cg_solve, init_weights, newton_solve
from src.utils.Errors import OtNonConvergence
from src.utils.Helper import StageTimer
from src.utils.Logger import logger


def pressure_force(cell: RestrictedCell, x: np.ndarray, epsilon: float) -> Optional[np.ndarray]:
    """Spring pull (c - x) / epsilon^2 toward the cell centroid; ``None`` for an empty cell."""
    if cell.is_empty:
        return None
    return (cell.centroid - x) / (epsilon * epsilon)


def laplacian_weights(
    positions: np.ndarray,
    cells: Sequence[RestrictedCell],
    domain: Domain,
) -> Tuple[csr_matrix, List[BoundaryContact]]:
    """
    Symmetric cotan weights w_ij = |B_ij| / (2 |p_j - p_i|) over restricted
    facets shared by two particles, and the contacts with domain faces.
    """
    n = len(cells)
    rows, cols, vals = [], [], []
    contacts: List[BoundaryContact] = []
    floor = domain.tol
    for i, cell in enumerate(cells):
        for facet in cell.facets:
            if facet.tag.is_site:
                j = facet.tag.index
                rows.append(i)
                cols.append(j)
                vals.append(0.5 * facet.area / float(np.linalg.norm(positions[j] - positions[i])))
            elif facet.tag.is_domain:
                plane = facet.plane
                distance = max(plane.d - float(plane.n @ positions[i]), floor)
                contacts.append(BoundaryContact(i=i, face=facet.tag.index, area=facet.area, distance=distance,
                                                normal=plane.n, foot=plane.project(positions[i])))
    w = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    # each shared facet is seen from both sides; average the two estimates
    return ((w + w.T) * 0.5).tocsr(), contacts


def boundary_weight(contact: BoundaryContact, affinity: float, volume: float) -> float:
    if volume <= 0.0:
        return 0.0
    return 0.5 * affinity * contact.area / (contact.distance * volume)


def pair_viscosity(a: Phase, b: Phase, table: Dict[Tuple[int, int], float]) -> float:
    key = (min(a.id, b.id), max(a.id, b.id))
    if key in table:
        return table[key]
    return min(a.viscosity, b.viscosity)


def surface_tension_force(
    state: FluidState,
    weights: csr_matrix,
    contacts: Sequence[BoundaryContact],
    cells: Sequence[RestrictedCell],
    phases: Dict[int, Phase],
) -> np.ndarray:
    """
    gamma_i * sum_j w_ij (x_j - x_i), plus a pull toward a ghost point placed
    cbrt(|V_i|) inside each touched domain face.
    """
    x = state.positions
    gamma = np.array([phases[int(k)].surface_tension for k in state.phase_ids])
    degree = np.asarray(weights.sum(axis=1)).reshape(-1)
    force = (weights @ x) - degree[:, None] * x
    for contact in contacts:
        i = contact.i
        volume = cells[i].volume
        w = boundary_weight(contact, phases[int(state.phase_ids[i])].affinity(contact.face), volume)
        if w == 0.0:
            continue
        ghost = contact.foot - volume ** (1.0 / 3.0) * contact.normal
        force[i] += w * (ghost - x[i])
    return gamma[:, None] * force


def assemble_viscosity_system(
    state: FluidState,
    masses: np.ndarray,
    weights: csr_matrix,
    contacts: Sequence[BoundaryContact],
    cells: Sequence[RestrictedCell],
    phases: Dict[int, Phase],
    params: SimParams,
    forces: np.ndarray,
) -> Tuple[csr_matrix, np.ndarray]:
    """
    (m/dt I + L_mu) v = m/dt v^k + F, one right-hand side per axis. L_mu is the
    viscosity-weighted graph Laplacian; wall contacts add to the diagonal only
    since the boundary velocity is zero.
    """
    n = state.n
    coo = weights.tocoo()
    ids = state.phase_ids
    mu = np.array([
        pair_viscosity(phases[int(ids[i])], phases[int(ids[j])], params.viscosity_table)
        for i, j in zip(coo.row.tolist(), coo.col.tolist())
    ]) if coo.nnz else np.zeros(0)
    off = coo_matrix((-mu * coo.data, (coo.row, coo.col)), shape=(n, n)).tocsr()
    diagonal = masses / params.dt - np.asarray(off.sum(axis=1)).reshape(-1)
    for contact in contacts:
        i = contact.i
        diagonal[contact.i] += boundary_weight(
            contact, phases[int(ids[i])].affinity(contact.face), cells[i].volume)
    matrix = (off + diags(diagonal)).tocsr()
    rhs = (masses / params.dt)[:, None] * state.velocities + forces
    return matrix, rhs


def solve_viscosity(matrix: csr_matrix, rhs: np.ndarray, params: SimParams) -> np.ndarray:
    velocities = np.zeros_like(rhs)
    for axis in range(3):
        result = cg_solve(matrix, rhs[:, axis], tol=params.viscosity_cg_tol, max_iter=max(10 * matrix.shape[0], 100))
        if not result.converged:
            logger.warning(f"Viscosity solve on axis {axis} stopped at residual {result.residual:.3e}")
        velocities[:, axis] = result.x
    return velocities


def clamp_to_domain(positions: np.ndarray, velocities: np.ndarray, domain: Domain) -> int:
    """Reflects escaped particles back inside (in place); returns how many moved."""
    tol = domain.tol
    moved = np.zeros(positions.shape[0], dtype=bool)
    for _ in range(2):
        for plane in domain.halfspaces:
            s = positions @ plane.n - plane.d
            out = s > -tol
            if not out.any():
                continue
            moved |= out
            reflected = positions[out] - 2.0 * np.maximum(s[out], 0.0)[:, None] * plane.n
            s_new = reflected @ plane.n - plane.d
            reflected -= np.maximum(s_new + tol, 0.0)[:, None] * plane.n
            positions[out] = reflected
            vn = velocities[out] @ plane.n
            velocities[out] -= np.maximum(vn, 0.0)[:, None] * plane.n
    return int(moved.sum())


def kinetic_energy(masses: np.ndarray, velocities: np.ndarray) -> float:
    return 0.5 * float(np.sum(masses * np.einsum("ij,ij->i", velocities, velocities)))


def step(
    state: FluidState,
    params: SimParams,
    domain: Domain,
    phases: Sequence[Phase],
    timer: Optional[StageTimer] = None,
) -> Tuple[FluidState, StepRecord, PotState]:
    """Advances ``state`` by one time step and returns the new state with diagnostics."""
    started = time.perf_counter()
    timer = timer or StageTimer()
    phase_map = {p.id: p for p in phases}
    nxt = state.copy()
    masses = state.masses(phases)

    nxt.positions += params.dt * nxt.velocities
    clamped = clamp_to_domain(nxt.positions, nxt.velocities, domain)
    if clamped:
        logger.debug(f"Step {state.step + 1}: reflected {clamped} particles into the domain")

    problem = PotProblem(positions=nxt.positions, nu=nxt.nu, domain=domain, settings=params.solver)
    rescues = 0
    psi0 = None
    if state.psi is not None:
        psi0, rescues = init_weights(problem, previous=state.psi, timer=timer)
    pot = newton_solve(problem, psi0, timer=timer)
    pot.rescues += rescues
    if not pot.converged and not params.best_effort:
        raise OtNonConvergence(
            f"Step {state.step + 1}: transport solve reached worst error {pot.worst_rel_error:.3e} "
            f"after {pot.newton_iters} iterations", state=pot)
    cells = pot.cells

    with timer.stage("forces"):
        weights, contacts = laplacian_weights(nxt.positions, cells, domain)
        forces = masses[:, None] * params.gravity[None, :]
        empty_events = 0
        for i, cell in enumerate(cells):
            spring = pressure_force(cell, nxt.positions[i], params.epsilon)
            if spring is None:
                empty_events += 1
                continue
            forces[i] += masses[i] * spring
        if empty_events:
            logger.warning(f"Step {state.step + 1}: {empty_events} empty cells received no pressure force")
        forces += surface_tension_force(nxt, weights, contacts, cells, phase_map)

    with timer.stage("viscosity"):
        matrix, rhs = assemble_viscosity_system(nxt, masses, weights, contacts, cells, phase_map, params, forces)
        nxt.velocities = solve_viscosity(matrix, rhs, params)

    nxt.psi = pot.psi
    nxt.step = state.step + 1
    nxt.time = state.time + params.dt
    volumes = pot.volumes
    record = StepRecord(
        step=nxt.step,
        time=nxt.time,
        worst_rel_error=pot.worst_rel_error,
        newton_iters=pot.newton_iters,
        total_volume=float(volumes.sum()),
        kinetic_energy=kinetic_energy(masses, nxt.velocities),
        free_surface_area=float(pot.free_surface_areas.sum()),
        momentum=(masses[:, None] * nxt.velocities).sum(axis=0),
        wall_ms=1000.0 * (time.perf_counter() - started),
        flagged=pot.flagged,
        empty_force_events=empty_events,
        rescues=pot.rescues,
        fallbacks=int(sum(c.fallbacks for c in cells)),
        timings=dict(timer.totals),
    )
    if record.fallbacks:
        logger.warning(f"Step {nxt.step}: {record.fallbacks} cells used the interior-point fallback")
    logger.info(f"Step {nxt.step}: worst error {record.worst_rel_error:.3e}, "
                f"{record.newton_iters} Newton iterations, {record.wall_ms:.1f} ms")
    return nxt, record, pot
