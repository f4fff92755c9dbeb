# src/services/scene_service.py
"""Scene configuration loading and construction of the initial simulation state."""
import json
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src.models.Fluid import FluidState, Phase, SimParams
from src.models.Geometry import Domain, Plane
from src.models.Transport import SolverSettings
from src.schemas.SceneConfig import BoxConfig, DomainConfig, EmitterConfig, PhaseConfig, SceneConfig, SimConfig
from src.services.geometry_service import box_halfspaces, make_domain
from src.utils.Errors import ConfigError, GeometryError
from src.utils.Helper import make_rng
from src.utils.Logger import logger

SAMPLE_DIR = Path(__file__).resolve().parent / "sample_scenes"

PathLike = Union[str, Path]


def bundled_scenes() -> List[str]:
    return sorted(p.stem for p in SAMPLE_DIR.glob("*.json"))


def resolve_scene_path(path_or_name: PathLike) -> Path:
    """Accepts a file path or the name of a bundled scene."""
    path = Path(path_or_name)
    if path.exists():
        return path
    bundled = SAMPLE_DIR / f"{path_or_name}.json"
    if bundled.exists():
        return bundled
    raise ConfigError(f"Scene file not found: {path_or_name} (bundled scenes: {', '.join(bundled_scenes())})")


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def parse_config(text: str, source: str = "<string>") -> SceneConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: invalid JSON ({e.msg})")
    try:
        return SceneConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {_format_validation_error(e)}")


def load_config(path: PathLike) -> SceneConfig:
    path = resolve_scene_path(path)
    logger.debug(f"Loading scene configuration from {path}")
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


def canonical_json(config: SceneConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def save_config(config: SceneConfig, path: PathLike) -> None:
    Path(path).write_text(canonical_json(config), encoding="utf-8")


def domain_planes(config: DomainConfig) -> List[Plane]:
    if config.box is not None:
        return box_halfspaces(config.box.lower, config.box.upper)
    try:
        return [Plane.from_normal_offset(h.normal, h.offset) for h in config.halfspaces]
    except ValueError as e:
        raise ConfigError(f"domain.halfspaces: {e}")


def build_domain(config: SceneConfig) -> Domain:
    try:
        return make_domain(domain_planes(config.domain))
    except GeometryError as e:
        raise ConfigError(f"domain: {e.detail}")


def build_phases(config: SceneConfig) -> List[Phase]:
    return [
        Phase(
            id=p.id,
            density=p.density,
            viscosity=p.viscosity,
            surface_tension=p.surface_tension,
            boundary_affinity=dict(p.boundary_affinity),
            default_affinity=p.default_affinity,
        )
        for p in config.phases
    ]


def build_params(config: SceneConfig, threads: int = 1, best_effort: bool = False) -> SimParams:
    sim = config.sim
    table = {(min(p.phases), max(p.phases)): p.viscosity for p in sim.viscosity_pairs}
    return SimParams(
        dt=sim.dt,
        epsilon=sim.epsilon,
        gravity=np.asarray(sim.gravity, dtype=float),
        viscosity_table=table,
        solver=SolverSettings(
            tolerance=sim.tolerance,
            max_newton=sim.max_newton,
            cg_tol=sim.cg_tol,
            ball_aware=sim.ball_aware,
            threads=threads,
        ),
        viscosity_cg_tol=sim.viscosity_cg_tol,
        best_effort=best_effort,
    )


def emit(emitter: EmitterConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lattice particles of one emitter: positions, velocities and volumes."""
    h = emitter.spacing
    if emitter.shape == "box":
        lower = np.asarray(emitter.lower, dtype=float)
        upper = np.asarray(emitter.upper, dtype=float)
        center = 0.5 * (lower + upper)
    else:
        center = np.asarray(emitter.center, dtype=float)
        lower = center - emitter.radius
        upper = center + emitter.radius
    counts = np.maximum(np.floor((upper - lower) / h + 1e-9).astype(int), 1)
    axes = [lower[k] + h * (np.arange(counts[k]) + 0.5) for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    if emitter.shape == "sphere":
        grid = grid[np.linalg.norm(grid - center, axis=1) <= emitter.radius]
    if emitter.jitter > 0.0:
        grid = grid + emitter.jitter * h * rng.uniform(-1.0, 1.0, grid.shape)

    velocities = np.tile(np.asarray(emitter.velocity, dtype=float), (grid.shape[0], 1))
    if emitter.radial_speed != 0.0:
        offset = grid - center
        norms = np.linalg.norm(offset, axis=1)
        safe = np.where(norms > 0.0, norms, 1.0)
        velocities += emitter.radial_speed * offset / safe[:, None] * (norms > 0.0)[:, None]
    volumes = np.full(grid.shape[0], h ** 3)
    return grid, velocities, volumes


def build_initial_state(config: SceneConfig, domain: Domain) -> FluidState:
    rng = make_rng(config.seed, stream=0)
    positions, velocities, volumes, phase_ids = [], [], [], []
    for k, emitter in enumerate(config.emitters):
        x, v, nu = emit(emitter, rng)
        if x.shape[0] == 0:
            raise ConfigError(f"emitters.{k}: produces no particles")
        positions.append(x)
        velocities.append(v)
        volumes.append(nu)
        phase_ids.append(np.full(x.shape[0], emitter.phase, dtype=int))
    positions = np.concatenate(positions)
    tol = domain.tol
    for plane in domain.halfspaces:
        outside = positions @ plane.n - plane.d > -tol
        if outside.any():
            raise ConfigError(f"emitters: {int(outside.sum())} particles lie outside the domain")
    state = FluidState(
        positions=positions,
        velocities=np.concatenate(velocities),
        nu=np.concatenate(volumes),
        phase_ids=np.concatenate(phase_ids),
    )
    if float(state.nu.sum()) >= domain.volume:
        raise ConfigError(f"emitters: fluid volume {state.nu.sum():.6g} does not fit in the domain ({domain.volume:.6g})")
    logger.info(f"Scene '{config.name}': {state.n} particles, fluid volume {state.nu.sum():.4g}")
    return state


def dam_break_config(particles: int, seed: int = 0) -> SceneConfig:
    """Synthetic dam break with roughly ``particles`` particles, used for scaling runs."""
    block = np.array([0.4, 1.0, 0.6])
    spacing = float((np.prod(block) / particles) ** (1.0 / 3.0))
    return SceneConfig(
        name=f"dam_break_{particles}",
        domain=DomainConfig(box=BoxConfig(lower=[0.0, 0.0, 0.0], upper=[2.0, 1.0, 1.0])),
        phases=[PhaseConfig(id=0, density=1000.0, viscosity=0.001)],
        emitters=[EmitterConfig(shape="box", lower=[0.0, 0.0, 0.0], upper=block.tolist(),
                                spacing=spacing, jitter=0.05)],
        sim=SimConfig(dt=0.005, epsilon=max(spacing, 1e-3), steps=100),
        seed=seed,
    )

