import argparse
import math

import numpy as np
from pydantic import ValidationError

from config import resolve_threads
from src.schemas.RenderRequest import Camera, RenderMode, RenderRequest, TraversalMode
from src.services.frame_service import read_frame
from src.services.render_service import build_scene, render, sample_surface, write_point_cloud, write_ppm
from src.services.scene_service import build_domain, load_config
from src.utils.Errors import ConfigError
from src.utils.Logger import logger


def register(subparsers) -> None:
    parser = subparsers.add_parser("render", help="Render a frame to a PPM image")
    parser.add_argument("frame", help="Frame file written by simulate")
    parser.add_argument("--scene", required=True, help="Scene JSON (or bundled name) the frame belongs to")
    parser.add_argument("--out", default="frame.ppm")
    parser.add_argument("--mode", choices=[m.value for m in RenderMode], default=RenderMode.RAW.value)
    parser.add_argument("--traversal", choices=[m.value for m in TraversalMode], default=TraversalMode.VOLUME.value,
                        help="Depth mode: fluid thickness (volume) or distance to the surface (surface)")
    parser.add_argument("--eye", type=float, nargs=3, default=None)
    parser.add_argument("--look-at", type=float, nargs=3, default=None)
    parser.add_argument("--up", type=float, nargs=3, default=[0.0, 0.0, 1.0])
    parser.add_argument("--fov", type=float, default=60.0, help="Vertical field of view in degrees")
    parser.add_argument("--width", type=int, default=320)
    parser.add_argument("--height", type=int, default=240)
    parser.add_argument("--blend", type=float, default=None, help="Smooth-union blend radius")
    parser.add_argument("--samples", type=int, default=0, help="Free-surface samples to export")
    parser.add_argument("--points-out", default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None)
    parser.set_defaults(handler=cmd_render)


def _default_view(lower: np.ndarray, upper: np.ndarray):
    center = 0.5 * (lower + upper)
    diagonal = float(np.linalg.norm(upper - lower))
    eye = center + diagonal * np.array([0.6, -1.0, 0.5])
    return eye.tolist(), center.tolist()


def cmd_render(args: argparse.Namespace) -> int:
    config = load_config(args.scene)
    domain = build_domain(config)
    eye, look_at = _default_view(domain.lower, domain.upper)
    try:
        request = RenderRequest(
            frame=args.frame,
            out=args.out,
            camera=Camera(
                eye=args.eye or eye,
                look_at=args.look_at or look_at,
                up=args.up,
                fov=math.radians(args.fov),
                width=args.width,
                height=args.height,
            ),
            mode=args.mode,
            traversal=args.traversal,
            blend_radius=args.blend,
            samples=args.samples,
            points_out=args.points_out,
            seed=args.seed,
            threads=resolve_threads(args.threads),
        )
    except ValidationError as e:
        raise ConfigError(f"render options: {e.errors()[0]['loc']}: {e.errors()[0]['msg']}")
    if request.samples > 0 and not request.points_out:
        raise ConfigError("--samples needs --points-out")

    frame = read_frame(request.frame)
    scene = build_scene(frame.positions, frame.psi, domain, threads=request.threads)
    image, aborted = render(scene, request.camera, request.mode, request.blend_radius, request.threads,
                            traversal=request.traversal)
    write_ppm(image, request.out)
    logger.info(f"Rendered {request.frame} ({request.mode.value}) to {request.out}")
    if aborted:
        print(f"{aborted} rays aborted (magenta pixels)")

    if request.samples > 0:
        points, normals = sample_surface(scene, request.samples, seed=request.seed)
        write_point_cloud(request.points_out, points, normals)
        print(f"Wrote {points.shape[0]} oriented samples to {request.points_out}")
    return 0
