# src/services/frame_service.py
"""
Binary frame files, little-endian:

    "POTF" | version u32 | n u64 | step u64 | time f64
    positions (3n f64) | velocities (3n f64) | psi | volumes | free-surface areas | phase ids (n f64 each)
    worst_rel_error f64 | newton_iters u32 | wall_time f64 | flagged u8
    crc32 u32 of everything before it
"""
import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from src.models.Fluid import FluidState, StepRecord
from src.models.Frame import FRAME_MAGIC, FRAME_VERSION, FrameRecord
from src.models.Transport import PotState
from src.utils.Errors import CrcError, MagicError, VersionError

_HEADER = struct.Struct("<4sIQQd")
_FOOTER = struct.Struct("<dIdB")
_CRC = struct.Struct("<I")

PathLike = Union[str, Path]


def frame_from_step(state: FluidState, record: StepRecord, pot: PotState) -> FrameRecord:
    return FrameRecord(
        step=state.step,
        time=state.time,
        positions=state.positions,
        velocities=state.velocities,
        psi=pot.psi,
        volumes=pot.volumes,
        free_surface_areas=pot.free_surface_areas,
        phase_ids=state.phase_ids,
        worst_rel_error=record.worst_rel_error,
        newton_iters=record.newton_iters,
        wall_time=record.wall_ms / 1000.0,
        flagged=record.flagged,
    )


def encode_frame(frame: FrameRecord) -> bytes:
    parts = [
        _HEADER.pack(FRAME_MAGIC, FRAME_VERSION, frame.n, frame.step, frame.time),
        frame.positions.astype("<f8").tobytes(),
        frame.velocities.astype("<f8").tobytes(),
        frame.psi.astype("<f8").tobytes(),
        frame.volumes.astype("<f8").tobytes(),
        frame.free_surface_areas.astype("<f8").tobytes(),
        frame.phase_ids.astype("<f8").tobytes(),
        _FOOTER.pack(frame.worst_rel_error, frame.newton_iters, frame.wall_time, int(frame.flagged)),
    ]
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def decode_frame(data: bytes) -> FrameRecord:
    if len(data) < _HEADER.size:
        raise CrcError(f"Frame is truncated ({len(data)} bytes)")
    magic, version, n, step, time = _HEADER.unpack_from(data, 0)
    if magic != FRAME_MAGIC:
        raise MagicError(f"Not a frame file (magic {magic!r})")
    if version != FRAME_VERSION:
        raise VersionError(f"Unsupported frame version {version} (expected {FRAME_VERSION})")
    expected = _HEADER.size + 8 * 10 * n + _FOOTER.size + _CRC.size
    if len(data) != expected:
        raise CrcError(f"Frame size {len(data)} does not match {expected} bytes for {n} particles")
    body, (crc,) = data[:-_CRC.size], _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CrcError("Frame checksum mismatch")

    offset = _HEADER.size

    def take(count: int) -> np.ndarray:
        nonlocal offset
        values = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64)
        offset += 8 * count
        return values

    positions = take(3 * n).reshape(n, 3)
    velocities = take(3 * n).reshape(n, 3)
    psi = take(n)
    volumes = take(n)
    areas = take(n)
    phase_ids = take(n).astype(int)
    worst, iters, wall, flagged = _FOOTER.unpack_from(data, offset)
    return FrameRecord(step=step, time=time, positions=positions, velocities=velocities, psi=psi,
                       volumes=volumes, free_surface_areas=areas, phase_ids=phase_ids,
                       worst_rel_error=worst, newton_iters=iters, wall_time=wall, flagged=bool(flagged))


def write_frame(frame: FrameRecord, path: PathLike) -> None:
    Path(path).write_bytes(encode_frame(frame))


def read_frame(path: PathLike) -> FrameRecord:
    return decode_frame(Path(path).read_bytes())


def frame_path(directory: PathLike, step: int) -> Path:
    return Path(directory) / f"frame_{step:06d}.potf"
