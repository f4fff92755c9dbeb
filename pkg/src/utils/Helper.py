import random
import string
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Sequence, Tuple, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """
    Maps ``fn`` over ``items`` and returns the results in input order.

    With ``threads > 1`` the work is spread over a thread pool; the output order
    (and therefore every downstream reduction) does not depend on the pool size.
    """
    if threads <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator: the same (seed, stream) always yields the same numbers."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)]))


def normalize(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("Cannot normalize a zero vector")
    return v / norm


def plane_basis(axis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns (u, w) spanning the plane orthogonal to ``axis`` with u x w = axis.
    Deterministic for a given axis, so angles measured in it are reproducible.
    """
    axis = normalize(np.asarray(axis, dtype=float))
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = normalize(np.cross(helper, axis))
    w = np.cross(axis, u)
    return u, w


class StageTimer:
    """Accumulates wall time per named stage (diagram, evaluation, solve, ...)."""

    def __init__(self):
        self.totals: Dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] = self.totals.get(name, 0.0) + (time.perf_counter() - start)

    def merge(self, other: "StageTimer") -> None:
        for name, value in other.totals.items():
            self.totals[name] = self.totals.get(name, 0.0) + value


def generate_id(length=14) -> str:
    """Random alphanumeric run id for the ledger; 62 symbols per character."""
    characters = string.ascii_letters + string.digits
    return ''.join(random.choice(characters) for _ in range(length))
