"""Sampled frames over (r, s) grids and grid-wide evaluation."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .curvature import (DEFAULT_GUARDS, FrameData, FrameGuards, PointFrame, curvature_pack, frame,
                        residuals)
from .errors import EmptyGridAfterGuards, SingularFrame, ValidationError
from .metrics import MetricSpec


@dataclass(frozen=True)
class GridSpec:
    r_range: tuple[float, float, int] = (0.5, 2.0, 16)
    s_fraction_range: tuple[float, float, int] = (0.05, 0.9, 16)
    angle_count: int = 4
    seed: int = 0

    def __post_init__(self):
        for label, (lo, hi, count) in (("r_range", self.r_range), ("s_fraction_range", self.s_fraction_range)):
            if count < 1:
                raise ValidationError(f"{label}: count must be at least 1")
            if count > 1 and not lo < hi:
                raise ValidationError(f"{label}: need lo < hi, got {lo}, {hi}")
        if self.r_range[0] <= 0:
            raise ValidationError("r_range: radii must be positive")
        lo, hi, _ = self.s_fraction_range
        if not (-1 < lo < 1 and -1 < hi < 1):
            raise ValidationError("s_fraction_range must lie inside (-1, 1)")
        if self.angle_count < 1:
            raise ValidationError("angle_count must be at least 1")

    @property
    def radii(self) -> np.ndarray:
        lo, hi, count = self.r_range
        return np.linspace(lo, hi, count)

    @property
    def fractions(self) -> np.ndarray:
        lo, hi, count = self.s_fraction_range
        return np.linspace(lo, hi, count)

    @property
    def size(self) -> int:
        return self.r_range[2] * self.s_fraction_range[2] * self.angle_count


@dataclass
class GridFrame:
    cell: tuple[int, int]
    angle_index: int
    frame: PointFrame


def orient(r: float, fraction: float, theta: float, n: int, plane: np.ndarray | None = None):
    """x of length r and unit y with <x, y> = fraction * r, rotated by theta in a plane.

    ``plane`` is an orthonormal (2, n) basis; the first two coordinate axes by default.
    """
    if plane is None:
        plane = np.eye(n)[:2]
    e1 = math.cos(theta) * plane[0] + math.sin(theta) * plane[1]
    e2 = -math.sin(theta) * plane[0] + math.cos(theta) * plane[1]
    x = r * e1
    y = fraction * e1 + math.sqrt(1.0 - fraction * fraction) * e2
    return x, y


def random_plane(rng: np.random.Generator, n: int) -> np.ndarray:
    if n == 2:
        return np.eye(2)
    q, _ = np.linalg.qr(rng.normal(size=(n, 2)))
    return q.T


def grid_frames(spec: MetricSpec, grid: GridSpec, n: int = 2,
                guards: FrameGuards = DEFAULT_GUARDS) -> list[GridFrame]:
    """Every frame of the grid, valid or not, in a fixed order."""
    rng = np.random.default_rng(grid.seed)
    out = []
    for i, r in enumerate(grid.radii):
        for j, frac in enumerate(grid.fractions):
            offsets = rng.uniform(0.0, 1.0, size=grid.angle_count)
            plane = random_plane(rng, n)
            for a in range(grid.angle_count):
                theta = 2 * math.pi * (a + offsets[a]) / grid.angle_count
                x, y = orient(float(r), float(frac), theta, n, plane)
                out.append(GridFrame((i, j), a, frame(x, y, spec, guards)))
    return out


@dataclass
class FrameResult:
    item: GridFrame
    report: object | None = None
    pack: object | None = None
    error: str | None = None

    @property
    def valid(self) -> bool:
        return self.error is None and self.item.frame.valid


def _evaluate_cell(spec: MetricSpec, items: list[GridFrame], want_pack: bool) -> list[FrameResult]:
    results = []
    shared = None
    for item in items:
        f = item.frame
        if not f.valid:
            results.append(FrameResult(item, error=f.reason))
            continue
        try:
            data = FrameData(spec, f, shared)
            rep = residuals(spec, f, data)
            pack = curvature_pack(spec, f, data) if want_pack else None
            shared = shared or data
            results.append(FrameResult(item, rep, pack))
        except SingularFrame as exc:
            results.append(FrameResult(item, error=str(exc)))
    return results


def evaluate_grid(spec: MetricSpec, grid: GridSpec, n: int = 2, want_pack: bool = False,
                  guards: FrameGuards = DEFAULT_GUARDS, workers: int = 1) -> list[FrameResult]:
    """Residuals (and optionally full packs) at every grid frame.

    Frames of one (r, s) cell share their jets.  Cells may be evaluated in
    parallel; results always come back in grid order.
    """
    items = grid_frames(spec, grid, n, guards)
    cells: dict[tuple[int, int], list[GridFrame]] = {}
    for item in items:
        cells.setdefault(item.cell, []).append(item)
    groups = list(cells.values())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda g: _evaluate_cell(spec, g, want_pack), groups))
    else:
        chunks = [_evaluate_cell(spec, g, want_pack) for g in groups]
    results = [res for chunk in chunks for res in chunk]
    if not any(res.valid for res in results):
        raise EmptyGridAfterGuards(f"{spec.name}: no grid frame survives the guards")
    return results
