"""
Root Localization in One Variable

Vectorized Newton iteration over seed grids, clustering of converged seeds,
multiplicities from winding numbers on small circles, and argument-principle
counts along circles and rectangle boundaries. Shared by the counting
functions and the pre-image search.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import InputError, WindingAmbiguousError
from .expr import Expr, derivative, logmag_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Box:
    """Axis-parallel rectangle [re_min, re_max] x [im_min, im_max]."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    @classmethod
    def parse(cls, text: str) -> "Box":
        try:
            parts = [float(p) for p in text.split(",")]
        except ValueError as exc:
            raise InputError(f"Invalid box {text!r}: {exc}") from exc
        if len(parts) != 4:
            raise InputError("box needs four numbers: re_min,re_max,im_min,im_max")
        return cls(*parts)

    def contains(self, z: np.ndarray) -> np.ndarray:
        return (
            (z.real > self.re_min)
            & (z.real < self.re_max)
            & (z.imag > self.im_min)
            & (z.imag < self.im_max)
        )

    def grown(self, amount: float) -> "Box":
        return Box(
            self.re_min - amount, self.re_max + amount, self.im_min - amount, self.im_max + amount
        )

    @property
    def size(self) -> float:
        return max(self.re_max - self.re_min, self.im_max - self.im_min)

    def describe(self) -> str:
        return f"Re in [{self.re_min:g}, {self.re_max:g}], Im in [{self.im_min:g}, {self.im_max:g}]"


@dataclass(frozen=True)
class Root:
    point: complex
    multiplicity: int
    residual: float


class RootFinder:
    """Newton search for the zeros of a holomorphic Expr in one variable."""

    def __init__(self, config: Dict[str, Any]):
        roots_cfg = config.get("roots", {})
        self.seed_density = int(roots_cfg.get("seed_density", 32))
        self.max_doublings = int(roots_cfg.get("max_seed_doublings", 4))
        self.max_iter = int(roots_cfg.get("newton_max_iter", 80))
        self.point_tol = float(roots_cfg.get("point_tol", 1e-8))
        self.dedupe_tol = float(roots_cfg.get("dedupe_tol", 1e-6))
        self.multiplicity_radius = float(roots_cfg.get("multiplicity_radius", 1e-4))
        self.stalled = 0

    def newton(self, g: Expr, dg: Expr, seeds: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Polish seeds by Newton iteration.

        Returns:
            (points, accepted mask); stalled or diverged seeds are not accepted
        """
        z = seeds.astype(complex).copy()
        active = np.isfinite(z)
        with np.errstate(all="ignore"):
            for _ in range(self.max_iter):
                idx = np.flatnonzero(active)
                if idx.size == 0:
                    break
                za = z[idx]
                la, pa = logmag_array(g, za[None, :])
                lb, pb = logmag_array(dg, za[None, :])
                step = np.exp(la - lb) * np.exp(1j * (pa - pb))
                step = np.where(np.isneginf(la), 0.0, step)
                moved = za - step
                finite = np.isfinite(moved)
                z[idx] = np.where(finite, moved, np.nan)
                done = ~finite | (np.abs(step) <= 1e-14 * np.maximum(1.0, np.abs(moved)))
                active[idx[done]] = False
            la, _ = logmag_array(g, z[None, :])
            accepted = np.isfinite(z) & (la <= math.log(self.point_tol))
        self.stalled += int(np.sum(np.isfinite(seeds) & ~accepted))
        return z, accepted

    def cluster(self, points: np.ndarray) -> List[complex]:
        """Deduplicate converged points in a deterministic order."""
        order = np.lexsort((np.round(points.imag, 9), np.round(points.real, 9)))
        kept: List[complex] = []
        for z in points[order]:
            scale = self.dedupe_tol * max(1.0, abs(z))
            if all(abs(z - k) > scale for k in kept):
                kept.append(complex(z))
        return kept

    def multiplicity(self, g: Expr, point: complex, neighbours: List[complex]) -> int:
        others = [abs(point - q) for q in neighbours if q != point]
        radius = self.multiplicity_radius * max(1.0, abs(point))
        if others:
            radius = min(radius, 0.3 * min(others))
        count, _ = circle_winding(g, point, radius, 64)
        return count

    def roots(self, g: Expr, seeds: np.ndarray, keep: Any) -> List[Root]:
        """Zeros of g reachable from the seeds and accepted by keep(points)."""
        dg = derivative(g, 1)
        points, accepted = self.newton(g, dg, seeds)
        points = points[accepted]
        points = points[keep(points)]
        found = self.cluster(points)
        result = []
        for z in found:
            mult = self.multiplicity(g, z, found)
            if mult >= 1:
                la, _ = logmag_array(g, np.array([[z]]))
                result.append(Root(z, mult, float(np.exp(la[0]))))
        return result

    def roots_with_total(
        self, g: Expr, region: Tuple[float, float, float, float], keep: Any, expected: int
    ) -> Optional[List[Root]]:
        """Refine the seed grid until the found multiplicities add up to `expected`."""
        re_min, re_max, im_min, im_max = region
        density = self.seed_density
        best: List[Root] = []
        for _ in range(self.max_doublings + 1):
            xs = np.linspace(re_min, re_max, density)
            ys = np.linspace(im_min, im_max, density)
            seeds = (xs[None, :] + 1j * ys[:, None]).ravel()
            best = merge_roots(best, self.roots(g, seeds, keep), self.dedupe_tol)
            total = sum(r.multiplicity for r in best)
            if total == expected:
                return best
            logger.debug("Seed grid %d found %d of %d zeros", density, total, expected)
            density *= 2
        return None


def merge_roots(first: List[Root], second: List[Root], tol: float) -> List[Root]:
    merged = list(first)
    for root in second:
        if all(abs(root.point - r.point) > tol * max(1.0, abs(r.point)) for r in merged):
            merged.append(root)
    merged.sort(key=lambda r: (round(r.point.real, 9), round(r.point.imag, 9)))
    return merged


def _winding_from_phases(phases: np.ndarray) -> Tuple[float, float]:
    steps = np.diff(np.unwrap(np.append(phases, phases[0])))
    return float(np.sum(steps) / (2.0 * np.pi)), float(np.max(np.abs(steps)))


def circle_winding(g: Expr, center: complex, radius: float, nodes: int) -> Tuple[int, float]:
    """Winding number of g around 0 along a small circle, by phase unwrapping.

    Returns:
        (rounded winding number, distance of the raw value from it)
    """
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    z = center + radius * np.exp(1j * theta)
    _, phases = logmag_array(g, z[None, :])
    total, _ = _winding_from_phases(phases)
    return int(round(total)), abs(total - round(total))


def rectangle_winding(g: Expr, box: Box, max_nodes: int = 1 << 18) -> int:
    """Number of zeros of g inside the box, from the phase change along its boundary.

    Raises:
        WindingAmbiguousError: phase steps stay too large or g vanishes on the boundary
    """
    nodes = 256
    previous: Optional[int] = None
    while nodes <= max_nodes:
        s = np.arange(nodes) / nodes
        corners = [
            complex(box.re_min, box.im_min),
            complex(box.re_max, box.im_min),
            complex(box.re_max, box.im_max),
            complex(box.re_min, box.im_max),
        ]
        path = np.concatenate(
            [a + (b - a) * s for a, b in zip(corners, corners[1:] + corners[:1])]
        )
        la, phases = logmag_array(g, path[None, :])
        if np.any(np.isneginf(la)) or not np.all(np.isfinite(phases)):
            raise WindingAmbiguousError(f"Function vanishes on the boundary of {box.describe()}")
        total, max_step = _winding_from_phases(phases)
        count = int(round(total))
        if max_step < np.pi / 4 and abs(total - count) < 0.05:
            if previous == count:
                return count
            previous = count
        nodes *= 2
    raise WindingAmbiguousError(f"Boundary winding unresolved for {box.describe()}")
