"""Shared fixtures: exact divisor data and a brute-force zero scan"""

import math
from typing import Callable, List, Optional, Tuple

import numpy as np
import pytest

from nevanlinna_core.analysis.expr import Target


class ProductMinusOneOracle:
    """
    Divisor of z1 z2 - b on spheres of C^2, b = 1 + a.

    |z1|^2 is uniform on [0, r^2] over the sphere, so N(r, a) reduces to
    (1/r^2) * integral of log+(s (r^2 - s) / |b|^2) / 2 ds, which has the closed
    form (F(u+) - F(u-) - log|b| (u+ - u-)) / r^2 with F(u) = u log u - u.
    """

    def __init__(self, b: complex = 1.0):
        self.b = b

    def _level(self, a: Target) -> float:
        b = self.b + (0.0 if a is None else a)
        if a is None or b == 0:
            raise ValueError(f"No closed form for a = {a}")
        return abs(b)

    @staticmethod
    def _crossings(r: float, level: float) -> Optional[Tuple[float, float]]:
        disc = r**4 - 4.0 * level**2
        if disc <= 0:
            return None
        root = math.sqrt(disc)
        return (r * r + root) / 2.0, (r * r - root) / 2.0

    def integrated(self, a: Target, r: float) -> float:
        if a is None:
            return 0.0
        level = self._level(a)
        crossings = self._crossings(r, level)
        if crossings is None:
            return 0.0
        hi, lo = crossings

        def F(u: float) -> float:
            return u * math.log(u) - u

        return (F(hi) - F(lo) - math.log(level) * (hi - lo)) / (r * r)

    def counting(self, a: Target, r: float) -> float:
        if a is None:
            return 0.0
        crossings = self._crossings(r, self._level(a))
        if crossings is None:
            return 0.0
        hi, lo = crossings
        return math.log(hi / lo) - 2.0 * self.integrated(a, r)


@pytest.fixture
def product_oracle():
    """Divisor oracle for z1 z2 - 1"""
    return ProductMinusOneOracle()


def scan_zeros(
    fn: Callable[[np.ndarray], np.ndarray],
    dfn: Callable[[np.ndarray], np.ndarray],
    rect: Tuple[float, float, float, float],
    seeds: int = 200,
    steps: int = 60,
) -> List[complex]:
    """Distinct zeros of fn in the open rectangle, by Newton from a seeds x seeds grid"""
    re_min, re_max, im_min, im_max = rect
    X, Y = np.meshgrid(np.linspace(re_min, re_max, seeds), np.linspace(im_min, im_max, seeds))
    Z = (X + 1j * Y).ravel()
    with np.errstate(all="ignore"):
        for _ in range(steps):
            Z = Z - fn(Z) / dfn(Z)
        keep = np.isfinite(Z) & (np.abs(fn(Z)) < 1e-10)
    keep &= (Z.real > re_min) & (Z.real < re_max) & (Z.imag > im_min) & (Z.imag < im_max)
    zeros: List[complex] = []
    for z in Z[keep]:
        if all(abs(z - w) > 1e-6 for w in zeros):
            zeros.append(complex(z))
    return zeros


@pytest.fixture
def newton_scan():
    """Brute-force zero finder independent of the expression module"""
    return scan_zeros
